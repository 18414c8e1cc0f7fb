use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const GRID_POINTS: usize = 100;
/// Smallest kernel standard deviation on either axis.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDensityGrid {
    /// Shared by both axes: `GRID_POINTS` points spanning [-1, 1].
    pub axis: Vec<f64>,
    /// `density[i * GRID_POINTS + j]` is at `(axis[i], axis[j])`.
    pub density: Vec<f64>,
    /// Kernel covariance `[[xx, xy], [xy, yy]]`.
    pub bandwidth: [[f64; 2]; 2],
    /// The floor had to be applied.
    pub degenerate: bool,
    /// Kernel mass that fell inside the square before renormalising.
    pub mass_inside: f64,
    pub scatter: Vec<ScatterPoint>,
}

fn linspace(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

fn trapezoid(values: &[f64], axis: &[f64]) -> f64 {
    let n = axis.len();
    let h = axis[1] - axis[0];
    let w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += w(i) * w(j) * values[i * n + j];
        }
    }
    s * h * h
}

/// Gaussian KDE with Scott's factor `n^(-1/6)` on the sample covariance,
/// evaluated on a 100x100 grid over [-1, 1]² and scaled to integrate to one.
pub fn joint_density(
    xs: &[f64],
    ys: &[f64],
    sizes: Option<&[f64]>,
    n_scatter: usize,
    seed: u64,
) -> Result<JointDensityGrid, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            predictions: ys.len(),
            targets: xs.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::Empty);
    }
    let nf = n as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / nf, ys.iter().sum::<f64>() / nf);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let f2 = nf.powf(-1.0 / 6.0).powi(2);
    let (mut kxx, mut kyy, kxy) = (sxx / (nf - 1.0) * f2, syy / (nf - 1.0) * f2, sxy / (nf - 1.0) * f2);
    let floor = BANDWIDTH_FLOOR * BANDWIDTH_FLOOR;
    let mut degenerate = false;
    if kxx < floor || kyy < floor {
        degenerate = true;
        kxx = kxx.max(floor);
        kyy = kyy.max(floor);
    }
    if kxx * kyy - kxy * kxy < floor * floor {
        // perfectly correlated axes
        degenerate = true;
        kxx += floor;
        kyy += floor;
    }
    let det = kxx * kyy - kxy * kxy;
    let (ixx, iyy, ixy) = (kyy / det, kxx / det, -kxy / det);
    let norm = 1.0 / (nf * 2.0 * std::f64::consts::PI * det.sqrt());

    let axis = linspace(GRID_POINTS);
    let mut density: Vec<f64> = (0..GRID_POINTS * GRID_POINTS)
        .into_par_iter()
        .map(|k| {
            let (gx, gy) = (axis[k / GRID_POINTS], axis[k % GRID_POINTS]);
            let s: f64 = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| {
                    let (dx, dy) = (gx - x, gy - y);
                    (-0.5 * (dx * dx * ixx + 2.0 * dx * dy * ixy + dy * dy * iyy)).exp()
                })
                .sum();
            s * norm
        })
        .collect();
    let mass_inside = trapezoid(&density, &axis);
    if mass_inside > 0.0 {
        for d in &mut density {
            *d /= mass_inside;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, n_scatter.min(n)).into_vec();
    picked.sort_unstable();
    let scatter = picked
        .into_iter()
        .map(|i| ScatterPoint {
            index: i,
            x: xs[i],
            y: ys[i],
            size: sizes.and_then(|s| s.get(i).copied()).unwrap_or(1.0),
        })
        .collect();
    Ok(JointDensityGrid {
        axis,
        density,
        bandwidth: [[kxx, kxy], [kxy, kyy]],
        degenerate,
        mass_inside,
        scatter,
    })
}

impl JointDensityGrid {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, &self.axis)
    }

    pub fn argmax(&self) -> (f64, f64) {
        let k = self
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (self.axis[k / GRID_POINTS], self.axis[k % GRID_POINTS])
    }
}

#[derive(Serialize)]
struct GridRow {
    x: f64,
    y: f64,
    density: f64,
}

/// Writes `<stem>_density.csv` (long format) and `<stem>_scatter.csv`.
pub fn write_density_csv(dir: &Path, stem: &str, grid: &JointDensityGrid) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}_density.csv")))?;
    for (k, d) in grid.density.iter().enumerate() {
        w.serialize(GridRow {
            x: grid.axis[k / GRID_POINTS],
            y: grid.axis[k % GRID_POINTS],
            density: *d,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}_scatter.csv")))?;
    for p in &grid.scatter {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
