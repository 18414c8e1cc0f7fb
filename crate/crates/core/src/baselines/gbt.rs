//! Histogram gradient-boosted regression trees with a squared-error objective.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BaselineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum hessian sum per child; one per sample under squared error.
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub n_estimators: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub early_stopping_rounds: usize,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            learning_rate: 0.1,
            max_depth: 3,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            n_estimators: 100,
            lambda: 1.0,
            early_stopping_rounds: 10,
            max_bins: 64,
            seed: 0,
        }
    }
}

impl GbtParams {
    /// Best configuration of the reference grid.
    pub fn best() -> Self {
        GbtParams {
            learning_rate: 1e-2,
            max_depth: 5,
            min_child_weight: 1.0,
            subsample: 0.7,
            colsample_bytree: 0.7,
            n_estimators: 500,
            ..Default::default()
        }
    }

    pub fn label(&self) -> String {
        format!(
            "lr{}-d{}-mcw{}-ss{}-cs{}-n{}",
            self.learning_rate, self.max_depth, self.min_child_weight, self.subsample, self.colsample_bytree, self.n_estimators
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtGrid {
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub min_child_weight: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub n_estimators: Vec<usize>,
}

impl Default for GbtGrid {
    fn default() -> Self {
        GbtGrid {
            learning_rate: vec![1e-3, 1e-2, 1e-1],
            max_depth: vec![1, 3, 5],
            min_child_weight: vec![1.0, 3.0, 5.0],
            subsample: vec![0.5, 0.7],
            colsample_bytree: vec![0.5, 0.7],
            n_estimators: vec![100, 200, 500],
        }
    }
}

impl GbtGrid {
    pub fn singleton(p: GbtParams) -> Self {
        GbtGrid {
            learning_rate: vec![p.learning_rate],
            max_depth: vec![p.max_depth],
            min_child_weight: vec![p.min_child_weight],
            subsample: vec![p.subsample],
            colsample_bytree: vec![p.colsample_bytree],
            n_estimators: vec![p.n_estimators],
        }
    }

    pub fn params(&self, base: GbtParams) -> Vec<GbtParams> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rate {
            for &max_depth in &self.max_depth {
                for &min_child_weight in &self.min_child_weight {
                    for &subsample in &self.subsample {
                        for &colsample_bytree in &self.colsample_bytree {
                            for &n_estimators in &self.n_estimators {
                                out.push(GbtParams {
                                    learning_rate,
                                    max_depth,
                                    min_child_weight,
                                    subsample,
                                    colsample_bytree,
                                    n_estimators,
                                    ..base
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Quantized features, column major, with the raw cut points per feature.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    /// `cuts[f][b]` is the upper edge of bin `b`; the last bin is open.
    pub cuts: Vec<Vec<f64>>,
    bins: Vec<Vec<u8>>,
}

impl BinnedMatrix {
    pub fn fit(rows: &[Vec<f64>], max_bins: usize) -> BinnedMatrix {
        let max_bins = max_bins.clamp(2, 256);
        let n_features = rows.first().map_or(0, |r| r.len());
        let cuts: Vec<Vec<f64>> = (0..n_features)
            .into_par_iter()
            .map(|f| {
                let mut col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
                col.sort_by(|a, b| a.total_cmp(b));
                col.dedup();
                if col.len() <= max_bins {
                    col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let mut c: Vec<f64> = (1..max_bins)
                        .map(|k| {
                            let i = k * col.len() / max_bins;
                            0.5 * (col[i - 1] + col[i])
                        })
                        .collect();
                    c.dedup();
                    c
                }
            })
            .collect();
        let bins = (0..n_features)
            .into_par_iter()
            .map(|f| rows.iter().map(|r| bin_of(&cuts[f], r[f])).collect())
            .collect();
        BinnedMatrix {
            n_rows: rows.len(),
            cuts,
            bins,
        }
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }
}

fn bin_of(cuts: &[f64], x: f64) -> u8 {
    cuts.partition_point(|c| *c < x) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        /// Go left when `x <= threshold`.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub base_score: f64,
    pub n_features: usize,
    trees: Vec<Tree>,
    pub best_iteration: usize,
    pub best_val_mse: f64,
}

impl GbtModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

pub fn predict_gbt(model: &GbtModel, x: &[f64]) -> Result<f64, BaselineError> {
    if x.len() != model.n_features {
        return Err(BaselineError::WidthMismatch {
            expected: model.n_features,
            found: x.len(),
        });
    }
    Ok(model.base_score + model.trees.iter().map(|t| t.predict(x)).sum::<f64>())
}

struct Builder<'a> {
    m: &'a BinnedMatrix,
    grad: &'a [f64],
    p: &'a GbtParams,
    features: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl Builder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.p.lambda) * self.p.learning_rate
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.p.lambda)
    }

    fn best_split(&self, rows: &[u32], g_tot: f64, h_tot: f64) -> Option<Best> {
        let parent = self.score(g_tot, h_tot);
        let best = self
            .features
            .par_iter()
            .filter_map(|&f| {
                let n_bins = self.m.cuts[f].len() + 1;
                if n_bins < 2 {
                    return None;
                }
                let col = &self.m.bins[f];
                let mut hg = vec![0.0; n_bins];
                let mut hh = vec![0.0; n_bins];
                for &r in rows {
                    let b = col[r as usize] as usize;
                    hg[b] += self.grad[r as usize];
                    hh[b] += 1.0;
                }
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut best: Option<Best> = None;
                for b in 0..n_bins - 1 {
                    gl += hg[b];
                    hl += hh[b];
                    let (gr, hr) = (g_tot - gl, h_tot - hl);
                    if hl < self.p.min_child_weight || hr < self.p.min_child_weight {
                        continue;
                    }
                    let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                    if gain > 1e-12 && best.is_none_or(|x| gain > x.gain) {
                        best = Some(Best { gain, feature: f, bin: b });
                    }
                }
                best
            })
            .collect::<Vec<_>>();
        // lowest feature index wins ties, independent of scheduling
        best.into_iter().fold(None, |acc: Option<Best>, b| match acc {
            Some(a) if a.gain > b.gain || (a.gain == b.gain && a.feature < b.feature) => Some(a),
            _ => Some(b),
        })
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h = rows.len() as f64;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.p.max_depth {
            return id;
        }
        let Some(best) = self.best_split(&rows, g, h) else { return id };
        let col = &self.m.bins[best.feature];
        let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&i| (col[i as usize] as usize) <= best.bin);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: self.m.cuts[best.feature][best.bin],
            left,
            right,
        };
        id
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Boosts trees on `train`; stops when validation MSE has not improved for
/// `early_stopping_rounds` rounds and keeps the best prefix of trees.
pub fn fit_gbt(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    val_x: &[Vec<f64>],
    val_y: &[f64],
    params: &GbtParams,
) -> Result<GbtModel, BaselineError> {
    if train_x.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    let n_features = train_x[0].len();
    if let Some(bad) = train_x.iter().chain(val_x).find(|r| r.len() != n_features) {
        return Err(BaselineError::WidthMismatch {
            expected: n_features,
            found: bad.len(),
        });
    }
    let m = BinnedMatrix::fit(train_x, params.max_bins);
    let base_score = train_y.iter().sum::<f64>() / train_y.len() as f64;
    let mut pred = vec![base_score; train_y.len()];
    let mut val_pred = vec![base_score; val_y.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_cols = ((params.colsample_bytree * n_features as f64).round() as usize).clamp(1, n_features);
    let mut trees = Vec::new();
    let mut best_iteration = 0;
    let mut best_val = if val_y.is_empty() { f64::INFINITY } else { mse(&val_pred, val_y) };
    let mut since_best = 0;

    for it in 1..=params.n_estimators {
        let grad: Vec<f64> = pred.iter().zip(train_y).map(|(p, y)| p - y).collect();
        let rows: Vec<u32> = (0..train_y.len() as u32)
            .filter(|_| params.subsample >= 1.0 || rng.gen::<f64>() < params.subsample)
            .collect();
        let mut features = sample(&mut rng, n_features, n_cols).into_vec();
        features.sort_unstable();
        if rows.is_empty() {
            continue;
        }
        let mut b = Builder {
            m: &m,
            grad: &grad,
            p: params,
            features,
            nodes: Vec::new(),
        };
        b.grow(rows, 0);
        let tree = Tree { nodes: b.nodes };
        for (p, x) in pred.iter_mut().zip(train_x) {
            *p += tree.predict(x);
        }
        for (p, x) in val_pred.iter_mut().zip(val_x) {
            *p += tree.predict(x);
        }
        trees.push(tree);
        if val_y.is_empty() {
            best_iteration = it;
            continue;
        }
        let v = mse(&val_pred, val_y);
        if v < best_val {
            best_val = v;
            best_iteration = it;
            since_best = 0;
        } else {
            since_best += 1;
            if params.early_stopping_rounds > 0 && since_best >= params.early_stopping_rounds {
                break;
            }
        }
    }
    trees.truncate(best_iteration);
    Ok(GbtModel {
        params: *params,
        base_score,
        n_features,
        trees,
        best_iteration,
        best_val_mse: best_val,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtRun {
    pub label: String,
    pub params: GbtParams,
    pub val_mse: f64,
    pub trees: usize,
}

/// Fits every grid point and returns the best model by validation MSE with the leaderboard.
pub fn fit_gbt_grid(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    val_x: &[Vec<f64>],
    val_y: &[f64],
    grid: &[GbtParams],
) -> Result<(GbtModel, Vec<GbtRun>), BaselineError> {
    let mut best: Option<GbtModel> = None;
    let mut runs = Vec::new();
    for p in grid {
        let m = fit_gbt(train_x, train_y, val_x, val_y, p)?;
        runs.push(GbtRun {
            label: p.label(),
            params: *p,
            val_mse: m.best_val_mse,
            trees: m.n_trees(),
        });
        if best.as_ref().is_none_or(|b| m.best_val_mse < b.best_val_mse) {
            best = Some(m);
        }
    }
    runs.sort_by(|a, b| a.val_mse.total_cmp(&b.val_mse).then_with(|| a.label.cmp(&b.label)));
    Ok((best.ok_or(BaselineError::EmptyTrainingSet)?, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = x.iter().map(|r| f(r)).collect();
        (x, y)
    }

    #[test]
    fn constant_targets() {
        let (x, _) = data(100, 1, |_| 0.0);
        let y = vec![0.37; 100];
        let m = fit_gbt(&x, &y, &x[..10], &y[..10], &GbtParams::default()).unwrap();
        for r in &x {
            assert!((predict_gbt(&m, r).unwrap() - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn recovers_first_feature() {
        let (x, y) = data(1000, 2, |r| r[0]);
        let (vx, vy) = data(200, 3, |r| r[0]);
        let p = GbtParams {
            n_estimators: 200,
            max_depth: 3,
            ..Default::default()
        };
        let m = fit_gbt(&x, &y, &vx, &vy, &p).unwrap();
        assert!(m.best_val_mse < 0.01, "{}", m.best_val_mse);
    }

    #[test]
    fn deterministic_with_subsampling() {
        let (x, y) = data(300, 4, |r| r[1] * r[2]);
        let p = GbtParams {
            subsample: 0.5,
            colsample_bytree: 0.5,
            n_estimators: 30,
            ..Default::default()
        };
        assert_eq!(fit_gbt(&x, &y, &x, &y, &p).unwrap(), fit_gbt(&x, &y, &x, &y, &p).unwrap());
    }

    #[test]
    fn reference_grid() {
        let all = GbtGrid::default().params(GbtParams::default());
        assert_eq!(all.len(), 3 * 3 * 3 * 2 * 2 * 3);
        assert!(all.contains(&GbtParams::best()));
    }

    #[test]
    fn width_checked() {
        let (x, y) = data(20, 5, |r| r[0]);
        let m = fit_gbt(&x, &y, &[], &[], &GbtParams { n_estimators: 3, ..Default::default() }).unwrap();
        assert!(matches!(predict_gbt(&m, &[0.0; 3]), Err(BaselineError::WidthMismatch { .. })));
    }
}
