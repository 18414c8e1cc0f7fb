use serde::{Deserialize, Serialize};

use super::TrainError;

pub const DEFAULT_BINS: usize = 10;

/// Inverse-frequency weights over equal-length target bins on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinWeights {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub weights: Vec<f64>,
}

/// `n_bins + 1` edges from -1 to 1, each the correctly rounded `(2i - n) / n`.
pub fn bin_edges(n_bins: usize) -> Vec<f64> {
    (0..=n_bins)
        .map(|i| (2 * i as i64 - n_bins as i64) as f64 / n_bins as f64)
        .collect()
}

/// Bins are right-open except the last, which also holds +1.
pub fn bin_index(edges: &[f64], y: f64) -> usize {
    let n = edges.len() - 1;
    let idx = edges.partition_point(|e| *e <= y);
    idx.saturating_sub(1).min(n - 1)
}

impl BinWeights {
    /// All weights 1: plain L1.
    pub fn uniform(n_bins: usize) -> Self {
        BinWeights {
            edges: bin_edges(n_bins),
            counts: vec![0; n_bins],
            weights: vec![1.0; n_bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin(&self, y: f64) -> usize {
        bin_index(&self.edges, y)
    }

    pub fn weight(&self, y: f64) -> f64 {
        self.weights[self.bin(y)]
    }
}

/// Weights `∝ 1/max(count, 1)`, scaled so that `Σ count·weight = N`.
pub fn compute_bin_weights(train_targets: &[f64], n_bins: usize) -> Result<BinWeights, TrainError> {
    if train_targets.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if let Some(y) = train_targets.iter().find(|y| !(-1.0..=1.0).contains(*y)) {
        return Err(TrainError::InvalidTarget(*y));
    }
    let edges = bin_edges(n_bins);
    let mut counts = vec![0u64; n_bins];
    for &y in train_targets {
        counts[bin_index(&edges, y)] += 1;
    }
    let n = train_targets.len() as f64;
    let occupied = counts.iter().filter(|c| **c > 0).count() as f64;
    let weights = counts.iter().map(|&c| n / (occupied * c.max(1) as f64)).collect();
    Ok(BinWeights { edges, counts, weights })
}

/// `(1/N) Σ w(y_i) |ŷ_i − y_i|`
pub fn weighted_l1(pred: &[f64], target: &[f64], bw: &BinWeights) -> f64 {
    assert_eq!(pred.len(), target.len());
    let s: f64 = pred.iter().zip(target).map(|(p, y)| bw.weight(*y) * (p - y).abs()).sum();
    s / pred.len() as f64
}

pub fn l1(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(p, y)| (p - y).abs()).sum::<f64>() / pred.len() as f64
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pred.len() as f64
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    WeightedL1,
    L1,
    Mse,
}

impl LossKind {
    pub fn value(&self, pred: &[f64], target: &[f64], bw: &BinWeights) -> f64 {
        match self {
            LossKind::WeightedL1 => weighted_l1(pred, target, bw),
            LossKind::L1 => l1(pred, target),
            LossKind::Mse => mse(pred, target),
        }
    }

    /// Loss and `∂loss/∂ŷ_i`; the L1 subgradient at `ŷ = y` is 0.
    pub fn value_and_grad(&self, pred: &[f64], target: &[f64], bw: &BinWeights) -> (f64, Vec<f64>) {
        let n = pred.len() as f64;
        let grad = pred
            .iter()
            .zip(target)
            .map(|(p, y)| match self {
                LossKind::WeightedL1 => bw.weight(*y) * sign(p - y) / n,
                LossKind::L1 => sign(p - y) / n,
                LossKind::Mse => 2.0 * (p - y) / n,
            })
            .collect();
        (self.value(pred, target, bw), grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edges_are_exact_decimals() {
        assert_eq!(bin_edges(10), vec![-1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    }

    #[test]
    fn boundaries() {
        let e = bin_edges(10);
        assert_eq!(bin_index(&e, -1.0), 0);
        assert_eq!(bin_index(&e, -0.8), 1);
        assert_eq!(bin_index(&e, 0.0), 5);
        assert_eq!(bin_index(&e, 0.79), 8);
        assert_eq!(bin_index(&e, 1.0), 9);
    }

    #[test]
    fn single_bin_weight_is_one() {
        let bw = compute_bin_weights(&[0.1, 0.15, 0.19], 10).unwrap();
        assert_eq!(bw.weights[5], 1.0);
    }

    #[test]
    fn nine_to_one() {
        let mut y = vec![0.5; 9];
        y.push(-0.5);
        let bw = compute_bin_weights(&y, 10).unwrap();
        assert_eq!(bw.weights[7], 5.0 / 9.0);
        assert_eq!(bw.weights[2], 5.0);
        let loss = weighted_l1(&[0.6, -0.7], &[0.5, -0.5], &bw);
        assert!((loss - (5.0 / 9.0 * 0.1 + 5.0 * 0.2) / 2.0).abs() < 1e-12);
        assert!((loss - 0.5278).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        assert!(matches!(compute_bin_weights(&[], 10), Err(TrainError::EmptyTrainingSet)));
        assert!(matches!(compute_bin_weights(&[1.5], 10), Err(TrainError::InvalidTarget(_))));
    }

    proptest! {
        #[test]
        fn normalization_holds(ys in prop::collection::vec(-1.0f64..=1.0, 1..200)) {
            let bw = compute_bin_weights(&ys, 10).unwrap();
            let total: f64 = bw.counts.iter().zip(&bw.weights).map(|(c, w)| *c as f64 * w).sum();
            prop_assert!((total - ys.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn weighted_equals_plain_under_uniform_occupancy(per_bin in 1usize..6, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut y = Vec::new();
            for b in 0..10 {
                for _ in 0..per_bin {
                    y.push(-1.0 + 0.2 * b as f64 + rng.gen_range(0.01..0.19));
                }
            }
            let pred: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
            let bw = compute_bin_weights(&y, 10).unwrap();
            prop_assert!((weighted_l1(&pred, &y, &bw) - l1(&pred, &y)).abs() <= 1e-12);
        }

        #[test]
        fn loss_ignores_sample_order(mut pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..40)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let bw = compute_bin_weights(&y, 10).unwrap();
            let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().cloned().unzip() };
            let (p1, y1) = split(&pairs);
            let a = weighted_l1(&p1, &y1, &bw);
            pairs.reverse();
            let (p2, y2) = split(&pairs);
            prop_assert!((a - weighted_l1(&p2, &y2, &bw)).abs() < 1e-12);
        }
    }
}
