use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, BinWeights, TrainConfig, TrainError, TrainedModel};
use crate::regressor::{FeatureSequence, ModelConfig};

/// Hyperparameter grid. The layer/dropout pairs are listed jointly because
/// dropout only exists between stacked layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub fc_out: Vec<usize>,
    pub bidirectional: Vec<bool>,
    pub layers_dropout: Vec<(usize, f64)>,
}

impl Default for GridSpec {
    /// The reference grid: |x_m| in {4, 16, 64}, both directionalities,
    /// one layer, or two layers with dropout in {0, 0.1, 0.2, 0.5}.
    fn default() -> Self {
        GridSpec {
            fc_out: vec![2, 14, 62],
            bidirectional: vec![false, true],
            layers_dropout: vec![(1, 0.0), (2, 0.0), (2, 0.1), (2, 0.2), (2, 0.5)],
        }
    }
}

impl GridSpec {
    pub fn singleton(config: ModelConfig) -> Self {
        GridSpec {
            fc_out: vec![config.fc_out],
            bidirectional: vec![config.bidirectional],
            layers_dropout: vec![(config.num_layers, config.dropout)],
        }
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &o in &self.fc_out {
            for &bi in &self.bidirectional {
                for &(layers, dropout) in &self.layers_dropout {
                    out.push(ModelConfig::new(o, layers, bi, dropout));
                }
            }
        }
        out
    }

    /// Applies an embedding width other than the default to every config.
    pub fn configs_with_embed_dim(&self, embed_dim: usize) -> Vec<ModelConfig> {
        self.configs()
            .into_iter()
            .map(|c| ModelConfig { embed_dim, ..c })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub label: String,
    pub config: ModelConfig,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult<T> {
    pub best: ModelConfig,
    /// Ascending validation loss, ties by label.
    pub leaderboard: Vec<LeaderboardEntry>,
    pub best_model: T,
}

/// Runs `train` on every config and keeps the lowest validation loss.
///
/// `train` returns `(best validation loss, best epoch, epochs run, model)`.
pub fn grid_search_with<T, F>(configs: &[ModelConfig], train: F) -> Result<GridResult<T>, TrainError>
where
    T: Send,
    F: Fn(&ModelConfig) -> Result<(f64, usize, usize, T), TrainError> + Sync,
{
    if configs.is_empty() {
        return Err(TrainError::InvalidConfig("empty grid".into()));
    }
    let runs = configs
        .par_iter()
        .map(|c| train(c).map(|r| (*c, r)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ranked: Vec<(LeaderboardEntry, T)> = runs
        .into_iter()
        .map(|(config, (loss, best_epoch, epochs_run, model))| {
            (
                LeaderboardEntry {
                    label: config.label(),
                    config,
                    best_val_loss: loss,
                    best_epoch,
                    epochs_run,
                },
                model,
            )
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.best_val_loss
            .total_cmp(&b.0.best_val_loss)
            .then_with(|| a.0.label.cmp(&b.0.label))
    });
    let leaderboard = ranked.iter().map(|(e, _)| e.clone()).collect();
    let (first, best_model) = ranked.into_iter().next().unwrap();
    Ok(GridResult {
        best: first.config,
        leaderboard,
        best_model,
    })
}

pub fn grid_search(
    configs: &[ModelConfig],
    tc: &TrainConfig,
    train: &[FeatureSequence],
    val: &[FeatureSequence],
    bw: &BinWeights,
) -> Result<GridResult<TrainedModel>, TrainError> {
    grid_search_with(configs, |c| {
        let m = fit(*c, tc, train, val, bw)?;
        Ok((m.history.best_val_loss, m.history.best_epoch, m.history.epochs.len(), m))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_has_thirty_configs() {
        let configs = GridSpec::default().configs();
        assert_eq!(configs.len(), 30);
        assert!(configs.iter().all(|c| c.validate().is_ok()));
        assert!(configs.contains(&ModelConfig::best()));
        let sizes: std::collections::BTreeSet<_> = configs.iter().map(|c| c.input_dim()).collect();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![4, 16, 64]);
    }

    #[test]
    fn injected_losses_pick_argmin() {
        let configs = GridSpec::default().configs();
        let target = configs[17];
        let r = grid_search_with(&configs, |c| {
            let loss = if *c == target { 0.1 } else { 0.2 + c.fc_out as f64 / 100.0 };
            Ok((loss, 1, 1, c.label()))
        })
        .unwrap();
        assert_eq!(r.best, target);
        assert_eq!(r.best_model, target.label());
        assert_eq!(r.leaderboard.len(), 30);
    }

    #[test]
    fn singleton_grid() {
        let c = ModelConfig::new(14, 1, true, 0.0);
        let r = grid_search_with(&GridSpec::singleton(c).configs(), |_| Ok((0.3, 2, 5, ()))).unwrap();
        assert_eq!(r.best, c);
    }
}
