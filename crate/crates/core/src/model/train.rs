use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    /// SGD with heavy-ball momentum 0.9.
    #[default]
    Momentum,
}

pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Stop after this many epochs without a lower training loss.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            optimizer: Optimizer::Momentum,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::config(
                "epochs, batch_size and patience must be positive",
            ));
        }
        // Zero is accepted so a pass can be run without moving the weights.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
    /// Training-set accuracy after the last epoch, where meaningful.
    pub final_accuracy: Option<f64>,
}

/// Minibatch SGD over `n` samples. `batch_loss` adds the batch gradient
/// (summed, not averaged) into its buffer and returns the summed loss.
pub(crate) fn run_sgd<F>(
    net: &mut Network,
    n: usize,
    cfg: &TrainConfig,
    mut batch_loss: F,
) -> Result<TrainReport>
where
    F: FnMut(&Network, &[usize], &mut [f64]) -> f64,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4531);
    let mut order: Vec<usize> = (0..n).collect();
    let dim = net.params().len();
    let mut grad = vec![0.0; dim];
    let mut velocity = vec![0.0; dim];
    let beta = match cfg.optimizer {
        Optimizer::Sgd => 0.0,
        Optimizer::Momentum => MOMENTUM,
    };
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        stopped_early: false,
        final_accuracy: None,
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = batch_loss(net, batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {b} \
                     (batch loss {loss}, learning rate {})",
                    cfg.learning_rate
                )));
            }
            total += loss;
            let scale = cfg.learning_rate / batch.len() as f64;
            for ((p, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = beta * *v - scale * g;
                *p += *v;
            }
            if net.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Training(format!(
                    "parameters diverged at epoch {epoch}, batch {b} (learning rate {})",
                    cfg.learning_rate
                )));
            }
        }
        let mean = total / n as f64;
        report.epoch_losses.push(mean);
        if mean < best - 1e-12 {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                report.stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::Architecture;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let neg = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(neg.validate().is_err());
        let json =
            r#"{"epochs":1,"batch_size":2,"learning_rate":0.1,"seed":3,"patience":1,"extra":0}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
    }

    #[test]
    fn quadratic_converges_and_nan_is_reported() {
        // Fit a single bias to the target 2.0 under squared error.
        let mut net = Network::zeros(Architecture::SoftmaxLinear, 1, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 4,
            learning_rate: 0.05,
            patience: 200,
            ..TrainConfig::default()
        };
        let report = run_sgd(&mut net, 8, &cfg, |n, batch, grad| {
            let mut loss = 0.0;
            for _ in batch {
                let y = n.forward(&[0.0])[0];
                loss += 0.5 * (y - 2.0) * (y - 2.0);
                grad[1] += y - 2.0;
            }
            loss
        })
        .unwrap();
        assert!((net.params()[1] - 2.0).abs() < 1e-6);
        assert!(report.epoch_losses.last().unwrap() < &1e-10);

        let err = run_sgd(&mut net, 8, &cfg, |_, _, _| f64::NAN).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn patience_stops_flat_training() {
        let mut net = Network::zeros(Architecture::SoftmaxLinear, 1, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            patience: 3,
            ..TrainConfig::default()
        };
        let report = run_sgd(&mut net, 4, &cfg, |_, b, _| b.len() as f64).unwrap();
        assert_eq!(report.epoch_losses.len(), 4);
        assert!(report.stopped_early);
    }
}
