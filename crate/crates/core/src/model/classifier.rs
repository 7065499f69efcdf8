use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use super::train::{run_sgd, TrainConfig, TrainReport};
use super::{log_softmax, softmax};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::GridImage;

/// Image classifier producing a probability vector over `K` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    network: Network,
    num_classes: usize,
    side: usize,
}

impl Classifier {
    pub fn new(network: Network, side: usize) -> Result<Self> {
        if network.input_dim() != side * side {
            return Err(Error::invalid(format!(
                "network input {} does not match side {side}",
                network.input_dim()
            )));
        }
        if network.output_dim() < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        Ok(Self {
            num_classes: network.output_dim(),
            network,
            side,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn check(&self, x: &GridImage) -> Result<()> {
        if x.side() != self.side {
            return Err(Error::invalid(format!(
                "image side {} does not match classifier side {}",
                x.side(),
                self.side
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &GridImage) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.network.forward(x.pixels()))
    }

    pub fn predict_proba(&self, x: &GridImage) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &GridImage) -> Result<usize> {
        Ok(super::argmax(&self.predict_proba(x)?))
    }

    pub fn accuracy(&self, d: &Dataset) -> Result<f64> {
        let mut hits = 0usize;
        for s in d {
            hits += usize::from(self.predict(&s.image)? == s.label);
        }
        Ok(hits as f64 / d.len() as f64)
    }
}

/// Cross-entropy training on a canonically posed dataset.
pub fn train_classifier(
    d: &Dataset,
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    let side = d.side();
    let k = d.num_classes();
    let mut net = Network::init(arch, side * side, k, cfg.seed)?;
    let samples = d.samples();
    let mut report = run_sgd(&mut net, d.len(), cfg, |net, batch, grad| {
        let mut loss = 0.0;
        let mut dout = vec![0.0; k];
        for &i in batch {
            let x = samples[i].image.pixels();
            let act = net.forward_cached(x);
            if super::diverged(&act.output) {
                return f64::NAN;
            }
            let logp = log_softmax(&act.output);
            let y = samples[i].label;
            loss -= logp[y];
            for (c, d) in dout.iter_mut().enumerate() {
                *d = logp[c].exp() - f64::from(u8::from(c == y));
            }
            net.backward(x, &act, &dout, grad);
        }
        loss
    })?;
    let clf = Classifier::new(net, side)?;
    report.final_accuracy = Some(clf.accuracy(d)?);
    Ok((clf, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_glyphs;

    #[test]
    fn zero_weights_give_uniform() {
        let net = Network::zeros(Architecture::SoftmaxLinear, 16 * 16, 4).unwrap();
        let clf = Classifier::new(net, 16).unwrap();
        let p = clf.predict_proba(&GridImage::zeros(16)).unwrap();
        assert_eq!(p, vec![0.25; 4]);
        assert!(clf.predict_proba(&GridImage::zeros(8)).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_weights_and_seed_is_deterministic() {
        let d = generate_glyphs(5, 40, 3, 16).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            seed: 9,
            ..TrainConfig::default()
        };
        let arch = Architecture::Mlp1Hidden { width: 8 };
        let (clf, _) = train_classifier(&d, arch, &cfg).unwrap();
        let init = Network::init(arch, 256, 3, 9).unwrap();
        assert_eq!(clf.network(), &init);

        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.05,
            ..cfg
        };
        let (a, ra) = train_classifier(&d, arch, &cfg).unwrap();
        let (b, rb) = train_classifier(&d, arch, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn divergence_is_a_training_error() {
        let d = generate_glyphs(5, 40, 3, 16).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            patience: 50,
            ..TrainConfig::default()
        };
        let err = train_classifier(&d, Architecture::SoftmaxLinear, &cfg).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let d = generate_glyphs(2, 5, 3, 16).unwrap();
        let net = Network::init(Architecture::Mlp1Hidden { width: 6 }, 256, 3, 4).unwrap();
        let loss = |n: &Network| -> f64 {
            d.iter()
                .map(|s| -log_softmax(&n.forward(s.image.pixels()))[s.label])
                .sum()
        };
        let mut grad = vec![0.0; net.params().len()];
        for s in &d {
            let act = net.forward_cached(s.image.pixels());
            let p = softmax(&act.output);
            let dout: Vec<f64> = (0..3)
                .map(|c| p[c] - f64::from(u8::from(c == s.label)))
                .collect();
            net.backward(s.image.pixels(), &act, &dout, &mut grad);
        }
        for i in (0..grad.len()).step_by(7) {
            let mut plus = net.clone();
            plus.params_mut()[i] += 1e-4;
            let mut minus = net.clone();
            minus.params_mut()[i] -= 1e-4;
            let fd = (loss(&plus) - loss(&minus)) / 2e-4;
            let denom = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(
                (fd - grad[i]).abs() / denom < 1e-3,
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }
}
