use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use super::train::{run_sgd, TrainConfig, TrainReport};
use super::{argmax, log_softmax, softmax};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::group::{act, inverse, CyclicGroup, GroupElement};
use crate::image::GridImage;

/// A probability vector over the elements of a cyclic group, indexed by
/// element index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    group: CyclicGroup,
    probs: Vec<f64>,
}

impl GroupDistribution {
    pub fn new(group: CyclicGroup, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != group.len() {
            return Err(Error::invalid(format!(
                "{} probabilities for group {group}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(
                "probabilities must be finite and non-negative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { group, probs })
    }

    pub fn uniform(group: CyclicGroup) -> Self {
        Self {
            group,
            probs: vec![1.0 / group.len() as f64; group.len()],
        }
    }

    /// All mass on one element.
    pub fn point_mass(g: GroupElement) -> Self {
        let mut probs = vec![0.0; g.group().len()];
        probs[g.index() as usize] = 1.0;
        Self {
            group: g.group(),
            probs,
        }
    }

    pub fn group(&self) -> CyclicGroup {
        self.group
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, g: GroupElement) -> f64 {
        self.probs[g.index() as usize]
    }

    /// Most probable element, lowest index on ties.
    pub fn argmax(&self) -> GroupElement {
        self.group.element_wrapping(argmax(&self.probs) as i64)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> GroupElement {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.group.element_wrapping(i as i64);
            }
        }
        // Rounding left u beyond the last cumulative value.
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        self.group.element_wrapping(last as i64)
    }

    /// Left translation by `g`: the result gives `g·h` the mass `self` gave `h`.
    pub fn translate(&self, g: GroupElement) -> GroupDistribution {
        let n = self.probs.len();
        let shift = g.index() as usize % n;
        let probs = (0..n).map(|j| self.probs[(j + n - shift) % n]).collect();
        Self {
            group: self.group,
            probs,
        }
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    pub fn total_variation(&self, other: &GroupDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// How a single pose is chosen from the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decode {
    #[default]
    Argmax,
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canonicalized {
    /// `act(inverse(pose), x)`.
    pub image: GridImage,
    pub pose: GroupElement,
    pub posterior: GroupDistribution,
}

/// Orbit-softmax pose predictor: the posterior over `g` is the softmax of
/// `h(act(g⁻¹, x)) / τ` for a scalar energy network `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Canonicalizer {
    energy: Network,
    group: CyclicGroup,
    temperature: f64,
    side: usize,
}

impl Canonicalizer {
    pub fn new(energy: Network, group: CyclicGroup, temperature: f64, side: usize) -> Result<Self> {
        if energy.output_dim() != 1 || energy.input_dim() != side * side {
            return Err(Error::invalid(format!(
                "energy network must map {} inputs to 1 output",
                side * side
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            energy,
            group,
            temperature,
            side,
        })
    }

    pub fn group(&self) -> CyclicGroup {
        self.group
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn energy(&self) -> &Network {
        &self.energy
    }

    /// `act(g⁻¹, x)` for every `g`, in index order.
    pub fn orbit(&self, x: &GridImage) -> Result<Vec<GridImage>> {
        if x.side() != self.side {
            return Err(Error::invalid(format!(
                "image side {} does not match canonicalizer side {}",
                x.side(),
                self.side
            )));
        }
        Ok(self
            .group
            .elements()
            .map(|g| {
                if g.is_identity() {
                    x.clone()
                } else {
                    act(inverse(g), x)
                }
            })
            .collect())
    }

    fn posterior_of_orbit(&self, orbit: &[GridImage]) -> GroupDistribution {
        let energies: Vec<f64> = orbit
            .iter()
            .map(|y| self.energy.forward(y.pixels())[0] / self.temperature)
            .collect();
        GroupDistribution {
            group: self.group,
            probs: softmax(&energies),
        }
    }

    pub fn group_posterior(&self, x: &GridImage) -> Result<GroupDistribution> {
        Ok(self.posterior_of_orbit(&self.orbit(x)?))
    }

    pub fn canonicalize(&self, x: &GridImage, mode: Decode) -> Result<Canonicalized> {
        let mut orbit = self.orbit(x)?;
        let posterior = self.posterior_of_orbit(&orbit);
        let pose = match mode {
            Decode::Argmax => posterior.argmax(),
            Decode::Sample(seed) => posterior.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
        };
        let image = orbit.swap_remove(pose.index() as usize);
        Ok(Canonicalized {
            image,
            pose,
            posterior,
        })
    }

    /// Mean of `−log posterior(x)[identity]` over `d`.
    pub fn prior_loss(&self, d: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for s in d {
            total -= self.group_posterior(&s.image)?.probs[0].ln();
        }
        Ok(total / d.len() as f64)
    }

    /// Mean prior loss over `d` and its analytic gradient with respect to
    /// the energy network's parameters.
    pub fn prior_loss_gradient(&self, d: &Dataset) -> Result<(f64, Vec<f64>)> {
        let orbits = d
            .iter()
            .map(|s| self.orbit(&s.image))
            .collect::<Result<Vec<_>>>()?;
        let batch: Vec<usize> = (0..d.len()).collect();
        let mut grad = vec![0.0; self.energy.params().len()];
        let loss = prior_loss_batch(
            &self.energy,
            self.temperature,
            &orbits,
            &batch,
            Some(&mut grad),
        );
        let n = d.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }
}

/// Fit the energy network so that canonically posed inputs put their
/// posterior mass on the identity.
pub fn train_canonicalizer(
    d: &Dataset,
    group: CyclicGroup,
    arch: Architecture,
    temperature: f64,
    cfg: &TrainConfig,
) -> Result<(Canonicalizer, TrainReport)> {
    let side = d.side();
    let init = Network::init(arch, side * side, 1, cfg.seed)?;
    let mut cn = Canonicalizer::new(init, group, temperature, side)?;
    let orbits: Vec<Vec<GridImage>> = d
        .iter()
        .map(|s| cn.orbit(&s.image))
        .collect::<Result<_>>()?;
    let report = run_sgd(&mut cn.energy, d.len(), cfg, |net, batch, grad| {
        prior_loss_batch(net, temperature, &orbits, batch, Some(grad))
    })?;
    Ok((cn, report))
}

/// Summed prior loss over `batch`; accumulates its gradient when asked.
fn prior_loss_batch(
    net: &Network,
    temperature: f64,
    orbits: &[Vec<GridImage>],
    batch: &[usize],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut loss = 0.0;
    for &i in batch {
        let acts: Vec<_> = orbits[i]
            .iter()
            .map(|y| net.forward_cached(y.pixels()))
            .collect();
        let energies: Vec<f64> = acts.iter().map(|a| a.output[0] / temperature).collect();
        if super::diverged(&energies) {
            return f64::NAN;
        }
        let logp = log_softmax(&energies);
        loss -= logp[0];
        if let Some(grad) = grad.as_deref_mut() {
            for (g, (y, a)) in orbits[i].iter().zip(&acts).enumerate() {
                let d = (logp[g].exp() - f64::from(u8::from(g == 0))) / temperature;
                net.backward(y.pixels(), a, &[d], grad);
            }
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_glyphs;
    use crate::group::compose;

    fn random_cn(group: CyclicGroup, seed: u64) -> Canonicalizer {
        let net = Network::init(Architecture::Mlp1Hidden { width: 6 }, 256, 1, seed).unwrap();
        Canonicalizer::new(net, group, 1.0, 16).unwrap()
    }

    #[test]
    fn distribution_validation_and_helpers() {
        let g = CyclicGroup::C4;
        assert!(GroupDistribution::new(g, vec![0.5, 0.5]).is_err());
        assert!(GroupDistribution::new(g, vec![0.5, 0.5, 0.5, -0.5]).is_err());
        let p = GroupDistribution::new(g, vec![0.1, 0.4, 0.4, 0.1]).unwrap();
        assert_eq!(p.argmax().index(), 1);
        let t = p.translate(g.element(1).unwrap());
        assert_eq!(t.probs(), &[0.1, 0.1, 0.4, 0.4]);
        assert!((GroupDistribution::uniform(g).entropy() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(p.total_variation(&p), 0.0);
        let pm = GroupDistribution::point_mass(g.element(3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..20).all(|_| pm.sample(&mut rng).index() == 3));
    }

    #[test]
    fn constant_energy_is_uniform_with_log_order_loss() {
        let d = generate_glyphs(1, 6, 3, 16).unwrap();
        let net = Network::zeros(Architecture::SoftmaxLinear, 256, 1).unwrap();
        let cn = Canonicalizer::new(net, CyclicGroup::C8, 1.0, 16).unwrap();
        let p = cn.group_posterior(&d.samples()[0].image).unwrap();
        assert_eq!(p, GroupDistribution::uniform(CyclicGroup::C8));
        assert!((cn.prior_loss(&d).unwrap() - 8f64.ln()).abs() < 1e-12);
        // Uniform ties decode to the identity and leave the image untouched.
        let c = cn
            .canonicalize(&d.samples()[0].image, Decode::Argmax)
            .unwrap();
        assert!(c.pose.is_identity());
        assert_eq!(c.image, d.samples()[0].image);
    }

    #[test]
    fn c4_posterior_is_translation_equivariant() {
        let d = generate_glyphs(3, 5, 3, 16).unwrap();
        let cn = random_cn(CyclicGroup::C4, 7);
        for s in &d {
            let base = cn.group_posterior(&s.image).unwrap();
            for g in CyclicGroup::C4.elements() {
                let moved = cn.group_posterior(&act(g, &s.image)).unwrap();
                for h in CyclicGroup::C4.elements() {
                    let expect = base.prob(compose(inverse(g), h).unwrap());
                    assert!((moved.prob(h) - expect).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn c4_canonicalization_undoes_rotation_exactly() {
        let d = generate_glyphs(3, 4, 3, 16).unwrap();
        let cn = random_cn(CyclicGroup::C4, 2);
        for s in &d {
            let c0 = cn.canonicalize(&s.image, Decode::Argmax).unwrap();
            for g in CyclicGroup::C4.elements() {
                let c = cn.canonicalize(&act(g, &s.image), Decode::Argmax).unwrap();
                assert_eq!(c.pose, compose(g, c0.pose).unwrap());
                assert_eq!(c.image, c0.image);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = generate_glyphs(3, 1, 3, 16).unwrap();
        let cn = random_cn(CyclicGroup::C8, 1);
        let x = &d.samples()[0].image;
        let a = cn.canonicalize(x, Decode::Sample(11)).unwrap();
        let b = cn.canonicalize(x, Decode::Sample(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prior_gradient_matches_finite_differences() {
        let d = generate_glyphs(8, 5, 3, 16).unwrap();
        let cn = random_cn(CyclicGroup::C4, 5);
        let orbits: Vec<_> = d.iter().map(|s| cn.orbit(&s.image).unwrap()).collect();
        let batch: Vec<usize> = (0..5).collect();
        let net = cn.energy();
        let mut grad = vec![0.0; net.params().len()];
        prior_loss_batch(net, 1.0, &orbits, &batch, Some(&mut grad));
        let mut worst: f64 = 0.0;
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += 1e-4;
            let mut minus = net.clone();
            minus.params_mut()[i] -= 1e-4;
            let fd = (prior_loss_batch(&plus, 1.0, &orbits, &batch, None)
                - prior_loss_batch(&minus, 1.0, &orbits, &batch, None))
                / 2e-4;
            if fd.abs().max(g.abs()) > 1e-7 {
                worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()));
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn training_lowers_prior_loss_deterministically() {
        let d = generate_glyphs(4, 60, 3, 16).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.02,
            seed: 1,
            patience: 5,
            ..TrainConfig::default()
        };
        let arch = Architecture::Mlp1Hidden { width: 8 };
        let (a, ra) = train_canonicalizer(&d, CyclicGroup::C4, arch, 1.0, &cfg).unwrap();
        let (b, _) = train_canonicalizer(&d, CyclicGroup::C4, arch, 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(
            ra.epoch_losses.windows(2).all(|w| w[1] < w[0]),
            "{:?}",
            ra.epoch_losses
        );
        assert!(a.prior_loss(&d).unwrap() < 4f64.ln());
    }
}
