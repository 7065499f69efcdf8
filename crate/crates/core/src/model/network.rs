//! Dense networks with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Architecture {
    /// Single affine layer.
    SoftmaxLinear,
    /// One tanh hidden layer of the given width.
    Mlp1Hidden { width: usize },
}

/// Parameters live in one flat vector:
/// linear `[W (out×in), b (out)]`;
/// MLP `[W1 (width×in), b1 (width), W2 (out×width), b2 (out)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    arch: Architecture,
    input_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Architecture {
    pub fn param_count(self, input_dim: usize, output_dim: usize) -> usize {
        match self {
            Architecture::SoftmaxLinear => output_dim * input_dim + output_dim,
            Architecture::Mlp1Hidden { width } => {
                width * input_dim + width + output_dim * width + output_dim
            }
        }
    }
}

impl Network {
    pub fn zeros(arch: Architecture, input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        if let Architecture::Mlp1Hidden { width: 0 } = arch {
            return Err(Error::invalid("hidden width must be positive"));
        }
        Ok(Self {
            arch,
            input_dim,
            output_dim,
            params: vec![0.0; arch.param_count(input_dim, output_dim)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(
        arch: Architecture,
        input_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(arch, input_dim, output_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in slice {
                *w = rng.random_range(-limit..limit);
            }
        };
        match arch {
            Architecture::SoftmaxLinear => {
                let n = output_dim * input_dim;
                fill(&mut net.params[..n], input_dim, output_dim);
            }
            Architecture::Mlp1Hidden { width } => {
                let w1 = width * input_dim;
                fill(&mut net.params[..w1], input_dim, width);
                let w2_start = w1 + width;
                let w2_end = w2_start + output_dim * width;
                fill(&mut net.params[w2_start..w2_end], width, output_dim);
            }
        }
        Ok(net)
    }

    pub fn from_params(
        arch: Architecture,
        input_dim: usize,
        output_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(arch, input_dim, output_dim)?;
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn affine(
        weights: &[f64],
        bias: &[f64],
        input: impl Fn(usize) -> f64,
        n_in: usize,
    ) -> Vec<f64> {
        bias.iter()
            .enumerate()
            .map(|(o, &b)| {
                let row = &weights[o * n_in..(o + 1) * n_in];
                b + row
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * input(i))
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f64> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &[f32]) -> Activations {
        debug_assert_eq!(x.len(), self.input_dim);
        let (n_in, n_out) = (self.input_dim, self.output_dim);
        let p = &self.params;
        match self.arch {
            Architecture::SoftmaxLinear => {
                let w_end = n_out * n_in;
                let output = Self::affine(&p[..w_end], &p[w_end..], |i| x[i] as f64, n_in);
                Activations {
                    hidden: Vec::new(),
                    output,
                }
            }
            Architecture::Mlp1Hidden { width } => {
                let w1 = width * n_in;
                let b1 = w1 + width;
                let w2 = b1 + n_out * width;
                let hidden: Vec<f64> = Self::affine(&p[..w1], &p[w1..b1], |i| x[i] as f64, n_in)
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                let output = Self::affine(&p[b1..w2], &p[w2..], |i| hidden[i], width);
                Activations { hidden, output }
            }
        }
    }

    /// Accumulate `∂(dout · output)/∂params` into `grad`.
    pub fn backward(&self, x: &[f32], act: &Activations, dout: &[f64], grad: &mut [f64]) {
        let (n_in, n_out) = (self.input_dim, self.output_dim);
        match self.arch {
            Architecture::SoftmaxLinear => {
                let w_end = n_out * n_in;
                for (o, &d) in dout.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[o * n_in..(o + 1) * n_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += d * xi as f64;
                    }
                    grad[w_end + o] += d;
                }
            }
            Architecture::Mlp1Hidden { width } => {
                let w1 = width * n_in;
                let b1 = w1 + width;
                let w2 = b1 + n_out * width;
                let p = &self.params;
                let mut dhidden = vec![0.0; width];
                for (o, &d) in dout.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &p[b1 + o * width..b1 + (o + 1) * width];
                    let grow = &mut grad[b1 + o * width..b1 + (o + 1) * width];
                    for h in 0..width {
                        grow[h] += d * act.hidden[h];
                        dhidden[h] += d * wrow[h];
                    }
                    grad[w2 + o] += d;
                }
                for h in 0..width {
                    let dz = dhidden[h] * (1.0 - act.hidden[h] * act.hidden[h]);
                    if dz == 0.0 {
                        continue;
                    }
                    let row = &mut grad[h * n_in..(h + 1) * n_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += dz * xi as f64;
                    }
                    grad[w1 + h] += dz;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(Architecture::SoftmaxLinear.param_count(4, 3), 15);
        assert_eq!(
            Architecture::Mlp1Hidden { width: 2 }.param_count(4, 3),
            8 + 2 + 6 + 3
        );
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(Architecture::Mlp1Hidden { width: 3 }, 4, 2).unwrap();
        assert_eq!(net.forward(&[0.3, 0.1, 0.0, 1.0]), vec![0.0, 0.0]);
        assert!(Network::zeros(Architecture::Mlp1Hidden { width: 0 }, 4, 2).is_err());
        assert!(Network::zeros(Architecture::SoftmaxLinear, 0, 2).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Network::init(Architecture::SoftmaxLinear, 5, 3, 1).unwrap();
        let b = Network::init(Architecture::SoftmaxLinear, 5, 3, 1).unwrap();
        let c = Network::init(Architecture::SoftmaxLinear, 5, 3, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x: Vec<f32> = vec![0.2, 0.9, 0.4, 0.0, 0.7];
        let dout = [0.3, -1.2];
        for arch in [
            Architecture::SoftmaxLinear,
            Architecture::Mlp1Hidden { width: 4 },
        ] {
            let net = Network::init(arch, 5, 2, 3).unwrap();
            let act = net.forward_cached(&x);
            let mut grad = vec![0.0; net.params().len()];
            net.backward(&x, &act, &dout, &mut grad);
            let objective = |n: &Network| {
                n.forward(&x)
                    .iter()
                    .zip(&dout)
                    .map(|(o, d)| o * d)
                    .sum::<f64>()
            };
            for (i, &g) in grad.iter().enumerate() {
                let mut plus = net.clone();
                plus.params_mut()[i] += 1e-5;
                let mut minus = net.clone();
                minus.params_mut()[i] -= 1e-5;
                let fd = (objective(&plus) - objective(&minus)) / 2e-5;
                assert!((fd - g).abs() < 1e-8, "{arch:?} param {i}: {fd} vs {g}");
            }
        }
    }
}
