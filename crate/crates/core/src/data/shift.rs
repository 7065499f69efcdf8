//! Partition-conditional geometric shifts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::von_mises::{group_angles, sample_von_mises_mixture};
use super::Dataset;
use crate::error::{Error, Result};
use crate::group::{act, CyclicGroup, GroupElement};

/// Standard deviations (group-index units) used by the var-gauss shift.
pub const VAR_GAUSS_SIGMAS: [f64; 6] = [0.0001, 0.001, 0.01, 0.1, 1.0, 10.0];

/// Mean and spread of a wrapped normal over group indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalParams {
    pub mean: f64,
    pub std: f64,
}

/// Declarative description of a geometric shift.
///
/// Per-partition variants carry one entry per partition id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShiftSpec {
    None,
    /// Every element of the group equally likely, for all partitions.
    Uniform,
    Dirac {
        elements: Vec<u32>,
    },
    DiscreteNormal {
        params: Vec<NormalParams>,
    },
    /// Zero-mean wrapped normals whose spreads come from [`VAR_GAUSS_SIGMAS`].
    VarGauss {
        sigmas: Vec<f64>,
    },
    VonMisesMixture {
        centers: CyclicGroup,
        kappa: f64,
    },
}

impl ShiftSpec {
    /// A var-gauss shift with each partition's spread drawn from
    /// [`VAR_GAUSS_SIGMAS`].
    pub fn var_gauss(num_partitions: usize, seed: u64) -> ShiftSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigmas = (0..num_partitions)
            .map(|_| VAR_GAUSS_SIGMAS[rng.random_range(0..VAR_GAUSS_SIGMAS.len())])
            .collect();
        ShiftSpec::VarGauss { sigmas }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ShiftSpec::None => "none",
            ShiftSpec::Uniform => "uniform",
            ShiftSpec::Dirac { .. } => "dirac",
            ShiftSpec::DiscreteNormal { .. } => "discrete-normal",
            ShiftSpec::VarGauss { .. } => "var-gauss",
            ShiftSpec::VonMisesMixture { .. } => "von-mises-mixture",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ShiftSpec::DiscreteNormal { params } => {
                if let Some(p) = params
                    .iter()
                    .find(|p| !(p.std > 0.0) || !p.mean.is_finite())
                {
                    return Err(Error::config(format!(
                        "invalid discrete-normal params {p:?}"
                    )));
                }
            }
            ShiftSpec::VarGauss { sigmas } => {
                if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0)) {
                    return Err(Error::config(format!("invalid var-gauss sigma {s}")));
                }
            }
            ShiftSpec::VonMisesMixture { kappa, .. } if (!(*kappa > 0.0) || !kappa.is_finite()) => {
                return Err(Error::config(format!(
                    "von Mises concentration must be > 0, got {kappa}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Pose distribution of one partition over `group`, for the
    /// independent-draw variants.
    fn partition_pmf(&self, partition: usize, group: CyclicGroup) -> Result<Vec<f64>> {
        let n = group.len();
        let missing = || {
            Error::config(format!(
                "{} shift has no parameters for partition {partition}",
                self.tag()
            ))
        };
        match self {
            ShiftSpec::None => {
                let mut p = vec![0.0; n];
                p[0] = 1.0;
                Ok(p)
            }
            ShiftSpec::Uniform => Ok(vec![1.0 / n as f64; n]),
            ShiftSpec::Dirac { elements } => {
                let idx = *elements.get(partition).ok_or_else(missing)?;
                if idx >= group.order() {
                    return Err(Error::config(format!(
                        "dirac element {idx} out of range for {group}"
                    )));
                }
                let mut p = vec![0.0; n];
                p[idx as usize] = 1.0;
                Ok(p)
            }
            ShiftSpec::DiscreteNormal { params } => {
                let p = params.get(partition).ok_or_else(missing)?;
                wrapped_normal_pmf(p.mean, p.std, group.order())
            }
            ShiftSpec::VarGauss { sigmas } => {
                let s = *sigmas.get(partition).ok_or_else(missing)?;
                wrapped_normal_pmf(0.0, s, group.order())
            }
            ShiftSpec::VonMisesMixture { .. } => unreachable!("mixture is sampled jointly"),
        }
    }
}

/// Wrapped, point-discretized normal over the indices `0..order`.
pub fn wrapped_normal_pmf(mean: f64, std: f64, order: u32) -> Result<Vec<f64>> {
    if !(std > 0.0) || !mean.is_finite() || order == 0 {
        return Err(Error::invalid(format!(
            "invalid wrapped normal (mean {mean}, std {std}, order {order})"
        )));
    }
    let n = order as f64;
    let wraps = (6.0 * std / n).ceil() as i64 + 1;
    let log_mass: Vec<f64> = (0..order)
        .map(|k| {
            let terms: Vec<f64> = (-wraps..=wraps)
                .map(|m| {
                    let d = k as f64 - mean + m as f64 * n;
                    -d * d / (2.0 * std * std)
                })
                .collect();
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        })
        .collect();
    let top = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mass: Vec<f64> = log_mass.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = mass.iter().sum();
    Ok(mass.into_iter().map(|m| m / total).collect())
}

fn draw_categorical(pmf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Rotate every sample by a pose drawn from `spec` for its partition.
///
/// `true_pose` records the applied element. With [`ShiftSpec::None`] images
/// are untouched and every pose is the identity. The von Mises mixture draws
/// the whole pose sequence at once with the stratified sampler; all other
/// variants draw each pose independently.
pub fn apply_shift(
    d: &Dataset,
    spec: &ShiftSpec,
    group: CyclicGroup,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    let poses: Vec<GroupElement> = match spec {
        ShiftSpec::VonMisesMixture { centers, kappa } => {
            if !group.order().is_multiple_of(centers.order()) {
                return Err(Error::config(format!(
                    "mixture centers {centers} are not a subgroup of {group}"
                )));
            }
            sample_von_mises_mixture(&group_angles(*centers), *kappa, group, seed, d.len())?
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cache: Vec<Option<Vec<f64>>> = vec![None; d.num_partitions()];
            d.iter()
                .map(|s| {
                    let slot = &mut cache[s.partition];
                    if slot.is_none() {
                        *slot = Some(spec.partition_pmf(s.partition, group)?);
                    }
                    let idx = draw_categorical(slot.as_ref().expect("filled"), &mut rng);
                    group.element(idx as u32)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let samples = d
        .samples()
        .iter()
        .zip(poses)
        .map(|(s, g)| {
            let mut out = s.clone();
            if !g.is_identity() {
                out.image = act(g, &s.image);
            }
            out.true_pose = Some(g);
            out
        })
        .collect();
    Dataset::new(d.split(), d.num_classes(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_glyphs, Split};

    #[test]
    fn none_keeps_images_and_sets_identity() {
        let d = generate_glyphs(1, 12, 3, 16).unwrap();
        let s = apply_shift(&d, &ShiftSpec::None, CyclicGroup::C8, 5).unwrap();
        for (a, b) in d.iter().zip(&s) {
            assert_eq!(a.image, b.image);
            assert_eq!(b.true_pose, Some(CyclicGroup::C8.identity()));
        }
    }

    #[test]
    fn dirac_single_partition() {
        let d = generate_glyphs(2, 20, 3, 16).unwrap().repartition(|_| 0);
        let spec = ShiftSpec::Dirac { elements: vec![2] };
        let s = apply_shift(&d, &spec, CyclicGroup::C4, 0).unwrap();
        let g = CyclicGroup::C4.element(2).unwrap();
        for (a, b) in d.iter().zip(&s) {
            assert_eq!(b.true_pose, Some(g));
            assert_eq!(b.image, act(g, &a.image));
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn missing_partition_is_config_error() {
        let d = generate_glyphs(2, 20, 3, 16).unwrap();
        let spec = ShiftSpec::Dirac {
            elements: vec![1, 2],
        };
        assert!(matches!(
            apply_shift(&d, &spec, CyclicGroup::C4, 0),
            Err(Error::Config(_))
        ));
        let bad = ShiftSpec::Dirac {
            elements: vec![9, 9, 9],
        };
        assert!(apply_shift(&d, &bad, CyclicGroup::C8, 0).is_err());
    }

    #[test]
    fn wrapped_normal_limits() {
        let sharp = wrapped_normal_pmf(0.0, 0.0001, 8).unwrap();
        assert!((sharp[0] - 1.0).abs() < 1e-12);
        let flat = wrapped_normal_pmf(0.0, 10.0, 8).unwrap();
        for p in &flat {
            assert!((p - 0.125).abs() < 1e-6);
        }
        // Symmetric around the mean across the wrap.
        let p = wrapped_normal_pmf(0.0, 1.0, 8).unwrap();
        assert!((p[1] - p[7]).abs() < 1e-15);
        assert!(wrapped_normal_pmf(0.0, 0.0, 8).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let d = generate_glyphs(3, 30, 4, 16).unwrap();
        let spec = ShiftSpec::Uniform;
        let a = apply_shift(&d, &spec, CyclicGroup::C8, 11).unwrap();
        let b = apply_shift(&d, &spec, CyclicGroup::C8, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split(), Split::PredictorTrain);
    }

    #[test]
    fn var_gauss_draws_from_standard_list() {
        let spec = ShiftSpec::var_gauss(10, 4);
        let ShiftSpec::VarGauss { sigmas } = &spec else {
            panic!("wrong variant")
        };
        assert_eq!(sigmas.len(), 10);
        assert!(sigmas.iter().all(|s| VAR_GAUSS_SIGMAS.contains(s)));
    }

    #[test]
    fn mixture_requires_subgroup_centers() {
        let d = generate_glyphs(3, 8, 2, 16).unwrap();
        let spec = ShiftSpec::VonMisesMixture {
            centers: CyclicGroup::C8,
            kappa: 10.0,
        };
        assert!(apply_shift(&d, &spec, CyclicGroup::new(12).unwrap(), 0).is_err());
        let s = apply_shift(&d, &spec, CyclicGroup::C360, 0).unwrap();
        assert!(s
            .iter()
            .all(|x| x.true_pose.unwrap().group() == CyclicGroup::C360));
        let bad = ShiftSpec::VonMisesMixture {
            centers: CyclicGroup::C4,
            kappa: 0.0,
        };
        assert!(apply_shift(&d, &bad, CyclicGroup::C360, 0).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec: ShiftSpec =
            serde_json::from_str(r#"{"variant":"dirac","elements":[1,2]}"#).unwrap();
        assert_eq!(
            spec,
            ShiftSpec::Dirac {
                elements: vec![1, 2]
            }
        );
        let vm: ShiftSpec =
            serde_json::from_str(r#"{"variant":"von-mises-mixture","centers":4,"kappa":10.0}"#)
                .unwrap();
        assert_eq!(vm.tag(), "von-mises-mixture");
        assert!(serde_json::from_str::<ShiftSpec>(r#"{"variant":"dirac","elemnts":[1]}"#).is_err());
    }
}
