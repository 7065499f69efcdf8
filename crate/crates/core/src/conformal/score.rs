use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonconformity score over a probability vector and a candidate label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScoreFunction {
    /// `1 − p_y`.
    Thr,
    /// Adaptive prediction sets: probability mass ranked at or above `y`.
    Aps {
        #[serde(default)]
        randomized: bool,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for ScoreFunction {
    fn default() -> Self {
        ScoreFunction::Aps {
            randomized: false,
            seed: 0,
        }
    }
}

impl ScoreFunction {
    pub fn tag(&self) -> &'static str {
        match self {
            ScoreFunction::Thr => "thr",
            ScoreFunction::Aps {
                randomized: false, ..
            } => "aps",
            ScoreFunction::Aps {
                randomized: true, ..
            } => "aps-randomized",
        }
    }

    /// A stateful scorer; randomized APS draws one uniform per call.
    pub fn scorer(&self) -> Scorer {
        let rng = match *self {
            ScoreFunction::Aps {
                randomized: true,
                seed,
            } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Scorer { sf: *self, rng }
    }
}

/// Score stream for one score function. Every call to [`Scorer::score`]
/// or [`Scorer::all_scores`] consumes one uniform in randomized mode, so
/// all labels of one sample share the same draw.
#[derive(Debug, Clone)]
pub struct Scorer {
    sf: ScoreFunction,
    rng: Option<ChaCha8Rng>,
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(
            "probability vector must be nonempty, finite and non-negative",
        ));
    }
    Ok(())
}

/// Labels ordered by descending probability, lower index first on ties.
fn aps_order(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

impl Scorer {
    pub fn function(&self) -> ScoreFunction {
        self.sf
    }

    fn draw(&mut self) -> f64 {
        match &mut self.rng {
            Some(rng) => rng.random(),
            None => 1.0,
        }
    }

    pub fn score(&mut self, probs: &[f64], y: usize) -> Result<f64> {
        check_probs(probs)?;
        if y >= probs.len() {
            return Err(Error::invalid(format!(
                "label {y} out of range for {} classes",
                probs.len()
            )));
        }
        Ok(match self.sf {
            ScoreFunction::Thr => 1.0 - probs[y],
            ScoreFunction::Aps { .. } => {
                let u = self.draw();
                let mut before = 0.0;
                for j in aps_order(probs) {
                    if j == y {
                        break;
                    }
                    before += probs[j];
                }
                before + u * probs[y]
            }
        })
    }

    /// Scores of every label for one sample.
    pub fn all_scores(&mut self, probs: &[f64]) -> Result<Vec<f64>> {
        check_probs(probs)?;
        Ok(match self.sf {
            ScoreFunction::Thr => probs.iter().map(|p| 1.0 - p).collect(),
            ScoreFunction::Aps { .. } => {
                let u = self.draw();
                let mut out = vec![0.0; probs.len()];
                let mut before = 0.0;
                for j in aps_order(probs) {
                    out[j] = before + u * probs[j];
                    before += probs[j];
                }
                out
            }
        })
    }

    /// Labels whose score does not exceed `q`.
    pub fn predict_set(&mut self, probs: &[f64], q: f64) -> Result<Vec<usize>> {
        let scores = self.all_scores(probs)?;
        Ok(threshold_set(&scores, |_| q))
    }
}

/// `{y : scores[y] ≤ q(y)}` in ascending label order.
pub fn threshold_set(scores: &[f64], q: impl Fn(usize) -> f64) -> Vec<usize> {
    (0..scores.len()).filter(|&y| scores[y] <= q(y)).collect()
}

/// Score of a single label; randomized APS uses the first draw of its stream.
pub fn score(sf: ScoreFunction, probs: &[f64], y: usize) -> Result<f64> {
    sf.scorer().score(probs, y)
}

pub fn predict_set(sf: ScoreFunction, probs: &[f64], q: f64) -> Result<Vec<usize>> {
    sf.scorer().predict_set(probs, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const APS: ScoreFunction = ScoreFunction::Aps {
        randomized: false,
        seed: 0,
    };

    #[test]
    fn worked_examples() {
        let p = [0.5, 0.3, 0.2];
        assert!((score(ScoreFunction::Thr, &p, 1).unwrap() - 0.7).abs() < 1e-15);
        assert!((score(APS, &p, 1).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(score(APS, &p, 0).unwrap(), 0.5);
        assert!(score(APS, &p, 3).is_err());
        assert_eq!(
            predict_set(ScoreFunction::Thr, &p, 0.7).unwrap(),
            vec![0, 1]
        );
        assert_eq!(
            predict_set(APS, &[0.1; 10], f64::INFINITY).unwrap().len(),
            10
        );
        assert!(predict_set(ScoreFunction::Thr, &p, 0.1).unwrap().is_empty());
    }

    #[test]
    fn aps_ties_rank_lower_index_first() {
        let p = [0.25, 0.5, 0.25];
        assert_eq!(score(APS, &p, 0).unwrap(), 0.75);
        assert_eq!(score(APS, &p, 2).unwrap(), 1.0);
    }

    #[test]
    fn randomized_stream_is_seeded() {
        let sf = ScoreFunction::Aps {
            randomized: true,
            seed: 4,
        };
        let p = [0.6, 0.4];
        let a: Vec<f64> = {
            let mut s = sf.scorer();
            (0..5).map(|_| s.score(&p, 1).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut s = sf.scorer();
            (0..5).map(|_| s.score(&p, 1).unwrap()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.6..=1.0).contains(v)));
        assert!(a.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn serde_tags() {
        let sf: ScoreFunction = serde_json::from_str(r#"{"kind":"thr"}"#).unwrap();
        assert_eq!(sf, ScoreFunction::Thr);
        let sf: ScoreFunction = serde_json::from_str(r#"{"kind":"aps"}"#).unwrap();
        assert_eq!(sf, APS);
        assert!(serde_json::from_str::<ScoreFunction>(r#"{"kind":"aps","rand":true}"#).is_err());
    }

    fn probs_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..12).prop_map(|v| {
            let total: f64 = v.iter().sum::<f64>() + 1e-9;
            v.into_iter().map(|x| (x + 1e-9 / 12.0) / total).collect()
        })
    }

    proptest! {
        #[test]
        fn scores_in_range_and_sets_monotone(
            p in probs_strategy(),
            q1 in 0.0f64..1.2,
            q2 in 0.0f64..1.2,
            randomized in any::<bool>(),
        ) {
            let sf = ScoreFunction::Aps { randomized, seed: 3 };
            for f in [ScoreFunction::Thr, sf] {
                let scores = f.scorer().all_scores(&p).unwrap();
                for (y, s) in scores.iter().enumerate() {
                    prop_assert!(*s >= 0.0 && *s <= 1.0 + 1e-6);
                    prop_assert_eq!(*s, f.scorer().score(&p, y).unwrap());
                }
                let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
                let a = f.scorer().predict_set(&p, lo).unwrap();
                let b = f.scorer().predict_set(&p, hi).unwrap();
                prop_assert!(a.iter().all(|y| b.contains(y)));
            }
        }

        #[test]
        fn thr_sets_are_high_probability_classes(p in probs_strategy(), q in 0.0f64..1.0) {
            prop_assume!(p.iter().all(|v| (v - (1.0 - q)).abs() > 1e-12));
            let set = predict_set(ScoreFunction::Thr, &p, q).unwrap();
            let expect: Vec<usize> = (0..p.len()).filter(|&y| p[y] >= 1.0 - q).collect();
            prop_assert_eq!(set, expect);
        }

        #[test]
        fn aps_argmax_scores_its_probability(p in probs_strategy()) {
            let top = crate::model::argmax(&p);
            prop_assert_eq!(score(APS, &p, top).unwrap(), p[top]);
        }
    }
}
