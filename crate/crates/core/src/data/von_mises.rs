//! Von Mises densities and mixture sampling on a discretized circle.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{CyclicGroup, GroupElement};

/// Standard concentration sweep, from benign to severe secondary shift.
pub const KAPPA_SCHEDULE: [f64; 5] = [50.0, 40.0, 30.0, 20.0, 10.0];

const SERIES_LIMIT: f64 = 25.0;

/// `exp(-|x|) · I₀(x)`, accurate to ~1e-15 relative for all finite `x`.
fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // Asymptotic expansion; terms shrink until k ≈ 2x, far past convergence.
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * x);
            if next < sum * 1e-17 || next > term {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (TAU * x).sqrt()
    }
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    bessel_i0_scaled(x) * x.abs().exp()
}

/// Von Mises density `exp(κ·cos(angle − μ)) / (2π·I₀(κ))`.
pub fn von_mises_pdf(angle: f64, mu: f64, kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!(
            "von Mises concentration must be finite and >= 0, got {kappa}"
        )));
    }
    // Evaluated in scaled form so large κ does not overflow.
    Ok((kappa * ((angle - mu).cos() - 1.0)).exp() / (TAU * bessel_i0_scaled(kappa)))
}

fn validate_centers(centers: &[f64], group: CyclicGroup) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::invalid(
            "von Mises mixture needs at least one center",
        ));
    }
    let step = TAU / group.order() as f64;
    for &c in centers {
        if !c.is_finite() {
            return Err(Error::invalid(format!("non-finite mixture center {c}")));
        }
        let k = (c.rem_euclid(TAU) / step).round();
        if (c.rem_euclid(TAU) - k * step).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixture center {c} is not an angle of {group}"
            )));
        }
    }
    Ok(())
}

/// Normalized probabilities over the elements of `group` for an
/// equal-weight mixture of von Mises components at `centers`.
pub fn mixture_grid_probs(centers: &[f64], kappa: f64, group: CyclicGroup) -> Result<Vec<f64>> {
    validate_centers(centers, group)?;
    let mut probs = group
        .elements()
        .map(|g| {
            centers
                .iter()
                .map(|&mu| von_mises_pdf(g.angle(), mu, kappa))
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Draw `count` group elements from the von Mises mixture restricted to the
/// grid of `group`.
///
/// Sampling is stratified inverse-CDF: the unit interval is cut into `count`
/// equal strata, one uniform draw is taken in each, and the resulting
/// elements are shuffled. Every draw has exactly the categorical marginal;
/// the empirical histogram deviates from the grid probabilities by at most
/// about one count per element.
pub fn sample_von_mises_mixture(
    centers: &[f64],
    kappa: f64,
    group: CyclicGroup,
    seed: u64,
    count: usize,
) -> Result<Vec<GroupElement>> {
    let probs = mixture_grid_probs(centers, kappa, group)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<GroupElement> = (0..count)
        .map(|i| {
            let u = (i as f64 + rng.random::<f64>()) / count as f64;
            let idx = cdf.partition_point(|&c| c < u).min(probs.len() - 1);
            group.elements().nth(idx).expect("index within group")
        })
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Angles of the elements of `group`, handy as mixture centers.
pub fn group_angles(group: CyclicGroup) -> Vec<f64> {
    group.elements().map(|g| g.angle()).collect()
}
