//! Deterministic synthetic glyph corpus.
//!
//! Each class is a stroke drawing rendered upright inside the inscribed disk
//! of the image, so that rotations about the center never clip content. The
//! last class is a ring whose stroke is only slightly thicker at the top,
//! which makes its pose weakly identifiable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSample, Split};
use crate::error::{Error, Result};
use crate::image::GridImage;

/// Dataset-generation parameters as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlyphParams {
    pub seed: u64,
    pub count: usize,
    pub num_classes: usize,
    pub side: usize,
}

impl GlyphParams {
    pub fn generate(&self, split: Split) -> Result<Dataset> {
        Ok(generate_glyphs(self.seed, self.count, self.num_classes, self.side)?.with_split(split))
    }
}

type Point = (f64, f64);

/// A polyline stroke in unit coordinates (x right, y up, unit = radius).
struct Stroke {
    points: Vec<Point>,
}

fn poly(points: &[Point]) -> Stroke {
    Stroke {
        points: points.to_vec(),
    }
}

/// Asymmetric shapes; none of them is invariant under a nontrivial rotation.
fn shape(class: usize) -> Vec<Stroke> {
    match class {
        0 => vec![poly(&[(-0.35, 0.6), (-0.35, -0.6), (0.4, -0.6)])],
        1 => vec![
            poly(&[(-0.35, -0.62), (-0.35, 0.6), (0.45, 0.6)]),
            poly(&[(-0.35, 0.05), (0.25, 0.05)]),
        ],
        2 => vec![poly(&[
            (-0.35, -0.65),
            (-0.35, 0.6),
            (0.25, 0.6),
            (0.42, 0.38),
            (0.25, 0.12),
            (-0.35, 0.12),
        ])],
        3 => vec![poly(&[(-0.45, 0.6), (0.45, 0.6), (-0.1, -0.65)])],
        4 => vec![poly(&[
            (0.25, 0.65),
            (0.25, -0.35),
            (0.05, -0.6),
            (-0.25, -0.55),
            (-0.38, -0.3),
        ])],
        5 => vec![
            poly(&[(-0.5, 0.6), (0.5, 0.6)]),
            poly(&[(0.0, 0.6), (0.0, -0.65)]),
        ],
        6 => vec![
            poly(&[(-0.4, 0.62), (-0.4, -0.62)]),
            poly(&[(0.4, 0.62), (-0.4, 0.0), (0.4, -0.62)]),
        ],
        7 => vec![
            poly(&[(0.4, 0.6), (-0.4, 0.6), (-0.4, -0.6), (0.4, -0.6)]),
            poly(&[(-0.4, 0.0), (0.25, 0.0)]),
        ],
        8 => vec![poly(&[
            (0.2, -0.65),
            (0.2, 0.6),
            (-0.45, -0.2),
            (0.45, -0.2),
        ])],
        9 => vec![
            poly(&[(0.0, -0.65), (0.0, 0.0), (-0.45, 0.6)]),
            poly(&[(0.0, 0.0), (0.45, 0.6)]),
        ],
        10 => vec![
            poly(&[(0.0, -0.65), (0.0, 0.6)]),
            poly(&[(-0.35, 0.25), (0.0, 0.6), (0.35, 0.25)]),
        ],
        _ => unreachable!("class {class} has no shape"),
    }
}

/// Number of distinct shapes available, including the ring.
pub const MAX_CLASSES: usize = 12;
const RING_SEGMENTS: usize = 48;

struct Jitter {
    dx: f64,
    dy: f64,
    scale: f64,
    rotation: f64,
    width: f64,
}

fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * vx - p.0, a.1 + t * vy - p.1);
    (cx * cx + cy * cy).sqrt()
}

fn transform(p: Point, j: &Jitter) -> Point {
    let (s, c) = j.rotation.sin_cos();
    let (x, y) = (p.0 * j.scale, p.1 * j.scale);
    (x * c - y * s + j.dx, x * s + y * c + j.dy)
}

/// Segments (a, b, half-width multiplier) for one glyph in unit coordinates.
fn segments(class: usize, ring: bool, j: &Jitter) -> Vec<(Point, Point, f64)> {
    if ring {
        let radius = 0.5;
        (0..RING_SEGMENTS)
            .map(|i| {
                let t0 = std::f64::consts::TAU * i as f64 / RING_SEGMENTS as f64;
                let t1 = std::f64::consts::TAU * (i + 1) as f64 / RING_SEGMENTS as f64;
                let mid = 0.5 * (t0 + t1);
                // Thicker near the top (angle π/2).
                let bump = (mid - std::f64::consts::FRAC_PI_2).cos().max(0.0).powi(4);
                let a = transform((radius * t0.cos(), radius * t0.sin()), j);
                let b = transform((radius * t1.cos(), radius * t1.sin()), j);
                (a, b, 1.0 + 0.9 * bump)
            })
            .collect()
    } else {
        shape(class)
            .into_iter()
            .flat_map(|stroke| {
                stroke
                    .points
                    .windows(2)
                    .map(|w| (transform(w[0], j), transform(w[1], j), 1.0))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

fn render(
    side: usize,
    segs: &[(Point, Point, f64)],
    j: &Jitter,
    rng: &mut ChaCha8Rng,
) -> GridImage {
    let center = (side as f64 - 1.0) / 2.0;
    let radius = center;
    let half_width = 0.85 * j.width;
    let mut px = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let x = (c as f64 - center) / radius;
            let y = (center - r as f64) / radius;
            let inside = x * x + y * y <= 1.0;
            let mut v: f64 = 0.0;
            for &(a, b, w) in segs {
                let d = distance_to_segment((x, y), a, b) * radius;
                // Linear anti-aliasing ramp over 1.5 px.
                let ink = ((half_width * w + 0.75 - d) / 1.5).clamp(0.0, 1.0);
                v = v.max(ink);
            }
            let noise: f64 = rng.sample(StandardNormal);
            let value = if inside { v + 0.04 * noise } else { 0.0 };
            px.push(value.clamp(0.0, 1.0) as f32);
        }
    }
    GridImage::new(side, px).expect("rendered image has valid shape")
}

/// Generate `count` upright glyphs over `num_classes` classes.
///
/// Labels are balanced (counts differ by at most one) and shuffled. Class
/// `num_classes - 1` is the ring. Output depends only on the arguments.
pub fn generate_glyphs(
    seed: u64,
    count: usize,
    num_classes: usize,
    side: usize,
) -> Result<Dataset> {
    if !(2..=MAX_CLASSES).contains(&num_classes) {
        return Err(Error::invalid(format!(
            "class count must be in 2..={MAX_CLASSES}, got {num_classes}"
        )));
    }
    if side < 16 {
        return Err(Error::invalid(format!(
            "side must be at least 16, got {side}"
        )));
    }
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..count).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng);
    let ring_class = num_classes - 1;
    let samples = labels
        .into_iter()
        .map(|label| {
            let j = Jitter {
                dx: rng.random_range(-0.06..0.06),
                dy: rng.random_range(-0.06..0.06),
                scale: rng.random_range(0.9..1.1),
                rotation: rng.random_range(-4.0f64..4.0).to_radians(),
                width: rng.random_range(0.85..1.15),
            };
            let segs = segments(label, label == ring_class, &j);
            let image = render(side, &segs, &j, &mut rng);
            LabeledSample::new(image, label)
        })
        .collect();
    Dataset::new(Split::PredictorTrain, num_classes, samples)
}
