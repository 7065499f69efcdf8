//! Square grayscale images and the rotation kernels used by group actions.
//!
//! Rotations by multiples of 90° are exact pixel permutations. Any other
//! angle is split into a residual in `[0°, 90°)` that is resampled with
//! bilinear interpolation (zero padding, center at `(side-1)/2`), followed
//! by the exact quarter-turn permutation.

use crate::error::{Error, Result};

/// A square `side × side` grayscale image, row-major, pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    side: usize,
    pixels: Vec<f32>,
}

impl GridImage {
    pub fn new(side: usize, pixels: Vec<f32>) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("image side must be positive"));
        }
        if pixels.len() != side * side {
            return Err(Error::invalid(format!(
                "expected {} pixels for side {side}, got {}",
                side * side,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel value {bad}")));
        }
        let pixels = pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        Ok(Self { side, pixels })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            pixels: vec![0.0; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.side + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Largest absolute pixel difference. Panics on mismatched sides.
    pub fn max_abs_diff(&self, other: &GridImage) -> f32 {
        assert_eq!(self.side, other.side, "image sides differ");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Euclidean distance between pixel vectors.
    pub fn l2_distance(&self, other: &GridImage) -> f64 {
        assert_eq!(self.side, other.side, "image sides differ");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Exact counter-clockwise rotation by `quarters × 90°`.
    pub fn rotate_quarters(&self, quarters: u32) -> GridImage {
        let n = self.side;
        let q = quarters % 4;
        if q == 0 {
            return self.clone();
        }
        let mut out = vec![0.0f32; n * n];
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = match q {
                    1 => (c, n - 1 - r),
                    2 => (n - 1 - r, n - 1 - c),
                    _ => (n - 1 - c, r),
                };
                out[r * n + c] = self.pixels[sr * n + sc];
            }
        }
        GridImage {
            side: n,
            pixels: out,
        }
    }

    /// Counter-clockwise rotation by `angle` radians with bilinear
    /// resampling about the image center. Samples outside the source grid
    /// read as zero and the result is clamped to `[0, 1]`.
    pub fn rotate_bilinear(&self, angle: f64) -> GridImage {
        let n = self.side;
        let center = (n as f64 - 1.0) / 2.0;
        let (sin, cos) = angle.sin_cos();
        let mut out = vec![0.0f32; n * n];
        let fetch = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= n as isize || c >= n as isize {
                0.0
            } else {
                self.pixels[r as usize * n + c as usize] as f64
            }
        };
        for r in 0..n {
            for c in 0..n {
                // Math frame: u to the right, v upwards.
                let u = c as f64 - center;
                let v = center - r as f64;
                let su = u * cos + v * sin;
                let sv = -u * sin + v * cos;
                let src_c = center + su;
                let src_r = center - sv;
                let c0 = src_c.floor();
                let r0 = src_r.floor();
                let fc = src_c - c0;
                let fr = src_r - r0;
                let (c0, r0) = (c0 as isize, r0 as isize);
                let value = (1.0 - fr) * ((1.0 - fc) * fetch(r0, c0) + fc * fetch(r0, c0 + 1))
                    + fr * ((1.0 - fc) * fetch(r0 + 1, c0) + fc * fetch(r0 + 1, c0 + 1));
                out[r * n + c] = value.clamp(0.0, 1.0) as f32;
            }
        }
        GridImage {
            side: n,
            pixels: out,
        }
    }

    /// Pixels as an owned `f64` vector, convenient for feature distances.
    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}
