//! Patch resizing and HU windowing.
//!
//! Resizing uses pixel-center alignment: destination pixel `i` samples the
//! source at `(i + 0.5) * src / dst - 0.5`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Patch2D, PatchKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Source index for nearest-neighbour sampling, `floor((i + 0.5) * src / dst)`.
#[inline]
pub(crate) fn nearest_source(i: usize, src: usize, dst: usize) -> usize {
    (((2 * i + 1) * src) / (2 * dst)).min(src - 1)
}

/// Neighbouring source indices and the weight of the upper one.
#[inline]
fn bilinear_source(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

pub fn resize_patch(p: &Patch2D, width: usize, height: usize, method: Interpolation) -> Result<Patch2D> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "target size {width}x{height} must be positive"
        )));
    }
    let (sw, sh) = p.dims();
    let src = p.pixels();
    let pixels: Vec<f32> = match method {
        Interpolation::Nearest => {
            let cols: Vec<usize> = (0..width).map(|c| nearest_source(c, sw, width)).collect();
            (0..height)
                .flat_map(|r| {
                    let sr = nearest_source(r, sh, height);
                    cols.iter().map(move |&sc| src[sr * sw + sc])
                })
                .collect()
        }
        Interpolation::Bilinear => {
            let cols: Vec<_> = (0..width).map(|c| bilinear_source(c, sw, width)).collect();
            let mut out = Vec::with_capacity(width * height);
            for r in 0..height {
                let (r0, r1, fy) = bilinear_source(r, sh, height);
                for &(c0, c1, fx) in &cols {
                    let top = f64::from(src[r0 * sw + c0]) * (1.0 - fx) + f64::from(src[r0 * sw + c1]) * fx;
                    let bot = f64::from(src[r1 * sw + c0]) * (1.0 - fx) + f64::from(src[r1 * sw + c1]) * fx;
                    out.push((top * (1.0 - fy) + bot * fy) as f32);
                }
            }
            out
        }
    };
    let kind = match (p.kind(), method) {
        (PatchKind::Binary, Interpolation::Bilinear) => PatchKind::Probability,
        (k, _) => k,
    };
    // Probabilities stay in [0,1] under convex combination, except for f32 rounding.
    let pixels = if kind == PatchKind::Probability {
        pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    } else {
        pixels
    };
    Ok(Patch2D::from_parts(width, height, pixels, kind))
}

/// Intensity window mapped onto `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for HuWindow {
    fn default() -> Self {
        Self {
            lo: -1000.0,
            hi: 400.0,
        }
    }
}

impl HuWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "HU window [{lo}, {hi}] needs lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// `clamp((v - lo) / (hi - lo), 0, 1)` per pixel.
pub fn normalize_hu(p: &Patch2D, lo: f64, hi: f64) -> Result<Patch2D> {
    let w = HuWindow::new(lo, hi)?;
    Ok(normalize_window(p, &w))
}

pub fn normalize_window(p: &Patch2D, w: &HuWindow) -> Patch2D {
    let pixels = p
        .pixels()
        .iter()
        .map(|&v| w.apply(f64::from(v)) as f32)
        .collect();
    Patch2D::from_parts(p.width(), p.height(), pixels, PatchKind::Probability)
}
