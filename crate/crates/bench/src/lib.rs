//! Fixtures shared by the benchmarks.

use aroi_core::{generate_phantom, Mask2D, Mask3D, PhantomSpec, Roi2D, Volume3D};

/// Noisy 64³ sphere phantom with a seed ROI around its center slice.
pub fn sphere_case() -> (Volume3D, Mask3D, Roi2D) {
    let (vol, gt) = generate_phantom(&PhantomSpec::centered_sphere(64, 8.0, 20.0, 1)).expect("valid phantom");
    (vol, gt, Roi2D::square(20, 20, 24, 32))
}

/// Filled disk of `radius` centered in a `side` square.
pub fn disk(side: usize, radius: f64) -> Mask2D {
    let mut m = Mask2D::zeros(side, side);
    let c = (side as f64 - 1.0) / 2.0;
    for r in 0..side {
        for col in 0..side {
            if (r as f64 - c).powi(2) + (col as f64 - c).powi(2) <= radius * radius {
                m.set(r, col, true);
            }
        }
    }
    m
}
