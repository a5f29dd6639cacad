//! Synthetic CT phantoms with exactly known ground truth.
//!
//! A voxel belongs to a nodule when its center `(z, y, x)` satisfies
//! `sum(((p - c(z)) / a)^2) <= 1`, where the in-plane center drifts
//! linearly with `z`: `c_y(z) = c_y + drift_y * (z - c_z)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoduleSpec {
    pub center_zyx: [f64; 3],
    pub semi_axes_zyx: [f64; 3],
    pub intensity_hu: f64,
    #[serde(default)]
    pub drift_yx_per_slice: [f64; 2],
}

impl NoduleSpec {
    pub fn sphere(center_zyx: [f64; 3], radius: f64, intensity_hu: f64) -> Self {
        Self {
            center_zyx,
            semi_axes_zyx: [radius; 3],
            intensity_hu,
            drift_yx_per_slice: [0.0, 0.0],
        }
    }

    fn center_at(&self, z: f64) -> (f64, f64) {
        let dz = z - self.center_zyx[0];
        (
            self.center_zyx[1] + self.drift_yx_per_slice[0] * dz,
            self.center_zyx[2] + self.drift_yx_per_slice[1] * dz,
        )
    }

    /// In-plane half extents at slice `z`, if the slice cuts the ellipsoid.
    fn half_extents_at(&self, z: f64) -> Option<(f64, f64)> {
        let t = (z - self.center_zyx[0]) / self.semi_axes_zyx[0];
        let s = 1.0 - t * t;
        (s >= 0.0).then(|| {
            let s = s.sqrt();
            (self.semi_axes_zyx[1] * s, self.semi_axes_zyx[2] * s)
        })
    }

    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let (cy, cx) = self.center_at(z as f64);
        let [az, ay, ax] = self.semi_axes_zyx;
        let q = ((z as f64 - self.center_zyx[0]) / az).powi(2)
            + ((y as f64 - cy) / ay).powi(2)
            + ((x as f64 - cx) / ax).powi(2);
        q <= 1.0
    }

    /// Checks that every voxel center inside the ellipsoid lies in the grid.
    fn check_inside(&self, shape: [usize; 3]) -> Result<()> {
        let [cz, _, _] = self.center_zyx;
        let az = self.semi_axes_zyx[0];
        let z_lo = (cz - az).ceil();
        let z_hi = (cz + az).floor();
        if z_lo < 0.0 || z_hi > (shape[0] - 1) as f64 {
            return Err(Error::NoduleOutOfBounds(format!(
                "z extent [{z_lo}, {z_hi}] outside [0, {}]",
                shape[0] - 1
            )));
        }
        let mut z = z_lo;
        while z <= z_hi {
            if let Some((hy, hx)) = self.half_extents_at(z) {
                let (cy, cx) = self.center_at(z);
                for (c, h, n, axis) in [(cy, hy, shape[1], "y"), (cx, hx, shape[2], "x")] {
                    let (lo, hi) = ((c - h).ceil(), (c + h).floor());
                    if lo <= hi && (lo < 0.0 || hi > (n - 1) as f64) {
                        return Err(Error::NoduleOutOfBounds(format!(
                            "{axis} extent [{lo}, {hi}] at slice {z} outside [0, {}]",
                            n - 1
                        )));
                    }
                }
            }
            z += 1.0;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape_zyx: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing_mm_zyx: [f64; 3],
    pub background_hu: f64,
    #[serde(default)]
    pub noise_sigma_hu: f64,
    pub nodules: Vec<NoduleSpec>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl PhantomSpec {
    /// Single sphere of `radius` at the center of a cube, lung-like
    /// background, soft-tissue nodule.
    pub fn centered_sphere(size: usize, radius: f64, noise_sigma_hu: f64, rng_seed: u64) -> Self {
        let c = (size / 2) as f64;
        Self {
            shape_zyx: [size; 3],
            spacing_mm_zyx: [1.0; 3],
            background_hu: -800.0,
            noise_sigma_hu,
            nodules: vec![NoduleSpec::sphere([c; 3], radius, 800.0)],
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape_zyx.contains(&0) {
            return Err(Error::InvalidShape(format!("{:?}", self.shape_zyx)));
        }
        if !(self.noise_sigma_hu >= 0.0 && self.noise_sigma_hu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma_hu
            )));
        }
        for n in &self.nodules {
            if n.semi_axes_zyx.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "semi-axes {:?} must be positive",
                    n.semi_axes_zyx
                )));
            }
            n.check_inside(self.shape_zyx)?;
        }
        Ok(())
    }
}

/// Renders the phantom volume and its ground-truth mask.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume3D, Mask3D)> {
    spec.validate()?;
    let [nz, ny, nx] = spec.shape_zyx;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = Normal::new(0.0, spec.noise_sigma_hu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut voxels = Vec::with_capacity(nz * ny * nx);
    let mut truth = Vec::with_capacity(nz * ny * nx);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let hit = spec.nodules.iter().rev().find(|n| n.contains(z, y, x));
                let mut v = spec.background_hu + hit.map_or(0.0, |n| n.intensity_hu);
                if spec.noise_sigma_hu > 0.0 {
                    v += noise.sample(&mut rng);
                }
                voxels.push(v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16);
                truth.push(hit.is_some() as u8);
            }
        }
    }
    Ok((
        Volume3D::new(spec.shape_zyx, spec.spacing_mm_zyx, voxels)?,
        Mask3D::new(spec.shape_zyx, spec.spacing_mm_zyx, truth)?,
    ))
}
