//! Training-data preparation: random-margin ROIs around ground-truth
//! nodules, nodule-free ROIs beyond both ends, and annotator fusion.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aroi::Margins;
use crate::error::{Error, Result};
use crate::multiview::{consensus_masks, ConsensusConfig};
use crate::resample::{resize_patch, Interpolation};
use crate::rvol::{save_mask, save_volume};
use crate::volume::{crop_axial, crop_axial_mask, Mask2D, Mask3D, Patch2D, PatchKind, Roi2D, Volume3D};

/// Side of every training patch.
pub const SAMPLE_SIZE: usize = 128;

/// Fuses annotator masks voxel-wise: set iff at least `M * cr` of the `M`
/// annotators marked it.
pub fn consensus_ground_truth(annotations: &[Mask3D], cr: f64) -> Result<Mask3D> {
    let refs: Vec<&Mask3D> = annotations.iter().collect();
    consensus_masks(&refs, &ConsensusConfig::new(cr)?)
}

/// A random-margin ROI together with the margins that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginDraw {
    /// Largest bounding-box side of the nodule, in pixels.
    pub d_max: usize,
    /// Inclusive upper bound of each margin, `round(d_max * rt)`.
    pub max_margin: usize,
    pub margins: Margins,
    pub roi: Roi2D,
}

/// ROI around the nodule on `gt_slice` (a full axial slice at `z`) with four
/// independent uniform margins in `[0, round(d_max * rt)]`.
pub fn random_margin_roi<R: Rng + ?Sized>(gt_slice: &Mask2D, z: usize, rt: f64, rng: &mut R) -> Result<Roi2D> {
    random_margin_draw(gt_slice, z, rt, rng).map(|d| d.roi)
}

pub fn random_margin_draw<R: Rng + ?Sized>(gt_slice: &Mask2D, z: usize, rt: f64, rng: &mut R) -> Result<MarginDraw> {
    if !(rt > 0.0 && rt < 1.0) {
        return Err(Error::InvalidParameter(format!("rt = {rt} must lie in (0,1)")));
    }
    let bbox = gt_slice.bounding_box().ok_or(Error::EmptyMask)?;
    let d_max = bbox.width().max(bbox.height());
    let max_margin = (d_max as f64 * rt).round() as usize;
    let margins = Margins {
        dl: rng.random_range(0..=max_margin),
        dr: rng.random_range(0..=max_margin),
        dt: rng.random_range(0..=max_margin),
        db: rng.random_range(0..=max_margin),
    };
    let roi = square_around(
        (bbox.col_min, bbox.col_max + 1),
        (bbox.row_min, bbox.row_max + 1),
        &margins,
        (gt_slice.width(), gt_slice.height()),
        z,
    )?;
    Ok(MarginDraw {
        d_max,
        max_margin,
        margins,
        roi,
    })
}

/// Expands the half-open box by the margins, extends the shorter side on
/// its high end to make a square, and translates it into the image.
fn square_around(
    cols: (usize, usize),
    rows: (usize, usize),
    m: &Margins,
    (width, height): (usize, usize),
    z: usize,
) -> Result<Roi2D> {
    let x1 = cols.0 as i64 - m.dl as i64;
    let x2 = (cols.1 + m.dr) as i64;
    let y1 = rows.0 as i64 - m.dt as i64;
    let y2 = (rows.1 + m.db) as i64;
    let raw_side = (x2 - x1).max(y2 - y1);
    let side = raw_side.min(width as i64).min(height as i64);
    let (bw, bh) = ((cols.1 - cols.0) as i64, (rows.1 - rows.0) as i64);
    if side < bw.max(bh) {
        return Err(Error::OutOfBounds(format!(
            "nodule box {bw}x{bh} does not fit a square inside {width}x{height}"
        )));
    }
    // keep the nodule box inside, then the square inside the image
    let place = |lo: i64, b0: usize, b1: usize, n: usize| {
        lo.min(b0 as i64).max(b1 as i64 - side).clamp(0, n as i64 - side) as usize
    };
    let x = place(x1, cols.0, cols.1, width);
    let y = place(y1, rows.0, rows.1, height);
    Ok(Roi2D::square(x, y, side as usize, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub slice: usize,
    pub roi: Roi2D,
    pub nodule_present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// HU intensities, `SAMPLE_SIZE` square, rounded to whole HU.
    pub image: Patch2D,
    /// Binary, `SAMPLE_SIZE` square.
    pub mask: Patch2D,
    pub meta: SampleMeta,
}

fn make_sample(vol: &Volume3D, gt: &Mask3D, roi: Roi2D, nodule_present: bool) -> Result<TrainingSample> {
    let crop = resize_patch(&crop_axial(vol, &roi)?, SAMPLE_SIZE, SAMPLE_SIZE, Interpolation::Bilinear)?;
    let rounded = crop.pixels().iter().map(|v| v.round()).collect();
    let image = Patch2D::new(SAMPLE_SIZE, SAMPLE_SIZE, rounded, PatchKind::Intensity)?;
    let mask = crop_axial_mask(gt, &roi)?
        .resize_nearest(SAMPLE_SIZE, SAMPLE_SIZE)?
        .to_patch();
    Ok(TrainingSample {
        image,
        mask,
        meta: SampleMeta {
            slice: roi.z,
            roi,
            nodule_present,
        },
    })
}

/// One positive sample per nodule-bearing slice plus `empty_per_side`
/// negatives past each end of the nodule, reusing the adjacent end slice's
/// ROI. Negatives falling outside the volume are skipped.
pub fn extract_training_set<R: Rng + ?Sized>(
    vol: &Volume3D,
    gt: &Mask3D,
    rt: f64,
    rng: &mut R,
    empty_per_side: usize,
) -> Result<Vec<TrainingSample>> {
    if vol.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(vol.shape(), gt.shape()));
    }
    let nz = vol.shape()[0];
    let bearing: Vec<usize> = (0..nz).filter(|&z| gt.slice_count(z) > 0).collect();
    let (&first, &last) = match (bearing.first(), bearing.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyMask),
    };
    let mut samples = Vec::with_capacity(bearing.len() + 2 * empty_per_side);
    let mut first_roi = None;
    let mut last_roi = None;
    for &z in &bearing {
        let roi = random_margin_roi(&gt.axial_slice(z), z, rt, rng)?;
        if z == first {
            first_roi = Some(roi);
        }
        if z == last {
            last_roi = Some(roi);
        }
        samples.push(make_sample(vol, gt, roi, true)?);
    }
    let (first_roi, last_roi) = (first_roi.expect("first slice"), last_roi.expect("last slice"));
    for k in 1..=empty_per_side {
        if let Some(z) = first.checked_sub(k) {
            samples.push(make_sample(vol, gt, first_roi.at_slice(z), false)?);
        }
        if last + k < nz {
            samples.push(make_sample(vol, gt, last_roi.at_slice(last + k), false)?);
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub image: String,
    pub mask: String,
    #[serde(flatten)]
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub size: [usize; 2],
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_FORMAT: &str = "aroi-prep/1";
pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes each sample as a pair of single-slice RVOL files and a
/// `manifest.json` listing them.
pub fn write_training_set(samples: &[TrainingSample], spacing: [f64; 3], dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let scale = s.meta.roi.side() as f64 / SAMPLE_SIZE as f64;
        let sp = [spacing[0], spacing[1] * scale, spacing[2] * scale];
        let img = Volume3D::new(
            [1, SAMPLE_SIZE, SAMPLE_SIZE],
            sp,
            s.image
                .pixels()
                .iter()
                .map(|&v| v.clamp(f32::from(i16::MIN), f32::from(i16::MAX)) as i16)
                .collect(),
        )?;
        let mask = Mask3D::new(
            [1, SAMPLE_SIZE, SAMPLE_SIZE],
            sp,
            s.mask.pixels().iter().map(|&v| v as u8).collect(),
        )?;
        let image_name = format!("sample_{i:05}_image.rvol.json");
        let mask_name = format!("sample_{i:05}_mask.rvol.json");
        save_volume(&img, dir.join(&image_name))?;
        save_mask(&mask, dir.join(&mask_name))?;
        entries.push(ManifestEntry {
            index: i,
            image: image_name,
            mask: mask_name,
            meta: s.meta,
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        size: [SAMPLE_SIZE, SAMPLE_SIZE],
        samples: entries,
    };
    fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
