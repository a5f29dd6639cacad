//! Stage I: adaptive-ROI walk along the axial axis.
//!
//! Starting from a user ROI on one slice, each segmented slice moves the ROI
//! by the difference of the opposite margins between the predicted mask and
//! the ROI edges, and grows it whenever the mask fills more than `rt` of its
//! area. The walk runs in both z directions and stops at the first slice
//! without foreground.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::HuWindow;
use crate::segmenter::{SliceParams, SliceSegmenter};
use crate::volume::{embed_slice_mask, Mask2D, Mask3D, Roi2D, Voi3D, Volume3D};

/// Distances from the ROI edges to the mask's bounding box, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margins {
    pub dl: usize,
    pub dr: usize,
    pub dt: usize,
    pub db: usize,
}

impl Margins {
    /// `(dl - dr, dt - db)`.
    pub fn deltas(&self) -> (i64, i64) {
        (
            self.dl as i64 - self.dr as i64,
            self.dt as i64 - self.db as i64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AroiConfig {
    /// Ratio threshold on nodule area over ROI area, in (0,1).
    pub rt: f64,
    /// Slices walked per direction, at most.
    pub max_steps: usize,
    pub prob_threshold: f64,
    pub window: HuWindow,
}

impl Default for AroiConfig {
    fn default() -> Self {
        Self {
            rt: 0.6,
            max_steps: 64,
            prob_threshold: 0.5,
            window: HuWindow::default(),
        }
    }
}

impl AroiConfig {
    pub fn with_rt(rt: f64) -> Result<Self> {
        let cfg = Self {
            rt,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rt > 0.0 && self.rt < 1.0) {
            return Err(Error::InvalidParameter(format!("rt = {} must lie in (0,1)", self.rt)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.prob_threshold) {
            return Err(Error::InvalidParameter(format!(
                "prob_threshold = {} must lie in [0,1]",
                self.prob_threshold
            )));
        }
        HuWindow::new(self.window.lo, self.window.hi)?;
        Ok(())
    }

    pub fn slice_params(&self) -> SliceParams {
        SliceParams {
            window: self.window,
            prob_threshold: self.prob_threshold,
        }
    }
}

/// Margins of the tight bounding box of `m` inside a `side`-square ROI.
pub fn mask_margins(m: &Mask2D, side: usize) -> Result<Margins> {
    if (m.width(), m.height()) != (side, side) {
        return Err(Error::DimensionMismatch {
            expected: (side, side),
            found: (m.width(), m.height()),
        });
    }
    let b = m.bounding_box().ok_or(Error::EmptyMask)?;
    Ok(Margins {
        dl: b.col_min,
        dr: side - (b.col_max + 1),
        dt: b.row_min,
        db: side - (b.row_max + 1),
    })
}

/// Half-open rectangle in signed pixel coordinates, before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRect {
    pub x1: i64,
    pub x2: i64,
    pub y1: i64,
    pub y2: i64,
}

impl RawRect {
    pub fn area(&self) -> i64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Everything one ROI update computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiStep {
    pub margins: Margins,
    /// Nodule area A_N in pixels.
    pub nodule_area: usize,
    /// Outward push on every side when the ROI grew.
    pub growth: Option<usize>,
    pub pre_clamp: RawRect,
    pub roi: Roi2D,
}

/// Next-slice ROI. Same as [`update_roi_step`] without the bookkeeping.
pub fn update_roi(roi: &Roi2D, m: &Mask2D, cfg: &AroiConfig, bounds: (usize, usize)) -> Result<Roi2D> {
    update_roi_step(roi, m, cfg, bounds).map(|s| s.roi)
}

/// One adaptive-ROI update for mask `m` predicted inside `roi`.
///
/// The ROI is translated by `(dl - dr, dt - db)`. If `A_N / A_ROI > rt` it is
/// then pushed out on every side by `ceil(sqrt(A_N / rt - A_ROI) / 2)`.
/// Finally the square is translated back into `bounds = (X, Y)`, shrinking
/// only if its side exceeds an image extent. The z of the result is the
/// input z; the caller moves it to the next slice.
pub fn update_roi_step(roi: &Roi2D, m: &Mask2D, cfg: &AroiConfig, bounds: (usize, usize)) -> Result<RoiStep> {
    let (width, height) = bounds;
    if width == 0 || height == 0 {
        return Err(Error::InvalidShape(format!("degenerate slice bounds {bounds:?}")));
    }
    let side = roi.side();
    let margins = mask_margins(m, side)?;
    let (dx, dy) = margins.deltas();

    let mut rect = RawRect {
        x1: roi.x1 as i64 + dx,
        x2: roi.x2 as i64 + dx,
        y1: roi.y1 as i64 + dy,
        y2: roi.y2 as i64 + dy,
    };

    let nodule_area = m.count();
    let roi_area = roi.area() as f64;
    let mut growth = None;
    if nodule_area as f64 / roi_area > cfg.rt {
        let target_area = nodule_area as f64 / cfg.rt;
        let delta_area = target_area - roi_area;
        let push = (delta_area.sqrt() / 2.0).ceil() as i64;
        rect.x1 -= push;
        rect.x2 += push;
        rect.y1 -= push;
        rect.y2 += push;
        growth = Some(push as usize);
    }
    let pre_clamp = rect;

    let raw_side = rect.x2 - rect.x1;
    let side = raw_side.min(width as i64).min(height as i64);
    let shrink = raw_side - side;
    let x1 = (rect.x1 + shrink / 2).clamp(0, width as i64 - side);
    let y1 = (rect.y1 + shrink / 2).clamp(0, height as i64 - side);
    let out = Roi2D::square(x1 as usize, y1 as usize, side as usize, roi.z);

    Ok(RoiStep {
        margins,
        nodule_area,
        growth,
        pre_clamp,
        roi: out,
    })
}

/// Crop, normalize, resize to the backend's axial size, segment, binarize
/// and resize back to the ROI side.
pub fn segment_slice(
    vol: &Volume3D,
    roi: &Roi2D,
    backend: &mut dyn SliceSegmenter,
    cfg: &AroiConfig,
) -> Result<Mask2D> {
    roi.check_in(vol.shape())?;
    let m = backend.segment_axial(vol, roi, &cfg.slice_params())?;
    if (m.width(), m.height()) != (roi.side(), roi.side()) {
        return Err(Error::DimensionMismatch {
            expected: (roi.side(), roi.side()),
            found: (m.width(), m.height()),
        });
    }
    Ok(m)
}

/// Why one direction of the walk ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "z", rename_all = "snake_case")]
pub enum WalkStop {
    /// The seed slice itself was empty; nothing was walked.
    NotStarted,
    /// Slice `z` was segmented and came back empty.
    EmptySlice(usize),
    VolumeBoundary,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    /// Full-grid mask assembled from every non-empty slice.
    pub mask: Mask3D,
    /// ROI used on each slice that produced foreground.
    pub rois: BTreeMap<usize, Roi2D>,
    /// Nodule area A_N on each recorded slice.
    pub areas: BTreeMap<usize, usize>,
    pub seed_z: usize,
    /// Stop reasons toward increasing and decreasing z.
    pub stop_up: WalkStop,
    pub stop_down: WalkStop,
    /// Number of slices sent to the segmenter, seed included.
    pub slices_visited: usize,
}

impl Stage1Result {
    pub fn is_empty(&self) -> bool {
        self.rois.is_empty()
    }

    pub fn slices_covered(&self) -> usize {
        self.rois.len()
    }
}

/// Walks from the seed slice in both directions, adapting the ROI per slice.
///
/// Each direction restarts from the seed ROI and mask.
pub fn stage1_walk(
    vol: &Volume3D,
    seed_roi: &Roi2D,
    backend: &mut dyn SliceSegmenter,
    cfg: &AroiConfig,
) -> Result<Stage1Result> {
    cfg.validate()?;
    seed_roi.check_in(vol.shape())?;
    let nz = vol.shape()[0];
    let bounds = vol.slice_bounds();

    let mut result = Stage1Result {
        mask: Mask3D::like(vol),
        rois: BTreeMap::new(),
        areas: BTreeMap::new(),
        seed_z: seed_roi.z,
        stop_up: WalkStop::NotStarted,
        stop_down: WalkStop::NotStarted,
        slices_visited: 1,
    };

    let seed_mask = segment_slice(vol, seed_roi, backend, cfg)?;
    if seed_mask.is_empty() {
        return Ok(result);
    }
    record(&mut result, seed_roi, &seed_mask)?;

    for up in [true, false] {
        let mut roi = *seed_roi;
        let mut mask = seed_mask.clone();
        let mut stop = WalkStop::MaxSteps;
        for _ in 0..cfg.max_steps {
            let next_z = if up {
                roi.z + 1
            } else if roi.z > 0 {
                roi.z - 1
            } else {
                nz
            };
            if next_z >= nz {
                stop = WalkStop::VolumeBoundary;
                break;
            }
            let next_roi = update_roi(&roi, &mask, cfg, bounds)?.at_slice(next_z);
            let next_mask = segment_slice(vol, &next_roi, backend, cfg)?;
            result.slices_visited += 1;
            if next_mask.is_empty() {
                stop = WalkStop::EmptySlice(next_z);
                break;
            }
            record(&mut result, &next_roi, &next_mask)?;
            roi = next_roi;
            mask = next_mask;
        }
        if up {
            result.stop_up = stop;
        } else {
            result.stop_down = stop;
        }
    }
    Ok(result)
}

fn record(result: &mut Stage1Result, roi: &Roi2D, m: &Mask2D) -> Result<()> {
    embed_slice_mask(&mut result.mask, m, roi)?;
    result.rois.insert(roi.z, *roi);
    result.areas.insert(roi.z, m.count());
    Ok(())
}

/// Tight bounding box of the stage-I mask.
pub fn extract_voi(r: &Stage1Result) -> Result<Voi3D> {
    r.mask.bounding_box().ok_or(Error::EmptyMask)
}
