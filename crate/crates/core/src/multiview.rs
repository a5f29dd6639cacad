//! Stage II: coronal and sagittal re-segmentation inside the VOI, consensus
//! fusion of the three views, and the end-to-end driver.

use serde::{Deserialize, Serialize};

use crate::aroi::{extract_voi, stage1_walk, AroiConfig, Stage1Result};
use crate::error::{Error, Result};
use crate::segmenter::{SliceParams, SliceSegmenter};
use crate::volume::{assemble_view_masks, view_geometry, Mask3D, Roi2D, View, Voi3D, Volume3D};

/// Per-view estimate over the VOI box.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMask {
    pub view: View,
    pub mask: Mask3D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    /// Fraction of views that must vote for a voxel, in (0,1].
    pub cr: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self { cr: 0.5 }
    }
}

impl ConsensusConfig {
    pub fn new(cr: f64) -> Result<Self> {
        if !(cr > 0.0 && cr <= 1.0) {
            return Err(Error::InvalidParameter(format!("cr = {cr} must lie in (0,1]")));
        }
        Ok(Self { cr })
    }
}

/// Voxel `k` is set iff the number of masks voting for it is at least
/// `M * cr`, with `M` the number of masks.
pub fn consensus_masks(masks: &[&Mask3D], cfg: &ConsensusConfig) -> Result<Mask3D> {
    ConsensusConfig::new(cfg.cr)?;
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidParameter("consensus needs at least one mask".into()))?;
    for m in &masks[1..] {
        if m.shape() != first.shape() {
            return Err(Error::ShapeMismatch(first.shape(), m.shape()));
        }
    }
    let needed = masks.len() as f64 * cfg.cr;
    let mut votes = vec![0u32; first.voxels().len()];
    for m in masks {
        for (v, &b) in votes.iter_mut().zip(m.voxels()) {
            *v += u32::from(b);
        }
    }
    let mut out = Mask3D::zeros(first.shape(), first.spacing())?;
    for (o, &v) in out.voxels_mut().iter_mut().zip(&votes) {
        *o = (f64::from(v) >= needed) as u8;
    }
    Ok(out)
}

pub fn consensus(views: &[ViewMask], cfg: &ConsensusConfig) -> Result<Mask3D> {
    let masks: Vec<&Mask3D> = views.iter().map(|v| &v.mask).collect();
    consensus_masks(&masks, cfg)
}

/// Segments every slice of `voi` along `view` and stacks the results.
pub fn stage2_view(
    vol: &Volume3D,
    voi: &Voi3D,
    view: View,
    backend: &mut dyn SliceSegmenter,
    params: &SliceParams,
) -> Result<ViewMask> {
    voi.check_within(vol.shape())?;
    let (n, (w, h)) = view_geometry(voi, view);
    let mut slices = Vec::with_capacity(n);
    for i in 0..n {
        let m = backend.segment_view_slice(vol, voi, view, i, params)?;
        if (m.width(), m.height()) != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: (m.width(), m.height()),
            });
        }
        slices.push(m);
    }
    Ok(ViewMask {
        view,
        mask: assemble_view_masks(voi, view, &slices, vol.spacing())?,
    })
}

/// All tunables of the two-stage pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub aroi: AroiConfig,
    pub consensus: ConsensusConfig,
    /// Extra voxels around the stage-I bounding box.
    pub voi_padding: usize,
}

/// One segmenter per view.
pub struct ViewSegmenters<'a> {
    pub axial: &'a mut dyn SliceSegmenter,
    pub coronal: &'a mut dyn SliceSegmenter,
    pub sagittal: &'a mut dyn SliceSegmenter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalResult {
    /// Final mask on the full volume grid.
    pub mask: Mask3D,
    /// `None` when stage I found nothing on the seed slice.
    pub voi: Option<Voi3D>,
    /// Axial, coronal and sagittal estimates over the VOI, in that order.
    pub view_masks: Vec<ViewMask>,
    pub stage1: Stage1Result,
}

impl FinalResult {
    pub fn is_empty(&self) -> bool {
        self.voi.is_none()
    }

    pub fn view(&self, view: View) -> Option<&ViewMask> {
        self.view_masks.iter().find(|v| v.view == view)
    }

    /// A view estimate placed on the full grid.
    pub fn view_on_grid(&self, view: View) -> Option<Mask3D> {
        let (voi, vm) = (self.voi?, self.view(view)?);
        let mut full = Mask3D::zeros(self.mask.shape(), self.mask.spacing()).ok()?;
        full.paste(&voi, &vm.mask).ok()?;
        Some(full)
    }
}

/// Stage I walk, VOI extraction, coronal and sagittal passes, consensus.
///
/// The coronal and sagittal passes run on separate threads.
pub fn segment_nodule(
    vol: &Volume3D,
    seed_roi: &Roi2D,
    backends: ViewSegmenters<'_>,
    cfg: &PipelineConfig,
) -> Result<FinalResult> {
    let stage1 = stage1_walk(vol, seed_roi, backends.axial, &cfg.aroi)?;
    segment_from_stage1(vol, stage1, backends.coronal, backends.sagittal, cfg)
}

/// Everything after the axial walk: VOI, coronal and sagittal passes and
/// consensus. An empty stage-I result gives an empty final mask.
pub fn segment_from_stage1(
    vol: &Volume3D,
    stage1: Stage1Result,
    coronal: &mut dyn SliceSegmenter,
    sagittal: &mut dyn SliceSegmenter,
    cfg: &PipelineConfig,
) -> Result<FinalResult> {
    if stage1.is_empty() {
        return Ok(FinalResult {
            mask: Mask3D::like(vol),
            voi: None,
            view_masks: Vec::new(),
            stage1,
        });
    }
    let voi = extract_voi(&stage1)?.padded(cfg.voi_padding, vol.shape());
    let axial = ViewMask {
        view: View::Axial,
        mask: stage1.mask.crop(&voi)?,
    };
    let params = cfg.aroi.slice_params();
    let (cor, sag) = std::thread::scope(|s| {
        let cor = s.spawn(|| stage2_view(vol, &voi, View::Coronal, coronal, &params));
        let sag = stage2_view(vol, &voi, View::Sagittal, sagittal, &params);
        (cor.join().expect("coronal worker panicked"), sag)
    });
    let view_masks = vec![axial, cor?, sag?];
    let fused = consensus(&view_masks, &cfg.consensus)?;
    let mut mask = Mask3D::like(vol);
    mask.paste(&voi, &fused)?;
    Ok(FinalResult {
        mask,
        voi: Some(voi),
        view_masks,
        stage1,
    })
}
