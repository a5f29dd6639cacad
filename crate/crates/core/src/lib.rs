//! Semi-automated volumetric nodule segmentation from a single 2-D seed ROI.
//!
//! The pipeline has two stages:
//!
//! 1. **Adaptive-ROI walk** ([`aroi`]): segment the seed slice, then walk
//!    up and down the axial axis, re-centering and growing the ROI from each
//!    slice's predicted mask until a slice comes back empty.
//! 2. **Multi-view consensus** ([`multiview`]): take the bounding box of the
//!    stage-I mask as the VOI, segment it slice by slice along the coronal
//!    and sagittal axes, and keep voxels that enough views agree on.
//!
//! Slice segmentation is pluggable through [`segmenter::Segmenter`]; a
//! classical threshold backend ships in-process and trained models plug in
//! over the `aroi-seg/1` stdio protocol.

pub mod aroi;
pub mod components;
pub mod dataprep;
pub mod error;
pub mod metrics;
pub mod multiview;
pub mod phantom;
pub mod resample;
pub mod rvol;
pub mod segmenter;
pub mod volume;

pub use aroi::{
    extract_voi, mask_margins, segment_slice, stage1_walk, update_roi, update_roi_step, AroiConfig, Margins,
    RoiStep, Stage1Result, WalkStop,
};
pub use error::{Error, Result};
pub use metrics::{overlap, OverlapReport};
pub use multiview::{
    consensus, consensus_masks, segment_from_stage1, segment_nodule, stage2_view, ConsensusConfig, FinalResult, PipelineConfig,
    ViewMask, ViewSegmenters,
};
pub use phantom::{generate_phantom, NoduleSpec, PhantomSpec};
pub use resample::{normalize_hu, resize_patch, HuWindow, Interpolation};
pub use segmenter::{
    GroundTruthOracle, InputSizes, Segmenter, SegmenterSpec, SliceParams, SliceSegmenter, ThresholdSegmenter,
};
pub use volume::{
    crop_axial, embed_slice_mask, extract_view_slices, Mask2D, Mask3D, Patch2D, PatchKind, Roi2D, View, Voi3D,
    Volume3D,
};
