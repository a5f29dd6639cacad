//! The pluggable 2-D segmenter contract and the built-in backends.
//!
//! A [`Segmenter`] maps a normalized patch of its declared input size to a
//! probability map of the same size. A [`SliceSegmenter`] works one level up:
//! it is handed the volume and a slice location and returns a binary mask at
//! the slice's native resolution. Every `Segmenter` is a `SliceSegmenter`
//! through the crop, normalize, resize and binarize chain; oracles that know
//! the answer implement `SliceSegmenter` directly.

mod external;
mod threshold;

use serde::{Deserialize, Serialize};

pub use external::{serve, spawn_external, ExternalSegmenter, ProtocolStats, DEFAULT_HANDSHAKE_TIMEOUT, PROTOCOL};
pub use threshold::{threshold_reference, ThresholdSegmenter, DEFAULT_CUT};

use crate::error::{Error, Result};
use crate::resample::{normalize_window, resize_patch, HuWindow, Interpolation};
use crate::volume::{
    crop_axial, crop_axial_mask, extract_view_slice, view_geometry, view_voxel, Mask2D, Mask3D, Patch2D,
    PatchKind, Roi2D, View, Voi3D, Volume3D,
};

/// Per-pixel nodule probabilities in `[0,1]`.
pub type ProbMap2D = Patch2D;

/// Network input size per view, as `[width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSizes {
    pub axial: [usize; 2],
    pub coronal: [usize; 2],
    pub sagittal: [usize; 2],
}

impl Default for InputSizes {
    fn default() -> Self {
        Self {
            axial: [128, 128],
            coronal: [128, 64],
            sagittal: [128, 64],
        }
    }
}

impl InputSizes {
    pub fn get(&self, view: View) -> (usize, usize) {
        let [w, h] = match view {
            View::Axial => self.axial,
            View::Coronal => self.coronal,
            View::Sagittal => self.sagittal,
        };
        (w, h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterSpec {
    pub name: String,
    pub input_sizes: InputSizes,
}

impl SegmenterSpec {
    pub fn new(name: impl Into<String>, input_sizes: InputSizes) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            input_sizes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for view in View::ALL {
            let (w, h) = self.input_sizes.get(view);
            if w == 0 || h == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{view} input size {w}x{h} must be positive"
                )));
            }
        }
        Ok(())
    }
}

pub trait Segmenter: Send {
    fn spec(&self) -> &SegmenterSpec;

    /// Backend-specific inference. Callers go through [`Segmenter::segment_patch`].
    fn predict(&mut self, view: View, patch: &Patch2D) -> Result<ProbMap2D>;

    /// Checks the input against the declared size, runs the backend and
    /// checks the output dims and range.
    fn segment_patch(&mut self, view: View, patch: &Patch2D) -> Result<ProbMap2D> {
        let expected = self.spec().input_sizes.get(view);
        if patch.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: patch.dims(),
            });
        }
        if patch.pixels().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("segmenter input must be normalized to [0,1]".into()));
        }
        let out = self.predict(view, patch)?;
        if out.dims() != expected {
            return Err(Error::Protocol(format!(
                "backend returned {:?} for a {:?} input",
                out.dims(),
                expected
            )));
        }
        if out.pixels().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Protocol("backend returned probabilities outside [0,1]".into()));
        }
        Ok(out)
    }
}

impl<T: Segmenter + ?Sized> Segmenter for Box<T> {
    fn spec(&self) -> &SegmenterSpec {
        (**self).spec()
    }

    fn predict(&mut self, view: View, patch: &Patch2D) -> Result<ProbMap2D> {
        (**self).predict(view, patch)
    }
}

/// Returns the same probability everywhere. Test backend.
#[derive(Debug, Clone)]
pub struct ConstantSegmenter {
    spec: SegmenterSpec,
    value: f32,
}

impl ConstantSegmenter {
    pub fn new(value: f32) -> Self {
        Self::with_sizes(value, InputSizes::default())
    }

    pub fn with_sizes(value: f32, sizes: InputSizes) -> Self {
        Self {
            spec: SegmenterSpec {
                name: format!("constant-{value}"),
                input_sizes: sizes,
            },
            value: value.clamp(0.0, 1.0),
        }
    }

    pub fn zeros() -> Self {
        Self::new(0.0)
    }

    pub fn ones() -> Self {
        Self::new(1.0)
    }
}

impl Segmenter for ConstantSegmenter {
    fn spec(&self) -> &SegmenterSpec {
        &self.spec
    }

    fn predict(&mut self, _view: View, patch: &Patch2D) -> Result<ProbMap2D> {
        Patch2D::filled(patch.width(), patch.height(), self.value, PatchKind::Probability)
    }
}

/// Conditioning shared by every slice request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    pub window: HuWindow,
    /// Probabilities `>=` this become foreground.
    pub prob_threshold: f64,
}

impl Default for SliceParams {
    fn default() -> Self {
        Self {
            window: HuWindow::default(),
            prob_threshold: 0.5,
        }
    }
}

/// Segments one slice of a volume at native resolution.
pub trait SliceSegmenter: Send {
    fn name(&self) -> &str;

    /// Mask of the axial ROI, `roi.side()` square.
    fn segment_axial(&mut self, vol: &Volume3D, roi: &Roi2D, params: &SliceParams) -> Result<Mask2D>;

    /// Mask of slice `index` of `voi` seen along `view`, with the dims given
    /// by [`view_geometry`].
    fn segment_view_slice(
        &mut self,
        vol: &Volume3D,
        voi: &Voi3D,
        view: View,
        index: usize,
        params: &SliceParams,
    ) -> Result<Mask2D>;
}

/// Normalize, resize to the backend's size for `view`, predict, binarize,
/// and resize back to the patch's own dims.
pub fn segment_native<S: Segmenter + ?Sized>(
    backend: &mut S,
    view: View,
    patch: &Patch2D,
    params: &SliceParams,
) -> Result<Mask2D> {
    let (tw, th) = backend.spec().input_sizes.get(view);
    let input = resize_patch(&normalize_window(patch, &params.window), tw, th, Interpolation::Bilinear)?;
    let probs = backend.segment_patch(view, &input)?;
    Mask2D::from_probabilities(&probs, params.prob_threshold).resize_nearest(patch.width(), patch.height())
}

impl<S: Segmenter + ?Sized> SliceSegmenter for S {
    fn name(&self) -> &str {
        &self.spec().name
    }

    fn segment_axial(&mut self, vol: &Volume3D, roi: &Roi2D, params: &SliceParams) -> Result<Mask2D> {
        let patch = crop_axial(vol, roi)?;
        segment_native(self, View::Axial, &patch, params)
    }

    fn segment_view_slice(
        &mut self,
        vol: &Volume3D,
        voi: &Voi3D,
        view: View,
        index: usize,
        params: &SliceParams,
    ) -> Result<Mask2D> {
        let patch = extract_view_slice(vol, voi, view, index)?;
        segment_native(self, view, &patch, params)
    }
}

/// Answers every request from a known ground-truth mask, restricted to the
/// requested window.
#[derive(Debug, Clone)]
pub struct GroundTruthOracle {
    truth: Mask3D,
}

impl GroundTruthOracle {
    pub fn new(truth: Mask3D) -> Self {
        Self { truth }
    }
}

impl SliceSegmenter for GroundTruthOracle {
    fn name(&self) -> &str {
        "ground-truth-oracle"
    }

    fn segment_axial(&mut self, vol: &Volume3D, roi: &Roi2D, _params: &SliceParams) -> Result<Mask2D> {
        if vol.shape() != self.truth.shape() {
            return Err(Error::ShapeMismatch(vol.shape(), self.truth.shape()));
        }
        crop_axial_mask(&self.truth, roi)
    }

    fn segment_view_slice(
        &mut self,
        vol: &Volume3D,
        voi: &Voi3D,
        view: View,
        index: usize,
        _params: &SliceParams,
    ) -> Result<Mask2D> {
        if vol.shape() != self.truth.shape() {
            return Err(Error::ShapeMismatch(vol.shape(), self.truth.shape()));
        }
        voi.check_within(vol.shape())?;
        let (n, (w, h)) = view_geometry(voi, view);
        if index >= n {
            return Err(Error::OutOfBounds(format!("{view} slice {index} of {n}")));
        }
        let mut m = Mask2D::zeros(w, h);
        for r in 0..h {
            for c in 0..w {
                let (z, y, x) = view_voxel(voi, view, index, r, c);
                m.set(r, c, self.truth.get(z, y, x));
            }
        }
        Ok(m)
    }
}
