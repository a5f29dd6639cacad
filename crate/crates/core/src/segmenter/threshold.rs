//! Classical reference backend: threshold, then keep the largest
//! 4-connected component.

use super::{InputSizes, ProbMap2D, Segmenter, SegmenterSpec};
use crate::components::label_components;
use crate::error::Result;
use crate::volume::{Mask2D, Patch2D, PatchKind, View};

/// Default cut on normalized intensities.
pub const DEFAULT_CUT: f64 = 0.5;

/// Pixels `>= cut` are candidates; the largest 4-connected candidate
/// component (first discovered in row-major order on ties) gets 1.0,
/// everything else 0.0.
pub fn threshold_reference(p: &Patch2D, cut: f64) -> ProbMap2D {
    let candidates = Mask2D::from_probabilities(p, cut);
    let comps = label_components(&candidates);
    let pixels = match comps.largest() {
        Some(best) => comps.labels.iter().map(|&l| if l == best { 1.0 } else { 0.0 }).collect(),
        None => vec![0.0; p.width() * p.height()],
    };
    Patch2D::new(p.width(), p.height(), pixels, PatchKind::Probability).expect("dims unchanged")
}

#[derive(Debug, Clone)]
pub struct ThresholdSegmenter {
    spec: SegmenterSpec,
    cut: f64,
}

impl Default for ThresholdSegmenter {
    fn default() -> Self {
        Self::new(DEFAULT_CUT, InputSizes::default())
    }
}

impl ThresholdSegmenter {
    pub fn new(cut: f64, input_sizes: InputSizes) -> Self {
        Self {
            spec: SegmenterSpec {
                name: "threshold".into(),
                input_sizes,
            },
            cut,
        }
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }
}

impl Segmenter for ThresholdSegmenter {
    fn spec(&self) -> &SegmenterSpec {
        &self.spec
    }

    fn predict(&mut self, _view: View, patch: &Patch2D) -> Result<ProbMap2D> {
        Ok(threshold_reference(patch, self.cut))
    }
}
