//! JSON run report written by `segment`.

use std::collections::BTreeMap;

use aroi_core::segmenter::ProtocolStats;
use aroi_core::{OverlapReport, Roi2D, View, Voi3D, WalkStop};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub rt: f64,
    pub cr: f64,
    pub prob_threshold: f64,
    pub hu_window: [f64; 2],
    pub max_steps: usize,
    pub voi_padding: usize,
    pub backend: String,
    pub segmenters: BTreeMap<View, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceEntry {
    pub z: usize,
    pub roi: Roi2D,
    /// Foreground pixels of the slice mask.
    pub area: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage1Report {
    pub seed_z: usize,
    pub stop_up: WalkStop,
    pub stop_down: WalkStop,
    pub slices_visited: usize,
    pub slices: Vec<SliceEntry>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timing {
    pub stage1: f64,
    pub stage2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub seed_roi: Roi2D,
    /// `ok` or `empty_seed`.
    pub status: &'static str,
    pub stage1: Stage1Report,
    pub voi: Option<Voi3D>,
    pub slices_covered: usize,
    pub final_voxels: usize,
    /// Per-view metrics of each view estimate on the full grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub views: Option<BTreeMap<View, OverlapReport>>,
    #[serde(rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_metrics: Option<OverlapReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub protocol: BTreeMap<View, ProtocolStats>,
    pub timing_ms: Timing,
}
