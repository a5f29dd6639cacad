//! Binary overlap metrics: Dice, sensitivity and positive predictive value.
//!
//! Empty-set conventions: if both masks are empty every score is 1. If only
//! one is empty every score is 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Mask3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub dsc: f64,
    pub sen: f64,
    pub ppv: f64,
    pub tp: u64,
    pub pred_count: u64,
    pub ref_count: u64,
}

impl OverlapReport {
    pub fn from_counts(tp: u64, pred_count: u64, ref_count: u64) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                // den == 0 with a non-empty other side means no overlap
                if pred_count == 0 && ref_count == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        Self {
            dsc: ratio(2 * tp, pred_count + ref_count),
            sen: ratio(tp, ref_count),
            ppv: ratio(tp, pred_count),
            tp,
            pred_count,
            ref_count,
        }
    }
}

pub fn overlap(pred: &Mask3D, reference: &Mask3D) -> Result<OverlapReport> {
    if pred.shape() != reference.shape() {
        return Err(Error::ShapeMismatch(pred.shape(), reference.shape()));
    }
    let (mut tp, mut np, mut nr) = (0u64, 0u64, 0u64);
    for (&p, &r) in pred.voxels().iter().zip(reference.voxels()) {
        np += u64::from(p);
        nr += u64::from(r);
        tp += u64::from(p & r);
    }
    Ok(OverlapReport::from_counts(tp, np, nr))
}
