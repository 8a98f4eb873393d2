//! Haar-cascade face detection and the depth-gated (DHP) variant that only
//! searches near the estimated head of frontal frames.

pub mod haar;
pub mod integral;
pub mod train;
mod window;

pub use haar::{Cascade, HaarFeature, BASE_WINDOW};
pub use integral::IntegralImage;
pub use train::{train_cascade, train_cascade_mined, CascadeParams, CascadeTraining, NegativeScene, MINE_EXCLUDE_IOU};
pub use window::{detect_haar, detect_region, group_boxes, DetBox, DetectParams, DetectorCounters, GROUP_IOU};

use crate::error::Result;
use crate::forest::{EstimateParams, PoseForest};
use crate::frame::{DepthFrame, GrayFrame, Rect};
use crate::geometry::{gate_unchecked, CameraIntrinsics, GateDecision, HeadPose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhpParams {
    pub threshold_deg: f64,
    /// Metric side of the search ROI, mm.
    pub k_head_mm: f64,
    pub detect: DetectParams,
    pub estimate: EstimateParams,
}

impl Default for DhpParams {
    fn default() -> Self {
        DhpParams {
            threshold_deg: 15.0,
            k_head_mm: 300.0,
            detect: DetectParams::default(),
            estimate: EstimateParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhpResult {
    pub gate: GateDecision,
    pub pose: Option<HeadPose>,
    /// Search window in gray-frame pixels; `None` when the gate rejected.
    pub roi: Option<Rect>,
    pub boxes: Vec<DetBox>,
}

/// Square ROI of side `round(k_head · fx / z)` centered on the projected
/// head center, clipped to the frame. `None` if nothing usable remains.
pub fn head_roi(pose: &HeadPose, k: &CameraIntrinsics, k_head_mm: f64, width: u32, height: u32) -> Option<Rect> {
    let c = pose.center;
    if !(c.z > 0.0) {
        return None;
    }
    let (u, v) = k.project(c);
    let side = (k_head_mm * k.fx / c.z).round();
    let x0 = (u - side / 2.0).round().max(0.0);
    let y0 = (v - side / 2.0).round().max(0.0);
    let x1 = (u + side / 2.0).round().min(width as f64);
    let y1 = (v + side / 2.0).round().min(height as f64);
    if x1 - x0 < 1.0 || y1 - y0 < 1.0 {
        return None;
    }
    Some(Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32))
}

/// Estimates the head pose, gates it, and runs the cascade only inside the
/// head ROI of accepted frames. A missing head counts as a rejection with a
/// 180° offset.
#[allow(clippy::too_many_arguments)]
pub fn detect_dhp(
    depth: &DepthFrame,
    gray: &GrayFrame,
    forest: &PoseForest,
    cascade: &Cascade,
    k: &CameraIntrinsics,
    params: &DhpParams,
    counters: Option<&DetectorCounters>,
) -> Result<DhpResult> {
    let pose = forest.estimate(depth, k, &params.estimate)?;
    let gate = match &pose {
        Some(p) => gate_unchecked(p, params.threshold_deg)?,
        None => GateDecision::no_head(params.threshold_deg),
    };
    let mut result = DhpResult { gate, pose, roi: None, boxes: Vec::new() };
    if !gate.accepted {
        return Ok(result);
    }
    let pose = pose.expect("accepted gate implies a pose");
    result.roi = head_roi(&pose, k, params.k_head_mm, gray.width, gray.height);
    if let Some(roi) = result.roi {
        let ii = IntegralImage::new(gray);
        result.boxes = detect_region(&ii, cascade, &params.detect, Some(roi), counters);
    }
    Ok(result)
}
