use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::SyncedTriple;
use crate::detect::{detect_dhp, detect_haar, Cascade, DetBox, DetectorCounters, DhpParams};
use crate::error::Result;
use crate::forest::PoseForest;
use crate::geometry::{gate_unchecked, CameraIntrinsics, GateDecision, HeadPose, GATE_TOLERANCE_DEG};
use crate::protocol::{dedup_by_kind, Finding};
use crate::recognize::{normalize_chip, FaceChip, Prediction, Recognizer, DEFAULT_CHIP_HEIGHT, DEFAULT_CHIP_WIDTH};
use crate::thermal::{
    fever_check, forehead_roi, temp_of_roi, BloodFlowModel, ForeheadParams, RoiMap, ThermalCalibration, ThermalReading,
    DEFAULT_FEVER_THRESHOLD_C,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Process frames `0, stride, 2·stride, …`.
    pub stride: usize,
    pub chip_size: (u32, u32),
    pub dhp: DhpParams,
    pub calibration: ThermalCalibration,
    pub blood_flow: BloodFlowModel,
    pub roi_map: RoiMap,
    pub forehead: ForeheadParams,
    pub fever_threshold_c: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stride: 15,
            chip_size: (DEFAULT_CHIP_WIDTH, DEFAULT_CHIP_HEIGHT),
            dhp: DhpParams::default(),
            calibration: ThermalCalibration::reference(),
            blood_flow: BloodFlowModel::default(),
            roi_map: RoiMap::identity(),
            forehead: ForeheadParams::default(),
            fever_threshold_c: DEFAULT_FEVER_THRESHOLD_C,
        }
    }
}

/// Wall-clock stage timings of one frame, ms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTimings {
    pub recognition_ms: f64,
    pub dhp_ms: f64,
    pub detection_ms: f64,
    pub processing_ms: f64,
}

impl FrameTimings {
    pub fn add(&self, o: &FrameTimings) -> FrameTimings {
        FrameTimings {
            recognition_ms: self.recognition_ms + o.recognition_ms,
            dhp_ms: self.dhp_ms + o.dhp_ms,
            detection_ms: self.detection_ms + o.detection_ms,
            processing_ms: self.processing_ms + o.processing_ms,
        }
    }

    pub fn scale(&self, f: f64) -> FrameTimings {
        FrameTimings {
            recognition_ms: self.recognition_ms * f,
            dhp_ms: self.dhp_ms * f,
            detection_ms: self.detection_ms * f,
            processing_ms: self.processing_ms * f,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub timestamp_us: u64,
    /// `None` on the traditional path, which never gates.
    pub gate: Option<GateDecision>,
    pub pose: Option<HeadPose>,
    pub boxes: Vec<DetBox>,
    pub chip: Option<FaceChip>,
    pub prediction: Option<Prediction>,
    pub thermal: Option<ThermalReading>,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct RunCounters {
    pub detector: DetectorCounters,
    recognizer: AtomicU64,
}

impl RunCounters {
    pub fn detector_invocations(&self) -> u64 {
        self.detector.invocations()
    }

    pub fn recognizer_invocations(&self) -> u64 {
        self.recognizer.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub frames: Vec<FrameResult>,
    pub timings: Vec<FrameTimings>,
    pub findings: Vec<Finding>,
    /// Index of the first frame the gate accepted.
    pub first_accepted: Option<usize>,
    pub gate_accepted: usize,
    pub detector_invocations: u64,
    pub recognizer_invocations: u64,
    pub errors: usize,
}

impl RunResult {
    /// Non-timing outputs as CSV; identical inputs give identical bytes.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("frame,timestamp_us,offset_deg,accepted,boxes,box_x,box_y,box_w,box_h,label,distance,temp_c,blood_flow,error\n");
        for f in &self.frames {
            let opt = |v: Option<String>| v.unwrap_or_default();
            let b = f.boxes.first();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                f.index,
                f.timestamp_us,
                opt(f.gate.map(|g| format!("{:.6}", g.offset_deg))),
                opt(f.gate.map(|g| g.accepted.to_string())),
                f.boxes.len(),
                opt(b.map(|b| format!("{:.3}", b.x))),
                opt(b.map(|b| format!("{:.3}", b.y))),
                opt(b.map(|b| format!("{:.3}", b.w))),
                opt(b.map(|b| format!("{:.3}", b.h))),
                opt(f.prediction.map(|p| p.label.to_string())),
                opt(f.prediction.map(|p| format!("{:.6}", p.distance))),
                opt(f.thermal.map(|t| format!("{:.4}", t.temp_c))),
                opt(f.thermal.map(|t| format!("{:.4}", t.blood_flow))),
                opt(f.error.as_ref().map(|e| e.replace([',', '\n'], ";"))),
            );
        }
        s
    }

    pub fn total_timings(&self) -> FrameTimings {
        self.timings.iter().fold(FrameTimings::default(), |a, t| a.add(t))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn recognize_box<R: Recognizer + ?Sized>(
    gray: &crate::frame::GrayFrame,
    b: &DetBox,
    recognizer: &R,
    cfg: &RunConfig,
    counters: &RunCounters,
    out: &mut FrameResult,
) -> Result<()> {
    let chip = normalize_chip(gray, b, cfg.chip_size.0, cfg.chip_size.1)?;
    counters.recognizer.fetch_add(1, Ordering::Relaxed);
    out.prediction = Some(recognizer.predict(&chip)?);
    out.chip = Some(chip);
    Ok(())
}

fn finish(frames: Vec<FrameResult>, timings: Vec<FrameTimings>, findings: Vec<Finding>, counters: &RunCounters) -> RunResult {
    let first_accepted = frames.iter().find(|f| f.gate.is_some_and(|g| g.accepted)).map(|f| f.index);
    let gate_accepted = frames.iter().filter(|f| f.gate.is_some_and(|g| g.accepted)).count();
    let errors = frames.iter().filter(|f| f.error.is_some()).count();
    RunResult {
        frames,
        timings,
        findings: dedup_by_kind(findings),
        first_accepted,
        gate_accepted,
        detector_invocations: counters.detector_invocations(),
        recognizer_invocations: counters.recognizer_invocations(),
        errors,
    }
}

fn empty_result(t: &SyncedTriple) -> FrameResult {
    FrameResult {
        index: t.index,
        timestamp_us: t.timestamp_us,
        gate: None,
        pose: None,
        boxes: Vec::new(),
        chip: None,
        prediction: None,
        thermal: None,
        error: None,
    }
}

/// Baseline: full-frame detection and recognition on every `stride`-th
/// frame, with no depth assistance.
pub fn run_traditional<R: Recognizer + ?Sized>(
    triples: &[SyncedTriple],
    cascade: &Cascade,
    recognizer: &R,
    cfg: &RunConfig,
) -> RunResult {
    let counters = RunCounters::default();
    let mut frames = Vec::new();
    let mut timings = Vec::new();
    for t in triples.iter().step_by(cfg.stride.max(1)) {
        let start = Instant::now();
        let mut fr = empty_result(t);
        let mut tm = FrameTimings::default();
        let td = Instant::now();
        fr.boxes = detect_haar(&t.gray, cascade, &cfg.dhp.detect, Some(&counters.detector));
        tm.detection_ms = ms(td);
        if let Some(b) = fr.boxes.first().copied() {
            let tr = Instant::now();
            if let Err(e) = recognize_box(&t.gray, &b, recognizer, cfg, &counters, &mut fr) {
                fr.error = Some(e.to_string());
            }
            tm.recognition_ms = ms(tr);
        }
        tm.processing_ms = ms(start);
        frames.push(fr);
        timings.push(tm);
    }
    finish(frames, timings, Vec::new(), &counters)
}

/// Depth-gated pipeline: pose estimation and gating on every `stride`-th
/// frame; detection, recognition and thermal readout only on accepted ones.
pub fn run_proposed<R: Recognizer + ?Sized>(
    triples: &[SyncedTriple],
    forest: &PoseForest,
    cascade: &Cascade,
    recognizer: &R,
    k: &CameraIntrinsics,
    cfg: &RunConfig,
) -> RunResult {
    let counters = RunCounters::default();
    let mut frames = Vec::new();
    let mut timings = Vec::new();
    let mut findings = Vec::new();
    for t in triples.iter().step_by(cfg.stride.max(1)) {
        let start = Instant::now();
        let mut fr = empty_result(t);
        let mut tm = FrameTimings::default();
        let mut step = || -> Result<()> {
            let th = Instant::now();
            let pose = forest.estimate(&t.depth, k, &cfg.dhp.estimate)?;
            let gate = match &pose {
                Some(p) => gate_unchecked(p, cfg.dhp.threshold_deg)?,
                None => GateDecision::no_head(cfg.dhp.threshold_deg),
            };
            fr.pose = pose;
            fr.gate = Some(gate);
            tm.dhp_ms = ms(th);
            if !gate.accepted {
                return Ok(());
            }
            let td = Instant::now();
            let roi = crate::detect::head_roi(pose.as_ref().expect("accepted"), k, cfg.dhp.k_head_mm, t.gray.width, t.gray.height);
            if let Some(roi) = roi {
                let ii = crate::detect::IntegralImage::new(&t.gray);
                fr.boxes = crate::detect::detect_region(&ii, cascade, &cfg.dhp.detect, Some(roi), Some(&counters.detector));
            }
            tm.detection_ms = ms(td);
            let Some(b) = fr.boxes.first().copied() else { return Ok(()) };
            let tr = Instant::now();
            recognize_box(&t.gray, &b, recognizer, cfg, &counters, &mut fr)?;
            tm.recognition_ms = ms(tr);
            if let Some(ir) = &t.ir {
                let roi = forehead_roi(&b, &cfg.roi_map, &cfg.forehead, ir.width, ir.height)?;
                let reading = temp_of_roi(ir, roi, &cfg.calibration, &cfg.blood_flow)?;
                fr.thermal = Some(reading);
                findings.extend(fever_check(reading.temp_c, cfg.fever_threshold_c, Some(t.index)));
            }
            Ok(())
        };
        if let Err(e) = step() {
            fr.error = Some(e.to_string());
        }
        tm.processing_ms = ms(start);
        frames.push(fr);
        timings.push(tm);
    }
    finish(frames, timings, findings, &counters)
}

/// Same as [`run_proposed`]'s gating stage through [`detect_dhp`]; used
/// where only detection is needed.
pub fn detect_sequence_dhp(
    triples: &[SyncedTriple],
    forest: &PoseForest,
    cascade: &Cascade,
    k: &CameraIntrinsics,
    params: &DhpParams,
    counters: &DetectorCounters,
) -> Vec<Result<crate::detect::DhpResult>> {
    triples
        .iter()
        .map(|t| detect_dhp(&t.depth, &t.gray, forest, cascade, k, params, Some(counters)))
        .collect()
}

/// Accepted-frame count per threshold, from poses estimated once.
pub fn threshold_sweep(poses: &[Option<HeadPose>], thresholds: &[f64]) -> Result<Vec<(f64, usize)>> {
    let offsets: Vec<Option<f64>> = poses
        .iter()
        .map(|p| p.as_ref().map(|p| gate_unchecked(p, 0.0).map(|g| g.offset_deg)).transpose())
        .collect::<Result<_>>()?;
    Ok(thresholds
        .iter()
        .map(|&th| (th, offsets.iter().flatten().filter(|&&o| o <= th + GATE_TOLERANCE_DEG).count()))
        .collect())
}

pub fn sweep_csv(rows: &[(f64, usize)]) -> String {
    let mut s = String::from("threshold_deg,frames_accepted\n");
    for (t, n) in rows {
        let _ = writeln!(s, "{t},{n}");
    }
    s
}
