use std::fmt::Write as _;

use super::run::{run_proposed, run_traditional, FrameTimings, RunConfig, RunResult};
use super::SyncedTriple;
use crate::detect::Cascade;
use crate::forest::PoseForest;
use crate::geometry::CameraIntrinsics;
use crate::recognize::Recognizer;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub videos: usize,
    pub frames: usize,
    pub per_frame: FrameTimings,
    pub per_video: FrameTimings,
    pub total: FrameTimings,
    pub detector_invocations: u64,
    pub recognizer_invocations: u64,
    pub gate_accepted: usize,
    pub errors: usize,
}

/// Totals are sums over every processed frame; the per-video row is the
/// total divided by the number of videos and the per-frame row the total
/// divided by the number of frames.
pub fn summarize(runs: &[RunResult]) -> MethodSummary {
    let total = runs.iter().fold(FrameTimings::default(), |a, r| a.add(&r.total_timings()));
    let frames: usize = runs.iter().map(|r| r.timings.len()).sum();
    let videos = runs.len();
    let per = |n: usize| if n > 0 { total.scale(1.0 / n as f64) } else { FrameTimings::default() };
    MethodSummary {
        videos,
        frames,
        per_frame: per(frames),
        per_video: per(videos),
        total,
        detector_invocations: runs.iter().map(|r| r.detector_invocations).sum(),
        recognizer_invocations: runs.iter().map(|r| r.recognizer_invocations).sum(),
        gate_accepted: runs.iter().map(|r| r.gate_accepted).sum(),
        errors: runs.iter().map(|r| r.errors).sum(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub traditional: MethodSummary,
    pub proposed: MethodSummary,
    /// `100 · (T_trad − T_prop) / T_trad` over total processing time.
    pub speedup_pct: f64,
    /// One-time forest load or training time, seconds.
    pub overhead_s: f64,
}

pub fn speedup_pct(trad_ms: f64, prop_ms: f64) -> f64 {
    if trad_ms > 0.0 {
        100.0 * (trad_ms - prop_ms) / trad_ms
    } else {
        0.0
    }
}

impl BenchReport {
    pub fn from_runs(trad: &[RunResult], prop: &[RunResult], overhead_s: f64) -> Self {
        let traditional = summarize(trad);
        let proposed = summarize(prop);
        let speedup_pct = speedup_pct(traditional.total.processing_ms, proposed.total.processing_ms);
        BenchReport { traditional, proposed, speedup_pct, overhead_s }
    }

    fn rows(m: &MethodSummary) -> [(&'static str, f64, f64, f64); 4] {
        let r = |f: fn(&FrameTimings) -> f64| (f(&m.per_frame), f(&m.per_video), f(&m.total));
        let (a, b, c) = r(|t| t.recognition_ms);
        let (d, e, f) = r(|t| t.dhp_ms);
        let (g, h, i) = r(|t| t.detection_ms);
        let (j, k, l) = r(|t| t.processing_ms);
        [("Recognition", a, b, c), ("DHP", d, e, f), ("Detection", g, h, i), ("Processing", j, k, l)]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Operation time (ms), traditional vs. proposed");
        let _ = writeln!(
            s,
            "{:<12} | {:>10} {:>10} {:>12} | {:>10} {:>10} {:>12}",
            "", "Per-Frame", "Per-Video", "Total", "Per-Frame", "Per-Video", "Total"
        );
        let t = Self::rows(&self.traditional);
        let p = Self::rows(&self.proposed);
        for (a, b) in t.iter().zip(&p) {
            let _ = writeln!(
                s,
                "{:<12} | {:>10.3} {:>10.3} {:>12.3} | {:>10.3} {:>10.3} {:>12.3}",
                a.0, a.1, a.2, a.3, b.1, b.2, b.3
            );
        }
        for (name, m) in [("traditional", &self.traditional), ("proposed", &self.proposed)] {
            let _ = writeln!(
                s,
                "{name}: videos {} frames {} detector_calls {} recognizer_calls {} gate_accepted {} errors {}",
                m.videos, m.frames, m.detector_invocations, m.recognizer_invocations, m.gate_accepted, m.errors
            );
        }
        let _ = writeln!(s, "speedup_pct: {:.2}", self.speedup_pct);
        let _ = writeln!(s, "overhead_s: {:.3}", self.overhead_s);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,operation,per_frame_ms,per_video_ms,total_ms\n");
        for (name, m) in [("traditional", &self.traditional), ("proposed", &self.proposed)] {
            for (op, a, b, c) in Self::rows(m) {
                let _ = writeln!(s, "{name},{op},{a},{b},{c}");
            }
        }
        let _ = writeln!(s, "summary,speedup_pct,,,{}", self.speedup_pct);
        let _ = writeln!(s, "summary,overhead_s,,,{}", self.overhead_s);
        s
    }
}

/// Runs both pipelines over every video with the same configuration.
pub fn bench<R: Recognizer + ?Sized>(
    videos: &[Vec<SyncedTriple>],
    forest: &PoseForest,
    cascade: &Cascade,
    recognizer: &R,
    k: &CameraIntrinsics,
    cfg: &RunConfig,
    overhead_s: f64,
) -> (BenchReport, Vec<RunResult>, Vec<RunResult>) {
    let trad: Vec<RunResult> = videos.iter().map(|v| run_traditional(v, cascade, recognizer, cfg)).collect();
    let prop: Vec<RunResult> = videos.iter().map(|v| run_proposed(v, forest, cascade, recognizer, k, cfg)).collect();
    (BenchReport::from_runs(&trad, &prop, overhead_s), trad, prop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(ms: &[f64]) -> RunResult {
        RunResult {
            frames: Vec::new(),
            timings: ms
                .iter()
                .map(|&m| FrameTimings { recognition_ms: m / 4.0, dhp_ms: 0.0, detection_ms: m / 2.0, processing_ms: m })
                .collect(),
            findings: Vec::new(),
            first_accepted: None,
            gate_accepted: 0,
            detector_invocations: ms.len() as u64,
            recognizer_invocations: 0,
            errors: 0,
        }
    }

    #[test]
    fn report_arithmetic() {
        let trad = [run(&[10.0, 20.0]), run(&[30.0])];
        let prop = [run(&[5.0, 5.0]), run(&[20.0])];
        let r = BenchReport::from_runs(&trad, &prop, 1.13);
        assert_eq!(r.traditional.total.processing_ms, 60.0);
        assert!((r.traditional.per_frame.processing_ms * 3.0 - 60.0).abs() < 1e-9);
        assert!((r.traditional.per_video.processing_ms * 2.0 - 60.0).abs() < 1e-9);
        assert!((r.speedup_pct - 50.0).abs() < 1e-9);
        assert!(r.to_text().contains("speedup_pct: 50.00"));
        assert_eq!(r.to_csv().lines().count(), 1 + 8 + 2);
    }

    #[test]
    fn identical_pipelines_have_zero_speedup() {
        let a = [run(&[7.0, 7.0])];
        assert_eq!(BenchReport::from_runs(&a, &a, 0.0).speedup_pct, 0.0);
    }
}
