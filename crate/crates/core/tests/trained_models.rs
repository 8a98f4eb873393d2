//! Examples that need a trained pose forest and cascade. Both are trained
//! once per test binary with the command-line defaults.

use std::sync::OnceLock;

use msface::detect::{
    detect_dhp, detect_haar, train_cascade, train_cascade_mined, Cascade, CascadeParams, DetectParams,
    DetectorCounters, DhpParams, IntegralImage,
};
use msface::forest::{EstimateParams, ForestParams, PoseForest};
use msface::frame::{DepthFrame, GrayFrame};
use msface::geometry::{CameraIntrinsics, HeadPose, Vec3};
use msface::pipeline::{run_proposed, run_traditional, threshold_sweep, RunConfig, SyncedTriple};
use msface::recognize::{Gallery, Recognizer, RecognizerKind, RecognizerModel, DEFAULT_EIGEN_K};
use msface::synth::{
    cascade_mining_scenes, cascade_training_set, face_box, gallery_chips, pose_training_set, render_background,
    render_depth, render_face_gray, render_scene_gray, render_sequence_frame, sequence_triples, PoseRanges,
    SynthHeadSpec, SynthSequenceSpec, GALLERY_JITTER, GALLERY_YAWS_DEG,
};

const SEED: u64 = 42;

fn k() -> CameraIntrinsics {
    CameraIntrinsics::synthetic()
}

fn forest() -> &'static PoseForest {
    static F: OnceLock<PoseForest> = OnceLock::new();
    F.get_or_init(|| {
        let data = pose_training_set(500, &PoseRanges::training(), 0.0, &k(), SEED).unwrap();
        PoseForest::train(&data, &k(), &ForestParams::default()).unwrap()
    })
}

fn cascade() -> &'static Cascade {
    static C: OnceLock<Cascade> = OnceLock::new();
    C.get_or_init(|| {
        let (pos, neg) = cascade_training_set(600, 3000, 20.0, SEED);
        let scenes = cascade_mining_scenes(40, SEED + 1);
        train_cascade_mined(&pos, &neg, &scenes, &CascadeParams::default()).unwrap().cascade
    })
}

fn recognizer() -> &'static RecognizerModel {
    static R: OnceLock<RecognizerModel> = OnceLock::new();
    R.get_or_init(|| {
        let ids: Vec<i64> = (0..10).collect();
        let chips = gallery_chips(&ids, &GALLERY_YAWS_DEG, GALLERY_JITTER, &k(), (92, 112), SEED).unwrap();
        RecognizerModel::train(RecognizerKind::Lbph, &Gallery::new(chips).unwrap(), DEFAULT_EIGEN_K).unwrap()
    })
}

fn sweep(subject: i64, yaw: (f64, f64), frames: usize) -> Vec<SyncedTriple> {
    let spec = SynthSequenceSpec { subject_id: subject, frame_count: frames, yaw_sweep_deg: yaw, seed: 100 + subject as u64, ..Default::default() };
    sequence_triples(&spec, &k()).unwrap()
}

fn pass_rate(c: &Cascade, frames: &[GrayFrame]) -> f64 {
    frames.iter().filter(|f| c.classify(&IntegralImage::new(f), 0, 0, 1.0).is_some()).count() as f64 / frames.len() as f64
}

#[test]
fn forest_frontal_head_is_near_zero() {
    let (frame, _) = render_depth(&SynthHeadSpec::default(), &k()).unwrap();
    let p = forest().estimate(&frame, &k(), &EstimateParams::default()).unwrap().expect("head found");
    assert!(p.yaw_deg.abs() <= 5.0 && p.pitch_deg.abs() <= 5.0, "yaw {} pitch {}", p.yaw_deg, p.pitch_deg);
}

#[test]
fn forest_plane_has_no_head() {
    let plane = DepthFrame::filled(320, 240, 1500);
    assert_eq!(forest().estimate(&plane, &k(), &EstimateParams::default()).unwrap(), None);
}

#[test]
fn forest_sweep_mean_yaw_error() {
    let spec = SynthSequenceSpec { seed: 7, ..Default::default() };
    let mut err = 0.0;
    for i in 0..spec.frame_count {
        let f = render_sequence_frame(&spec, i, &k()).unwrap();
        let p = forest().estimate(&f.depth, &k(), &EstimateParams::default()).unwrap().expect("head found");
        err += (p.yaw_deg - f.pose.yaw_deg).abs();
    }
    let mean = err / spec.frame_count as f64;
    assert!(mean <= 10.0, "mean yaw error {mean}");
}

#[test]
fn ground_truth_sweep_accepts_seven() {
    let k = k();
    let spec = SynthSequenceSpec::default();
    let poses: Vec<Option<HeadPose>> =
        (0..31).map(|i| Some(render_sequence_frame(&spec, i, &k).unwrap().pose)).collect();
    let rows = threshold_sweep(&poses, &[0.0, 15.0, 180.0]).unwrap();
    assert_eq!(rows, vec![(0.0, 1), (15.0, 7), (180.0, 31)]);
}

#[test]
fn three_stage_cascade_on_held_out_windows() {
    let (pos, neg) = cascade_training_set(600, 3000, 20.0, 1);
    let t = train_cascade(&pos, &neg, &CascadeParams { n_stages: 3, ..Default::default() }).unwrap();
    assert!(t.cascade.stages.len() <= 3);
    let (hp, hn) = cascade_training_set(500, 2000, 20.0, 77);
    let (p, n) = (pass_rate(&t.cascade, &hp), pass_rate(&t.cascade, &hn));
    assert!(p >= 0.95, "positive pass rate {p}");
    assert!(n <= 0.20, "negative pass rate {n}");
}

#[test]
fn cascade_training_is_deterministic() {
    let (pos, neg) = cascade_training_set(120, 300, 20.0, 2);
    let p = CascadeParams { n_stages: 2, stumps_per_stage: 5, features_per_stage: 300, ..Default::default() };
    let a = train_cascade(&pos, &neg, &p).unwrap().cascade;
    let b = train_cascade(&pos, &neg, &p).unwrap().cascade;
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(Cascade::from_bytes(&a.to_bytes()).unwrap().to_bytes(), a.to_bytes());
}

#[test]
fn identical_sets_raise_the_warning() {
    let (pos, _) = cascade_training_set(80, 0, 20.0, 3);
    let p = CascadeParams { n_stages: 2, stumps_per_stage: 5, features_per_stage: 300, ..Default::default() };
    let t = train_cascade(&pos, &pos, &p).unwrap();
    assert!(t.warning.is_some());
}

#[test]
fn blank_frame_has_no_boxes() {
    let blank = GrayFrame::filled(320, 240, 128);
    assert!(detect_haar(&blank, cascade(), &DetectParams::default(), None).is_empty());
}

#[test]
fn face_filling_half_the_frame_gives_one_box() {
    let k = k();
    // face box side = 2 · 95 mm · fx / z = 120 px, half the frame height
    let z = 2.0 * 95.0 * k.fx / 120.0;
    let pose = HeadPose::from_euler(Vec3::new(0.0, 0.0, z), 0.0, 0.0, 0.0);
    let g = render_scene_gray(4, &pose, &k, 11, 12);
    let gt = face_box(&pose, &k);
    assert!((gt.h / k.height as f64 - 0.5).abs() < 0.01);
    let boxes = detect_haar(&g, cascade(), &DetectParams::default(), None);
    assert_eq!(boxes.len(), 1, "{boxes:?}");
    assert!(boxes[0].iou(&gt) >= 0.5, "iou {}", boxes[0].iou(&gt));
}

#[test]
fn two_pasted_faces_give_two_boxes() {
    let pose = HeadPose::from_euler(Vec3::new(0.0, 0.0, 1000.0), 0.0, 0.0, 0.0);
    let mut g = render_background(320, 240, 5);
    g.paste(&render_face_gray(1, &pose, 72).unwrap(), 40, 80);
    g.paste(&render_face_gray(2, &pose, 72).unwrap(), 200, 70);
    let boxes = detect_haar(&g, cascade(), &DetectParams::default(), None);
    assert_eq!(boxes.len(), 2, "{boxes:?}");
    for w in boxes.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
}

fn pair(yaw: f64) -> (DepthFrame, GrayFrame, HeadPose) {
    let spec = SynthSequenceSpec { frame_count: 1, yaw_sweep_deg: (yaw, yaw), subject_id: 6, ..Default::default() };
    let f = render_sequence_frame(&spec, 0, &k()).unwrap();
    (f.depth, f.gray, f.pose)
}

#[test]
fn dhp_frontal_pair() {
    let (d, g, truth) = pair(0.0);
    let counters = DetectorCounters::default();
    let r = detect_dhp(&d, &g, forest(), cascade(), &k(), &DhpParams::default(), Some(&counters)).unwrap();
    assert!(r.gate.accepted);
    assert_eq!(counters.invocations(), 1);
    assert_eq!(r.boxes.len(), 1, "{:?}", r.boxes);
    let (u, v) = k().project(truth.center);
    let s = (300.0 * k().fx / truth.center.z).round();
    let (bx, by) = r.boxes[0].center();
    assert!(((bx - u).powi(2) + (by - v).powi(2)).sqrt() <= s / 4.0);
}

#[test]
fn dhp_profile_pair_skips_the_detector() {
    let (d, g, _) = pair(60.0);
    let counters = DetectorCounters::default();
    let r = detect_dhp(&d, &g, forest(), cascade(), &k(), &DhpParams::default(), Some(&counters)).unwrap();
    assert!(!r.gate.accepted);
    assert!(r.boxes.is_empty() && r.roi.is_none());
    assert_eq!(counters.invocations(), 0);
}

#[test]
fn dhp_background_pair_is_rejected() {
    let d = DepthFrame::filled(320, 240, 2000);
    let g = render_background(320, 240, 9);
    let counters = DetectorCounters::default();
    let r = detect_dhp(&d, &g, forest(), cascade(), &k(), &DhpParams::default(), Some(&counters)).unwrap();
    assert!(!r.gate.accepted);
    assert_eq!(r.gate.offset_deg, 180.0);
    assert_eq!(counters.invocations(), 0);
}

#[test]
fn traditional_subsamples_every_fifteenth() {
    let video = sweep(1, (-75.0, 75.0), 31);
    let r = run_traditional(&video, cascade(), recognizer(), &RunConfig::default());
    let idx: Vec<usize> = r.frames.iter().map(|f| f.index).collect();
    assert_eq!(idx, vec![0, 15, 30]);
    assert_eq!(r.timings.len(), 3);
    assert_eq!(r.detector_invocations, 3);
}

#[test]
fn blank_video_records_timings_without_detections() {
    let mut video = sweep(1, (0.0, 0.0), 4);
    for t in &mut video {
        t.gray = GrayFrame::filled(320, 240, 90);
    }
    let r = run_traditional(&video, cascade(), recognizer(), &RunConfig { stride: 1, ..Default::default() });
    assert!(r.frames.iter().all(|f| f.boxes.is_empty()));
    assert_eq!(r.timings.len(), 4);
    assert!(r.timings.iter().all(|t| t.processing_ms >= t.detection_ms && t.detection_ms > 0.0));
}

#[test]
fn frontal_video_accuracy_is_the_recognizers() {
    let video = sweep(3, (0.0, 0.0), 5);
    let r = run_traditional(&video, cascade(), recognizer(), &RunConfig { stride: 1, ..Default::default() });
    let chips: Vec<_> = r.frames.iter().filter_map(|f| f.chip.clone()).collect();
    assert!(!chips.is_empty());
    for f in r.frames.iter().filter(|f| f.chip.is_some()) {
        assert_eq!(f.prediction.unwrap(), recognizer().predict(f.chip.as_ref().unwrap()).unwrap());
    }
    let run_acc = r.frames.iter().filter(|f| f.prediction.is_some_and(|p| p.label == 3)).count() as f64 / chips.len() as f64;
    let labeled: Vec<_> = chips.into_iter().map(|c| c.with_label(3)).collect();
    assert_eq!(run_acc, msface::recognize::recognition_accuracy(recognizer(), &labeled).unwrap());
}

#[test]
fn proposed_detects_only_near_frontal_frames() {
    let video = sweep(2, (-75.0, 75.0), 31);
    let cfg = RunConfig { stride: 1, ..Default::default() };
    let r = run_proposed(&video, forest(), cascade(), recognizer(), &k(), &cfg);
    let accepted: Vec<usize> = r.frames.iter().filter(|f| f.gate.unwrap().accepted).map(|f| f.index).collect();
    assert_eq!(r.detector_invocations as usize, accepted.len());
    assert!(r.recognizer_invocations <= r.detector_invocations);
    let truth: Vec<usize> = (12..=18).collect();
    let diff = accepted.iter().filter(|i| !truth.contains(i)).count() + truth.iter().filter(|i| !accepted.contains(i)).count();
    assert!(diff <= 1, "accepted {accepted:?}");
    assert_eq!(r.first_accepted, accepted.first().copied());
}

#[test]
fn febrile_frontal_frame_raises_fever() {
    let spec = SynthSequenceSpec { frame_count: 1, yaw_sweep_deg: (0.0, 0.0), forehead_temp_c: 38.5, ..Default::default() };
    let video = sequence_triples(&spec, &k()).unwrap();
    let r = run_proposed(&video, forest(), cascade(), recognizer(), &k(), &RunConfig { stride: 1, ..Default::default() });
    assert_eq!(r.findings.len(), 1, "{:?}", r.frames[0]);
    assert_eq!(r.findings[0].frame, Some(0));
    assert!(r.frames[0].thermal.unwrap().temp_c >= 38.0);
}

#[test]
fn profile_video_recognizes_nothing() {
    let video = sweep(4, (50.0, 75.0), 12);
    let r = run_proposed(&video, forest(), cascade(), recognizer(), &k(), &RunConfig { stride: 1, ..Default::default() });
    assert_eq!(r.gate_accepted, 0);
    assert_eq!(r.detector_invocations, 0);
    assert_eq!(r.recognizer_invocations, 0);
}

#[test]
fn ten_percent_frontal_video_calls_the_detector_ten_percent() {
    // 2 frontal frames among 20, the rest in profile
    let mut video = sweep(5, (0.0, 0.0), 2);
    video.extend(sweep(5, (50.0, 75.0), 18));
    for (i, t) in video.iter_mut().enumerate() {
        t.index = i;
        t.timestamp_us = i as u64 * 33_333;
    }
    let cfg = RunConfig { stride: 1, ..Default::default() };
    let (rep, trad, prop) = msface::pipeline::bench(&[video], forest(), cascade(), recognizer(), &k(), &cfg, 0.0);
    assert_eq!(trad[0].detector_invocations, 20);
    assert_eq!(prop[0].detector_invocations, 2);
    assert_eq!(rep.proposed.detector_invocations * 10, rep.traditional.detector_invocations);
}
