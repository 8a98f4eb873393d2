use std::sync::OnceLock;

use msface::forest::{EstimateParams, ForestParams, PoseForest};
use msface::frame::DepthFrame;
use msface::geometry::{CameraIntrinsics, HeadPose};
use msface::synth::{pose_training_set, render_depth, PoseRanges, SynthHeadSpec};
use proptest::prelude::*;

fn small() -> ForestParams {
    ForestParams { n_trees: 5, max_depth: 10, patches_per_frame: 40, n_candidate_tests: 60, seed: 3, ..Default::default() }
}

fn training(n: usize) -> Vec<(DepthFrame, HeadPose)> {
    pose_training_set(n, &PoseRanges::training(), 0.0, &CameraIntrinsics::synthetic(), 5).unwrap()
}

fn small_forest() -> &'static PoseForest {
    static F: OnceLock<PoseForest> = OnceLock::new();
    F.get_or_init(|| PoseForest::train(&training(50), &CameraIntrinsics::synthetic(), &small()).unwrap())
}

#[test]
fn structure_of_a_small_forest() {
    let f = small_forest();
    assert_eq!(f.trees.len(), 5);
    for t in &f.trees {
        assert!(t.leaves().count() > 1);
        for leaf in t.leaves() {
            assert!(leaf.count as usize >= small().min_samples, "leaf with {} samples", leaf.count);
            assert!((0.0..=1.0).contains(&leaf.fg_prob));
        }
    }
}

#[test]
fn training_is_deterministic() {
    let k = CameraIntrinsics::synthetic();
    let data = training(20);
    let p = ForestParams { n_trees: 2, ..small() };
    let a = PoseForest::train(&data, &k, &p).unwrap().to_bytes();
    let b = PoseForest::train(&data, &k, &p).unwrap().to_bytes();
    assert_eq!(a, b);
    let c = PoseForest::train(&data, &k, &ForestParams { seed: 4, ..p }).unwrap().to_bytes();
    assert_ne!(a, c);
}

#[test]
fn serialization_round_trip() {
    let f = small_forest();
    let back = PoseForest::from_bytes(&f.to_bytes()).unwrap();
    assert_eq!(&back, f);
    let mut bytes = f.to_bytes();
    bytes.truncate(bytes.len() / 2);
    assert!(PoseForest::from_bytes(&bytes).is_err());
}

#[test]
fn repeated_frontal_frame_votes_zero_yaw() {
    let k = CameraIntrinsics::synthetic();
    let frame = render_depth(&SynthHeadSpec::default(), &k).unwrap();
    let data = vec![frame; 12];
    let f = PoseForest::train(&data, &k, &ForestParams { n_trees: 3, ..small() }).unwrap();
    for leaf in f.trees.iter().flat_map(|t| t.leaves()) {
        assert!(leaf.mean_vote.yaw_deg.abs() < 1e-6, "{}", leaf.mean_vote.yaw_deg);
        assert!(leaf.mean_vote.pitch_deg.abs() < 1e-6);
    }
}

#[test]
fn too_few_frames_is_an_error() {
    let k = CameraIntrinsics::synthetic();
    assert!(PoseForest::train(&training(9), &k, &small()).is_err());
}

#[test]
fn plane_has_no_head() {
    let k = CameraIntrinsics::synthetic();
    let plane = DepthFrame::filled(k.width, k.height, 1500);
    assert_eq!(small_forest().estimate(&plane, &k, &EstimateParams::default()).unwrap(), None);
    let empty = DepthFrame::filled(k.width, k.height, 0);
    assert_eq!(small_forest().estimate(&empty, &k, &EstimateParams::default()).unwrap(), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn depth_shift_keeps_leaf_routing(shift in 1u16..400, yaw in -60.0f64..60.0) {
        let k = CameraIntrinsics::synthetic();
        let (frame, _) = render_depth(&SynthHeadSpec::default().with_pose(yaw, 0.0, 0.0), &k).unwrap();
        let mut shifted = frame.clone();
        for d in shifted.depth_mm.iter_mut().filter(|d| **d > 0) {
            *d += shift;
        }
        let f = small_forest();
        prop_assert_eq!(f.leaf_assignments(&frame), f.leaf_assignments(&shifted));
    }

    #[test]
    fn estimation_is_pure(yaw in -60.0f64..60.0, pitch in -40.0f64..40.0) {
        let k = CameraIntrinsics::synthetic();
        let (frame, _) = render_depth(&SynthHeadSpec::default().with_pose(yaw, pitch, 0.0), &k).unwrap();
        let ep = EstimateParams::default();
        prop_assert_eq!(small_forest().estimate(&frame, &k, &ep).unwrap(), small_forest().estimate(&frame, &k, &ep).unwrap());
    }
}
