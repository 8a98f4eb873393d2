use std::path::Path;

use msface::geometry::{offset_angle, CameraIntrinsics, HeadPose};
use msface::io::{read_file, read_text};
use msface::pipeline::{sync_streams, Stream, StreamManifest};
use msface::synth::{render_sequence_frame, synth_sequence, SynthSequenceSpec, MANIFEST_NAME};
use msface::thermal::{forehead_roi, temp_of_roi, BloodFlowModel, ForeheadParams, RoiMap, ThermalCalibration};

fn spec(frames: usize) -> SynthSequenceSpec {
    SynthSequenceSpec { frame_count: frames, subject_id: 3, seed: 9, ..Default::default() }
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), read_file(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn sweep_on_disk_matches_analytic_poses() {
    let k = CameraIntrinsics::synthetic();
    let dir = tempfile::tempdir().unwrap();
    let m = synth_sequence(&spec(31), &k, dir.path()).unwrap();
    for s in [Stream::Depth, Stream::Gray, Stream::Ir] {
        assert_eq!(m.stream_rows(s).len(), 31);
    }

    let loaded = StreamManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(loaded.intrinsics().unwrap(), Some(k));
    let synced = sync_streams(&loaded).unwrap();
    assert_eq!(synced.stats.paired, 31);
    assert_eq!(synced.stats.dropped, 0);

    let mut last_ts = None;
    for (i, t) in synced.triples.iter().enumerate() {
        let pose_file = dir.path().join(format!("frame_{i:04}_pose.txt"));
        let pose = HeadPose::parse_pose_text(&read_text(&pose_file).unwrap()).unwrap();
        let yaw = -75.0 + 5.0 * i as f64;
        assert!((pose.yaw_deg - yaw).abs() < 1e-6, "frame {i}: {}", pose.yaw_deg);
        assert!((offset_angle(pose.direction).unwrap() - yaw.abs()).abs() < 1e-6);
        assert!(last_ts.is_none_or(|l| t.timestamp_us > l));
        last_ts = Some(t.timestamp_us);
    }
}

#[test]
fn single_frame_sits_at_sweep_start() {
    let k = CameraIntrinsics::synthetic();
    let dir = tempfile::tempdir().unwrap();
    let s = SynthSequenceSpec { yaw_sweep_deg: (0.0, 40.0), ..spec(1) };
    let m = synth_sequence(&s, &k, dir.path()).unwrap();
    assert_eq!(m.stream_rows(Stream::Depth).len(), 1);
    let pose = HeadPose::parse_pose_text(&read_text(&dir.path().join("frame_0000_pose.txt")).unwrap()).unwrap();
    assert!(pose.yaw_deg.abs() < 1e-9);
}

#[test]
fn same_spec_writes_identical_bytes() {
    let k = CameraIntrinsics::synthetic();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth_sequence(&spec(4), &k, a.path()).unwrap();
    synth_sequence(&spec(4), &k, b.path()).unwrap();
    assert_eq!(listing(a.path()), listing(b.path()));

    let c = tempfile::tempdir().unwrap();
    synth_sequence(&SynthSequenceSpec { seed: 10, ..spec(4) }, &k, c.path()).unwrap();
    assert_ne!(listing(a.path()), listing(c.path()));
}

#[test]
fn rendered_forehead_reads_back_within_quantization() {
    let k = CameraIntrinsics::synthetic();
    let f = render_sequence_frame(&spec(31), 15, &k).unwrap();
    let cal = ThermalCalibration::reference();
    let roi = forehead_roi(&f.face_box, &RoiMap::identity(), &ForeheadParams::default(), k.width, k.height).unwrap();
    let r = temp_of_roi(&f.ir, roi, &cal, &BloodFlowModel::default()).unwrap();
    // half a gray level of the slope
    assert!((r.temp_c - 33.727).abs() <= 0.11, "{}", r.temp_c);
    assert!((r.temp_c - (cal.slope * r.mean_intensity + cal.intercept)).abs() < 1e-9);
}
