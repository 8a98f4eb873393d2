//! Deterministic synthetic multi-spectral sequences: ellipsoid heads in
//! depth, textured faces in gray, and forehead hot spots in IR, all with
//! exact ground truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::detect::DetBox;
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, GrayFrame, IrFrame, Rect};
use crate::geometry::{CameraIntrinsics, HeadPose, Mat3, Vec3};
use crate::io::write_atomic;
use crate::pgm;
use crate::pipeline::{ManifestRow, SequenceMeta, Stream, StreamManifest, SyncedTriple};
use crate::recognize::{normalize_chip, FaceChip};
use crate::thermal::{forehead_roi, temp_to_intensity, ForeheadParams, RoiMap, ThermalCalibration};

/// Half-width of the rendered face chip in mm; the chip side in pixels is
/// `2 · FACE_HALF_MM · fx / z`.
pub const FACE_HALF_MM: f64 = 95.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthHeadSpec {
    pub head_radii: Vec3,
    pub nose_radii: Vec3,
    /// Nose ellipsoid center in the head frame (head looks along `-z`).
    pub nose_offset: Vec3,
    /// Jaw ellipsoid, head frame (`+y` points down). Zero radii disable it.
    pub chin_radii: Vec3,
    pub chin_offset: Vec3,
    pub head_center: Vec3,
    /// Orientation; its `center` is ignored in favor of `head_center`.
    pub pose: HeadPose,
    pub background_depth_mm: f64,
    pub noise_sigma_mm: f64,
    pub seed: u64,
}

impl Default for SynthHeadSpec {
    fn default() -> Self {
        let head_center = Vec3::new(0.0, 0.0, 1000.0);
        SynthHeadSpec {
            head_radii: Vec3::new(75.0, 110.0, 95.0),
            nose_radii: Vec3::new(16.0, 25.0, 35.0),
            nose_offset: Vec3::new(0.0, 0.0, -90.0),
            chin_radii: Vec3::new(40.0, 35.0, 45.0),
            chin_offset: Vec3::new(0.0, 70.0, -50.0),
            head_center,
            pose: HeadPose::from_euler(head_center, 0.0, 0.0, 0.0),
            background_depth_mm: 2000.0,
            noise_sigma_mm: 0.0,
            seed: 0,
        }
    }
}

impl SynthHeadSpec {
    pub fn with_pose(mut self, yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Self {
        self.pose = HeadPose::from_euler(self.head_center, yaw_deg, pitch_deg, roll_deg);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: Vec3| v.x > 0.0 && v.y > 0.0 && v.z > 0.0;
        if !pos(self.head_radii) || !pos(self.nose_radii) {
            return Err(Error::InvalidArgument("ellipsoid radii must be positive".into()));
        }
        let c = self.chin_radii;
        if !(c.x >= 0.0 && c.y >= 0.0 && c.z >= 0.0) {
            return Err(Error::InvalidArgument("chin radii must be non-negative".into()));
        }
        let r = self.head_radii;
        let max_r = r.x.max(r.y).max(r.z);
        if !(self.background_depth_mm > self.head_center.z + max_r) {
            return Err(Error::InvalidArgument(format!(
                "background {} mm must lie behind the head (center z {} + radius {max_r})",
                self.background_depth_mm, self.head_center.z
            )));
        }
        if !(self.noise_sigma_mm >= 0.0) {
            return Err(Error::InvalidArgument("noise sigma must be ≥ 0".into()));
        }
        Ok(())
    }

    fn rotation(&self) -> Mat3 {
        Mat3::head_rotation(self.pose.yaw_deg, self.pose.pitch_deg, self.pose.roll_deg)
    }

    /// Exact ground truth: center→nose-tip direction, camera-facing.
    pub fn ground_truth(&self) -> HeadPose {
        let rot = self.rotation();
        let tip = self.nose_offset + Vec3::new(0.0, 0.0, -self.nose_radii.z);
        let direction = rot.apply(tip).normalized().unwrap_or(Vec3::new(0.0, 0.0, -1.0)).flip_z();
        HeadPose {
            center: self.head_center,
            direction,
            yaw_deg: self.pose.yaw_deg,
            pitch_deg: self.pose.pitch_deg,
            roll_deg: self.pose.roll_deg,
        }
    }
}

struct Ellipsoid {
    center: Vec3,
    rot_t: Mat3,
    inv_r: Vec3,
}

impl Ellipsoid {
    /// Nearest positive ray parameter along `d` from the camera origin.
    #[inline]
    fn hit(&self, d: Vec3) -> Option<f64> {
        let a = self.rot_t.apply(d);
        let b = self.rot_t.apply(-self.center);
        let a = Vec3::new(a.x * self.inv_r.x, a.y * self.inv_r.y, a.z * self.inv_r.z);
        let b = Vec3::new(b.x * self.inv_r.x, b.y * self.inv_r.y, b.z * self.inv_r.z);
        let qa = a.dot(a);
        let qb = 2.0 * a.dot(b);
        let qc = b.dot(b) - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let t = (-qb - disc.sqrt()) / (2.0 * qa);
        (t > 0.0).then_some(t)
    }
}

/// Ray-cast depth of the head and nose ellipsoids in front of a
/// fronto-parallel background plane.
pub fn render_depth(spec: &SynthHeadSpec, k: &CameraIntrinsics) -> Result<(DepthFrame, HeadPose)> {
    spec.validate()?;
    let rot = spec.rotation();
    let rot_t = rot.transpose();
    let inv = |r: Vec3| Vec3::new(1.0 / r.x, 1.0 / r.y, 1.0 / r.z);
    let head = Ellipsoid { center: spec.head_center, rot_t, inv_r: inv(spec.head_radii) };
    let nose = Ellipsoid {
        center: spec.head_center + rot.apply(spec.nose_offset),
        rot_t,
        inv_r: inv(spec.nose_radii),
    };
    let c = spec.chin_radii;
    let chin = (c.x > 0.0 && c.y > 0.0 && c.z > 0.0).then(|| Ellipsoid {
        center: spec.head_center + rot.apply(spec.chin_offset),
        rot_t,
        inv_r: inv(c),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma_mm.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut depth = Vec::with_capacity((k.width * k.height) as usize);
    let mut head_pixels = 0usize;
    for v in 0..k.height {
        for u in 0..k.width {
            let d = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let mut z = spec.background_depth_mm;
            for t in [head.hit(d), nose.hit(d), chin.as_ref().and_then(|e| e.hit(d))].into_iter().flatten() {
                if t < z {
                    z = t;
                }
            }
            if z < spec.background_depth_mm {
                head_pixels += 1;
            }
            if spec.noise_sigma_mm > 0.0 {
                z += noise.sample(&mut rng);
            }
            depth.push(z.round().clamp(1.0, u16::MAX as f64) as u16);
        }
    }
    if head_pixels == 0 {
        return Err(Error::OutOfRange("head lies entirely outside the camera frustum".into()));
    }
    Ok((DepthFrame::new(k.width, k.height, depth, 0)?, spec.ground_truth()))
}

/// Ground-truth face box: a square of side `2 · FACE_HALF_MM · fx / z`
/// centered on the projected head center.
pub fn face_box(pose: &HeadPose, k: &CameraIntrinsics) -> DetBox {
    let (u, v) = k.project(pose.center);
    let side = (2.0 * FACE_HALF_MM * k.fx / pose.center.z).round();
    DetBox {
        x: (u - side / 2.0).round(),
        y: (v - side / 2.0).round(),
        w: side,
        h: side,
        score: 1.0,
    }
}

struct SubjectLook {
    base: f64,
    eye_dx: f64,
    eye_y: f64,
    mouth_w: f64,
    mouth_y: f64,
    // (amplitude, fx, fy, phase)
    waves: Vec<(f64, f64, f64, f64)>,
    blobs: Vec<(f64, f64, f64, f64)>,
}

impl SubjectLook {
    fn new(subject_id: i64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_F00D ^ (subject_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        SubjectLook {
            base: rng.random_range(120.0..185.0),
            eye_dx: rng.random_range(0.28..0.42),
            eye_y: rng.random_range(-0.28..-0.14),
            mouth_w: rng.random_range(0.2..0.38),
            mouth_y: rng.random_range(0.42..0.58),
            waves: (0..5)
                .map(|_| {
                    (
                        rng.random_range(8.0..18.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect(),
            blobs: (0..4)
                .map(|_| {
                    (
                        rng.random_range(-0.6..0.6),
                        rng.random_range(-0.7..0.7),
                        rng.random_range(0.12..0.3),
                        rng.random_range(-45.0..45.0),
                    )
                })
                .collect(),
        }
    }

    /// Intensity at face-texture coordinates (`[-1, 1]²`, `y` down).
    fn shade(&self, x: f64, y: f64) -> f64 {
        let e2 = |cx: f64, cy: f64, rx: f64, ry: f64| ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
        let mut v = self.base;
        for &(a, fx, fy, ph) in &self.waves {
            v += a * (std::f64::consts::PI * (fx * x + fy * y) + ph).sin();
        }
        for &(bx, by, r, a) in &self.blobs {
            v += a * (-e2(bx, by, r, r)).exp();
        }
        for side in [-1.0, 1.0] {
            if e2(side * self.eye_dx, self.eye_y, 0.15, 0.08) <= 1.0 {
                v -= 85.0;
            }
            if e2(side * self.eye_dx, self.eye_y - 0.16, 0.18, 0.04) <= 1.0 {
                v -= 55.0;
            }
        }
        if x.abs() < 0.06 && y > self.eye_y && y < self.mouth_y - 0.2 {
            v += 30.0;
        }
        if e2(0.0, self.mouth_y, self.mouth_w, 0.07) <= 1.0 {
            v -= 75.0;
        }
        v
    }
}

const FACE_RX: f64 = 0.78;
const FACE_RY: f64 = 0.95;
const HAIR_LEVEL: f64 = 45.0;

/// Square face image of `size` pixels for a subject at a pose. Yaw and pitch
/// compress the texture horizontally and vertically by their cosines; roll
/// rotates it.
pub fn render_face_gray(subject_id: i64, pose: &HeadPose, size: u32) -> Result<GrayFrame> {
    if size < 32 {
        return Err(Error::InvalidArgument(format!("face size {size} < 32")));
    }
    Ok(render_face_any(subject_id, pose, size))
}

fn render_face_any(subject_id: i64, pose: &HeadPose, size: u32) -> GrayFrame {
    let look = SubjectLook::new(subject_id);
    let cyaw = pose.yaw_deg.to_radians().cos().abs().max(0.05);
    let cpitch = pose.pitch_deg.to_radians().cos().abs().max(0.05);
    let (sr, cr) = pose.roll_deg.to_radians().sin_cos();
    // features slide toward the side the head turns to
    let shift_x = 0.35 * pose.yaw_deg.to_radians().sin();
    let shift_y = -0.35 * pose.pitch_deg.to_radians().sin();
    let s = size as f64;
    let mut px = Vec::with_capacity((size * size) as usize);
    for j in 0..size {
        for i in 0..size {
            let x0 = (i as f64 + 0.5) / s * 2.0 - 1.0;
            let y0 = (j as f64 + 0.5) / s * 2.0 - 1.0;
            let (x, y) = (cr * x0 + sr * y0, -sr * x0 + cr * y0);
            let (fx, fy) = (x / cyaw, y / cpitch);
            let inside = (fx / FACE_RX).powi(2) + (fy / FACE_RY).powi(2) <= 1.0;
            let v = if inside {
                look.shade(fx - shift_x / cyaw, fy - shift_y / cpitch)
            } else {
                HAIR_LEVEL
            };
            px.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayFrame::new(size, size, px, 0).expect("consistent size")
}

/// Smooth seeded clutter used as the gray background.
pub fn render_background(width: u32, height: u32, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBAC6_0000);
    let base: f64 = rng.random_range(70.0..170.0);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(5.0..25.0),
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.08..0.08),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let rects: Vec<(f64, f64, f64, f64, f64)> = (0..8)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(8.0..80.0),
                rng.random_range(8.0..80.0),
                rng.random_range(-60.0..60.0),
            )
        })
        .collect();
    let mut px = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = base;
            for &(a, fx, fy, ph) in &waves {
                v += a * (fx * xf + fy * yf + ph).sin();
            }
            for &(rx, ry, rw, rh, a) in &rects {
                if xf >= rx && xf < rx + rw && yf >= ry && yf < ry + rh {
                    v += a;
                }
            }
            px.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayFrame::new(width, height, px, 0).expect("consistent size")
}

/// Gray scene: background plus the subject's face pasted at the head box.
pub fn render_scene_gray(
    subject_id: i64,
    pose: &HeadPose,
    k: &CameraIntrinsics,
    background_seed: u64,
    noise_seed: u64,
) -> GrayFrame {
    let mut scene = render_background(k.width, k.height, background_seed);
    let b = face_box(pose, k);
    if b.w >= 8.0 {
        let face = render_face_any(subject_id, pose, b.w as u32);
        scene.paste(&face, b.x as i64, b.y as i64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    for p in scene.pixels.iter_mut() {
        let n: i32 = rng.random_range(-2..=2);
        *p = (*p as i32 + n).clamp(0, 255) as u8;
    }
    scene
}

/// IR frame: the forehead part of `face_box` at the intensity of
/// `forehead_temp_c`, the rest of the face box 2 °C cooler, everything else
/// at room temperature (the calibration intercept).
pub fn render_ir(
    face_box: &DetBox,
    forehead_temp_c: f64,
    cal: &ThermalCalibration,
    width: u32,
    height: u32,
) -> Result<IrFrame> {
    if cal.slope == 0.0 {
        return Err(Error::InvalidArgument("calibration slope is zero".into()));
    }
    let fore = temp_to_intensity(forehead_temp_c, cal)?;
    let room = temp_to_intensity(cal.intercept, cal)?;
    let face_level = ((forehead_temp_c - 2.0 - cal.intercept) / cal.slope).round().clamp(0.0, 255.0) as u8;
    let mut px = vec![room; (width * height) as usize];
    let mut fill = |r: Rect, v: u8| {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                px[(y * width + x) as usize] = v;
            }
        }
    };
    let clip = |b: &DetBox| -> Option<Rect> {
        let x0 = b.x.round().max(0.0);
        let y0 = b.y.round().max(0.0);
        let x1 = (b.x + b.w).round().min(width as f64);
        let y1 = (b.y + b.h).round().min(height as f64);
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32))
    };
    if let Some(r) = clip(face_box) {
        fill(r, face_level);
    }
    if let Ok(r) = forehead_roi(face_box, &RoiMap::identity(), &ForeheadParams::default(), width, height) {
        fill(r, fore);
    }
    IrFrame::new(width, height, px, 0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSequenceSpec {
    pub subject_id: i64,
    pub frame_count: usize,
    pub yaw_sweep_deg: (f64, f64),
    pub pitch_sweep_deg: (f64, f64),
    pub frame_period_us: u64,
    pub forehead_temp_c: f64,
    pub seed: u64,
    pub head: SynthHeadSpec,
}

impl Default for SynthSequenceSpec {
    fn default() -> Self {
        SynthSequenceSpec {
            subject_id: 1,
            frame_count: 31,
            yaw_sweep_deg: (-75.0, 75.0),
            pitch_sweep_deg: (0.0, 0.0),
            frame_period_us: 33_333,
            forehead_temp_c: 33.727,
            seed: 42,
            head: SynthHeadSpec::default(),
        }
    }
}

impl SynthSequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::InvalidArgument("frame_count must be ≥ 1".into()));
        }
        if self.frame_period_us == 0 {
            return Err(Error::InvalidArgument("frame_period_us must be > 0".into()));
        }
        self.head.validate()
    }

    /// Linearly swept `(yaw, pitch)` of frame `i`.
    pub fn pose_at(&self, i: usize) -> (f64, f64) {
        let t = if self.frame_count > 1 { i as f64 / (self.frame_count - 1) as f64 } else { 0.0 };
        let lerp = |(a, b): (f64, f64)| a + (b - a) * t;
        (lerp(self.yaw_sweep_deg), lerp(self.pitch_sweep_deg))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub depth: DepthFrame,
    pub gray: GrayFrame,
    pub ir: IrFrame,
    pub pose: HeadPose,
    pub face_box: DetBox,
}

/// Renders frame `i` of a sequence in memory.
pub fn render_sequence_frame(spec: &SynthSequenceSpec, i: usize, k: &CameraIntrinsics) -> Result<SynthFrame> {
    let (yaw, pitch) = spec.pose_at(i);
    let frame_seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
    let head = SynthHeadSpec { seed: frame_seed, ..spec.head }.with_pose(yaw, pitch, 0.0);
    let (mut depth, pose) = render_depth(&head, k)?;
    let ts = i as u64 * spec.frame_period_us;
    depth.timestamp_us = ts;
    let mut gray = render_scene_gray(spec.subject_id, &pose, k, spec.seed, frame_seed);
    gray.timestamp_us = ts;
    let fb = face_box(&pose, k);
    let mut ir = render_ir(&fb, spec.forehead_temp_c, &ThermalCalibration::reference(), k.width, k.height)?;
    ir.timestamp_us = ts;
    Ok(SynthFrame { depth, gray, ir, pose, face_box: fb })
}

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const INTRINSICS_NAME: &str = "intrinsics.txt";

/// Writes every frame of the sequence plus `manifest.csv`, its `.meta`
/// sidecar and `intrinsics.txt` into `out_dir`.
pub fn synth_sequence(spec: &SynthSequenceSpec, k: &CameraIntrinsics, out_dir: &Path) -> Result<StreamManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::new();
    for i in 0..spec.frame_count {
        let f = render_sequence_frame(spec, i, k)?;
        let ts = f.depth.timestamp_us;
        let name = |suffix: &str| PathBuf::from(format!("frame_{i:04}_{suffix}"));
        pgm::write_depth(&out_dir.join(name("depth.pgm")), &f.depth)?;
        pgm::write_gray(&out_dir.join(name("gray.pgm")), &f.gray)?;
        pgm::write_ir(&out_dir.join(name("ir.pgm")), &f.ir)?;
        write_atomic(&out_dir.join(name("pose.txt")), f.pose.to_pose_text().as_bytes())?;
        rows.push(ManifestRow { stream: Stream::Depth, path: name("depth.pgm"), timestamp_us: ts });
        rows.push(ManifestRow { stream: Stream::Gray, path: name("gray.pgm"), timestamp_us: ts });
        rows.push(ManifestRow { stream: Stream::Ir, path: name("ir.pgm"), timestamp_us: ts });
    }
    write_atomic(&out_dir.join(INTRINSICS_NAME), k.to_text().as_bytes())?;
    let manifest = StreamManifest {
        rows,
        meta: SequenceMeta {
            intrinsics: Some(PathBuf::from(INTRINSICS_NAME)),
            frame_period_us: spec.frame_period_us,
            subject_id: Some(spec.subject_id),
        },
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

/// Ranges for randomly posed heads. `Default` is uniform over the full ranges;
/// `training()` adds a near-frontal core, like recorded head-pose corpora.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRanges {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub depth_mm: (f64, f64),
    pub lateral_mm: f64,
    /// Share of heads drawn with yaw and pitch inside ±`core_deg` instead of
    /// the full ranges.
    pub core_share: f64,
    pub core_deg: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        PoseRanges {
            yaw_deg: 75.0,
            pitch_deg: 60.0,
            roll_deg: 0.0,
            depth_mm: (850.0, 1150.0),
            lateral_mm: 120.0,
            core_share: 0.0,
            core_deg: 30.0,
        }
    }
}

impl PoseRanges {
    /// 30% of heads inside ±30°: the gate decides near frontal, and a uniform
    /// prior leaves only ~5% of frames there.
    pub fn training() -> Self {
        PoseRanges { core_share: 0.3, ..Default::default() }
    }
}

/// `n` randomly posed head specs.
pub fn random_head_specs(n: usize, ranges: &PoseRanges, noise_sigma_mm: f64, seed: u64) -> Vec<SynthHeadSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = |r: f64, rng: &mut ChaCha8Rng| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    (0..n)
        .map(|i| {
            let center = Vec3::new(
                sym(ranges.lateral_mm, &mut rng),
                sym(ranges.lateral_mm * 0.6, &mut rng),
                rng.random_range(ranges.depth_mm.0..=ranges.depth_mm.1),
            );
            let core = ranges.core_share > 0.0 && rng.random_bool(ranges.core_share.min(1.0));
            let cap = |r: f64| if core { r.min(ranges.core_deg) } else { r };
            let (yaw, pitch, roll) = (
                sym(cap(ranges.yaw_deg), &mut rng),
                sym(cap(ranges.pitch_deg), &mut rng),
                sym(ranges.roll_deg, &mut rng),
            );
            SynthHeadSpec {
                head_center: center,
                background_depth_mm: center.z + rng.random_range(600.0..1200.0),
                noise_sigma_mm,
                seed: seed.wrapping_add(1 + i as u64),
                ..SynthHeadSpec::default()
            }
            .with_pose(yaw, pitch, roll)
        })
        .collect()
}

/// Depth frames with ground truth for pose-forest training.
pub fn pose_training_set(
    n: usize,
    ranges: &PoseRanges,
    noise_sigma_mm: f64,
    k: &CameraIntrinsics,
    seed: u64,
) -> Result<Vec<(DepthFrame, HeadPose)>> {
    use rayon::prelude::*;
    random_head_specs(n, ranges, noise_sigma_mm, seed)
        .par_iter()
        .map(|s| render_depth(s, k))
        .collect()
}

/// A rendered sequence as in-memory synchronized triples.
pub fn sequence_triples(spec: &SynthSequenceSpec, k: &CameraIntrinsics) -> Result<Vec<SyncedTriple>> {
    use rayon::prelude::*;
    spec.validate()?;
    (0..spec.frame_count)
        .into_par_iter()
        .map(|i| {
            let f = render_sequence_frame(spec, i, k)?;
            Ok(SyncedTriple { index: i, timestamp_us: f.depth.timestamp_us, depth: f.depth, gray: f.gray, ir: Some(f.ir) })
        })
        .collect()
}

/// Enrollment yaws of the synthetic gallery.
pub const GALLERY_YAWS_DEG: [f64; 7] = [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0];
/// Misaligned copies per enrollment image.
pub const GALLERY_JITTER: usize = 4;

/// Labeled enrollment chips: per (subject, yaw) one crop at the ground-truth
/// face box plus `jitter` shifted/scaled crops, each over a fresh background,
/// which stand in for detector misalignment.
pub fn gallery_chips(
    subjects: &[i64],
    yaws_deg: &[f64],
    jitter: usize,
    k: &CameraIntrinsics,
    chip_size: (u32, u32),
    seed: u64,
) -> Result<Vec<FaceChip>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A11_E4F0);
    let mut out = Vec::new();
    for &id in subjects {
        for (j, &yaw) in yaws_deg.iter().enumerate() {
            let pose = HeadPose::from_euler(Vec3::new(0.0, 0.0, 1000.0), yaw, 0.0, 0.0);
            let s = seed.wrapping_add((id as u64).wrapping_mul(7919)).wrapping_add(j as u64);
            let scene = render_scene_gray(id, &pose, k, s, s ^ 0xA5A5);
            let gt = face_box(&pose, k);
            out.push(normalize_chip(&scene, &gt, chip_size.0, chip_size.1)?.with_label(id));
            for r in 0..jitter {
                let s2 = s.wrapping_mul(31).wrapping_add(r as u64 + 1);
                let scene = render_scene_gray(id, &pose, k, s2, s2 ^ 0xA5A5);
                let side = gt.w * rng.random_range(0.9..1.1);
                let (cx, cy) = gt.center();
                let b = DetBox {
                    x: cx - side / 2.0 + gt.w * rng.random_range(-0.06..0.06),
                    y: cy - side / 2.0 + gt.w * rng.random_range(-0.06..0.06),
                    w: side,
                    h: side,
                    score: 0.0,
                };
                out.push(normalize_chip(&scene, &b, chip_size.0, chip_size.1)?.with_label(id));
            }
        }
    }
    Ok(out)
}

/// Full scenes for hard-negative mining, each with a random face whose box
/// is excluded from mining.
pub fn cascade_mining_scenes(n: usize, seed: u64) -> Vec<crate::detect::NegativeScene> {
    let k = CameraIntrinsics::synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0051_CE4E);
    (0..n)
        .map(|_| {
            let center = Vec3::new(
                rng.random_range(-120.0..120.0),
                rng.random_range(-60.0..60.0),
                rng.random_range(850.0..1250.0),
            );
            let pose = HeadPose::from_euler(center, rng.random_range(-75.0..75.0), rng.random_range(-20.0..20.0), 0.0);
            let frame = render_scene_gray(rng.random_range(0..200), &pose, &k, rng.random(), rng.random());
            crate::detect::NegativeScene { frame, exclude: vec![face_box(&pose, &k)] }
        })
        .collect()
}

/// 24×24 face windows (near-frontal, random subjects) and background
/// windows for cascade training.
pub fn cascade_training_set(
    n_pos: usize,
    n_neg: usize,
    max_yaw_deg: f64,
    seed: u64,
) -> (Vec<GrayFrame>, Vec<GrayFrame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = crate::detect::BASE_WINDOW;
    let mut pos = Vec::with_capacity(n_pos);
    for _ in 0..n_pos {
        let subject = rng.random_range(0..200);
        let pose = HeadPose::from_euler(
            Vec3::new(0.0, 0.0, 1000.0),
            rng.random_range(-max_yaw_deg..=max_yaw_deg),
            rng.random_range(-max_yaw_deg..=max_yaw_deg) * 0.5,
            0.0,
        );
        let size = rng.random_range(40..=72u32);
        let face = render_face_any(subject, &pose, size);
        // up to ±1 window pixel of misalignment
        let j = (size as f64 / side as f64).round() as i64;
        let (dx, dy) = (rng.random_range(-j..=j), rng.random_range(-j..=j));
        let mut canvas = render_background(size, size, rng.random());
        canvas.paste(&face, dx, dy);
        pos.push(canvas.resize_bilinear(side, side));
    }
    // background crops, and scene crops that miss the face (partial faces,
    // wrong scale) so later stages see hard negatives
    let mut neg = Vec::with_capacity(n_neg);
    let k = CameraIntrinsics::synthetic();
    let (w, h) = (k.width, k.height);
    let mut bg = render_background(w, h, rng.random());
    let mut face_at: Option<DetBox> = None;
    for i in 0..n_neg {
        if i % 50 == 0 {
            if i % 100 == 0 {
                bg = render_background(w, h, rng.random());
                face_at = None;
            } else {
                let center = Vec3::new(rng.random_range(-150.0..150.0), rng.random_range(-80.0..80.0), rng.random_range(800.0..1300.0));
                let pose = HeadPose::from_euler(center, rng.random_range(-75.0..75.0), rng.random_range(-30.0..30.0), 0.0);
                bg = render_scene_gray(rng.random_range(0..200), &pose, &k, rng.random(), rng.random());
                face_at = Some(face_box(&pose, &k));
            }
        }
        loop {
            let size = rng.random_range(side..=120);
            let x = rng.random_range(0..=w - size);
            let y = rng.random_range(0..=h - size);
            let b = DetBox { x: x as f64, y: y as f64, w: size as f64, h: size as f64, score: 0.0 };
            if face_at.is_some_and(|f| f.iou(&b) >= 0.4) {
                continue;
            }
            let crop = bg.crop(x, y, size, size).expect("crop inside frame");
            neg.push(crop.resize_bilinear(side, side));
            break;
        }
    }
    (pos, neg)
}
