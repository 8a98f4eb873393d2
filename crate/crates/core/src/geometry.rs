//! Camera model, 3D vectors, head pose and the frontal-view gate.
//!
//! Directions are stored camera-facing: the physical center→nose vector of a
//! face looking straight into the camera is `(0, 0, -1)`, and ingestion flips
//! its z component so the frontal case reads `(0, 0, 1)`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Unit-norm tolerance accepted by [`offset_angle`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// The canonical ingestion flip: mirrors z so a camera-facing vector
    /// becomes `+z`.
    pub fn flip_z(self) -> Vec3 {
        Vec3::new(self.x, self.y, -self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn rot_x(deg: f64) -> Mat3 {
        let (s, c) = deg.to_radians().sin_cos();
        Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn rot_y(deg: f64) -> Mat3 {
        let (s, c) = deg.to_radians().sin_cos();
        Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn rot_z(deg: f64) -> Mat3 {
        let (s, c) = deg.to_radians().sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Physical head rotation (head frame → camera frame) for the given
    /// pose. The head frame looks along `-z` (toward the camera) at rest.
    pub fn head_rotation(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Mat3 {
        Mat3::rot_y(-yaw_deg) * Mat3::rot_x(-pitch_deg) * Mat3::rot_z(roll_deg)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }
}

/// Pinhole intrinsics; no distortion model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Kinect-like 640×480 camera.
    pub fn kinect() -> Self {
        CameraIntrinsics {
            fx: 575.0,
            fy: 575.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    /// Half-resolution camera used for the synthetic corpora.
    pub fn synthetic() -> Self {
        CameraIntrinsics {
            fx: 285.0,
            fy: 285.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "camera intrinsics out of range: {self:?}"
            )))
        }
    }

    /// Inverse pinhole: camera-frame point → pixel.
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        (self.cx + self.fx * p.x / p.z, self.cy + self.fy * p.y / p.z)
    }

    /// Parses `key=value` lines (`fx`, `fy`, `cx`, `cy`, `width`, `height`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut vals = [None::<f64>; 6];
        const KEYS: [&str; 6] = ["fx", "fy", "cx", "cy", "width", "height"];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format("intrinsics", format!("expected key=value, got {line:?}")))?;
            let idx = KEYS
                .iter()
                .position(|k| *k == key.trim())
                .ok_or_else(|| Error::format("intrinsics", format!("unknown key {key:?}")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::format("intrinsics", format!("bad number {value:?}")))?;
            vals[idx] = Some(v);
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::format("intrinsics", format!("missing {}", KEYS[i])));
        CameraIntrinsics::new(get(0)?, get(1)?, get(2)?, get(3)?, get(4)? as u32, get(5)? as u32)
    }

    pub fn to_text(&self) -> String {
        format!(
            "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\n",
            self.fx, self.fy, self.cx, self.cy, self.width, self.height
        )
    }
}

/// Pinhole back-projection of pixel `(u, v)` at `depth_mm`.
pub fn backproject(u: f64, v: f64, depth_mm: f64, k: &CameraIntrinsics) -> Result<Vec3> {
    if !(depth_mm > 0.0) {
        return Err(Error::InvalidDepth { u, v });
    }
    if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
        return Err(Error::OutOfRange(format!("pixel ({u}, {v}) outside image")));
    }
    let z = depth_mm;
    Ok(Vec3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z))
}

/// Angle in degrees between a unit direction and the camera axis `(0,0,1)`.
pub fn offset_angle(direction: Vec3) -> Result<f64> {
    let norm = direction.norm();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::NotUnit { norm });
    }
    Ok(direction.dot(Vec3::Z).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Camera-facing unit direction for intrinsic yaw-then-pitch angles.
/// Positive yaw turns toward `+x`, positive pitch looks up (`-y`).
pub fn euler_to_direction(yaw_deg: f64, pitch_deg: f64) -> Vec3 {
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    Vec3::new(sy * cp, -sp, cy * cp)
}

/// Inverse of [`euler_to_direction`]; returns `(yaw, pitch)` in degrees.
pub fn direction_to_euler(d: Vec3) -> (f64, f64) {
    let pitch = (-d.y).clamp(-1.0, 1.0).asin().to_degrees();
    let yaw = d.x.atan2(d.z).to_degrees();
    (yaw, pitch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadPose {
    /// Head center in camera coordinates, mm.
    pub center: Vec3,
    /// Camera-facing unit direction (frontal = `+z`).
    pub direction: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl HeadPose {
    pub fn from_euler(center: Vec3, yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Self {
        HeadPose {
            center,
            direction: euler_to_direction(yaw_deg, pitch_deg),
            yaw_deg,
            pitch_deg,
            roll_deg,
        }
    }

    /// Builds a pose from a physical head rotation (head frame → camera
    /// frame, head looking along its own `-z`) and translation.
    pub fn from_rotation(rotation: &Mat3, center: Vec3) -> Self {
        let nose = rotation.apply(Vec3::new(0.0, 0.0, -1.0));
        let direction = nose.flip_z().normalized().unwrap_or(Vec3::Z);
        let (yaw, pitch) = direction_to_euler(direction);
        let unrolled = Mat3::head_rotation(yaw, pitch, 0.0);
        let residual = unrolled.transpose() * *rotation;
        let roll = residual.0[1][0].atan2(residual.0[0][0]).to_degrees();
        HeadPose {
            center,
            direction,
            yaw_deg: yaw,
            pitch_deg: pitch,
            roll_deg: roll,
        }
    }

    pub fn rotation(&self) -> Mat3 {
        Mat3::head_rotation(self.yaw_deg, self.pitch_deg, self.roll_deg)
    }

    /// Biwi-style text: three rotation rows, then one translation row (mm).
    pub fn to_pose_text(&self) -> String {
        let r = self.rotation();
        let mut s = String::new();
        for row in r.0 {
            s.push_str(&format!("{:.12} {:.12} {:.12}\n", row[0], row[1], row[2]));
        }
        s.push_str(&format!(
            "{:.12} {:.12} {:.12}\n",
            self.center.x, self.center.y, self.center.z
        ));
        s
    }

    pub fn parse_pose_text(text: &str) -> Result<Self> {
        let nums: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::format("pose file", format!("bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        if nums.len() != 12 {
            return Err(Error::format(
                "pose file",
                format!("expected 12 numbers, found {}", nums.len()),
            ));
        }
        let r = Mat3([
            [nums[0], nums[1], nums[2]],
            [nums[3], nums[4], nums[5]],
            [nums[6], nums[7], nums[8]],
        ]);
        Ok(HeadPose::from_rotation(&r, Vec3::new(nums[9], nums[10], nums[11])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub offset_deg: f64,
    pub threshold_deg: f64,
    pub accepted: bool,
}

impl GateDecision {
    /// Verdict used when no head was found.
    pub fn no_head(threshold_deg: f64) -> Self {
        GateDecision {
            offset_deg: 180.0,
            threshold_deg,
            accepted: false,
        }
    }
}

/// Slack on the inclusive gate boundary: `acos` of an analytically exact
/// 15° direction comes out a few ulps above 15.
pub const GATE_TOLERANCE_DEG: f64 = 1e-9;

/// Frontal-view gate. A pose exactly at the threshold is accepted.
pub fn gate(pose: &HeadPose, threshold_deg: f64) -> Result<GateDecision> {
    if !(threshold_deg > 0.0 && threshold_deg <= 90.0) {
        return Err(Error::InvalidArgument(format!(
            "gate threshold {threshold_deg} outside (0, 90]"
        )));
    }
    gate_unchecked(pose, threshold_deg)
}

/// Like [`gate`] but accepts any threshold in `[0, 180]`; used by sweeps.
pub fn gate_unchecked(pose: &HeadPose, threshold_deg: f64) -> Result<GateDecision> {
    let offset_deg = offset_angle(pose.direction)?;
    Ok(GateDecision {
        offset_deg,
        threshold_deg,
        accepted: offset_deg <= threshold_deg + GATE_TOLERANCE_DEG,
    })
}
