//! Random regression forest mapping fixed-size depth patches to head-pose
//! votes, in the style of Fanelli et al.
//!
//! Each leaf stores the fraction of training patches that came from the head
//! (`fg_prob`) along with the mean and spread of their votes. Estimation
//! routes a dense grid of patches, keeps votes from confident low-variance
//! leaves and aggregates them with a trimmed mean.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::DepthFrame;
use crate::geometry::{backproject, direction_to_euler, CameraIntrinsics, HeadPose, Mat3, Vec3};
use crate::io::{read_file, write_atomic};

const MAGIC: &[u8; 5] = b"MSPF1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples: usize,
    pub n_candidate_tests: usize,
    pub patch_size: u32,
    pub seed: u64,
    /// Head and background patches drawn per frame for each tree.
    pub patches_per_frame: usize,
    /// Largest head semi-axis; patches whose center lies within 1.5× this
    /// distance of the true head center count as head patches.
    pub head_radius_mm: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 10,
            max_depth: 20,
            min_samples: 10,
            n_candidate_tests: 200,
            patch_size: 32,
            seed: 1,
            patches_per_frame: 160,
            head_radius_mm: 120.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateParams {
    pub min_votes: usize,
    pub min_fg_prob: f64,
    /// Leaf variance ceilings: center offset (mm², trace) and angles (deg², trace).
    pub max_offset_var: f64,
    pub max_angle_var: f64,
    pub trim_frac: f64,
    /// Step of the dense patch grid in pixels; 0 means `patch_size / 2`.
    pub grid_stride: u32,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams {
            min_votes: 10,
            min_fg_prob: 0.5,
            max_offset_var: 2000.0,
            max_angle_var: 300.0,
            trim_frac: 0.4,
            grid_stride: 4,
        }
    }
}

/// Rectangle in patch coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub x: u16,
    pub y: u16,
    pub w: u16,
    pub h: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchTest {
    pub rect1: PatchRect,
    pub rect2: PatchRect,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    /// Patch center → head center, mm.
    pub center_offset: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl Vote {
    fn to_array(self) -> [f64; 6] {
        let c = self.center_offset;
        [c.x, c.y, c.z, self.yaw_deg, self.pitch_deg, self.roll_deg]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Vote {
            center_offset: Vec3::new(a[0], a[1], a[2]),
            yaw_deg: a[3],
            pitch_deg: a[4],
            roll_deg: a[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf {
    /// Training patches that reached the leaf.
    pub count: u32,
    pub fg_prob: f64,
    pub mean_vote: Vote,
    pub offset_var: f64,
    pub angle_var: f64,
}

impl Leaf {
    pub fn vote_trace(&self) -> f64 {
        self.offset_var + self.angle_var
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { test: PatchTest, left: u32, right: u32 },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl RegressionTree {
    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            _ => None,
        })
    }

    /// Leaf index reached by the patch at `(px, py)`, or `None` if a test on
    /// the path is undefined (an all-invalid rectangle).
    fn route(&self, ii: &DepthIntegral, px: u32, py: u32) -> Option<usize> {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return Some(i),
                Node::Split { test, left, right } => {
                    let v = ii.feature(px, py, test)?;
                    i = if v < test.tau { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseForest {
    pub trees: Vec<RegressionTree>,
    pub patch_size: u32,
    pub params: ForestParams,
}

/// Summed-area tables of valid depths and valid-pixel counts over a window
/// of a depth frame.
#[derive(Debug, Clone)]
pub struct DepthIntegral {
    width: u32,
    // (sum of valid depths, valid-pixel count) per corner, interleaved so a
    // lookup touches one cache line
    table: Vec<(u64, u64)>,
}

impl DepthIntegral {
    pub fn new(frame: &DepthFrame) -> Self {
        Self::window(frame, 0, 0, frame.width, frame.height)
    }

    fn window(frame: &DepthFrame, x0: u32, y0: u32, w: u32, h: u32) -> Self {
        let stride = w as usize + 1;
        let mut table = vec![(0u64, 0u64); stride * (h as usize + 1)];
        for y in 0..h as usize {
            let (mut rs, mut rc) = (0u64, 0u64);
            for x in 0..w as usize {
                let d = frame.get(x0 + x as u32, y0 + y as u32);
                if d > 0 {
                    rs += d as u64;
                    rc += 1;
                }
                let up = table[y * stride + x + 1];
                table[(y + 1) * stride + x + 1] = (up.0 + rs, up.1 + rc);
            }
        }
        DepthIntegral { width: w, table }
    }

    #[inline]
    fn rect(&self, x: u32, y: u32, w: u32, h: u32) -> (u64, u64) {
        let s = self.width as usize + 1;
        let (x0, y0, x1, y1) = (x as usize, y as usize, (x + w) as usize, (y + h) as usize);
        let (a, b, c, d) = (self.table[y1 * s + x1], self.table[y0 * s + x0], self.table[y0 * s + x1], self.table[y1 * s + x0]);
        (a.0 + b.0 - c.0 - d.0, a.1 + b.1 - c.1 - d.1)
    }

    /// Mean valid depth in `test.rect1` minus that in `test.rect2`, for the
    /// patch with top-left `(px, py)`. Computed as one exact integer
    /// numerator over `n1·n2`, so a constant depth shift leaves it unchanged
    /// bit for bit.
    #[inline]
    fn feature(&self, px: u32, py: u32, test: &PatchTest) -> Option<f64> {
        let r = |r: &PatchRect| self.rect(px + r.x as u32, py + r.y as u32, r.w as u32, r.h as u32);
        let (s1, n1) = r(&test.rect1);
        let (s2, n2) = r(&test.rect2);
        if n1 == 0 || n2 == 0 {
            return None;
        }
        let num = s1 as i128 * n2 as i128 - s2 as i128 * n1 as i128;
        Some(num as f64 / (n1 as f64 * n2 as f64))
    }
}

/// Depth-difference feature of a standalone patch (top-left at the origin).
pub fn feature_value(patch: &DepthFrame, test: &PatchTest) -> Option<f64> {
    let fits = |r: &PatchRect| r.x as u32 + r.w as u32 <= patch.width && r.y as u32 + r.h as u32 <= patch.height;
    if !fits(&test.rect1) || !fits(&test.rect2) {
        return None;
    }
    DepthIntegral::new(patch).feature(0, 0, test)
}

struct TrainFrame {
    ii: DepthIntegral,
    pos: Vec<(u32, u32, [f64; 6])>,
    neg: Vec<(u32, u32)>,
}

#[derive(Clone, Copy)]
struct Sample {
    frame: u32,
    px: u32,
    py: u32,
    fg: bool,
    vote: [f64; 6],
}

const MIN_FRAMES: usize = 10;
const TAUS_PER_TEST: usize = 10;
const SPLIT_EVAL_CAP: usize = 4096;
// depth scale of the classification/regression weighting
const CLASS_LAMBDA: f64 = 2.0;

impl PoseForest {
    /// Trains on `(frame, ground truth)` pairs rendered with intrinsics `k`.
    pub fn train(frames: &[(DepthFrame, HeadPose)], k: &CameraIntrinsics, params: &ForestParams) -> Result<Self> {
        if frames.len() < MIN_FRAMES {
            return Err(Error::InsufficientData(format!(
                "pose forest needs ≥ {MIN_FRAMES} frames, got {}",
                frames.len()
            )));
        }
        if params.n_trees == 0 || params.patch_size < 4 || params.min_samples == 0 {
            return Err(Error::InvalidArgument(format!("invalid forest parameters {params:?}")));
        }
        let data: Vec<TrainFrame> = frames
            .par_iter()
            .map(|(f, pose)| prepare_frame(f, pose, k, params))
            .collect::<Result<_>>()?;
        if data.iter().all(|d| d.pos.is_empty()) {
            return Err(Error::InsufficientData("no head patches in the training frames".into()));
        }
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_mul(0x9E37_79B9).wrapping_add(t as u64));
                grow_tree(&data, params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PoseForest {
            trees,
            patch_size: params.patch_size,
            params: *params,
        })
    }

    /// All accepted votes as `(head center, [yaw, pitch, roll])`. Angles are
    /// relative to the viewing ray through the head center, see [`view_rotation`].
    pub fn votes(&self, frame: &DepthFrame, k: &CameraIntrinsics, ep: &EstimateParams) -> Result<Vec<(Vec3, [f64; 3])>> {
        let p = self.patch_size;
        if frame.width < p || frame.height < p {
            return Err(Error::InvalidArgument(format!(
                "frame {}x{} smaller than the {p}px patch",
                frame.width, frame.height
            )));
        }
        let ii = DepthIntegral::new(frame);
        let stride = if ep.grid_stride > 0 { ep.grid_stride } else { (p / 2).max(1) };
        let mut out = Vec::new();
        for py in (0..=frame.height - p).step_by(stride as usize) {
            for px in (0..=frame.width - p).step_by(stride as usize) {
                let (cu, cv) = (px + p / 2, py + p / 2);
                let d = frame.get(cu, cv);
                if d == 0 {
                    continue;
                }
                let c3 = backproject(cu as f64, cv as f64, d as f64, k)?;
                for tree in &self.trees {
                    let Some(li) = tree.route(&ii, px, py) else { continue };
                    let Node::Leaf(leaf) = &tree.nodes[li] else { unreachable!() };
                    if leaf.fg_prob >= ep.min_fg_prob
                        && leaf.offset_var <= ep.max_offset_var
                        && leaf.angle_var <= ep.max_angle_var
                    {
                        let v = leaf.mean_vote;
                        out.push((c3 + v.center_offset, [v.yaw_deg, v.pitch_deg, v.roll_deg]));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Head pose from a depth frame, or `None` when too few votes survive.
    pub fn estimate(&self, frame: &DepthFrame, k: &CameraIntrinsics, ep: &EstimateParams) -> Result<Option<HeadPose>> {
        let votes = self.votes(frame, k, ep)?;
        if votes.len() < ep.min_votes.max(1) {
            return Ok(None);
        }
        let centers: Vec<[f64; 3]> = votes.iter().map(|(c, _)| [c.x, c.y, c.z]).collect();
        let angles: Vec<[f64; 3]> = votes.iter().map(|(_, a)| *a).collect();
        let c = trimmed_mean(&centers, ep.trim_frac);
        let a = trimmed_mean(&angles, ep.trim_frac);
        let center = Vec3::new(c[0], c[1], c[2]);
        let rot = view_rotation(center) * Mat3::head_rotation(a[0], a[1], a[2]);
        Ok(Some(HeadPose::from_rotation(&rot, center)))
    }

    /// Leaf index per (grid patch, tree); `None` for skipped patches.
    pub fn leaf_assignments(&self, frame: &DepthFrame) -> Vec<Option<usize>> {
        let p = self.patch_size;
        let ii = DepthIntegral::new(frame);
        let stride = (p / 2).max(1) as usize;
        let mut out = Vec::new();
        if frame.width < p || frame.height < p {
            return out;
        }
        for py in (0..=frame.height - p).step_by(stride) {
            for px in (0..=frame.width - p).step_by(stride) {
                for tree in &self.trees {
                    out.push(tree.route(&ii, px, py));
                }
            }
        }
        out
    }

    /// `MSPF1`, parameters, then every tree in preorder storage order; all
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut o = MAGIC.to_vec();
        let p = &self.params;
        for v in [p.n_trees, p.max_depth, p.min_samples, p.n_candidate_tests, p.patches_per_frame] {
            o.write_u32::<LittleEndian>(v as u32).unwrap();
        }
        o.write_u32::<LittleEndian>(self.patch_size).unwrap();
        o.write_u64::<LittleEndian>(p.seed).unwrap();
        o.write_f64::<LittleEndian>(p.head_radius_mm).unwrap();
        o.write_u32::<LittleEndian>(self.trees.len() as u32).unwrap();
        for t in &self.trees {
            o.write_u32::<LittleEndian>(t.max_depth as u32).unwrap();
            o.write_u32::<LittleEndian>(t.nodes.len() as u32).unwrap();
            for n in &t.nodes {
                match n {
                    Node::Split { test, left, right } => {
                        o.write_u8(0).unwrap();
                        for r in [test.rect1, test.rect2] {
                            for v in [r.x, r.y, r.w, r.h] {
                                o.write_u16::<LittleEndian>(v).unwrap();
                            }
                        }
                        o.write_f64::<LittleEndian>(test.tau).unwrap();
                        o.write_u32::<LittleEndian>(*left).unwrap();
                        o.write_u32::<LittleEndian>(*right).unwrap();
                    }
                    Node::Leaf(l) => {
                        o.write_u8(1).unwrap();
                        o.write_u32::<LittleEndian>(l.count).unwrap();
                        o.write_f64::<LittleEndian>(l.fg_prob).unwrap();
                        for v in l.mean_vote.to_array() {
                            o.write_f64::<LittleEndian>(v).unwrap();
                        }
                        o.write_f64::<LittleEndian>(l.offset_var).unwrap();
                        o.write_f64::<LittleEndian>(l.angle_var).unwrap();
                    }
                }
            }
        }
        o
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format("pose forest", "bad magic"));
        }
        let mut r = Cursor::new(&bytes[MAGIC.len()..]);
        let e = |err: std::io::Error| Error::format("pose forest", format!("truncated: {err}"));
        let mut u = || r.read_u32::<LittleEndian>().map_err(e);
        let (n_trees, max_depth, min_samples, n_candidate_tests, patches_per_frame) =
            (u()? as usize, u()? as usize, u()? as usize, u()? as usize, u()? as usize);
        let patch_size = u()?;
        let seed = r.read_u64::<LittleEndian>().map_err(e)?;
        let head_radius_mm = r.read_f64::<LittleEndian>().map_err(e)?;
        let params = ForestParams {
            n_trees,
            max_depth,
            min_samples,
            n_candidate_tests,
            patch_size,
            seed,
            patches_per_frame,
            head_radius_mm,
        };
        let count = r.read_u32::<LittleEndian>().map_err(e)?;
        if count == 0 {
            return Err(Error::format("pose forest", "no trees"));
        }
        let mut trees = Vec::new();
        for _ in 0..count {
            let td = r.read_u32::<LittleEndian>().map_err(e)? as usize;
            let nn = r.read_u32::<LittleEndian>().map_err(e)?;
            let mut nodes = Vec::new();
            for _ in 0..nn {
                match r.read_u8().map_err(e)? {
                    0 => {
                        let mut v = [0u16; 8];
                        for x in v.iter_mut() {
                            *x = r.read_u16::<LittleEndian>().map_err(e)?;
                        }
                        let rect1 = PatchRect { x: v[0], y: v[1], w: v[2], h: v[3] };
                        let rect2 = PatchRect { x: v[4], y: v[5], w: v[6], h: v[7] };
                        for rc in [rect1, rect2] {
                            if rc.w == 0
                                || rc.h == 0
                                || (rc.x + rc.w) as u32 > patch_size
                                || (rc.y + rc.h) as u32 > patch_size
                            {
                                return Err(Error::format("pose forest", "test rectangle outside patch"));
                            }
                        }
                        let tau = r.read_f64::<LittleEndian>().map_err(e)?;
                        let left = r.read_u32::<LittleEndian>().map_err(e)?;
                        let right = r.read_u32::<LittleEndian>().map_err(e)?;
                        if left >= nn || right >= nn {
                            return Err(Error::format("pose forest", "child index out of range"));
                        }
                        nodes.push(Node::Split { test: PatchTest { rect1, rect2, tau }, left, right });
                    }
                    1 => {
                        let count = r.read_u32::<LittleEndian>().map_err(e)?;
                        let fg_prob = r.read_f64::<LittleEndian>().map_err(e)?;
                        let mut a = [0.0; 6];
                        for x in a.iter_mut() {
                            *x = r.read_f64::<LittleEndian>().map_err(e)?;
                        }
                        let offset_var = r.read_f64::<LittleEndian>().map_err(e)?;
                        let angle_var = r.read_f64::<LittleEndian>().map_err(e)?;
                        nodes.push(Node::Leaf(Leaf {
                            count,
                            fg_prob,
                            mean_vote: Vote::from_array(a),
                            offset_var,
                            angle_var,
                        }));
                    }
                    t => return Err(Error::format("pose forest", format!("unknown node tag {t}"))),
                }
            }
            // children always follow their parent, so this rules out cycles
            for (i, n) in nodes.iter().enumerate() {
                if let Node::Split { left, right, .. } = n {
                    if *left as usize <= i || *right as usize <= i {
                        return Err(Error::format("pose forest", "child precedes parent"));
                    }
                }
            }
            if nodes.is_empty() {
                return Err(Error::format("pose forest", "empty tree"));
            }
            trees.push(RegressionTree { nodes, max_depth: td });
        }
        if r.position() as usize != bytes.len() - MAGIC.len() {
            return Err(Error::format("pose forest", "trailing bytes"));
        }
        Ok(PoseForest {
            trees,
            patch_size,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Per-coordinate-group trimmed mean: drops the `frac` share of rows
/// farthest (Euclidean) from the component-wise median, then averages.
pub fn trimmed_mean(rows: &[[f64; 3]], frac: f64) -> [f64; 3] {
    let n = rows.len();
    let mut med = [0.0; 3];
    for (j, m) in med.iter_mut().enumerate() {
        let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        *m = if n % 2 == 1 { col[n / 2] } else { 0.5 * (col[n / 2 - 1] + col[n / 2]) };
    }
    let dist = |r: &[f64; 3]| (0..3).map(|j| (r[j] - med[j]).powi(2)).sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist(&rows[a]).total_cmp(&dist(&rows[b])).then(a.cmp(&b)));
    let keep = (n - (frac.clamp(0.0, 1.0) * n as f64).floor() as usize).max(1);
    let mut acc = [0.0; 3];
    for &i in &order[..keep] {
        for j in 0..3 {
            acc[j] += rows[i][j];
        }
    }
    acc.map(|v| v / keep as f64)
}

/// Rotation of a head at `center` that faces the camera head-on. Depth
/// patches see the pose relative to this, not relative to the optical axis,
/// so the forest learns and votes angles in this frame.
pub fn view_rotation(center: Vec3) -> Mat3 {
    let d = (-center).flip_z().normalized().unwrap_or(Vec3::Z);
    let (yaw, pitch) = direction_to_euler(d);
    Mat3::head_rotation(yaw, pitch, 0.0)
}

fn prepare_frame(f: &DepthFrame, pose: &HeadPose, k: &CameraIntrinsics, params: &ForestParams) -> Result<TrainFrame> {
    let p = params.patch_size;
    if f.width < p || f.height < p {
        return Err(Error::InvalidArgument(format!("training frame smaller than the {p}px patch")));
    }
    let c = pose.center;
    if !(c.z > 0.0) {
        return Err(Error::InvalidArgument(format!("head center {c:?} behind the camera")));
    }
    let reach = 1.5 * params.head_radius_mm;
    let (u, v) = k.project(c);
    let half = (reach * k.fx.max(k.fy) / c.z).ceil() + (p / 2) as f64 + 1.0;
    let clampi = |a: f64, hi: u32| a.clamp(0.0, hi as f64) as u32;
    let x0 = clampi((u - half).floor(), f.width - p);
    let y0 = clampi((v - half).floor(), f.height - p);
    let x1 = clampi((u + half).ceil(), f.width).max(x0 + p);
    let y1 = clampi((v + half).ceil(), f.height).max(y0 + p);
    let (w, h) = (x1 - x0, y1 - y0);
    let ii = DepthIntegral::window(f, x0, y0, w, h);
    let rel = HeadPose::from_rotation(&(view_rotation(c).transpose() * pose.rotation()), c);
    let angles = [rel.yaw_deg, rel.pitch_deg, rel.roll_deg];
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for py in 0..=h - p {
        for px in 0..=w - p {
            let (cu, cv) = (x0 + px + p / 2, y0 + py + p / 2);
            let d = f.get(cu, cv);
            if d == 0 {
                continue;
            }
            let c3 = backproject(cu as f64, cv as f64, d as f64, k)?;
            let off = c - c3;
            if off.norm() <= reach {
                pos.push((px, py, [off.x, off.y, off.z, angles[0], angles[1], angles[2]]));
            } else {
                neg.push((px, py));
            }
        }
    }
    Ok(TrainFrame {
        ii,
        pos,
        neg,
    })
}

fn grow_tree(data: &[TrainFrame], params: &ForestParams, rng: &mut ChaCha8Rng) -> Result<RegressionTree> {
    let mut samples = Vec::new();
    for (fi, d) in data.iter().enumerate() {
        for _ in 0..params.patches_per_frame {
            if !d.pos.is_empty() {
                let (px, py, vote) = d.pos[rng.random_range(0..d.pos.len())];
                samples.push(Sample { frame: fi as u32, px, py, fg: true, vote });
            }
            if !d.neg.is_empty() {
                let (px, py) = d.neg[rng.random_range(0..d.neg.len())];
                samples.push(Sample { frame: fi as u32, px, py, fg: false, vote: [0.0; 6] });
            }
        }
    }
    if samples.len() < params.min_samples {
        return Err(Error::InsufficientData(format!(
            "{} training patches, fewer than min_samples {}",
            samples.len(),
            params.min_samples
        )));
    }
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        max_depth: params.max_depth,
    };
    build_node(&mut tree, data, samples, 0, params, rng);
    Ok(tree)
}

#[derive(Default, Clone, Copy)]
struct Stats {
    n: f64,
    npos: f64,
    s: [f64; 6],
    ss: [f64; 6],
}

impl Stats {
    #[inline]
    fn add(&mut self, smp: &Sample) {
        self.n += 1.0;
        if smp.fg {
            self.npos += 1.0;
            for j in 0..6 {
                self.s[j] += smp.vote[j];
                self.ss[j] += smp.vote[j] * smp.vote[j];
            }
        }
    }

    fn merged(&self, o: &Stats) -> Stats {
        let mut m = *self;
        m.n += o.n;
        m.npos += o.npos;
        for j in 0..6 {
            m.s[j] += o.s[j];
            m.ss[j] += o.ss[j];
        }
        m
    }

    fn minus(&self, o: &Stats) -> Stats {
        let mut m = *self;
        m.n -= o.n;
        m.npos -= o.npos;
        for j in 0..6 {
            m.s[j] -= o.s[j];
            m.ss[j] -= o.ss[j];
        }
        m
    }

    fn entropy(&self) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        let p = self.npos / self.n;
        let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
        h(p) + h(1.0 - p)
    }

    fn var(&self, range: std::ops::Range<usize>) -> f64 {
        if self.npos < 1.0 {
            return 0.0;
        }
        range
            .map(|j| {
                let m = self.s[j] / self.npos;
                (self.ss[j] / self.npos - m * m).max(0.0)
            })
            .sum()
    }

    // angles enter at 1 mm per degree
    fn vote_var(&self) -> f64 {
        self.var(0..6)
    }
}

fn make_leaf(samples: &[Sample]) -> Node {
    let mut st = Stats::default();
    samples.iter().for_each(|s| st.add(s));
    let mean = if st.npos > 0.0 { st.s.map(|v| v / st.npos) } else { [0.0; 6] };
    Node::Leaf(Leaf {
        count: samples.len() as u32,
        fg_prob: if st.n > 0.0 { st.npos / st.n } else { 0.0 },
        mean_vote: Vote::from_array(mean),
        offset_var: st.var(0..3),
        angle_var: st.var(3..6),
    })
}

fn random_rect(rng: &mut ChaCha8Rng, p: u32) -> PatchRect {
    let max = (p / 2).max(1);
    let w = rng.random_range(1..=max);
    let h = rng.random_range(1..=max);
    PatchRect {
        x: rng.random_range(0..=p - w) as u16,
        y: rng.random_range(0..=p - h) as u16,
        w: w as u16,
        h: h as u16,
    }
}

fn build_node(
    tree: &mut RegressionTree,
    data: &[TrainFrame],
    samples: Vec<Sample>,
    depth: usize,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let idx = tree.nodes.len() as u32;
    let mut parent = Stats::default();
    samples.iter().for_each(|s| parent.add(s));
    let h_parent = parent.entropy();
    let v_parent = if parent.npos >= 2.0 { parent.vote_var() } else { 0.0 };
    if depth >= params.max_depth
        || samples.len() < 2 * params.min_samples
        || parent.npos == 0.0
        || (h_parent <= 0.0 && v_parent <= 0.0)
    {
        tree.nodes.push(make_leaf(&samples));
        return idx;
    }
    let w_class = if h_parent > 0.0 && v_parent > 0.0 {
        (-(depth as f64) / CLASS_LAMBDA).exp()
    } else if h_parent > 0.0 {
        1.0
    } else {
        0.0
    };
    let n_rects = (params.n_candidate_tests / TAUS_PER_TEST).max(1);
    let taus = params.n_candidate_tests.clamp(1, TAUS_PER_TEST);
    let p = params.patch_size;
    // large nodes score candidate tests on a random subset
    let subset: Vec<Sample>;
    let (eval, eval_parent, min_side) = if samples.len() > SPLIT_EVAL_CAP {
        subset = rand::seq::index::sample(rng, samples.len(), SPLIT_EVAL_CAP).iter().map(|i| samples[i]).collect();
        let mut st = Stats::default();
        subset.iter().for_each(|s| st.add(s));
        (&subset[..], st, 1)
    } else {
        (&samples[..], parent, params.min_samples)
    };
    let objective = |l: &Stats, r: &Stats| {
        let mut u = 0.0;
        if w_class > 0.0 {
            u += w_class * (l.n * l.entropy() + r.n * r.entropy()) / eval_parent.n / eval_parent.entropy().max(1e-12);
        }
        if w_class < 1.0 {
            u += (1.0 - w_class) * (l.npos * l.vote_var() + r.npos * r.vote_var()) / eval_parent.npos.max(1.0) / eval_parent.vote_var().max(1e-12);
        }
        u
    };
    let mut best: Option<(f64, PatchTest)> = None;
    let mut values = vec![None; eval.len()];
    for _ in 0..n_rects {
        let (rect1, rect2) = (random_rect(rng, p), random_rect(rng, p));
        let probe = PatchTest { rect1, rect2, tau: 0.0 };
        let mut defined = Vec::new();
        for (v, s) in values.iter_mut().zip(eval) {
            *v = data[s.frame as usize].ii.feature(s.px, s.py, &probe);
            if let Some(x) = *v {
                defined.push(x);
            }
        }
        if defined.is_empty() {
            continue;
        }
        let mut cuts: Vec<f64> = (0..taus).map(|_| defined[rng.random_range(0..defined.len())]).collect();
        cuts.sort_by(f64::total_cmp);
        // bin b holds values with exactly b cuts <= value, so `x < cuts[i]` iff bin <= i
        let mut bins = vec![Stats::default(); cuts.len() + 1];
        for (v, s) in values.iter().zip(eval) {
            if let Some(x) = v {
                bins[cuts.partition_point(|c| c <= x)].add(s);
            }
        }
        let total = bins.iter().fold(Stats::default(), |a, b| a.merged(b));
        let mut l = Stats::default();
        for (i, &tau) in cuts.iter().enumerate() {
            l = l.merged(&bins[i]);
            let r = total.minus(&l);
            if (l.n as usize) < min_side || (r.n as usize) < min_side {
                continue;
            }
            let u = objective(&l, &r);
            if best.as_ref().is_none_or(|(bu, _)| u < *bu) {
                best = Some((u, PatchTest { rect1, rect2, tau }));
            }
        }
    }
    let Some((u, test)) = best.filter(|(u, _)| *u < 1.0 - 1e-12) else {
        tree.nodes.push(make_leaf(&samples));
        return idx;
    };
    log::trace!("forest node depth {depth}: n {} objective {u:.4}", samples.len());
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for s in samples {
        match data[s.frame as usize].ii.feature(s.px, s.py, &test) {
            Some(x) if x < test.tau => left.push(s),
            Some(_) => right.push(s),
            None => {}
        }
    }
    if left.len() < params.min_samples || right.len() < params.min_samples {
        left.append(&mut right);
        tree.nodes.push(make_leaf(&left));
        return idx;
    }
    tree.nodes.push(Node::Split { test, left: 0, right: 0 });
    let li = build_node(tree, data, left, depth + 1, params, rng);
    let ri = build_node(tree, data, right, depth + 1, params, rng);
    tree.nodes[idx as usize] = Node::Split { test, left: li, right: ri };
    idx
}
