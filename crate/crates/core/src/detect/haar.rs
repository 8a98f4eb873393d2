//! Haar-like features over a 24×24 base window and the boosted cascade built
//! from them.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::integral::IntegralImage;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};

pub const BASE_WINDOW: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Left/right pair.
    TwoHorizontal,
    /// Top/bottom pair.
    TwoVertical,
    /// Three columns, center weighted +2.
    ThreeHorizontal,
    /// Three rows, center weighted +2.
    ThreeVertical,
}

impl FeatureKind {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => FeatureKind::TwoHorizontal,
            1 => FeatureKind::TwoVertical,
            2 => FeatureKind::ThreeHorizontal,
            3 => FeatureKind::ThreeVertical,
            _ => return Err(Error::format("cascade", format!("unknown feature kind {c}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightedRect {
    pub x: u8,
    pub y: u8,
    pub w: u8,
    pub h: u8,
    pub weight: i8,
}

impl WeightedRect {
    fn area(&self) -> i64 {
        self.w as i64 * self.h as i64
    }
}

/// A feature's weighted rectangle areas sum to zero, so its response on a
/// constant image is exactly zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaarFeature {
    pub kind: FeatureKind,
    pub rects: Vec<WeightedRect>,
}

impl HaarFeature {
    /// Feature of `kind` with total extent `(x, y, w, h)` in base-window
    /// coordinates. `w` (horizontal kinds) or `h` (vertical kinds) must be
    /// divisible by the number of parts.
    pub fn new(kind: FeatureKind, x: u8, y: u8, w: u8, h: u8) -> Self {
        let r = |x, y, w, h, weight| WeightedRect { x, y, w, h, weight };
        let rects = match kind {
            FeatureKind::TwoHorizontal => {
                let hw = w / 2;
                vec![r(x, y, hw, h, 1), r(x + hw, y, hw, h, -1)]
            }
            FeatureKind::TwoVertical => {
                let hh = h / 2;
                vec![r(x, y, w, hh, 1), r(x, y + hh, w, hh, -1)]
            }
            FeatureKind::ThreeHorizontal => {
                let tw = w / 3;
                vec![r(x, y, tw, h, -1), r(x + tw, y, tw, h, 2), r(x + 2 * tw, y, tw, h, -1)]
            }
            FeatureKind::ThreeVertical => {
                let th = h / 3;
                vec![r(x, y, w, th, -1), r(x, y + th, w, th, 2), r(x, y + 2 * th, w, th, -1)]
            }
        };
        HaarFeature { kind, rects }
    }

    pub fn weighted_area(&self) -> i64 {
        self.rects.iter().map(|r| r.weight as i64 * r.area()).sum()
    }

    /// Variance-normalized response of the window at `(wx, wy)` scaled by
    /// `scale` from the base window. Each rectangle contributes its mean
    /// times its base-window area, which keeps constant images at zero under
    /// scaling.
    #[inline]
    pub fn response(&self, ii: &IntegralImage, wx: u32, wy: u32, scale: f64, inv_std: f64) -> f64 {
        let mut acc = 0.0;
        for r in &self.rects {
            let x = wx + (r.x as f64 * scale).round() as u32;
            let y = wy + (r.y as f64 * scale).round() as u32;
            let w = ((r.w as f64 * scale).round() as u32).clamp(1, ii.width - x);
            let h = ((r.h as f64 * scale).round() as u32).clamp(1, ii.height - y);
            let mean = ii.rect_sum(x, y, w, h) as f64 / (w as u64 * h as u64) as f64;
            acc += r.weight as f64 * mean * r.area() as f64;
        }
        acc * inv_std / (BASE_WINDOW * BASE_WINDOW) as f64
    }
}

/// Every two- and three-rectangle feature that fits the base window.
pub fn feature_pool() -> Vec<HaarFeature> {
    let b = BASE_WINDOW as u8;
    let mut pool = Vec::new();
    let kinds = [
        (FeatureKind::TwoHorizontal, 2u8, 1u8),
        (FeatureKind::TwoVertical, 1, 2),
        (FeatureKind::ThreeHorizontal, 3, 1),
        (FeatureKind::ThreeVertical, 1, 3),
    ];
    for (kind, px, py) in kinds {
        for w in (px..=b).step_by(px as usize) {
            for h in (py..=b).step_by(py as usize) {
                for x in 0..=b - w {
                    for y in 0..=b - h {
                        pool.push(HaarFeature::new(kind, x, y, w, h));
                    }
                }
            }
        }
    }
    pool
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stump {
    pub feature: HaarFeature,
    pub threshold: f64,
    /// +1: fires when `response < threshold`; −1: fires when `response > threshold`.
    pub polarity: i8,
    pub alpha: f64,
}

impl Stump {
    #[inline]
    pub fn fires(&self, response: f64) -> bool {
        (self.polarity as f64) * response < (self.polarity as f64) * self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedStage {
    pub stumps: Vec<Stump>,
    pub stage_threshold: f64,
}

impl BoostedStage {
    pub fn score(&self, ii: &IntegralImage, wx: u32, wy: u32, scale: f64, inv_std: f64) -> f64 {
        self.stumps
            .iter()
            .filter(|s| s.fires(s.feature.response(ii, wx, wy, scale, inv_std)))
            .map(|s| s.alpha)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub stages: Vec<BoostedStage>,
    pub base_window: u32,
}

impl Cascade {
    /// Runs the window through every stage. Returns the last stage's margin
    /// when all stages pass.
    pub fn classify(&self, ii: &IntegralImage, wx: u32, wy: u32, scale: f64) -> Option<f64> {
        let side = ((self.base_window as f64) * scale).round() as u32;
        let inv_std = 1.0 / ii.window_std(wx, wy, side, side);
        let mut margin = 0.0;
        for stage in &self.stages {
            let s = stage.score(ii, wx, wy, scale, inv_std);
            if s < stage.stage_threshold {
                return None;
            }
            margin = s - stage.stage_threshold;
        }
        Some(margin)
    }

    /// `MSHC1`, base window, stages; all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = b"MSHC1".to_vec();
        let w = &mut out;
        w.write_u32::<LittleEndian>(self.base_window).unwrap();
        w.write_u32::<LittleEndian>(self.stages.len() as u32).unwrap();
        for st in &self.stages {
            w.write_f64::<LittleEndian>(st.stage_threshold).unwrap();
            w.write_u32::<LittleEndian>(st.stumps.len() as u32).unwrap();
            for s in &st.stumps {
                w.write_f64::<LittleEndian>(s.threshold).unwrap();
                w.write_i8(s.polarity).unwrap();
                w.write_f64::<LittleEndian>(s.alpha).unwrap();
                w.write_u8(s.feature.kind.code()).unwrap();
                w.write_u8(s.feature.rects.len() as u8).unwrap();
                for r in &s.feature.rects {
                    w.extend_from_slice(&[r.x, r.y, r.w, r.h]);
                    w.write_i8(r.weight).unwrap();
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..5] != b"MSHC1" {
            return Err(Error::format("cascade", "bad magic"));
        }
        let mut r = Cursor::new(&bytes[5..]);
        let eof = |e: std::io::Error| Error::format("cascade", format!("truncated: {e}"));
        let base_window = r.read_u32::<LittleEndian>().map_err(eof)?;
        let n_stages = r.read_u32::<LittleEndian>().map_err(eof)?;
        let mut stages = Vec::new();
        for _ in 0..n_stages {
            let stage_threshold = r.read_f64::<LittleEndian>().map_err(eof)?;
            let n = r.read_u32::<LittleEndian>().map_err(eof)?;
            let mut stumps = Vec::new();
            for _ in 0..n {
                let threshold = r.read_f64::<LittleEndian>().map_err(eof)?;
                let polarity = r.read_i8().map_err(eof)?;
                let alpha = r.read_f64::<LittleEndian>().map_err(eof)?;
                let kind = FeatureKind::from_code(r.read_u8().map_err(eof)?)?;
                let nr = r.read_u8().map_err(eof)?;
                let mut rects = Vec::new();
                for _ in 0..nr {
                    let mut b = [0u8; 4];
                    r.read_exact(&mut b).map_err(eof)?;
                    let weight = r.read_i8().map_err(eof)?;
                    if b[0] as u32 + b[2] as u32 > base_window || b[1] as u32 + b[3] as u32 > base_window {
                        return Err(Error::format("cascade", "feature rectangle outside base window"));
                    }
                    rects.push(WeightedRect { x: b[0], y: b[1], w: b[2], h: b[3], weight });
                }
                stumps.push(Stump {
                    feature: HaarFeature { kind, rects },
                    threshold,
                    polarity,
                    alpha,
                });
            }
            stages.push(BoostedStage {
                stumps,
                stage_threshold,
            });
        }
        if (r.position() as usize) != bytes.len() - 5 {
            return Err(Error::format("cascade", "trailing bytes"));
        }
        if stages.is_empty() {
            return Err(Error::format("cascade", "no stages"));
        }
        Ok(Cascade {
            stages,
            base_window,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}
