use std::sync::atomic::{AtomicU64, Ordering};

use super::haar::Cascade;
use super::integral::IntegralImage;
use crate::frame::{GrayFrame, Rect};

/// Axis-aligned detection box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl DetBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn iou(&self, o: &DetBox) -> f64 {
        let ix = ((self.x + self.w).min(o.x + o.w) - self.x.max(o.x)).max(0.0);
        let iy = ((self.y + self.h).min(o.y + o.h) - self.y.max(o.y)).max(0.0);
        let inter = ix * iy;
        let union = self.w * self.h + o.w * o.h - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn translated(mut self, dx: f64, dy: f64) -> Self {
        self.x += dx;
        self.y += dy;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub scale_factor: f64,
    pub min_neighbors: usize,
    /// Window step as a fraction of the window side (at least one pixel).
    pub step_frac: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            scale_factor: 1.1,
            min_neighbors: 3,
            step_frac: 0.08,
        }
    }
}

/// Work counters shared across threads.
#[derive(Debug, Default)]
pub struct DetectorCounters {
    invocations: AtomicU64,
    windows: AtomicU64,
}

impl DetectorCounters {
    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }

    pub fn windows(&self) -> u64 {
        self.windows.load(Ordering::Relaxed)
    }
}

pub const GROUP_IOU: f64 = 0.3;

/// Sliding-window Haar detection over the whole frame.
pub fn detect_haar(
    frame: &GrayFrame,
    cascade: &Cascade,
    params: &DetectParams,
    counters: Option<&DetectorCounters>,
) -> Vec<DetBox> {
    let ii = IntegralImage::new(frame);
    detect_region(&ii, cascade, params, None, counters)
}

/// Detection restricted to `roi` of an already-integrated frame; boxes are in
/// frame coordinates.
pub fn detect_region(
    ii: &IntegralImage,
    cascade: &Cascade,
    params: &DetectParams,
    roi: Option<Rect>,
    counters: Option<&DetectorCounters>,
) -> Vec<DetBox> {
    if let Some(c) = counters {
        c.invocations.fetch_add(1, Ordering::Relaxed);
    }
    let roi = roi.unwrap_or(Rect::new(0, 0, ii.width, ii.height));
    let mut candidates = Vec::new();
    let mut windows = 0u64;
    for (x, y, side, scale) in pyramid(roi, cascade.base_window, params) {
        windows += 1;
        if let Some(margin) = cascade.classify(ii, x, y, scale) {
            candidates.push(DetBox {
                x: x as f64,
                y: y as f64,
                w: side as f64,
                h: side as f64,
                score: margin,
            });
        }
    }
    if let Some(c) = counters {
        c.windows.fetch_add(windows, Ordering::Relaxed);
    }
    group_boxes(&candidates, params.min_neighbors)
}

/// Every `(x, y, side, scale)` window of the sliding-window pyramid inside
/// `roi`, smallest scale first, row-major within a scale.
pub(crate) fn pyramid(roi: Rect, base_window: u32, params: &DetectParams) -> Vec<(u32, u32, u32, f64)> {
    let base = base_window as f64;
    let scale_factor = params.scale_factor.max(1.01);
    let mut out = Vec::new();
    let mut scale = 1.0;
    loop {
        let side = (base * scale).round() as u32;
        if side > roi.w || side > roi.h {
            return out;
        }
        let step = ((side as f64 * params.step_frac).round() as u32).max(1);
        let mut y = roi.y;
        while y + side <= roi.y + roi.h {
            let mut x = roi.x;
            while x + side <= roi.x + roi.w {
                out.push((x, y, side, scale));
                x += step;
            }
            y += step;
        }
        scale *= scale_factor;
    }
}

/// Transitively merges candidates overlapping with IoU ≥ 0.3 and emits the
/// mean box of every cluster with at least `min_neighbors` members. The
/// output score is the member count; output is sorted by score descending.
pub fn group_boxes(candidates: &[DetBox], min_neighbors: usize) -> Vec<DetBox> {
    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if candidates[i].iou(&candidates[j]) >= GROUP_IOU {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<&DetBox>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(&candidates[i]);
    }
    let mut out: Vec<DetBox> = clusters
        .values()
        .filter(|m| m.len() >= min_neighbors.max(1))
        .map(|m| {
            let k = m.len() as f64;
            DetBox {
                x: m.iter().map(|b| b.x).sum::<f64>() / k,
                y: m.iter().map(|b| b.y).sum::<f64>() / k,
                w: m.iter().map(|b| b.w).sum::<f64>() / k,
                h: m.iter().map(|b| b.h).sum::<f64>() / k,
                score: k,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    out
}
