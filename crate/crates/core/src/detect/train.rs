//! Discrete AdaBoost over decision stumps, stacked into an attentional
//! cascade with negative bootstrapping between stages.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::haar::{feature_pool, BoostedStage, Cascade, HaarFeature, Stump, BASE_WINDOW};
use super::integral::IntegralImage;
use super::window::{pyramid, DetBox, DetectParams};
use crate::error::{Error, Result};
use crate::frame::{GrayFrame, Rect};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    pub n_stages: usize,
    /// Upper bound; a stage stops early once it meets `stage_fpr_target`.
    pub stumps_per_stage: usize,
    /// Highest acceptable false-positive rate of a single stage.
    pub stage_fpr_target: f64,
    /// Fraction of positives every stage must keep.
    pub min_hit_rate: f64,
    pub features_per_stage: usize,
    pub max_negatives: usize,
    pub seed: u64,
}

impl Default for CascadeParams {
    fn default() -> Self {
        CascadeParams {
            n_stages: 5,
            stumps_per_stage: 30,
            stage_fpr_target: 0.1,
            min_hit_rate: 0.998,
            features_per_stage: 2000,
            max_negatives: 3000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeTraining {
    pub cascade: Cascade,
    /// Set when a stage could not reach the false-positive target; the
    /// cascade holds the stages built up to and including that one.
    pub warning: Option<String>,
    /// Training negatives still accepted by the finished cascade.
    pub surviving_negatives: usize,
}

/// A face-free region source for bootstrapping: every sliding window of
/// `frame` that the partial cascade accepts is a mined negative, except
/// windows overlapping an `exclude` box with IoU ≥ [`MINE_EXCLUDE_IOU`].
#[derive(Debug, Clone)]
pub struct NegativeScene {
    pub frame: GrayFrame,
    pub exclude: Vec<DetBox>,
}

pub const MINE_EXCLUDE_IOU: f64 = 0.4;

const MIN_NEGATIVES: usize = 10;
const MIN_SAMPLES: usize = 50;

pub fn train_cascade(
    positives: &[GrayFrame],
    negatives: &[GrayFrame],
    params: &CascadeParams,
) -> Result<CascadeTraining> {
    train_cascade_mined(positives, negatives, &[], params)
}

/// [`train_cascade`] that tops up each stage's negatives with false
/// positives of the cascade so far, mined from `scenes`.
pub fn train_cascade_mined(
    positives: &[GrayFrame],
    negatives: &[GrayFrame],
    scenes: &[NegativeScene],
    params: &CascadeParams,
) -> Result<CascadeTraining> {
    if positives.len() < MIN_SAMPLES || negatives.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "cascade training needs ≥ {MIN_SAMPLES} positives and negatives ({} / {})",
            positives.len(),
            negatives.len()
        )));
    }
    if params.n_stages == 0 || params.stumps_per_stage == 0 {
        return Err(Error::InvalidArgument("cascade needs ≥ 1 stage and ≥ 1 stump".into()));
    }
    let prep = |frames: &[GrayFrame]| -> Result<Vec<IntegralImage>> {
        frames
            .iter()
            .map(|f| {
                if f.width != BASE_WINDOW || f.height != BASE_WINDOW {
                    return Err(Error::InvalidArgument(format!(
                        "training samples must be {BASE_WINDOW}x{BASE_WINDOW}, got {}x{}",
                        f.width, f.height
                    )));
                }
                Ok(IntegralImage::new(f))
            })
            .collect()
    };
    let pos = prep(positives)?;
    let neg_all = prep(negatives)?;
    let pool = feature_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cascade = Cascade {
        stages: Vec::new(),
        base_window: BASE_WINDOW,
    };
    let mut warning = None;

    for stage_idx in 0..params.n_stages {
        let mut negs: Vec<&IntegralImage> = neg_all
            .iter()
            .filter(|ii| cascade.stages.is_empty() || cascade.classify(ii, 0, 0, 1.0).is_some())
            .take(params.max_negatives)
            .collect();
        let mined = if stage_idx > 0 && negs.len() < params.max_negatives {
            mine_negatives(&cascade, scenes, params.max_negatives - negs.len(), &mut rng)
        } else {
            Vec::new()
        };
        negs.extend(mined.iter());
        if negs.len() < MIN_NEGATIVES {
            log::info!("cascade: only {} negatives survive; stopping after {stage_idx} stages", negs.len());
            break;
        }
        let n_feat = params.features_per_stage.min(pool.len());
        let mut picked: Vec<usize> = sample(&mut rng, pool.len(), n_feat).into_vec();
        picked.sort_unstable();
        let features: Vec<&HaarFeature> = picked.iter().map(|&i| &pool[i]).collect();
        let stage = train_stage(&pos, &negs, &features, params);
        let fpr = negs.iter().filter(|ii| stage_passes(&stage, ii)).count() as f64 / negs.len() as f64;
        log::debug!("cascade stage {stage_idx}: {} stumps, fpr {fpr:.3}", stage.stumps.len());
        cascade.stages.push(stage);
        if fpr > params.stage_fpr_target {
            let msg = format!(
                "stage {stage_idx} false-positive rate {fpr:.3} exceeds target {:.3}",
                params.stage_fpr_target
            );
            log::warn!("cascade: {msg}");
            warning = Some(msg);
            break;
        }
    }
    let surviving_negatives = neg_all
        .iter()
        .filter(|ii| cascade.classify(ii, 0, 0, 1.0).is_some())
        .count();
    Ok(CascadeTraining {
        cascade,
        warning,
        surviving_negatives,
    })
}

fn mine_negatives(cascade: &Cascade, scenes: &[NegativeScene], want: usize, rng: &mut ChaCha8Rng) -> Vec<IntegralImage> {
    let dp = DetectParams::default();
    let found: Vec<Vec<IntegralImage>> = scenes
        .par_iter()
        .map(|sc| {
            let ii = IntegralImage::new(&sc.frame);
            let roi = Rect::new(0, 0, sc.frame.width, sc.frame.height);
            let mut out = Vec::new();
            for (x, y, side, scale) in pyramid(roi, cascade.base_window, &dp) {
                let b = DetBox { x: x as f64, y: y as f64, w: side as f64, h: side as f64, score: 0.0 };
                if sc.exclude.iter().any(|e| e.iou(&b) >= MINE_EXCLUDE_IOU) || cascade.classify(&ii, x, y, scale).is_none() {
                    continue;
                }
                let crop = sc.frame.crop(x, y, side, side).expect("window inside scene");
                let small = IntegralImage::new(&crop.resize_bilinear(BASE_WINDOW, BASE_WINDOW));
                // the resampled window must still fool the cascade
                if cascade.classify(&small, 0, 0, 1.0).is_some() {
                    out.push(small);
                }
            }
            out
        })
        .collect();
    let mut all: Vec<IntegralImage> = found.into_iter().flatten().collect();
    log::debug!("cascade: mined {} hard negatives", all.len());
    if all.len() > want {
        let mut keep = vec![false; all.len()];
        for i in sample(rng, all.len(), want) {
            keep[i] = true;
        }
        all = all.into_iter().zip(keep).filter_map(|(ii, k)| k.then_some(ii)).collect();
    }
    all
}

fn stage_passes(stage: &BoostedStage, ii: &IntegralImage) -> bool {
    let inv_std = 1.0 / ii.window_std(0, 0, BASE_WINDOW, BASE_WINDOW);
    stage.score(ii, 0, 0, 1.0, inv_std) >= stage.stage_threshold
}

struct BestSplit {
    error: f64,
    threshold: f64,
    polarity: i8,
}

fn train_stage(
    pos: &[IntegralImage],
    negs: &[&IntegralImage],
    features: &[&HaarFeature],
    params: &CascadeParams,
) -> BoostedStage {
    let samples: Vec<&IntegralImage> = pos.iter().chain(negs.iter().copied()).collect();
    let n_pos = pos.len();
    let n = samples.len();
    let inv_std: Vec<f64> = samples
        .iter()
        .map(|ii| 1.0 / ii.window_std(0, 0, BASE_WINDOW, BASE_WINDOW))
        .collect();
    // responses[f][i] and per-feature sort orders
    let table: Vec<(Vec<f64>, Vec<u32>)> = features
        .par_iter()
        .map(|f| {
            let vals: Vec<f64> = samples
                .iter()
                .zip(&inv_std)
                .map(|(ii, s)| f.response(ii, 0, 0, 1.0, *s))
                .collect();
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| vals[a as usize].total_cmp(&vals[b as usize]).then(a.cmp(&b)));
            (vals, order)
        })
        .collect();

    let is_pos = |i: usize| i < n_pos;
    let mut weights: Vec<f64> = (0..n)
        .map(|i| if is_pos(i) { 0.5 / n_pos as f64 } else { 0.5 / (n - n_pos) as f64 })
        .collect();
    let mut stumps = Vec::new();
    let mut scores = vec![0.0; n];
    for _ in 0..params.stumps_per_stage {
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let t_pos: f64 = weights[..n_pos].iter().sum();
        let t_neg: f64 = weights[n_pos..].iter().sum();
        let best = table
            .par_iter()
            .enumerate()
            .map(|(fi, (vals, order))| (fi, best_split(vals, order, &weights, n_pos, t_pos, t_neg)))
            .reduce_with(|a, b| {
                if b.1.error < a.1.error || (b.1.error == a.1.error && b.0 < a.0) {
                    b
                } else {
                    a
                }
            })
            .expect("at least one feature");
        let (fi, split) = best;
        // keeps alpha strictly positive even for uninformative stumps
        let err = split.error.clamp(1e-10, 0.5 - 1e-6);
        let beta = err / (1.0 - err);
        let stump = Stump {
            feature: features[fi].clone(),
            threshold: split.threshold,
            polarity: split.polarity,
            alpha: (1.0 / beta).ln(),
        };
        let vals = &table[fi].0;
        for (i, w) in weights.iter_mut().enumerate() {
            let fires = stump.fires(vals[i]);
            if fires {
                scores[i] += stump.alpha;
            }
            if fires == is_pos(i) {
                *w *= beta;
            }
        }
        stumps.push(stump);
        if split.error <= 1e-12 {
            break;
        }
        // a stage stops growing once it meets its false-positive target at
        // the required hit rate
        let th = hit_threshold(&scores[..n_pos], params.min_hit_rate);
        let fp = scores[n_pos..].iter().filter(|&&s| s >= th).count();
        if fp as f64 <= params.stage_fpr_target * (n - n_pos) as f64 {
            break;
        }
    }

    let mut stage = BoostedStage {
        stumps,
        stage_threshold: 0.0,
    };
    let scores: Vec<f64> = pos
        .iter()
        .zip(&inv_std)
        .map(|(ii, s)| stage.score(ii, 0, 0, 1.0, *s))
        .collect();
    stage.stage_threshold = hit_threshold(&scores, params.min_hit_rate);
    stage
}

/// Largest threshold that keeps at least `hit_rate` of the positive scores.
fn hit_threshold(pos_scores: &[f64], hit_rate: f64) -> f64 {
    let mut s = pos_scores.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = (((1.0 - hit_rate) * s.len() as f64).floor() as usize).min(s.len() - 1);
    s[idx]
}

fn best_split(vals: &[f64], order: &[u32], w: &[f64], n_pos: usize, t_pos: f64, t_neg: f64) -> BestSplit {
    // polarity +1 fires below the threshold: error = neg below + pos above.
    // Below every value nothing fires for +1 (error t_pos) and everything
    // fires for -1 (error t_neg).
    let mut best = BestSplit {
        error: t_pos.min(t_neg),
        threshold: vals[order[0] as usize] - 1.0,
        polarity: if t_pos <= t_neg { 1 } else { -1 },
    };
    let (mut s_pos, mut s_neg) = (0.0, 0.0);
    for k in 0..order.len() {
        let i = order[k] as usize;
        if i < n_pos {
            s_pos += w[i];
        } else {
            s_neg += w[i];
        }
        let v = vals[i];
        let next = order.get(k + 1).map(|&j| vals[j as usize]);
        if next == Some(v) {
            continue;
        }
        let threshold = match next {
            Some(nv) => 0.5 * (v + nv),
            None => v + 1.0,
        };
        let e_plus = s_neg + (t_pos - s_pos);
        let e_minus = s_pos + (t_neg - s_neg);
        if e_plus < best.error {
            best = BestSplit { error: e_plus, threshold, polarity: 1 };
        }
        if e_minus < best.error {
            best = BestSplit { error: e_minus, threshold, polarity: -1 };
        }
    }
    best
}
