//! Verification-mode metrics: ROC sweep, equal error rate, FRR at a fixed
//! FAR, and the enroll-then-probe protocol that produces score sets.
//!
//! Acceptance is inclusive: with distance polarity a trial is accepted iff
//! `score <= threshold`; with similarity polarity iff `score >= threshold`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::recognize::{FaceChip, Recognizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Lower score = more similar.
    Distance,
    /// Higher score = more similar.
    Similarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub polarity: Polarity,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>, polarity: Polarity) -> Self {
        ScoreSet {
            genuine,
            impostor,
            polarity,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::InsufficientData(format!(
                "score set needs genuine and impostor trials ({} genuine, {} impostor)",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        if self.genuine.iter().chain(&self.impostor).any(|s| s.is_nan()) {
            return Err(Error::InvalidArgument("NaN score".into()));
        }
        Ok(())
    }

    /// CSV with header `kind,score`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,score\n");
        for g in &self.genuine {
            let _ = writeln!(s, "genuine,{g}");
        }
        for i in &self.impostor {
            let _ = writeln!(s, "impostor,{i}");
        }
        s
    }

    pub fn from_csv(text: &str, polarity: Polarity) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::format("score CSV", e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["kind", "score"] {
            return Err(Error::format("score CSV", "header must be `kind,score`"));
        }
        let mut set = ScoreSet::new(Vec::new(), Vec::new(), polarity);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::format("score CSV", e.to_string()))?;
            let score: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format("score CSV", format!("bad score in {rec:?}")))?;
            match rec.get(0) {
                Some("genuine") => set.genuine.push(score),
                Some("impostor") => set.impostor.push(score),
                other => {
                    return Err(Error::format(
                        "score CSV",
                        format!("unknown kind {other:?}"),
                    ))
                }
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Points ordered from the strictest threshold (nothing accepted) to the
/// most permissive (everything accepted): FAR non-decreasing, FRR
/// non-increasing along the curve.
pub fn roc(scores: &ScoreSet) -> Result<Vec<RocPoint>> {
    scores.validate()?;
    // similarity scores are negated so one code path handles both polarities
    let sign = match scores.polarity {
        Polarity::Distance => 1.0,
        Polarity::Similarity => -1.0,
    };
    let mut gen: Vec<f64> = scores.genuine.iter().map(|s| s * sign).collect();
    let mut imp: Vec<f64> = scores.impostor.iter().map(|s| s * sign).collect();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let ng = gen.len() as f64;
    let ni = imp.len() as f64;
    let point = |t: f64| {
        let acc_g = gen.partition_point(|&s| s <= t) as f64;
        let acc_i = imp.partition_point(|&s| s <= t) as f64;
        RocPoint {
            threshold: t * sign,
            far: acc_i / ni,
            frr: (ng - acc_g) / ng,
        }
    };
    let mut curve = Vec::with_capacity(thresholds.len() + 2);
    curve.push(point(f64::NEG_INFINITY));
    curve.extend(thresholds.iter().map(|&t| point(t)));
    curve.push(point(f64::INFINITY));
    Ok(curve)
}

/// Equal error rate, linearly interpolated at the sign change of FAR − FRR.
pub fn eer(curve: &[RocPoint]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::Degenerate("EER needs at least two curve points".into()));
    }
    let diff = |p: &RocPoint| p.far - p.frr;
    if let Some(p) = curve.iter().find(|p| diff(p) == 0.0) {
        return Ok(p.far);
    }
    for w in curve.windows(2) {
        let (d0, d1) = (diff(&w[0]), diff(&w[1]));
        if (d0 < 0.0) != (d1 < 0.0) {
            let t = d0 / (d0 - d1);
            return Ok(w[0].far + t * (w[1].far - w[0].far));
        }
    }
    Err(Error::Degenerate("FAR − FRR never changes sign".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrrAtFar {
    pub far_target: f64,
    pub frr: f64,
    pub far: f64,
    pub threshold: f64,
    /// Set when no finite threshold reaches the target and the reject-all
    /// point was used.
    pub floor_hit: bool,
}

pub fn frr_at_far(curve: &[RocPoint], far_target: f64) -> Result<FrrAtFar> {
    if !(far_target > 0.0 && far_target < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "FAR target {far_target} outside (0, 1)"
        )));
    }
    let first = curve
        .first()
        .ok_or_else(|| Error::Degenerate("empty curve".into()))?;
    let best = curve
        .iter()
        .filter(|p| p.threshold.is_finite() && p.far <= far_target)
        .next_back();
    Ok(match best {
        Some(p) => FrrAtFar {
            far_target,
            frr: p.frr,
            far: p.far,
            threshold: p.threshold,
            floor_hit: false,
        },
        None => FrrAtFar {
            far_target,
            frr: first.frr,
            far: first.far,
            threshold: first.threshold,
            floor_hit: true,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub eer: f64,
    pub frr_at_far: Vec<FrrAtFar>,
    pub curve: Vec<RocPoint>,
}

impl VerifyReport {
    pub fn build(scores: &ScoreSet, far_targets: &[f64]) -> Result<Self> {
        let curve = roc(scores)?;
        let eer = eer(&curve)?;
        let frr_at_far = far_targets
            .iter()
            .map(|&t| frr_at_far(&curve, t))
            .collect::<Result<_>>()?;
        Ok(VerifyReport {
            eer,
            frr_at_far,
            curve,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("eer={:.6}\n", self.eer);
        for f in &self.frr_at_far {
            let _ = writeln!(
                s,
                "frr_at_far[{}]={:.6}{}",
                f.far_target,
                f.frr,
                if f.floor_hit { " (floor)" } else { "" }
            );
        }
        let _ = writeln!(s, "curve_points={}", self.curve.len());
        s
    }

    /// Curve as CSV `threshold,far,frr`.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold,far,frr\n");
        for p in &self.curve {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.far, p.frr);
        }
        s
    }
}

/// Gated-frontal chips of one subject, in frame order.
#[derive(Debug, Clone)]
pub struct SubjectChips {
    pub subject: i64,
    pub chips: Vec<FaceChip>,
}

#[derive(Debug, Clone)]
pub struct EnrollmentOutcome {
    pub scores: ScoreSet,
    /// Subjects without enough frontal chips.
    pub excluded: Vec<i64>,
}

/// First `n_enroll` chips of each subject enroll; every later chip is scored
/// against every enrolled subject by the minimum distance to that subject's
/// enrolled chips.
pub fn enrollment_protocol<R: Recognizer + ?Sized>(
    subjects: &[SubjectChips],
    n_enroll: usize,
    recognizer: &R,
) -> Result<EnrollmentOutcome> {
    if n_enroll == 0 {
        return Err(Error::InvalidArgument("n_enroll must be ≥ 1".into()));
    }
    let mut excluded = Vec::new();
    let mut enrolled: Vec<(i64, Vec<Vec<f64>>, Vec<Vec<f64>>)> = Vec::new();
    for s in subjects {
        if s.chips.len() < n_enroll + 1 {
            excluded.push(s.subject);
            continue;
        }
        let feats = s
            .chips
            .iter()
            .map(|c| recognizer.embed(c))
            .collect::<Result<Vec<_>>>()?;
        let (enr, probes) = feats.split_at(n_enroll);
        enrolled.push((s.subject, enr.to_vec(), probes.to_vec()));
    }
    if !excluded.is_empty() {
        log::warn!("excluded subjects with too few frontal chips: {excluded:?}");
    }
    let mut scores = ScoreSet::new(Vec::new(), Vec::new(), Polarity::Distance);
    for (probe_subject, _, probes) in &enrolled {
        for probe in probes {
            for (subject, templates, _) in &enrolled {
                let d = templates
                    .iter()
                    .map(|t| recognizer.distance(probe, t))
                    .fold(f64::INFINITY, f64::min);
                if subject == probe_subject {
                    scores.genuine.push(d);
                } else {
                    scores.impostor.push(d);
                }
            }
        }
    }
    if scores.impostor.is_empty() {
        return Err(Error::InsufficientData(
            "no impostor trials: need at least two eligible subjects".into(),
        ));
    }
    Ok(EnrollmentOutcome { scores, excluded })
}
