//! Closed-set face recognition over normalized chips: EigenFace (PCA),
//! FisherFace (PCA + LDA) and LBPH (local binary pattern histograms).
//!
//! All three share one prediction rule: nearest stored gallery vector, ties
//! broken by the lowest label.

mod eigen;
mod fisher;
mod lbph;

use std::collections::BTreeMap;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

pub use eigen::{train_eigen, EigenModel};
pub use fisher::{train_fisher, FisherModel};
pub use lbph::{chi_square, lbp_codes, lbph_histogram, train_lbph, LbphModel, LBPH_GRID};

use crate::detect::DetBox;
use crate::error::{Error, Result};
use crate::frame::GrayFrame;
use crate::io::{read_file, write_atomic};

pub const DEFAULT_CHIP_WIDTH: u32 = 92;
pub const DEFAULT_CHIP_HEIGHT: u32 = 112;
/// EigenFace components kept by default; clamped to the gallery rank.
pub const DEFAULT_EIGEN_K: usize = 200;

/// Cropped, resized, histogram-equalized face.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceChip {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub label: Option<i64>,
}

impl FaceChip {
    pub fn from_frame(frame: &GrayFrame, label: Option<i64>) -> Self {
        FaceChip {
            width: frame.width,
            height: frame.height,
            pixels: frame.pixels.clone(),
            label,
        }
    }

    pub fn as_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels.iter().map(|&p| p as f64)
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = Some(label);
        self
    }
}

/// Histogram equalization; a constant image is returned unchanged.
pub fn equalize_histogram(pixels: &[u8]) -> Vec<u8> {
    let mut hist = [0u64; 256];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let n = pixels.len() as u64;
    if n == 0 || hist.iter().any(|&c| c == n) {
        return pixels.to_vec();
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let denom = (n - cdf_min) as f64;
    let lut: Vec<u8> = cdf
        .iter()
        .map(|&c| ((c.saturating_sub(cdf_min)) as f64 / denom * 255.0).round() as u8)
        .collect();
    pixels.iter().map(|&p| lut[p as usize]).collect()
}

/// Crop `bbox` from `frame`, resize bilinearly to `out_w × out_h`, equalize.
pub fn normalize_chip(frame: &GrayFrame, bbox: &DetBox, out_w: u32, out_h: u32) -> Result<FaceChip> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument("chip size must be non-zero".into()));
    }
    let x0 = bbox.x.round().max(0.0);
    let y0 = bbox.y.round().max(0.0);
    let x1 = (bbox.x + bbox.w).round().min(frame.width as f64);
    let y1 = (bbox.y + bbox.h).round().min(frame.height as f64);
    if !(bbox.w > 0.0 && bbox.h > 0.0) || x1 - x0 < 1.0 || y1 - y0 < 1.0 {
        return Err(Error::Degenerate(format!("face box {bbox:?} has no area inside frame")));
    }
    let crop = frame.crop(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)?;
    let resized = crop.resize_bilinear(out_w, out_h);
    Ok(FaceChip {
        width: out_w,
        height: out_h,
        pixels: equalize_histogram(&resized.pixels),
        label: None,
    })
}

/// Chip from a whole image (already a face crop).
pub fn normalize_image(frame: &GrayFrame, out_w: u32, out_h: u32) -> Result<FaceChip> {
    let bbox = DetBox {
        x: 0.0,
        y: 0.0,
        w: frame.width as f64,
        h: frame.height as f64,
        score: 0.0,
    };
    normalize_chip(frame, &bbox, out_w, out_h)
}

#[derive(Debug, Clone, Default)]
pub struct Gallery {
    pub chips: Vec<FaceChip>,
    pub label_names: BTreeMap<i64, String>,
}

impl Gallery {
    pub fn new(chips: Vec<FaceChip>) -> Result<Self> {
        let mut g = Gallery {
            chips,
            label_names: BTreeMap::new(),
        };
        for c in &g.chips {
            let l = c
                .label
                .ok_or_else(|| Error::InvalidArgument("gallery chip without label".into()))?;
            g.label_names.entry(l).or_insert_with(|| format!("subject_{l}"));
        }
        g.chip_size()?;
        Ok(g)
    }

    pub fn chip_size(&self) -> Result<(u32, u32)> {
        let first = self
            .chips
            .first()
            .ok_or_else(|| Error::InsufficientData("empty gallery".into()))?;
        if self
            .chips
            .iter()
            .any(|c| c.width != first.width || c.height != first.height)
        {
            return Err(Error::InvalidArgument("gallery chips differ in size".into()));
        }
        Ok((first.width, first.height))
    }

    pub fn labels(&self) -> Vec<i64> {
        self.chips.iter().map(|c| c.label.unwrap_or_default()).collect()
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    /// Loads an ORL-style tree `subject_<id>/<frame>.pgm`.
    pub fn load_dir(dir: &Path, out_w: u32, out_h: u32) -> Result<Self> {
        let mut subjects: Vec<(i64, std::path::PathBuf)> = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some(id) = name.strip_prefix("subject_").and_then(|s| s.parse().ok()) {
                subjects.push((id, entry.path()));
            }
        }
        subjects.sort();
        let mut chips = Vec::new();
        for (id, path) in subjects {
            let mut files: Vec<_> = std::fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
                .collect();
            files.sort();
            for f in files {
                let img = crate::pgm::read_gray(&f, 0)?;
                chips.push(normalize_image(&img, out_w, out_h)?.with_label(id));
            }
        }
        Gallery::new(chips)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: i64,
    pub distance: f64,
}

/// A trained recognizer: maps chips to feature vectors and compares them.
pub trait Recognizer: Send + Sync {
    fn embed(&self, chip: &FaceChip) -> Result<Vec<f64>>;

    fn distance(&self, a: &[f64], b: &[f64]) -> f64;

    /// Stored gallery vectors with their labels.
    fn templates(&self) -> &[(i64, Vec<f64>)];

    fn predict(&self, chip: &FaceChip) -> Result<Prediction> {
        let probe = self.embed(chip)?;
        nearest(self.templates(), |t| self.distance(&probe, t))
    }
}

fn nearest(templates: &[(i64, Vec<f64>)], dist: impl Fn(&[f64]) -> f64) -> Result<Prediction> {
    let mut best: Option<Prediction> = None;
    for (label, t) in templates {
        let d = dist(t);
        let better = match best {
            None => true,
            Some(b) => d < b.distance || (d == b.distance && *label < b.label),
        };
        if better {
            best = Some(Prediction {
                label: *label,
                distance: d,
            });
        }
    }
    best.ok_or_else(|| Error::InsufficientData("recognizer has no templates".into()))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Fraction of labeled probes predicted correctly.
pub fn recognition_accuracy<R: Recognizer + ?Sized>(model: &R, probes: &[FaceChip]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InsufficientData("no probes".into()));
    }
    let mut correct = 0usize;
    for p in probes {
        let truth = p
            .label
            .ok_or_else(|| Error::InvalidArgument("probe without label".into()))?;
        if model.predict(p)?.label == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / probes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecognizerKind {
    Eigen,
    Fisher,
    Lbph,
}

impl RecognizerKind {
    pub const ALL: [RecognizerKind; 3] = [RecognizerKind::Eigen, RecognizerKind::Fisher, RecognizerKind::Lbph];

    fn tag(self) -> u8 {
        match self {
            RecognizerKind::Eigen => b'E',
            RecognizerKind::Fisher => b'F',
            RecognizerKind::Lbph => b'L',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecognizerKind::Eigen => "eigen",
            RecognizerKind::Fisher => "fisher",
            RecognizerKind::Lbph => "lbph",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eigen" => Ok(RecognizerKind::Eigen),
            "fisher" => Ok(RecognizerKind::Fisher),
            "lbph" => Ok(RecognizerKind::Lbph),
            other => Err(Error::InvalidArgument(format!(
                "unknown recognizer {other:?} (expected eigen, fisher or lbph)"
            ))),
        }
    }
}

/// Any of the three trained recognizers.
#[derive(Debug, Clone, PartialEq)]
pub enum RecognizerModel {
    Eigen(EigenModel),
    Fisher(FisherModel),
    Lbph(LbphModel),
}

impl RecognizerModel {
    /// Trains `kind` on `gallery`. `eigen_k` is the EigenFace component
    /// count.
    pub fn train(kind: RecognizerKind, gallery: &Gallery, eigen_k: usize) -> Result<Self> {
        Ok(match kind {
            RecognizerKind::Eigen => RecognizerModel::Eigen(train_eigen(gallery, eigen_k)?),
            RecognizerKind::Fisher => RecognizerModel::Fisher(train_fisher(gallery)?),
            RecognizerKind::Lbph => RecognizerModel::Lbph(train_lbph(gallery)?),
        })
    }

    pub fn kind(&self) -> RecognizerKind {
        match self {
            RecognizerModel::Eigen(_) => RecognizerKind::Eigen,
            RecognizerModel::Fisher(_) => RecognizerKind::Fisher,
            RecognizerModel::Lbph(_) => RecognizerKind::Lbph,
        }
    }

    pub fn chip_size(&self) -> (u32, u32) {
        match self {
            RecognizerModel::Eigen(m) => (m.width, m.height),
            RecognizerModel::Fisher(m) => (m.width, m.height),
            RecognizerModel::Lbph(m) => (m.width, m.height),
        }
    }

    fn inner(&self) -> &dyn Recognizer {
        match self {
            RecognizerModel::Eigen(m) => m,
            RecognizerModel::Fisher(m) => m,
            RecognizerModel::Lbph(m) => m,
        }
    }

    /// `MSRM1` + recognizer tag, then the model body, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = b"MSRM1".to_vec();
        out.push(self.kind().tag());
        match self {
            RecognizerModel::Eigen(m) => m.write_body(&mut out),
            RecognizerModel::Fisher(m) => m.write_body(&mut out),
            RecognizerModel::Lbph(m) => m.write_body(&mut out),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..5] != b"MSRM1" {
            return Err(Error::format("recognizer model", "bad magic"));
        }
        let mut cur = Cursor::new(&bytes[6..]);
        let model = match bytes[5] {
            b'E' => RecognizerModel::Eigen(EigenModel::read_body(&mut cur)?),
            b'F' => RecognizerModel::Fisher(FisherModel::read_body(&mut cur)?),
            b'L' => RecognizerModel::Lbph(LbphModel::read_body(&mut cur)?),
            t => {
                return Err(Error::format(
                    "recognizer model",
                    format!("unknown tag {t:#x}"),
                ))
            }
        };
        if (cur.position() as usize) != bytes.len() - 6 {
            return Err(Error::format("recognizer model", "trailing bytes"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

impl Recognizer for RecognizerModel {
    fn embed(&self, chip: &FaceChip) -> Result<Vec<f64>> {
        self.inner().embed(chip)
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.inner().distance(a, b)
    }

    fn templates(&self) -> &[(i64, Vec<f64>)] {
        match self {
            RecognizerModel::Eigen(m) => m.templates(),
            RecognizerModel::Fisher(m) => m.templates(),
            RecognizerModel::Lbph(m) => m.templates(),
        }
    }
}

pub(crate) fn check_chip(chip: &FaceChip, width: u32, height: u32) -> Result<()> {
    if chip.width != width || chip.height != height {
        return Err(Error::InvalidArgument(format!(
            "chip is {}x{}, model expects {width}x{height}",
            chip.width, chip.height
        )));
    }
    Ok(())
}

// little-endian body helpers shared by the model files

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.write_u32::<LittleEndian>(v).expect("vec write");
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    put_u32(out, v.len() as u32);
    for &x in v {
        out.write_f64::<LittleEndian>(x).expect("vec write");
    }
}

pub(crate) fn put_templates(out: &mut Vec<u8>, t: &[(i64, Vec<f64>)]) {
    put_u32(out, t.len() as u32);
    for (label, v) in t {
        out.write_i64::<LittleEndian>(*label).expect("vec write");
        put_f64s(out, v);
    }
}

fn eof(e: std::io::Error) -> Error {
    Error::format("recognizer model", format!("truncated: {e}"))
}

pub(crate) fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    r.read_u32::<LittleEndian>().map_err(eof)
}

pub(crate) fn get_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_u32(r)? as usize;
    if n > 1 << 28 {
        return Err(Error::format("recognizer model", "implausible vector length"));
    }
    (0..n).map(|_| r.read_f64::<LittleEndian>().map_err(eof)).collect()
}

pub(crate) fn get_templates<R: Read>(r: &mut R) -> Result<Vec<(i64, Vec<f64>)>> {
    let n = get_u32(r)? as usize;
    (0..n)
        .map(|_| {
            let label = r.read_i64::<LittleEndian>().map_err(eof)?;
            Ok((label, get_f64s(r)?))
        })
        .collect()
}
