use std::io::Read;

use super::{check_chip, get_templates, get_u32, put_templates, put_u32, FaceChip, Gallery, Recognizer};
use crate::error::{Error, Result};

/// Cells per side of the histogram grid.
pub const LBPH_GRID: u32 = 8;
const BINS: usize = 256;

// clockwise from top-left; the first neighbor is the most significant bit
const NEIGHBORS: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// Radius-1, 8-neighbor LBP code per pixel (border pixels read the nearest
/// in-image neighbor).
pub fn lbp_codes(pixels: &[u8], width: u32, height: u32) -> Vec<u8> {
    let (w, h) = (width as i32, height as i32);
    let at = |x: i32, y: i32| pixels[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let mut out = Vec::with_capacity(pixels.len());
    for y in 0..h {
        for x in 0..w {
            let c = at(x, y);
            let mut code = 0u8;
            for (dx, dy) in NEIGHBORS {
                code = (code << 1) | (at(x + dx, y + dy) >= c) as u8;
            }
            out.push(code);
        }
    }
    out
}

/// Concatenated 256-bin histograms over an 8×8 cell grid.
pub fn lbph_histogram(chip: &FaceChip) -> Result<Vec<f64>> {
    if chip.width < LBPH_GRID || chip.height < LBPH_GRID {
        return Err(Error::InvalidArgument(format!(
            "chip {}x{} smaller than the {LBPH_GRID}x{LBPH_GRID} grid",
            chip.width, chip.height
        )));
    }
    let codes = lbp_codes(&chip.pixels, chip.width, chip.height);
    let g = LBPH_GRID as usize;
    let mut hist = vec![0.0; g * g * BINS];
    for y in 0..chip.height {
        let cy = (y * LBPH_GRID / chip.height) as usize;
        for x in 0..chip.width {
            let cx = (x * LBPH_GRID / chip.width) as usize;
            let code = codes[(y * chip.width + x) as usize] as usize;
            hist[(cy * g + cx) * BINS + code] += 1.0;
        }
    }
    Ok(hist)
}

/// Σ (a−b)²/(a+b) over bins with a+b > 0.
pub fn chi_square(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| *x + *y > 0.0)
        .map(|(x, y)| (x - y).powi(2) / (x + y))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbphModel {
    pub width: u32,
    pub height: u32,
    pub histograms: Vec<(i64, Vec<f64>)>,
}

pub fn train_lbph(gallery: &Gallery) -> Result<LbphModel> {
    let (width, height) = gallery.chip_size()?;
    let histograms = gallery
        .chips
        .iter()
        .map(|c| Ok((c.label.unwrap_or_default(), lbph_histogram(c)?)))
        .collect::<Result<_>>()?;
    Ok(LbphModel {
        width,
        height,
        histograms,
    })
}

impl LbphModel {
    pub(crate) fn write_body(&self, out: &mut Vec<u8>) {
        put_u32(out, self.width);
        put_u32(out, self.height);
        put_templates(out, &self.histograms);
    }

    pub(crate) fn read_body<R: Read>(r: &mut R) -> Result<Self> {
        Ok(LbphModel {
            width: get_u32(r)?,
            height: get_u32(r)?,
            histograms: get_templates(r)?,
        })
    }
}

impl Recognizer for LbphModel {
    fn embed(&self, chip: &FaceChip) -> Result<Vec<f64>> {
        check_chip(chip, self.width, self.height)?;
        lbph_histogram(chip)
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        chi_square(a, b)
    }

    fn templates(&self) -> &[(i64, Vec<f64>)] {
        &self.histograms
    }
}
