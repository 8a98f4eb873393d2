//! Infrared thermography: intensity→temperature calibration, ROI readings,
//! blood-flow estimation, fever check and the RGB→IR region mapping.
//!
//! The blood-flow relation is a linear surrogate fitted through two
//! published (skin temperature, flow) anchor points. The underlying
//! physiological model depends on blood temperature as well; that term is
//! folded into the fitted constants. Do not read it as a physical model.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::detect::DetBox;
use crate::error::{Error, Result};
use crate::frame::{IrFrame, Rect};
use crate::io::{read_text, write_atomic};
use crate::protocol::Finding;

pub const DEFAULT_FEVER_THRESHOLD_C: f64 = 38.0;

/// Linear map from mean IR gray level to °C. The intercept doubles as the
/// room temperature (intensity 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalCalibration {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub n_points: usize,
}

impl ThermalCalibration {
    /// The reference camera line `y = 0.2087·x + 22.28`.
    pub fn reference() -> Self {
        ThermalCalibration {
            slope: 0.2087,
            intercept: 22.28,
            residual_rms: 0.0,
            n_points: 2,
        }
    }

    pub fn room_temperature(&self) -> f64 {
        self.intercept
    }

    pub fn to_text(&self) -> String {
        format!(
            "slope={}\nintercept={}\nresidual_rms={}\nn_points={}\n",
            self.slope, self.intercept, self.residual_rms, self.n_points
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "slope,intercept,residual_rms,n_points\n{},{},{},{}\n",
            self.slope, self.intercept, self.residual_rms, self.n_points
        )
    }

    /// Reads either the `key=value` text form or the one-row CSV form.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::format("calibration", "empty file"))?;
        let mut get = std::collections::HashMap::new();
        if first.starts_with("slope,") {
            let row = lines
                .next()
                .ok_or_else(|| Error::format("calibration", "missing CSV row"))?;
            for (k, v) in first.split(',').zip(row.split(',')) {
                get.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else {
            for line in std::iter::once(first).chain(lines) {
                if let Some((k, v)) = line.split_once('=') {
                    get.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }
        let num = |k: &str| -> Result<f64> {
            get.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format("calibration", format!("missing or bad {k}")))
        };
        let cal = ThermalCalibration {
            slope: num("slope")?,
            intercept: num("intercept")?,
            residual_rms: num("residual_rms").unwrap_or(0.0),
            n_points: num("n_points").map(|n| n as usize).unwrap_or(2),
        };
        if !cal.slope.is_finite() || !cal.intercept.is_finite() {
            return Err(Error::format("calibration", "non-finite constants"));
        }
        Ok(cal)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }
}

/// Ordinary least squares over `(intensity, temp_c)` pairs.
pub fn fit_calibration(points: &[(f64, f64)]) -> Result<ThermalCalibration> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate(
            "all calibration intensities are identical".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    Ok(ThermalCalibration {
        slope,
        intercept,
        residual_rms: (sse / n).sqrt(),
        n_points: points.len(),
    })
}

/// Parses a calibration point CSV with header `intensity,temp_c`.
pub fn parse_calibration_points(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format("calibration CSV", e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["intensity", "temp_c"] {
        return Err(Error::format(
            "calibration CSV",
            "header must be `intensity,temp_c`",
        ));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::format("calibration CSV", e.to_string()))?;
            let x = parse_field(&rec, 0, "calibration CSV")?;
            let y = parse_field(&rec, 1, "calibration CSV")?;
            Ok((x, y))
        })
        .collect()
}

fn parse_field(rec: &csv::StringRecord, i: usize, what: &'static str) -> Result<f64> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(what, format!("bad field {i} in {rec:?}")))
}

pub fn intensity_to_temp(x: f64, cal: &ThermalCalibration) -> f64 {
    cal.slope * x + cal.intercept
}

/// Nearest representable gray level for `temp_c`.
pub fn temp_to_intensity(temp_c: f64, cal: &ThermalCalibration) -> Result<u8> {
    if cal.slope == 0.0 {
        return Err(Error::Degenerate("calibration slope is zero".into()));
    }
    let x = ((temp_c - cal.intercept) / cal.slope).round();
    if !(0.0..=255.0).contains(&x) {
        return Err(Error::OutOfRange(format!(
            "{temp_c} °C maps to intensity {x}, outside [0, 255]"
        )));
    }
    Ok(x as u8)
}

/// Linear skin-temperature → blood-flow surrogate (ml/100g tissue·min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BloodFlowModel {
    pub bf_slope: f64,
    pub bf_intercept: f64,
}

impl BloodFlowModel {
    /// Forehead reading of the reference subject.
    pub const FOREHEAD_ANCHOR: (f64, f64) = (33.727, 39.6536);
    /// Whole-head reading of the reference subject.
    pub const HEAD_ANCHOR: (f64, f64) = (31.5156, 19.2156);

    /// Line through two `(temp_c, flow)` points.
    pub fn from_anchors(a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        let dt = a.0 - b.0;
        if dt == 0.0 {
            return Err(Error::Degenerate("anchor temperatures coincide".into()));
        }
        let bf_slope = (a.1 - b.1) / dt;
        let bf_intercept = (a.0 * b.1 - b.0 * a.1) / dt;
        Ok(BloodFlowModel {
            bf_slope,
            bf_intercept,
        })
    }
}

impl Default for BloodFlowModel {
    fn default() -> Self {
        BloodFlowModel::from_anchors(Self::FOREHEAD_ANCHOR, Self::HEAD_ANCHOR)
            .expect("anchor temperatures are distinct")
    }
}

pub fn blood_flow(temp_c: f64, model: &BloodFlowModel) -> f64 {
    model.bf_slope * temp_c + model.bf_intercept
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalReading {
    pub roi: Rect,
    pub mean_intensity: f64,
    pub temp_c: f64,
    pub blood_flow: f64,
}

pub fn temp_of_roi(
    ir: &IrFrame,
    roi: Rect,
    cal: &ThermalCalibration,
    model: &BloodFlowModel,
) -> Result<ThermalReading> {
    if roi.w == 0 || roi.h == 0 {
        return Err(Error::InvalidArgument("empty ROI".into()));
    }
    if !roi.fits(ir.width, ir.height) {
        return Err(Error::OutOfRange(format!(
            "ROI {roi:?} outside {}x{} IR frame",
            ir.width, ir.height
        )));
    }
    let mut sum = 0u64;
    for y in roi.y..roi.y + roi.h {
        let row = y as usize * ir.width as usize;
        sum += ir.intensity[row + roi.x as usize..row + (roi.x + roi.w) as usize]
            .iter()
            .map(|&p| p as u64)
            .sum::<u64>();
    }
    let mean_intensity = sum as f64 / roi.area() as f64;
    let temp_c = intensity_to_temp(mean_intensity, cal);
    Ok(ThermalReading {
        roi,
        mean_intensity,
        temp_c,
        blood_flow: blood_flow(temp_c, model),
    })
}

/// Fever finding iff `temp_c ≥ threshold_c`.
pub fn fever_check(temp_c: f64, threshold_c: f64, frame: Option<usize>) -> Option<Finding> {
    (temp_c >= threshold_c).then(|| Finding::fever(temp_c, frame))
}

/// Affine map from RGB pixel coordinates to IR pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiMap {
    pub matrix: [[f64; 3]; 2],
    pub residual: f64,
}

impl RoiMap {
    pub fn identity() -> Self {
        RoiMap {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            residual: 0.0,
        }
    }

    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        let m = &self.matrix;
        (
            m[0][0] * u + m[0][1] * v + m[0][2],
            m[1][0] * u + m[1][1] * v + m[1][2],
        )
    }

    pub fn determinant(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }
}

impl Default for RoiMap {
    fn default() -> Self {
        RoiMap::identity()
    }
}

/// One RGB↔IR correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub rgb: (f64, f64),
    pub ir: (f64, f64),
}

/// Least-squares affine fit; residual is the RMS reprojection error in IR
/// pixels.
pub fn fit_roi_map(pairs: &[PointPair]) -> Result<RoiMap> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "affine fit needs 3 correspondences, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len();
    // center for conditioning
    let (mu, mv) = pairs
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.rgb.0, acc.1 + p.rgb.1));
    let (mu, mv) = (mu / n as f64, mv / n as f64);
    let a = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => pairs[r].rgb.0 - mu,
        1 => pairs[r].rgb.1 - mv,
        _ => 1.0,
    });
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if sv.min() <= 1e-9 * smax.max(1.0) {
        return Err(Error::Degenerate("correspondences are collinear".into()));
    }
    let bu = DVector::from_iterator(n, pairs.iter().map(|p| p.ir.0));
    let bv = DVector::from_iterator(n, pairs.iter().map(|p| p.ir.1));
    let solve = |b: &DVector<f64>| -> Result<DVector<f64>> {
        svd.solve(b, 1e-12)
            .map_err(|e| Error::Degenerate(format!("affine solve failed: {e}")))
    };
    let ru = solve(&bu)?;
    let rv = solve(&bv)?;
    let matrix = [
        [ru[0], ru[1], ru[2] - ru[0] * mu - ru[1] * mv],
        [rv[0], rv[1], rv[2] - rv[0] * mu - rv[1] * mv],
    ];
    let mut map = RoiMap {
        matrix,
        residual: 0.0,
    };
    if map.determinant().abs() < 1e-12 {
        return Err(Error::Degenerate("fitted affine is singular".into()));
    }
    let sse: f64 = pairs
        .iter()
        .map(|p| {
            let (u, v) = map.apply(p.rgb.0, p.rgb.1);
            (u - p.ir.0).powi(2) + (v - p.ir.1).powi(2)
        })
        .sum();
    map.residual = (sse / n as f64).sqrt();
    Ok(map)
}

/// Parses a correspondence CSV with header `rgb_u,rgb_v,ir_u,ir_v`.
pub fn parse_correspondences(text: &str) -> Result<Vec<PointPair>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format("correspondence CSV", e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["rgb_u", "rgb_v", "ir_u", "ir_v"] {
        return Err(Error::format(
            "correspondence CSV",
            "header must be `rgb_u,rgb_v,ir_u,ir_v`",
        ));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::format("correspondence CSV", e.to_string()))?;
            let f = |i| parse_field(&rec, i, "correspondence CSV");
            Ok(PointPair {
                rgb: (f(0)?, f(1)?),
                ir: (f(2)?, f(3)?),
            })
        })
        .collect()
}

/// Forehead proportions relative to the face box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForeheadParams {
    /// Fraction of the box width kept, centered.
    pub width_frac: f64,
    /// Fraction of the box height kept, from the top.
    pub height_frac: f64,
}

impl Default for ForeheadParams {
    fn default() -> Self {
        ForeheadParams {
            width_frac: 0.6,
            height_frac: 0.25,
        }
    }
}

/// Forehead rectangle of `face_box`, mapped into IR coordinates and clipped
/// to the `ir_width × ir_height` frame.
pub fn forehead_roi(
    face_box: &DetBox,
    map: &RoiMap,
    params: &ForeheadParams,
    ir_width: u32,
    ir_height: u32,
) -> Result<Rect> {
    if !(face_box.w > 0.0 && face_box.h > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate face box {face_box:?}")));
    }
    let x0 = face_box.x + face_box.w * (1.0 - params.width_frac) / 2.0;
    let x1 = x0 + face_box.w * params.width_frac;
    let y0 = face_box.y;
    let y1 = y0 + face_box.h * params.height_frac;
    let corners = [
        map.apply(x0, y0),
        map.apply(x1, y0),
        map.apply(x0, y1),
        map.apply(x1, y1),
    ];
    let lo_u = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).round();
    let hi_u = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).round();
    let lo_v = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).round();
    let hi_v = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).round();
    let cx0 = lo_u.max(0.0);
    let cy0 = lo_v.max(0.0);
    let cx1 = hi_u.min(ir_width as f64);
    let cy1 = hi_v.min(ir_height as f64);
    if cx1 <= cx0 || cy1 <= cy0 {
        return Err(Error::OutOfRange(format!(
            "forehead ROI falls outside the {ir_width}x{ir_height} IR frame"
        )));
    }
    Ok(Rect::new(
        cx0 as u32,
        cy0 as u32,
        (cx1 - cx0) as u32,
        (cy1 - cy0) as u32,
    ))
}

pub fn write_calibration(path: &Path, cal: &ThermalCalibration) -> Result<()> {
    write_atomic(path, cal.to_csv().as_bytes())
}
