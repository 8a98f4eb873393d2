use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::eigen::{pca, project};
use super::{
    check_chip, euclidean, get_f64s, get_templates, get_u32, put_f64s, put_templates, put_u32,
    FaceChip, Gallery, Recognizer,
};
use crate::error::{Error, Result};

/// PCA to N−c dimensions followed by LDA to at most c−1 dimensions, folded
/// into one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherModel {
    pub width: u32,
    pub height: u32,
    pub mean: Vec<f64>,
    /// Combined pixel-space projection, one `Vec` per output dimension.
    pub projection: Vec<Vec<f64>>,
    pub projections: Vec<(i64, Vec<f64>)>,
    /// Set when the within-class scatter had to be regularized.
    pub regularized: bool,
}

pub fn train_fisher(gallery: &Gallery) -> Result<FisherModel> {
    let (width, height) = gallery.chip_size()?;
    let labels = gallery.labels();
    let mut classes: BTreeMap<i64, usize> = BTreeMap::new();
    for l in &labels {
        *classes.entry(*l).or_default() += 1;
    }
    let c = classes.len();
    let n = labels.len();
    if c < 2 {
        return Err(Error::InsufficientData("FisherFace needs at least 2 classes".into()));
    }
    if n <= c {
        return Err(Error::InsufficientData(format!(
            "FisherFace needs more chips ({n}) than classes ({c})"
        )));
    }
    if classes.values().any(|&k| k < 2) {
        log::warn!("FisherFace: some classes have a single chip; within-class scatter is degenerate");
    }

    let samples: Vec<Vec<f64>> = gallery.chips.iter().map(|ch| ch.as_f64().collect()).collect();
    let p = pca(&samples, n - c)?;
    let m = p.basis.len();
    if m == 0 {
        return Err(Error::Degenerate("gallery has no variance".into()));
    }
    let reduced: Vec<DVector<f64>> = samples
        .iter()
        .map(|s| DVector::from_vec(project(&p.mean, &p.basis, s.iter().copied())))
        .collect();

    // class means in the PCA subspace (overall mean is zero there)
    let mut means: BTreeMap<i64, DVector<f64>> = BTreeMap::new();
    for (x, l) in reduced.iter().zip(&labels) {
        *means.entry(*l).or_insert_with(|| DVector::zeros(m)) += x;
    }
    for (l, mu) in means.iter_mut() {
        *mu /= classes[l] as f64;
    }
    let mut sw = DMatrix::<f64>::zeros(m, m);
    for (x, l) in reduced.iter().zip(&labels) {
        let d = x - &means[l];
        sw += &d * d.transpose();
    }
    let mut sb = DMatrix::<f64>::zeros(m, m);
    for (l, mu) in &means {
        sb += (classes[l] as f64) * mu * mu.transpose();
    }

    let mut regularized = false;
    let chol = match sw.clone().cholesky() {
        Some(ch) if is_well_conditioned(&ch.l()) => ch,
        _ => {
            let eps = 1e-6 * sw.trace() / m as f64;
            log::warn!("FisherFace: singular within-class scatter, adding {eps:e}·I");
            regularized = true;
            let reg = &sw + DMatrix::<f64>::identity(m, m) * eps.max(f64::MIN_POSITIVE);
            reg.cholesky()
                .ok_or_else(|| Error::Degenerate("within-class scatter not positive definite".into()))?
        }
    };
    // Sb v = λ Sw v  ⇔  (L⁻¹ Sb L⁻ᵀ) y = λ y with v = L⁻ᵀ y
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Cholesky factor not invertible".into()))?;
    let mut sym = &linv * &sb * linv.transpose();
    sym = (&sym + sym.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let out_dim = (c - 1).min(m);
    let lda: Vec<DVector<f64>> = order
        .iter()
        .take(out_dim)
        .map(|&i| linv.transpose() * eig.eigenvectors.column(i))
        .collect();

    // fold PCA and LDA into one pixel-space projection
    let d = samples[0].len();
    let projection: Vec<Vec<f64>> = lda
        .iter()
        .map(|w| {
            let mut col = vec![0.0; d];
            for (coef, b) in w.iter().zip(&p.basis) {
                for (o, v) in col.iter_mut().zip(b) {
                    *o += coef * v;
                }
            }
            col
        })
        .collect();
    let projections = labels
        .iter()
        .zip(&samples)
        .map(|(l, s)| (*l, project(&p.mean, &projection, s.iter().copied())))
        .collect();
    Ok(FisherModel {
        width,
        height,
        mean: p.mean,
        projection,
        projections,
        regularized,
    })
}

fn is_well_conditioned(l: &DMatrix<f64>) -> bool {
    let diag: Vec<f64> = l.diagonal().iter().map(|x| x.abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    max > 0.0 && min / max > 1e-7
}

impl FisherModel {
    pub fn output_dim(&self) -> usize {
        self.projection.len()
    }

    pub(crate) fn write_body(&self, out: &mut Vec<u8>) {
        put_u32(out, self.width);
        put_u32(out, self.height);
        put_u32(out, self.regularized as u32);
        put_f64s(out, &self.mean);
        put_u32(out, self.projection.len() as u32);
        for p in &self.projection {
            put_f64s(out, p);
        }
        put_templates(out, &self.projections);
    }

    pub(crate) fn read_body<R: Read>(r: &mut R) -> Result<Self> {
        let width = get_u32(r)?;
        let height = get_u32(r)?;
        let regularized = get_u32(r)? != 0;
        let mean = get_f64s(r)?;
        let np = get_u32(r)? as usize;
        let projection = (0..np).map(|_| get_f64s(r)).collect::<Result<_>>()?;
        let projections = get_templates(r)?;
        Ok(FisherModel {
            width,
            height,
            mean,
            projection,
            projections,
            regularized,
        })
    }
}

impl Recognizer for FisherModel {
    fn embed(&self, chip: &FaceChip) -> Result<Vec<f64>> {
        check_chip(chip, self.width, self.height)?;
        Ok(project(&self.mean, &self.projection, chip.as_f64()))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        euclidean(a, b)
    }

    fn templates(&self) -> &[(i64, Vec<f64>)] {
        &self.projections
    }
}
