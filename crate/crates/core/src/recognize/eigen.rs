use std::io::Read;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{
    check_chip, euclidean, get_f64s, get_templates, get_u32, put_f64s, put_templates, put_u32,
    FaceChip, Gallery, Recognizer,
};
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a component is treated as null.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    pub width: u32,
    pub height: u32,
    pub mean: Vec<f64>,
    /// Orthonormal components, one `Vec` per column, by descending eigenvalue.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub projections: Vec<(i64, Vec<f64>)>,
}

pub(crate) struct Pca {
    pub mean: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// PCA via the small-covariance trick: eigen-decompose the N×N Gram matrix
/// of the centered samples and lift its eigenvectors back to pixel space.
pub(crate) fn pca(samples: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientData("PCA needs at least one sample".into()));
    }
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(d, n, |r, c| samples[c][r] - mean[r]);
    let gram = centered.tr_mul(&centered);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut basis = Vec::new();
    let mut eigenvalues = Vec::new();
    for &i in order.iter().take(k) {
        let lambda = eig.eigenvalues[i];
        if lambda <= RANK_TOL * top.max(f64::MIN_POSITIVE) {
            break;
        }
        let u = eig.eigenvectors.column(i);
        let mut v: DVector<f64> = &centered * u;
        v /= lambda.sqrt();
        // sign convention: largest-magnitude entry positive
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (j, x)| {
            if x.abs() > acc.1 { (j, x.abs()) } else { acc }
        });
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        basis.push(v.iter().copied().collect());
        eigenvalues.push(lambda / n as f64);
    }
    Ok(Pca {
        mean,
        basis,
        eigenvalues,
    })
}

pub(crate) fn project(mean: &[f64], basis: &[Vec<f64>], x: impl Iterator<Item = f64>) -> Vec<f64> {
    let centered: Vec<f64> = x.zip(mean).map(|(v, m)| v - m).collect();
    basis
        .iter()
        .map(|b| b.iter().zip(&centered).map(|(p, q)| p * q).sum())
        .collect()
}

pub fn train_eigen(gallery: &Gallery, k: usize) -> Result<EigenModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("EigenFace needs k ≥ 1".into()));
    }
    let (width, height) = gallery.chip_size()?;
    let n = gallery.chips.len();
    let k = if k > n {
        log::warn!("EigenFace k = {k} exceeds {n} gallery chips; clamped to {n}");
        n
    } else {
        k
    };
    let samples: Vec<Vec<f64>> = gallery.chips.iter().map(|c| c.as_f64().collect()).collect();
    let p = pca(&samples, k)?;
    if p.basis.len() < k {
        log::warn!(
            "EigenFace gallery has rank {}; keeping {} of {k} requested components",
            p.basis.len(),
            p.basis.len()
        );
    }
    let projections = gallery
        .chips
        .iter()
        .zip(&samples)
        .map(|(c, s)| (c.label.unwrap_or_default(), project(&p.mean, &p.basis, s.iter().copied())))
        .collect();
    Ok(EigenModel {
        width,
        height,
        mean: p.mean,
        basis: p.basis,
        eigenvalues: p.eigenvalues,
        projections,
    })
}

impl EigenModel {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn project_chip(&self, chip: &FaceChip) -> Result<Vec<f64>> {
        check_chip(chip, self.width, self.height)?;
        Ok(project(&self.mean, &self.basis, chip.as_f64()))
    }

    /// Squared reconstruction error of `chip` using the first `k` components.
    pub fn reconstruction_error(&self, chip: &FaceChip, k: usize) -> Result<f64> {
        check_chip(chip, self.width, self.height)?;
        let centered: Vec<f64> = chip.as_f64().zip(&self.mean).map(|(v, m)| v - m).collect();
        let mut residual = centered.clone();
        for b in self.basis.iter().take(k) {
            let c: f64 = b.iter().zip(&centered).map(|(p, q)| p * q).sum();
            for (r, p) in residual.iter_mut().zip(b) {
                *r -= c * p;
            }
        }
        Ok(residual.iter().map(|r| r * r).sum())
    }

    pub(crate) fn write_body(&self, out: &mut Vec<u8>) {
        put_u32(out, self.width);
        put_u32(out, self.height);
        put_f64s(out, &self.mean);
        put_f64s(out, &self.eigenvalues);
        put_u32(out, self.basis.len() as u32);
        for b in &self.basis {
            put_f64s(out, b);
        }
        put_templates(out, &self.projections);
    }

    pub(crate) fn read_body<R: Read>(r: &mut R) -> Result<Self> {
        let width = get_u32(r)?;
        let height = get_u32(r)?;
        let mean = get_f64s(r)?;
        let eigenvalues = get_f64s(r)?;
        let nb = get_u32(r)? as usize;
        let basis = (0..nb).map(|_| get_f64s(r)).collect::<Result<_>>()?;
        let projections = get_templates(r)?;
        Ok(EigenModel {
            width,
            height,
            mean,
            basis,
            eigenvalues,
            projections,
        })
    }
}

impl Recognizer for EigenModel {
    fn embed(&self, chip: &FaceChip) -> Result<Vec<f64>> {
        self.project_chip(chip)
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        euclidean(a, b)
    }

    fn templates(&self) -> &[(i64, Vec<f64>)] {
        &self.projections
    }
}
