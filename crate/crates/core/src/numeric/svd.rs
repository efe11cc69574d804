//! Thin singular value decomposition by one-sided Jacobi rotations.
//!
//! Columns of a working copy of `A` are orthogonalised pairwise by plane
//! rotations accumulated into `V`; at convergence the column norms are the
//! singular values and the normalised columns are the left singular vectors.

use super::mat::{dot, norm2, Mat};
use super::NumericConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `a = left · diag(singulars) · rightᵀ` with `left` (rows × r) and `right`
/// (cols × r) having orthonormal columns, `r = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdResult<T> {
    pub left: Mat<T>,
    pub singulars: Vec<T>,
    pub right: Mat<T>,
}

impl<T: Real> SvdResult<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        let (m, n, r) = (self.left.rows(), self.right.rows(), self.singulars.len());
        let mut out = Mat::zeros(m, n);
        for k in 0..r {
            let s = self.singulars[k];
            if s == T::zero() {
                continue;
            }
            for i in 0..m {
                let u = self.left[(i, k)] * s;
                for j in 0..n {
                    out[(i, j)] += u * self.right[(j, k)];
                }
            }
        }
        out
    }

    /// Number of singular values above `tol`.
    pub fn rank(&self, tol: T) -> usize {
        self.singulars.iter().filter(|&&s| s > tol).count()
    }
}

pub fn svd<T: Real>(a: &Mat<T>) -> Result<SvdResult<T>> {
    svd_with(a, &NumericConfig::default())
}

pub fn svd_with<T: Real>(a: &Mat<T>, cfg: &NumericConfig) -> Result<SvdResult<T>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Usage("svd of an empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::Numerical("svd input has non-finite entries".into()));
    }
    if a.rows() < a.cols() {
        let t = jacobi_tall(&a.transpose(), cfg)?;
        return Ok(SvdResult { left: t.right, singulars: t.singulars, right: t.left });
    }
    jacobi_tall(a, cfg)
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(a: &Mat<T>) -> Result<T> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(T::zero());
    }
    Ok(svd(a)?.singulars[0])
}

fn jacobi_tall<T: Real>(a: &Mat<T>, cfg: &NumericConfig) -> Result<SvdResult<T>> {
    let (m, n) = (a.rows(), a.cols());
    // Work on columns stored contiguously.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();

    let fro2 = a.as_slice().iter().fold(T::zero(), |s, &x| s + x * x);
    let eps = T::epsilon();
    // Rotate a pair only while its cosine exceeds this; stricter than an
    // absolute off-diagonal threshold and keeps small singular vectors accurate.
    let pair_tol = eps * T::from_count(m.max(2));
    let max_sweeps = cfg.svd_sweep_factor * n.max(1);
    let tiny = eps * eps * fro2;

    let mut converged = n < 2 || fro2 == T::zero();
    let mut sweep = 0;
    while !converged && sweep < max_sweeps {
        sweep += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                // Columns at rounding level of the whole matrix carry no
                // information and would otherwise rotate forever.
                if gamma == T::zero() || gamma.abs() <= pair_tol * (alpha * beta).sqrt() || alpha.min(beta) <= tiny {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!("jacobi svd did not converge in {max_sweeps} sweeps")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<T> = cols.iter().map(|c| norm2(c)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let smax = norms.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let null_tol = smax * eps * T::from_count(m.max(n));

    let mut left = Mat::zeros(m, n);
    let mut right = Mat::zeros(n, n);
    let mut singulars = Vec::with_capacity(n);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        let u = if s > null_tol {
            singulars.push(s);
            cols[j].iter().map(|&x| x / s).collect()
        } else {
            singulars.push(T::zero());
            complete_basis(&basis, m)
        };
        left.set_col(k, &u);
        right.set_col(k, &v[j]);
        basis.push(u);
    }
    Ok(SvdResult { left, singulars, right })
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to every vector of `basis` (assumed orthonormal).
fn complete_basis<T: Real>(basis: &[Vec<T>], dim: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..dim {
        let mut w = vec![T::zero(); dim];
        w[e] = T::one();
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for b in basis {
                let c = dot(&w, b);
                for (wi, &bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let nrm = norm2(&w);
        if best.as_ref().is_none_or(|(bn, _)| nrm > *bn) {
            best = Some((nrm, w));
        }
        if nrm > T::lit(0.5) {
            break;
        }
    }
    let (nrm, w) = best.expect("dim >= 1");
    w.into_iter().map(|x| x / nrm).collect()
}
