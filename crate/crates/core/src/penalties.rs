//! Decomposable regularisation norms, their proximal maps and support
//! projectors.

use crate::error::{usage, Result};
use crate::model::Groups;
use crate::numeric::{dot, norm1, norm2, norm_inf, spectral_norm, svd, Mat};
use crate::scalar::Real;

/// Which norm regularises the estimator.
#[derive(Clone, Debug, PartialEq)]
pub enum PenaltyKind {
    L1,
    /// ℓ2,1 norm over a partition of the coordinates.
    Group(Groups),
    /// Nuclear norm of the row-major `k × m` reshaping.
    Nuclear { k: usize, m: usize },
}

/// Norm plus tuning parameter λ.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltySpec<T> {
    pub kind: PenaltyKind,
    pub lambda: T,
}

impl<T: Real> PenaltySpec<T> {
    pub fn new(kind: PenaltyKind, lambda: T) -> Result<Self> {
        if !lambda.is_finite() || lambda < T::zero() {
            return usage(format!("lambda must be finite and nonnegative, got {lambda}"));
        }
        Ok(PenaltySpec { kind, lambda })
    }
}

impl PenaltyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::L1 => "l1",
            PenaltyKind::Group(_) => "group",
            PenaltyKind::Nuclear { .. } => "nuclear",
        }
    }

    /// Fails unless vectors of length `d` belong to this norm's space.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        let ok = match self {
            PenaltyKind::L1 => true,
            PenaltyKind::Group(g) => g.dim() == d,
            PenaltyKind::Nuclear { k, m } => k * m == d,
        };
        if ok {
            Ok(())
        } else {
            usage(format!("{} penalty does not act on vectors of length {d}", self.name()))
        }
    }

    pub fn norm<T: Real>(&self, beta: &[T]) -> Result<T> {
        self.check_dim(beta.len())?;
        Ok(match self {
            PenaltyKind::L1 => norm1(beta),
            PenaltyKind::Group(g) => g.iter().map(|r| norm2(&beta[r])).sum(),
            PenaltyKind::Nuclear { k, m } => svd(&Mat::from_vec(*k, *m, beta.to_vec())?)?.singulars.into_iter().sum(),
        })
    }

    /// Dual norm: ℓ∞, largest block ℓ2 norm, or spectral norm.
    pub fn dual_norm<T: Real>(&self, v: &[T]) -> Result<T> {
        self.check_dim(v.len())?;
        Ok(match self {
            PenaltyKind::L1 => norm_inf(v),
            PenaltyKind::Group(g) => g.iter().map(|r| norm2(&v[r])).fold(T::zero(), T::max),
            PenaltyKind::Nuclear { k, m } => spectral_norm(&Mat::from_vec(*k, *m, v.to_vec())?)?,
        })
    }

    /// An element of the subdifferential of the norm at `v` (zero where the
    /// norm is not differentiable in a block).
    pub fn subgradient<T: Real>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_dim(v.len())?;
        Ok(match self {
            PenaltyKind::L1 => v.iter().map(|&x| if x == T::zero() { T::zero() } else { x.signum() }).collect(),
            PenaltyKind::Group(g) => {
                let mut out = vec![T::zero(); v.len()];
                for r in g.iter() {
                    let nrm = norm2(&v[r.clone()]);
                    if nrm > T::zero() {
                        for j in r {
                            out[j] = v[j] / nrm;
                        }
                    }
                }
                out
            }
            PenaltyKind::Nuclear { k, m } => {
                let s = svd(&Mat::from_vec(*k, *m, v.to_vec())?)?;
                let tol = s.singulars[0] * T::lit(1e-12);
                let mut out = Mat::zeros(*k, *m);
                for (c, &sv) in s.singulars.iter().enumerate() {
                    if sv <= tol {
                        break;
                    }
                    for i in 0..*k {
                        let u = s.left[(i, c)];
                        for j in 0..*m {
                            out[(i, j)] += u * s.right[(j, c)];
                        }
                    }
                }
                out.into_vec()
            }
        })
    }

    /// argmin_z ½|z − v|₂² + t‖z‖.
    pub fn prox<T: Real>(&self, v: &[T], t: T) -> Result<Vec<T>> {
        self.check_dim(v.len())?;
        if !(t >= T::zero()) || !t.is_finite() {
            return usage(format!("prox threshold must be finite and nonnegative, got {t}"));
        }
        Ok(match self {
            PenaltyKind::L1 => v.iter().map(|&x| soft_threshold(x, t)).collect(),
            PenaltyKind::Group(g) => {
                let mut z = v.to_vec();
                for r in g.iter() {
                    let nrm = norm2(&v[r.clone()]);
                    let f = if nrm > t { T::one() - t / nrm } else { T::zero() };
                    z[r].iter_mut().for_each(|x| *x *= f);
                }
                z
            }
            PenaltyKind::Nuclear { k, m } => {
                let mut s = svd(&Mat::from_vec(*k, *m, v.to_vec())?)?;
                s.singulars.iter_mut().for_each(|x| *x = (*x - t).max(T::zero()));
                s.reconstruct().into_vec()
            }
        })
    }
}

#[inline]
pub fn soft_threshold<T: Real>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

/// ‖β‖ (λ not applied).
pub fn penalty_norm<T: Real>(penalty: &PenaltySpec<T>, beta: &[T]) -> Result<T> {
    penalty.kind.norm(beta)
}

pub fn prox<T: Real>(penalty: &PenaltySpec<T>, v: &[T], t: T) -> Result<Vec<T>> {
    penalty.kind.prox(v, t)
}

/// The projector 𝒫_A attached to an element A.
#[derive(Clone, Debug, PartialEq)]
pub enum SupportProjector<T> {
    Coordinates { active: Vec<bool> },
    Blocks { groups: Groups, active: Vec<bool> },
    /// Row space basis `u` (k × r) and column space basis `v` (m × r).
    Subspaces { k: usize, m: usize, u: Mat<T>, v: Mat<T> },
}

impl<T: Real> SupportProjector<T> {
    pub fn dim(&self) -> usize {
        match self {
            SupportProjector::Coordinates { active } => active.len(),
            SupportProjector::Blocks { groups, .. } => groups.dim(),
            SupportProjector::Subspaces { k, m, .. } => k * m,
        }
    }

    /// |S|, |𝒦| or the rank.
    pub fn size(&self) -> usize {
        match self {
            SupportProjector::Coordinates { active } | SupportProjector::Blocks { active, .. } => {
                active.iter().filter(|&&a| a).count()
            }
            SupportProjector::Subspaces { u, .. } => u.cols(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    /// Coordinates projector onto the index set `s`.
    pub fn coordinates(dim: usize, s: &[usize]) -> Result<Self> {
        let mut active = vec![false; dim];
        for &j in s {
            if j >= dim {
                return usage(format!("support index {j} out of range for dimension {dim}"));
            }
            active[j] = true;
        }
        Ok(SupportProjector::Coordinates { active })
    }

    pub fn blocks(groups: Groups, s: &[usize]) -> Result<Self> {
        let mut active = vec![false; groups.len()];
        for &g in s {
            if g >= groups.len() {
                return usage(format!("group index {g} out of range"));
            }
            active[g] = true;
        }
        Ok(SupportProjector::Blocks { groups, active })
    }

    /// Active coordinate indices (coordinate and block projectors).
    pub fn active_coordinates(&self) -> Vec<usize> {
        match self {
            SupportProjector::Coordinates { active } => (0..active.len()).filter(|&j| active[j]).collect(),
            SupportProjector::Blocks { groups, active } => {
                (0..groups.len()).filter(|&g| active[g]).flat_map(|g| groups.block(g)).collect()
            }
            SupportProjector::Subspaces { .. } => Vec::new(),
        }
    }

    /// 𝒫_A⊥ b
    pub fn complement(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.dim() {
            return usage(format!("projector of dimension {} applied to length {}", self.dim(), b.len()));
        }
        Ok(match self {
            SupportProjector::Coordinates { active } => {
                b.iter().zip(active).map(|(&x, &a)| if a { T::zero() } else { x }).collect()
            }
            SupportProjector::Blocks { groups, active } => {
                let mut out = b.to_vec();
                for (g, r) in groups.iter().enumerate() {
                    if active[g] {
                        out[r].iter_mut().for_each(|x| *x = T::zero());
                    }
                }
                out
            }
            SupportProjector::Subspaces { k, m, u, v } => {
                let bm = Mat::from_vec(*k, *m, b.to_vec())?;
                // (I − UUᵀ) B (I − VVᵀ)
                let left = sub_projection(&bm, u)?;
                sub_projection(&left.transpose(), v)?.transpose().into_vec()
            }
        })
    }

    /// 𝒫_A b = b − 𝒫_A⊥ b
    pub fn support(&self, b: &[T]) -> Result<Vec<T>> {
        let c = self.complement(b)?;
        Ok(b.iter().zip(&c).map(|(&x, &y)| x - y).collect())
    }
}

/// (I − QQᵀ)·B for Q with orthonormal columns.
fn sub_projection<T: Real>(b: &Mat<T>, q: &Mat<T>) -> Result<Mat<T>> {
    if q.cols() == 0 {
        return Ok(b.clone());
    }
    let qtb = q.transpose().matmul(b)?;
    let proj = q.matmul(&qtb)?;
    let mut out = b.clone();
    for (o, &p) in out.as_mut_slice().iter_mut().zip(proj.as_slice()) {
        *o -= p;
    }
    Ok(out)
}

/// `support_rel_tol ·` the largest coordinate / block norm / singular value.
pub fn default_zero_tol<T: Real>(kind: &PenaltyKind, a: &[T], rel: T) -> Result<T> {
    Ok(rel * kind.dual_norm(a)?)
}

/// Support of `a`: coordinates or blocks above `zero_tol`, or the singular
/// subspaces of singular values above `zero_tol`.
pub fn support_of<T: Real>(kind: &PenaltyKind, a: &[T], zero_tol: T) -> Result<SupportProjector<T>> {
    kind.check_dim(a.len())?;
    Ok(match kind {
        PenaltyKind::L1 => SupportProjector::Coordinates { active: a.iter().map(|x| x.abs() > zero_tol).collect() },
        PenaltyKind::Group(g) => SupportProjector::Blocks {
            groups: g.clone(),
            active: g.iter().map(|r| norm2(&a[r]) > zero_tol).collect(),
        },
        PenaltyKind::Nuclear { k, m } => {
            let s = svd(&Mat::from_vec(*k, *m, a.to_vec())?)?;
            let r = s.rank(zero_tol);
            SupportProjector::Subspaces { k: *k, m: *m, u: s.left.col_block(0, r), v: s.right.col_block(0, r) }
        }
    })
}

pub fn project_support<T: Real>(proj: &SupportProjector<T>, b: &[T]) -> Result<Vec<T>> {
    proj.support(b)
}

pub fn project_complement<T: Real>(proj: &SupportProjector<T>, b: &[T]) -> Result<Vec<T>> {
    proj.complement(b)
}

/// Outcome of the decomposability check for a pair (A, B).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposability<T> {
    /// |‖A‖ + ‖𝒫_A⊥B‖ − ‖A + 𝒫_A⊥B‖|, zero for a decomposable norm.
    pub violation: T,
    /// (‖𝒫_A(A − B)‖ − ‖𝒫_A⊥B‖) − (‖A‖ − ‖B‖), nonnegative when the
    /// projector pair is admissible.
    pub slack: T,
}

pub fn check_decomposability<T: Real>(
    penalty: &PenaltySpec<T>,
    a: &[T],
    b: &[T],
    zero_tol: T,
) -> Result<Decomposability<T>> {
    let kind = &penalty.kind;
    if a.len() != b.len() {
        return usage("A and B have different lengths");
    }
    let proj = support_of(kind, a, zero_tol)?;
    let pb = proj.complement(b)?;
    let sum: Vec<T> = a.iter().zip(&pb).map(|(&x, &y)| x + y).collect();
    let na = kind.norm(a)?;
    let npb = kind.norm(&pb)?;
    let violation = (na + npb - kind.norm(&sum)?).abs();
    let diff: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let slack = (kind.norm(&proj.support(&diff)?)? - npb) - (na - kind.norm(b)?);
    Ok(Decomposability { violation, slack })
}

/// ⟨P_A b, P_A⊥ b⟩, zero for an orthogonal projector pair.
pub fn projector_cross_term<T: Real>(proj: &SupportProjector<T>, b: &[T]) -> Result<T> {
    Ok(dot(&proj.support(b)?, &proj.complement(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1() -> PenaltySpec<f64> {
        PenaltySpec::new(PenaltyKind::L1, 1.0).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(penalty_norm(&l1(), &[1.0, -2.0, 3.0]).unwrap(), 6.0);
        let g = PenaltySpec::new(PenaltyKind::Group(Groups::equal(2, 2).unwrap()), 1.0f64).unwrap();
        assert!((penalty_norm(&g, &[3.0, 4.0, 0.0, 0.0]).unwrap() - 5.0).abs() < 1e-15);
        let nuc = PenaltySpec::new(PenaltyKind::Nuclear { k: 2, m: 2 }, 1.0f64).unwrap();
        assert!((penalty_norm(&nuc, &[2.0, 0.0, 0.0, 3.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!(penalty_norm(&nuc, &[1.0; 3]).is_err());
    }

    #[test]
    fn prox_examples() {
        assert_eq!(prox(&l1(), &[2.0, 0.3, -2.0], 0.5).unwrap(), vec![1.5, 0.0, -1.5]);
        let g = PenaltySpec::new(PenaltyKind::Group(Groups::equal(1, 2).unwrap()), 1.0f64).unwrap();
        let z = prox(&g, &[3.0, 4.0], 2.5).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-15 && (z[1] - 2.0).abs() < 1e-15);
        assert_eq!(prox(&g, &[3.0, 4.0], 5.0).unwrap(), vec![0.0, 0.0]);
        let nuc = PenaltySpec::new(PenaltyKind::Nuclear { k: 2, m: 2 }, 1.0f64).unwrap();
        let z = prox(&nuc, &[3.0, 0.0, 0.0, 1.0], 2.0).unwrap();
        for (x, y) in z.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(prox(&l1(), &[1.0], -1.0).is_err());
    }

    #[test]
    fn supports() {
        let p = support_of(&PenaltyKind::L1, &[0.0f64; 3], 1e-12).unwrap();
        assert!(p.is_empty());
        let p = support_of(&PenaltyKind::L1, &[1.0, 0.0, 2.0], 1e-12).unwrap();
        assert_eq!(p.active_coordinates(), vec![0, 2]);
        assert_eq!(project_support(&p, &[5.0, 6.0, 7.0]).unwrap(), vec![5.0, 0.0, 7.0]);
        assert_eq!(project_complement(&p, &[5.0, 6.0, 7.0]).unwrap(), vec![0.0, 6.0, 0.0]);

        let kind = PenaltyKind::Nuclear { k: 2, m: 2 };
        let p = support_of(&kind, &[1.0f64, 0.0, 0.0, 0.0], 1e-12).unwrap();
        assert_eq!(p.size(), 1);
        let b = [1.0f64, 2.0, 3.0, 4.0];
        let c = project_complement(&p, &b).unwrap();
        for (x, y) in c.iter().zip([0.0, 0.0, 0.0, 4.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        let s = project_support(&p, &b).unwrap();
        for (x, y) in s.iter().zip([1.0, 2.0, 3.0, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_b_has_no_violation() {
        let d = check_decomposability(&l1(), &[1.0, 0.0, -3.0], &[0.0; 3], 1e-12).unwrap();
        assert_eq!(d.violation, 0.0);
        assert!(d.slack >= -1e-12);
    }

    #[test]
    fn dual_norms() {
        assert_eq!(PenaltyKind::L1.dual_norm(&[1.0, -4.0]).unwrap(), 4.0);
        let g = PenaltyKind::Group(Groups::equal(2, 2).unwrap());
        assert!((g.dual_norm(&[3.0f64, 4.0, 1.0, 1.0]).unwrap() - 5.0).abs() < 1e-15);
        let n = PenaltyKind::Nuclear { k: 2, m: 2 };
        assert!((n.dual_norm(&[2.0f64, 0.0, 0.0, 3.0]).unwrap() - 3.0).abs() < 1e-12);
    }
}
