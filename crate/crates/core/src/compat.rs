//! Cones 𝒞_{A,c₀}, the compatibility factor μ_{c₀}(A) and restricted
//! eigenvalue constants.
//!
//! Both μ and κ are nonconvex programs. The search reports the best value it
//! finds (a lower bound for μ, an upper bound for κ²) and switches to exact
//! values where they are known: an empty support, a direction of the cone in
//! the null space of 𝕏, or an orthonormal-scaled design.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Result};
use crate::model::DesignOperator;
use crate::numeric::{dot, gauss_fill, norm2, svd_with, Mat, NumericConfig, RngStream};
use crate::penalties::{PenaltyKind, SupportProjector};
use crate::scalar::Real;

/// 𝒞_{A,c₀} = {B : ‖𝒫_A⊥B‖ ≤ c₀‖𝒫_A B‖}.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec<T> {
    pub kind: PenaltyKind,
    pub projector: SupportProjector<T>,
    pub c0: T,
}

impl<T: Real> ConeSpec<T> {
    pub fn new(kind: PenaltyKind, projector: SupportProjector<T>, c0: T) -> Result<Self> {
        kind.check_dim(projector.dim())?;
        if !c0.is_finite() || c0 < T::zero() {
            return usage(format!("c0 must be finite and nonnegative, got {c0}"));
        }
        Ok(ConeSpec { kind, projector, c0 })
    }

    pub fn dim(&self) -> usize {
        self.projector.dim()
    }

    /// (‖𝒫_A b‖, ‖𝒫_A⊥ b‖)
    fn split_norms(&self, b: &[T]) -> Result<(T, T)> {
        Ok((self.kind.norm(&self.projector.support(b)?)?, self.kind.norm(&self.projector.complement(b)?)?))
    }

    /// Pull `b` back into the cone by shrinking its complement part.
    fn retract(&self, b: &[T]) -> Result<Vec<T>> {
        let a = self.projector.support(b)?;
        let c = self.projector.complement(b)?;
        let (na, nc) = (self.kind.norm(&a)?, self.kind.norm(&c)?);
        let limit = self.c0 * na * (T::one() - T::lit(1e-12));
        let f = if nc > limit { limit / nc } else { T::one() };
        Ok(a.iter().zip(&c).map(|(&x, &y)| x + f * y).collect())
    }

    /// A random element: support part Gaussian, complement part Gaussian
    /// rescaled to a uniform fraction of the admissible norm.
    fn sample<R: rand::Rng>(&self, rng: &mut R) -> Result<Vec<T>> {
        let d = self.dim();
        let a = self.projector.support(&gauss_fill::<T, _>(rng, d))?;
        let c = self.projector.complement(&gauss_fill::<T, _>(rng, d))?;
        let (na, nc) = (self.kind.norm(&a)?, self.kind.norm(&c)?);
        let u = T::lit(rng.random::<f64>());
        let f = if nc > T::zero() { u * self.c0 * na / nc } else { T::zero() };
        Ok(a.iter().zip(&c).map(|(&x, &y)| x + f * y).collect())
    }
}

/// Whether ‖𝒫_A⊥b‖ ≤ c₀‖𝒫_A b‖ + tol.
pub fn cone_contains<T: Real>(cone: &ConeSpec<T>, b: &[T], tol: T) -> Result<bool> {
    if b.len() != cone.dim() {
        return usage(format!("cone of dimension {} tested with length {}", cone.dim(), b.len()));
    }
    let (a, c) = cone.split_norms(b)?;
    Ok(c <= cone.c0 * a + tol)
}

/// Work allowed to the randomised searches.
#[derive(Clone, Debug)]
pub struct SearchBudget {
    /// Random cone elements evaluated before refinement.
    pub samples: usize,
    /// Best samples refined by projected gradient steps.
    pub starts: usize,
    pub iters: usize,
    /// Also compute the indicative √s/κ bound in [`compatibility_factor`].
    pub re_route: bool,
    pub numeric: NumericConfig,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { samples: 10_000, starts: 8, iters: 300, re_route: true, numeric: NumericConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompatMethod {
    /// A = 0: the cone is {0} and μ = 0.
    EmptySupport,
    /// The cone meets the null space of 𝕏 outside ker 𝒫_A: μ = ∞.
    NullCone,
    /// 𝕏ᵀ𝕏 = n·I: closed form.
    AnalyticOrthonormal,
    /// Best value found by random sampling and projected gradient ascent.
    Search,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompatEstimate<T> {
    /// Best ratio ‖𝒫_A B‖/‖𝕏B‖ₙ found (infinite when `infinite`).
    pub lower: T,
    /// Exact value when known in closed form.
    pub upper: Option<T>,
    pub infinite: bool,
    pub method: CompatMethod,
    /// The cone element attaining `lower`.
    pub argmax: Vec<T>,
    /// √|support| / κ with κ² the best-found restricted eigenvalue. The RE
    /// search over-estimates κ, so this is indicative rather than a bound.
    pub re_route: Option<T>,
}

/// √s, √|𝒦| or √min(2r, k, m): the compatibility factor of an
/// orthonormal-scaled design, for which ‖𝕏B‖ₙ = |B|₂.
pub fn analytic_orthonormal_mu<T: Real>(cone: &ConeSpec<T>) -> T {
    let s = cone.projector.size();
    let eff = match &cone.kind {
        // 𝒫_A B = UUᵀB + (I − UUᵀ)BVVᵀ has rank at most 2r.
        PenaltyKind::Nuclear { k, m } => (2 * s).min(*k).min(*m),
        _ => s,
    };
    T::from_count(eff).sqrt()
}

fn design_sq_norm<T: Real>(design: &DesignOperator<T>, b: &[T]) -> Result<T> {
    let xb = design.apply(b)?;
    Ok(dot(&xb, &xb) / T::from_count(design.n()))
}

/// Orthonormal basis (d × q) of ker 𝕏.
fn null_basis<T: Real>(design: &DesignOperator<T>, cfg: &NumericConfig) -> Result<Mat<T>> {
    let (n, d) = (design.n(), design.dim());
    let x = design.matrix();
    let padded = if n >= d {
        x.clone()
    } else {
        let mut data = x.as_slice().to_vec();
        data.resize(d * d, T::zero());
        Mat::from_vec(d, d, data)?
    };
    let s = svd_with(&padded, cfg)?;
    let tol = s.singulars[0] * T::lit(cfg.null_rel_tol);
    let first_null = s.singulars.iter().position(|&v| v <= tol).unwrap_or(d);
    Ok(s.right.col_block(first_null, d))
}

/// A direction B in the cone with 𝕏B = 0 and 𝒫_A B ≠ 0, if one is found.
pub fn null_cone_direction<T: Real>(
    design: &DesignOperator<T>,
    cone: &ConeSpec<T>,
    stream: &RngStream,
    cfg: &NumericConfig,
) -> Result<Option<Vec<T>>> {
    let basis = null_basis(design, cfg)?;
    let q = basis.cols();
    if q == 0 || cone.projector.is_empty() {
        return Ok(None);
    }
    let d = cone.dim();
    let combine = |c: &[T]| -> Vec<T> { (0..d).map(|i| (0..q).map(|j| basis[(i, j)] * c[j]).sum()).collect() };
    let tol = T::lit(1e-9);
    let admissible = |z: &[T]| -> Result<bool> {
        let (a, c) = cone.split_norms(z)?;
        Ok(a > tol * norm2(z) && c <= cone.c0 * a * (T::one() + T::lit(1e-9)))
    };

    let mut rng = stream.generator();
    let mut candidates: Vec<Vec<T>> = (0..q).map(|j| basis.col(j)).collect();
    for _ in 0..200 {
        candidates.push(combine(&gauss_fill::<T, _>(&mut rng, q)));
    }
    // Greedy descent on ‖𝒫_A⊥z‖/‖𝒫_A z‖ within ker 𝕏 from the best candidates.
    let ratio = |z: &[T]| -> Result<T> {
        let (a, c) = cone.split_norms(z)?;
        Ok(if a > T::zero() { c / a } else { T::infinity() })
    };
    for z in &candidates {
        if admissible(z)? {
            return Ok(Some(z.clone()));
        }
    }
    let mut scored: Vec<(T, Vec<T>)> =
        candidates.into_iter().map(|z| Ok((ratio(&z)?, z))).collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    for (mut best, z) in scored.into_iter().take(5) {
        let mut coef: Vec<T> = (0..q).map(|j| dot(&basis.col(j), &z)).collect();
        let mut step = T::lit(0.1);
        for _ in 0..200 {
            let trial: Vec<T> = coef.iter().map(|&c| c + step * T::lit(rng.random::<f64>() - 0.5)).collect();
            let zt = combine(&trial);
            let r = ratio(&zt)?;
            if r < best {
                best = r;
                coef = trial;
                step = step * T::lit(1.5);
            } else {
                step = step * T::lit(0.7);
            }
            if admissible(&combine(&coef))? {
                return Ok(Some(combine(&coef)));
            }
        }
    }
    Ok(None)
}


/// Objective of a cone search and its gradient, both scale invariant.
trait ConeObjective<T>: Sync {
    fn value(&self, b: &[T]) -> Result<T>;
    fn gradient(&self, b: &[T]) -> Result<Vec<T>>;
}

struct MuObjective<'a, T> {
    design: &'a DesignOperator<T>,
    cone: &'a ConeSpec<T>,
}

impl<T: Real> ConeObjective<T> for MuObjective<'_, T> {
    /// log ‖𝒫_A B‖ − ½ log ‖𝕏B‖ₙ²
    fn value(&self, b: &[T]) -> Result<T> {
        let pa = self.cone.kind.norm(&self.cone.projector.support(b)?)?;
        let den = design_sq_norm(self.design, b)?;
        Ok(pa.ln() - den.ln() / T::lit(2.0))
    }

    fn gradient(&self, b: &[T]) -> Result<Vec<T>> {
        let pb = self.cone.projector.support(b)?;
        let pa = self.cone.kind.norm(&pb)?;
        let sub = self.cone.projector.support(&self.cone.kind.subgradient(&pb)?)?;
        let xb = self.design.apply(b)?;
        let n = T::from_count(self.design.n());
        let den = dot(&xb, &xb) / n;
        let xtxb = self.design.adjoint(&xb)?;
        Ok(sub.iter().zip(&xtxb).map(|(&s, &g)| s / pa - g / (n * den)).collect())
    }
}

struct KappaObjective<'a, T> {
    design: &'a DesignOperator<T>,
}

impl<T: Real> ConeObjective<T> for KappaObjective<'_, T> {
    /// −(log ‖𝕏B‖ₙ² − log |B|₂²), maximised.
    fn value(&self, b: &[T]) -> Result<T> {
        let num = design_sq_norm(self.design, b)?;
        Ok(dot(b, b).ln() - num.ln())
    }

    fn gradient(&self, b: &[T]) -> Result<Vec<T>> {
        let xb = self.design.apply(b)?;
        let n = T::from_count(self.design.n());
        let num = dot(&xb, &xb) / n;
        let xtxb = self.design.adjoint(&xb)?;
        let bb = dot(b, b);
        let two = T::lit(2.0);
        Ok(b.iter().zip(&xtxb).map(|(&x, &g)| two * x / bb - two * g / (n * num)).collect())
    }
}

fn normalized<T: Real>(mut b: Vec<T>) -> Vec<T> {
    let nb = norm2(&b);
    if nb > T::zero() {
        b.iter_mut().for_each(|x| *x /= nb);
    }
    b
}

/// Maximise `obj` over the cone: random sampling, then projected gradient
/// ascent with an adaptive step from the best samples. Returns the best
/// value and its argument.
fn cone_search<T: Real, O: ConeObjective<T>>(
    obj: &O,
    cone: &ConeSpec<T>,
    budget: &SearchBudget,
    stream: &RngStream,
) -> Result<(T, Vec<T>)> {
    let mut rng = stream.child(0).generator();
    let mut pool: Vec<(T, Vec<T>)> = Vec::with_capacity(budget.samples + 1);
    for _ in 0..budget.samples.max(1) {
        let b = cone.sample(&mut rng)?;
        let v = obj.value(&b)?;
        if v.is_nan() {
            continue;
        }
        pool.push((v, b));
    }
    pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    pool.truncate(budget.starts.max(1));

    let refined: Vec<Result<(T, Vec<T>)>> = pool
        .into_par_iter()
        .map(|(mut best, b)| {
            let mut b = normalized(b);
            let mut step = T::lit(0.1);
            for _ in 0..budget.iters {
                let g = obj.gradient(&b)?;
                let gn = norm2(&g);
                if !(gn > T::zero()) || !gn.is_finite() {
                    break;
                }
                let trial: Vec<T> = b.iter().zip(&g).map(|(&x, &gi)| x + step * gi / gn).collect();
                let trial = normalized(cone.retract(&trial)?);
                let v = obj.value(&trial)?;
                if v > best {
                    best = v;
                    b = trial;
                    step = (step * T::lit(1.5)).min(T::one());
                } else {
                    step = step * T::lit(0.5);
                    if step < T::lit(1e-12) {
                        break;
                    }
                }
            }
            Ok((best, b))
        })
        .collect();
    let mut out: Option<(T, Vec<T>)> = None;
    for r in refined {
        let (v, b) = r?;
        if out.as_ref().is_none_or(|(bv, _)| v > *bv) {
            out = Some((v, b));
        }
    }
    Ok(out.expect("at least one start"))
}

/// Best-found μ_{c₀}(A) = sup over the cone of ‖𝒫_A B‖ / ‖𝕏B‖ₙ.
pub fn compatibility_factor<T: Real>(
    design: &DesignOperator<T>,
    cone: &ConeSpec<T>,
    budget: &SearchBudget,
    stream: &RngStream,
) -> Result<CompatEstimate<T>> {
    if design.dim() != cone.dim() {
        return usage("cone and design dimensions differ");
    }
    let d = cone.dim();
    if cone.projector.is_empty() {
        return Ok(CompatEstimate {
            lower: T::zero(),
            upper: Some(T::zero()),
            infinite: false,
            method: CompatMethod::EmptySupport,
            argmax: vec![T::zero(); d],
            re_route: None,
        });
    }
    if let Some(z) = null_cone_direction(design, cone, &stream.child(1), &budget.numeric)? {
        return Ok(CompatEstimate {
            lower: T::infinity(),
            upper: Some(T::infinity()),
            infinite: true,
            method: CompatMethod::NullCone,
            argmax: z,
            re_route: Some(T::infinity()),
        });
    }
    let (log_mu, argmax) = cone_search(&MuObjective { design, cone }, cone, budget, &stream.child(2))?;
    let lower = log_mu.exp();
    let orthonormal = design.is_orthonormal_scaled(T::lit(1e-10));
    let re_route = if budget.re_route && !matches!(cone.kind, PenaltyKind::Nuclear { .. }) {
        let kappa2 = re_constant(design, cone, budget, &stream.child(3))?;
        Some((T::from_count(cone.projector.size()) / kappa2).sqrt())
    } else {
        None
    };
    let (upper, method) = if orthonormal {
        (Some(analytic_orthonormal_mu(cone)), CompatMethod::AnalyticOrthonormal)
    } else {
        (None, CompatMethod::Search)
    };
    Ok(CompatEstimate { lower, upper, infinite: false, method, argmax, re_route })
}

/// Best-found min over the cone of ‖𝕏δ‖ₙ² / |δ|₂² (the squared restricted
/// eigenvalue κ²). Exact 0 when the cone meets ker 𝕏.
pub fn re_constant<T: Real>(
    design: &DesignOperator<T>,
    cone: &ConeSpec<T>,
    budget: &SearchBudget,
    stream: &RngStream,
) -> Result<T> {
    if cone.projector.is_empty() {
        return usage("the restricted eigenvalue needs a nonempty support");
    }
    if design.dim() != cone.dim() {
        return usage("cone and design dimensions differ");
    }
    if null_cone_direction(design, cone, &stream.child(1), &budget.numeric)?.is_some() {
        return Ok(T::zero());
    }
    let (neg_log, _) = cone_search(&KappaObjective { design }, cone, budget, &stream.child(2))?;
    Ok((-neg_log).exp())
}

/// √(8s / (β₀²κ₀)), the small-ball route bound on μ.
pub fn mu_upper_bound_smallball<T: Real>(beta0: T, kappa0: T, s: usize) -> Result<T> {
    let unit = |x: T| x > T::zero() && x <= T::one();
    if !unit(beta0) || !unit(kappa0) {
        return domain(format!("small-ball parameters must lie in (0, 1], got beta0 = {beta0}, kappa0 = {kappa0}"));
    }
    if s == 0 {
        return domain("support size must be at least 1");
    }
    Ok((T::lit(8.0) * T::from_count(s) / (beta0 * beta0 * kappa0)).sqrt())
}

/// 32L²√s, the subgaussian route bound on μ.
pub fn mu_upper_bound_subgaussian<T: Real>(l: T, s: usize) -> Result<T> {
    if !(l > T::zero()) || s == 0 {
        return domain("need L > 0 and s >= 1");
    }
    Ok(T::lit(32.0) * l * l * T::from_count(s).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1_cone(d: usize, s: &[usize], c0: f64) -> ConeSpec<f64> {
        ConeSpec::new(PenaltyKind::L1, SupportProjector::coordinates(d, s).unwrap(), c0).unwrap()
    }

    #[test]
    fn membership() {
        let cone = l1_cone(2, &[0], 4.0);
        assert!(cone_contains(&cone, &[1.0, 4.0], 0.0).unwrap());
        assert!(!cone_contains(&cone, &[1.0, 4.01], 0.0).unwrap());
        assert!(cone_contains(&cone, &[1.0, 0.0], 0.0).unwrap());
        assert!(!cone_contains(&cone, &[0.0, 1.0], 0.0).unwrap());
        assert!(cone_contains(&cone, &[1.0], 0.0).is_err());
    }

    #[test]
    fn empty_support_has_zero_mu() {
        let d = DesignOperator::vector(Mat::<f64>::identity(3));
        let e = compatibility_factor(&d, &l1_cone(3, &[], 1.0), &SearchBudget::default(), &RngStream::new(0, 0))
            .unwrap();
        assert_eq!(e.lower, 0.0);
        assert_eq!(e.method, CompatMethod::EmptySupport);
    }

    #[test]
    fn duplicated_columns_are_degenerate() {
        let x = Mat::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 1.0], vec![0.0, 0.0, 3.0]]).unwrap();
        let d = DesignOperator::vector(x);
        let cone = l1_cone(3, &[0], 1.0);
        let budget = SearchBudget { samples: 200, ..SearchBudget::default() };
        let e = compatibility_factor(&d, &cone, &budget, &RngStream::new(1, 0)).unwrap();
        assert!(e.infinite);
        assert!(e.lower.is_infinite());
        assert!(cone_contains(&cone, &e.argmax, 1e-12).unwrap());
        assert_eq!(re_constant(&d, &cone, &budget, &RngStream::new(1, 0)).unwrap(), 0.0);
    }

    #[test]
    fn small_ball_routes() {
        let v = mu_upper_bound_smallball(1.0 / 2f64.sqrt(), 1.0 / 12.0, 1).unwrap();
        assert!((v - 192f64.sqrt()).abs() < 1e-12);
        let v4 = mu_upper_bound_smallball(1.0 / 2f64.sqrt(), 1.0 / 12.0, 4).unwrap();
        assert!((v4 - 2.0 * v).abs() < 1e-12);
        assert_eq!(mu_upper_bound_subgaussian(1.0, 4).unwrap(), 64.0);
        assert!(mu_upper_bound_smallball(0.0, 0.5, 1).is_err());
    }

    #[test]
    fn analytic_values() {
        assert_eq!(analytic_orthonormal_mu(&l1_cone(5, &[0, 3], 1.0)), 2f64.sqrt());
        let p = crate::penalties::support_of(&PenaltyKind::Nuclear { k: 3, m: 3 }, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e-12)
            .unwrap();
        let cone = ConeSpec::new(PenaltyKind::Nuclear { k: 3, m: 3 }, p, 1.0).unwrap();
        assert_eq!(analytic_orthonormal_mu(&cone), 2f64.sqrt());
    }
}
