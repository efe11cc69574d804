//! Noise-level thresholds τ′ and the tuning parameter λ.

use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::model::{DesignOperator, Shape};
use crate::numeric::{gauss_fill, norm2, spectral_norm, svd, Mat, RngStream};
use crate::penalties::PenaltyKind;
use crate::scalar::Real;

/// Smallest `a` admitted by the random-design rules.
pub const RANDOM_DESIGN_FLOOR_L1: f64 = 20.0;
pub const RANDOM_DESIGN_FLOOR_NUCLEAR: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "a")]
pub enum LambdaRule<T> {
    /// λ = 10·τ′ for the given design.
    Deterministic,
    /// λ = a·σ·rate for i.i.d. Gaussian designs.
    RandomDesign(T),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Ingredients<T> {
    pub max_column_norm: Option<T>,
    pub psi_fr: Option<T>,
    pub psi_sp: Option<T>,
    pub phi_max: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TuningReport<T> {
    pub tau_prime: T,
    pub lambda: T,
    pub ingredients: Ingredients<T>,
    pub rule: LambdaRule<T>,
    pub warnings: Vec<String>,
}

fn check_sigma<T: Real>(sigma: T) -> Result<()> {
    if sigma >= T::zero() && sigma.is_finite() {
        Ok(())
    } else {
        domain(format!("sigma must be finite and nonnegative, got {sigma}"))
    }
}

/// max_j ‖𝕏e_j‖ₙ
pub fn max_column_norm<T: Real>(design: &DesignOperator<T>) -> T {
    let n = T::from_count(design.n());
    let x = design.matrix();
    let mut sq = vec![T::zero(); x.cols()];
    for i in 0..x.rows() {
        for (s, &v) in sq.iter_mut().zip(x.row(i)) {
            *s += v * v;
        }
    }
    sq.into_iter().fold(T::zero(), T::max).sqrt() / n.sqrt()
}

/// σ · max_j ‖𝕏e_j‖ₙ · √(2 log p / n)
pub fn tau_lasso<T: Real>(design: &DesignOperator<T>, sigma: T) -> Result<T> {
    let Shape::Vector { p } = *design.shape() else {
        return usage("tau_lasso needs a vector-shaped design");
    };
    check_sigma(sigma)?;
    let n = T::from_count(design.n());
    let rate = (T::lit(2.0) * T::from_count(p).ln() / n).sqrt();
    Ok(sigma * max_column_norm(design) * rate)
}

/// (ψ*_Fr, ψ*_sp): largest Frobenius and spectral norms of the column
/// blocks 𝕏_{G_k}, each divided by √n.
pub fn psi_star<T: Real>(design: &DesignOperator<T>) -> Result<(T, T)> {
    let Shape::Grouped(groups) = design.shape() else {
        return usage("group tuning needs a grouped design");
    };
    let root_n = T::from_count(design.n()).sqrt();
    let (mut fr, mut sp) = (T::zero(), T::zero());
    for r in groups.iter() {
        let block = design.matrix().col_block(r.start, r.end);
        fr = fr.max(block.frobenius_norm());
        sp = sp.max(spectral_norm(&block)?);
    }
    Ok((fr / root_n, sp / root_n))
}

/// (σ/√n)(ψ*_Fr + ψ*_sp·√(2 log 2M))
pub fn tau_group<T: Real>(design: &DesignOperator<T>, sigma: T) -> Result<T> {
    let (fr, sp) = psi_star(design)?;
    check_sigma(sigma)?;
    let Shape::Grouped(groups) = design.shape() else { unreachable!() };
    let m = T::from_count(groups.len());
    let root_n = T::from_count(design.n()).sqrt();
    Ok(sigma / root_n * (fr + sp * (T::lit(2.0) * (T::lit(2.0) * m).ln()).sqrt()))
}

/// Search settings for φ_max.
#[derive(Clone, Debug)]
pub struct PhiMaxOptions<T> {
    pub restarts: usize,
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> Default for PhiMaxOptions<T> {
    fn default() -> Self {
        PhiMaxOptions { restarts: 20, tol: T::lit(1e-8), max_iters: 1000 }
    }
}

/// max over unit u, v of √((1/n) Σᵢ (uᵀXᵢv)²), by alternating maximisation.
/// The result is the best value found, hence a lower bound; it is exact (1)
/// when 𝕏ᵀ𝕏 = n·I.
pub fn phi_max<T: Real>(design: &DesignOperator<T>, stream: &RngStream, opts: &PhiMaxOptions<T>) -> Result<T> {
    let Shape::Matrix { k, m } = *design.shape() else {
        return usage("phi_max needs a matrix-shaped design");
    };
    if design.is_orthonormal_scaled(T::lit(1e-12)) {
        return Ok(T::one());
    }
    let n = design.n();
    let x = design.matrix();
    // W(u) is n × m with rows Xᵢᵀu; W(v) is n × k with rows Xᵢv.
    let w_of_u = |u: &[T]| -> Result<Mat<T>> {
        let mut w = Mat::zeros(n, m);
        for i in 0..n {
            let row = x.row(i);
            for a in 0..k {
                let ua = u[a];
                for b in 0..m {
                    w[(i, b)] += ua * row[a * m + b];
                }
            }
        }
        Ok(w)
    };
    let w_of_v = |v: &[T]| -> Result<Mat<T>> {
        let mut w = Mat::zeros(n, k);
        for i in 0..n {
            let row = x.row(i);
            for a in 0..k {
                w[(i, a)] = (0..m).map(|b| row[a * m + b] * v[b]).sum();
            }
        }
        Ok(w)
    };
    let mut rng = stream.generator();
    let mut best = T::zero();
    for _ in 0..opts.restarts.max(1) {
        let mut u: Vec<T> = gauss_fill(&mut rng, k);
        let nu = norm2(&u);
        if nu == T::zero() {
            continue;
        }
        u.iter_mut().for_each(|x| *x /= nu);
        let mut val = T::zero();
        for _ in 0..opts.max_iters {
            let sv = svd(&w_of_u(&u)?)?;
            let v = sv.right.col(0);
            let su = svd(&w_of_v(&v)?)?;
            u = su.right.col(0);
            let next = su.singulars[0];
            let done = next - val <= opts.tol * next;
            val = next;
            if done {
                break;
            }
        }
        best = best.max(val);
    }
    Ok(best / T::from_count(n).sqrt())
}

/// 8σ·φ_max·√((k+m)/n)
pub fn tau_nuclear_from_phi<T: Real>(sigma: T, phi: T, k: usize, m: usize, n: usize) -> Result<T> {
    if k < 2 || m < 2 {
        return domain(format!("nuclear threshold needs k >= 2 and m >= 2, got {k} x {m}"));
    }
    check_sigma(sigma)?;
    Ok(T::lit(8.0) * sigma * phi * (T::from_count(k + m) / T::from_count(n)).sqrt())
}

pub fn tau_nuclear<T: Real>(
    design: &DesignOperator<T>,
    sigma: T,
    stream: &RngStream,
    opts: &PhiMaxOptions<T>,
) -> Result<T> {
    let Shape::Matrix { k, m } = *design.shape() else {
        return usage("tau_nuclear needs a matrix-shaped design");
    };
    if k < 2 || m < 2 {
        return domain(format!("nuclear threshold needs k >= 2 and m >= 2, got {k} x {m}"));
    }
    let phi = phi_max(design, stream, opts)?;
    tau_nuclear_from_phi(sigma, phi, k, m, design.n())
}

/// The minimal admissible λ = 10·τ′.
pub fn lambda_from_tau<T: Real>(tau_prime: T) -> Result<T> {
    if !(tau_prime >= T::zero()) {
        return domain(format!("tau' must be nonnegative, got {tau_prime}"));
    }
    Ok(T::lit(10.0) * tau_prime)
}

/// a·σ·√(2 log p / n) for L1, a·σ·√((k+m)/n) for nuclear; `d` is the
/// coefficient dimension.
pub fn lambda_random_design<T: Real>(kind: &PenaltyKind, sigma: T, n: usize, d: usize, a: T) -> Result<T> {
    check_sigma(sigma)?;
    let n = T::from_count(n);
    match kind {
        PenaltyKind::L1 => {
            if !(a >= T::lit(RANDOM_DESIGN_FLOOR_L1)) {
                return domain(format!("random-design LASSO needs a >= 20, got {a}"));
            }
            Ok(a * sigma * (T::lit(2.0) * T::from_count(d).ln() / n).sqrt())
        }
        PenaltyKind::Nuclear { k, m } => {
            if !(a >= T::lit(RANDOM_DESIGN_FLOOR_NUCLEAR)) {
                return domain(format!("random-design trace regression needs a >= 120, got {a}"));
            }
            Ok(a * sigma * (T::from_count(k + m) / n).sqrt())
        }
        PenaltyKind::Group(_) => {
            Err(Error::Unsupported("no random-design tuning rule is available for the group penalty".into()))
        }
    }
}

/// τ′ and λ for `kind` on `design` under `rule`.
pub fn tune<T: Real>(
    design: &DesignOperator<T>,
    kind: &PenaltyKind,
    sigma: T,
    rule: LambdaRule<T>,
    stream: &RngStream,
) -> Result<TuningReport<T>> {
    kind.check_dim(design.dim())?;
    let mut ingredients = Ingredients::default();
    let mut warnings = Vec::new();
    let tau_prime = match kind {
        PenaltyKind::L1 => {
            ingredients.max_column_norm = Some(max_column_norm(design));
            let p = design.dim();
            let n = T::from_count(design.n());
            check_sigma(sigma)?;
            sigma * max_column_norm(design) * (T::lit(2.0) * T::from_count(p).ln() / n).sqrt()
        }
        PenaltyKind::Group(groups) => {
            let grouped = DesignOperator::new(design.matrix().clone(), Shape::Grouped(groups.clone()))?;
            let (fr, sp) = psi_star(&grouped)?;
            ingredients.psi_fr = Some(fr);
            ingredients.psi_sp = Some(sp);
            if !groups.is_equal_sized() {
                warnings.push("groups have unequal sizes; the group threshold theory assumes equal sizes".into());
            }
            tau_group(&grouped, sigma)?
        }
        PenaltyKind::Nuclear { k, m } => {
            let shaped = DesignOperator::new(design.matrix().clone(), Shape::Matrix { k: *k, m: *m })?;
            let phi = phi_max(&shaped, stream, &PhiMaxOptions::default())?;
            ingredients.phi_max = Some(phi);
            tau_nuclear_from_phi(sigma, phi, *k, *m, design.n())?
        }
    };
    let lambda = match rule {
        LambdaRule::Deterministic => lambda_from_tau(tau_prime)?,
        LambdaRule::RandomDesign(a) => lambda_random_design(kind, sigma, design.n(), design.dim(), a)?,
    };
    Ok(TuningReport { tau_prime, lambda, ingredients, rule, warnings })
}
