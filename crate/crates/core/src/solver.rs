//! Accelerated proximal gradient for `min ‖𝕏β − y‖ₙ² + λ‖β‖`, plus the
//! deterministic optimality certificate.

use crate::error::{usage, Error, Result};
use crate::model::{empirical_norm, DesignOperator, Instance};
use crate::numeric::{dot, gauss_sample, norm2, sub, NumericConfig, RngStream};
use crate::penalties::PenaltySpec;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step<T> {
    /// `0.99 / L` with `L = (2/n)‖𝕏‖²_sp` from power iteration.
    Auto,
    Fixed(T),
}

#[derive(Clone, Debug)]
pub struct SolveOptions<T> {
    pub max_iters: usize,
    pub rel_obj_tol: T,
    /// Required ℓ2 distance between β̂ and one more proximal gradient step.
    pub fixed_point_tol: T,
    /// Consecutive small relative changes needed before convergence is tested.
    pub stall_window: usize,
    pub step: Step<T>,
    pub restart: bool,
    /// Keep the objective value of every accepted iterate.
    pub record_trace: bool,
    pub numeric: NumericConfig,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            rel_obj_tol: T::lit(1e-10),
            fixed_point_tol: T::lit(1e-9).max(T::lit(100.0) * T::epsilon()),
            stall_window: 10,
            step: Step::Auto,
            restart: true,
            record_trace: false,
            numeric: NumericConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult<T> {
    pub beta_hat: Vec<T>,
    pub objective: T,
    pub iters: usize,
    pub converged: bool,
    /// Smallest certificate gap over the probes β = 0 and β = β* (if known).
    pub certificate_slack: T,
    /// Last fixed-point residual that was evaluated.
    pub fixed_point_residual: T,
    pub trace: Vec<T>,
}

/// ‖𝕏β − y‖ₙ² + λ‖β‖
pub fn objective<T: Real>(instance: &Instance<T>, penalty: &PenaltySpec<T>, beta: &[T]) -> Result<T> {
    let r = sub(&instance.design.apply(beta)?, &instance.y);
    let e = empirical_norm(&r)?;
    Ok(e * e + penalty.lambda * penalty.kind.norm(beta)?)
}

/// RHS − LHS of the almost-sure inequality satisfied by every minimiser β̂:
/// `(2/n)ξᵀ𝕏(β̂−β) + λ‖β‖ − λ‖β̂‖ − ‖𝕏(β̂−β)‖ₙ² − [‖𝕏β̂−f‖ₙ² − ‖𝕏β−f‖ₙ²]`.
pub fn certificate_gap<T: Real>(
    instance: &Instance<T>,
    penalty: &PenaltySpec<T>,
    beta_hat: &[T],
    beta: &[T],
) -> Result<T> {
    let d = instance.design.dim();
    if beta_hat.len() != d || beta.len() != d {
        return usage(format!("certificate needs vectors of length {d}"));
    }
    let n = T::from_count(instance.design.n());
    let diff = sub(beta_hat, beta);
    let x_diff = instance.design.apply(&diff)?;
    let noise_term = T::lit(2.0) * dot(&instance.noise, &x_diff) / n;
    let pen_term = penalty.lambda * (penalty.kind.norm(beta)? - penalty.kind.norm(beta_hat)?);
    let sq = |v: &[T]| -> Result<T> { empirical_norm(v).map(|e| e * e) };
    let bias_hat = sq(&sub(&instance.design.apply(beta_hat)?, &instance.f))?;
    let bias = sq(&sub(&instance.design.apply(beta)?, &instance.f))?;
    Ok(noise_term + pen_term - sq(&x_diff)? - (bias_hat - bias))
}

/// Lipschitz constant `(2/n)‖𝕏‖²_sp` of ∇g by power iteration on 𝕏ᵀ𝕏.
pub fn lipschitz_constant<T: Real>(design: &DesignOperator<T>, cfg: &NumericConfig) -> Result<T> {
    let d = design.dim();
    let mut v: Vec<T> = gauss_sample(&RngStream::new(0x5EED, 0), d);
    let mut est = T::zero();
    let tol = T::lit(cfg.power_tol);
    for _ in 0..cfg.power_iters.max(1) {
        let nv = norm2(&v);
        if nv == T::zero() {
            return Ok(T::zero());
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = design.adjoint(&design.apply(&v)?)?;
        let next = norm2(&w);
        let done = (next - est).abs() <= tol * next;
        est = next;
        v = w;
        if done {
            break;
        }
    }
    Ok(T::lit(2.0) * est / T::from_count(design.n()))
}

struct Problem<'a, T> {
    instance: &'a Instance<T>,
    penalty: &'a PenaltySpec<T>,
    n: T,
}

impl<T: Real> Problem<'_, T> {
    /// ∇g(β) = (2/n)𝕏ᵀ(𝕏β − y) together with g(β).
    fn grad(&self, beta: &[T]) -> Result<(Vec<T>, T)> {
        let r = sub(&self.instance.design.apply(beta)?, &self.instance.y);
        let g = dot(&r, &r) / self.n;
        let mut grad = self.instance.design.adjoint(&r)?;
        let c = T::lit(2.0) / self.n;
        grad.iter_mut().for_each(|x| *x *= c);
        Ok((grad, g))
    }

    fn objective(&self, beta: &[T]) -> Result<T> {
        let r = sub(&self.instance.design.apply(beta)?, &self.instance.y);
        Ok(dot(&r, &r) / self.n + self.penalty.lambda * self.penalty.kind.norm(beta)?)
    }

    fn prox_step(&self, at: &[T], grad: &[T], eta: T) -> Result<Vec<T>> {
        let v: Vec<T> = at.iter().zip(grad).map(|(&a, &g)| a - eta * g).collect();
        self.penalty.kind.prox(&v, eta * self.penalty.lambda)
    }

    fn fixed_point_residual(&self, beta: &[T], eta: T) -> Result<T> {
        let (grad, _) = self.grad(beta)?;
        Ok(norm2(&sub(&self.prox_step(beta, &grad, eta)?, beta)))
    }
}

fn check_finite<T: Real>(v: &[T], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite value in {what}")))
    }
}

/// FISTA from β = 0 with function-value restart: whenever the accelerated
/// step would increase the objective, momentum is reset and a plain proximal
/// gradient step is taken from the current iterate instead.
pub fn solve_penalized_ls<T: Real>(
    instance: &Instance<T>,
    penalty: &PenaltySpec<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveResult<T>> {
    let design = &instance.design;
    let d = design.dim();
    penalty.kind.check_dim(d)?;
    if instance.y.len() != design.n() {
        return usage("response length does not match the design");
    }
    if !(penalty.lambda >= T::zero()) {
        return usage("lambda must be nonnegative");
    }
    if !(opts.rel_obj_tol > T::zero()) || !(opts.fixed_point_tol > T::zero()) {
        return usage("solver tolerances must be positive");
    }
    check_finite(&instance.y, "response")?;

    let mut eta = match opts.step {
        Step::Fixed(e) if e > T::zero() && e.is_finite() => e,
        Step::Fixed(e) => return usage(format!("step must be positive, got {e}")),
        Step::Auto => {
            let l = lipschitz_constant(design, &opts.numeric)?;
            if l > T::zero() {
                T::lit(0.99) / l
            } else {
                T::one()
            }
        }
    };

    let prob = Problem { instance, penalty, n: T::from_count(design.n()) };
    let mut x = vec![T::zero(); d];
    let mut fx = prob.objective(&x)?;
    let mut y = x.clone();
    let mut t = T::one();
    let mut stall = 0;
    let mut converged = false;
    let mut iters = 0;
    let mut residual = T::infinity();
    let mut trace = if opts.record_trace { vec![fx] } else { Vec::new() };

    while iters < opts.max_iters {
        iters += 1;
        let (grad, _) = prob.grad(&y)?;
        let mut z = prob.prox_step(&y, &grad, eta)?;
        let mut fz = prob.objective(&z)?;
        if opts.restart && fz > fx {
            t = T::one();
            let (gx, _) = prob.grad(&x)?;
            // A proximal gradient step from x cannot increase F when η ≤ 1/L;
            // shrink η if the Lipschitz estimate was too optimistic. Increases
            // within rounding of F are noise and must not shrink η.
            let noise = T::lit(64.0) * T::epsilon() * fx.abs().max(T::min_positive_value());
            loop {
                z = prob.prox_step(&x, &gx, eta)?;
                fz = prob.objective(&z)?;
                if fz <= fx + noise || eta < T::epsilon() {
                    break;
                }
                eta = eta * T::lit(0.5);
            }
            if fz > fx + noise {
                z = x.clone();
                fz = fx;
            }
        }
        check_finite(&z, "iterate")?;
        if !fz.is_finite() {
            return Err(Error::Numerical("objective became non-finite".into()));
        }

        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        let mom = (t - T::one()) / t_next;
        y = z.iter().zip(&x).map(|(&zi, &xi)| zi + mom * (zi - xi)).collect();
        t = t_next;

        let rel = (fx - fz).abs() / fx.abs().max(T::min_positive_value());
        x = z;
        fx = fz;
        if opts.record_trace {
            trace.push(fx);
        }

        stall = if rel < opts.rel_obj_tol { stall + 1 } else { 0 };
        if stall >= opts.stall_window {
            residual = prob.fixed_point_residual(&x, eta)?;
            if residual < opts.fixed_point_tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        residual = prob.fixed_point_residual(&x, eta)?;
    }

    let mut certificate_slack = certificate_gap(instance, penalty, &x, &vec![T::zero(); d])?;
    if let Some(bs) = &instance.beta_star {
        certificate_slack = certificate_slack.min(certificate_gap(instance, penalty, &x, bs)?);
    }
    Ok(SolveResult {
        objective: fx,
        beta_hat: x,
        iters,
        converged,
        certificate_slack,
        fixed_point_residual: residual,
        trace,
    })
}
