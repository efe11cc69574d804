//! Small-ball certification: small-ball constants, the moment ratio L,
//! Gaussian mean width, Rademacher complexity of cone sections, the
//! restricted lower bound, and sample-size conditions.
//!
//! The supremum over the union of cones intersected with the sphere is
//! replaced by the supremum over its convex relaxation
//! `((1+c₀)√s·B_pen) ∩ B₂`, whose support function has a closed form.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Result};
use crate::model::DesignOperator;
use crate::numeric::{dot, gauss_fill, norm2, svd, Mat, RngStream};
use crate::penalties::PenaltyKind;
use crate::scalar::Real;

/// Law of the random element X of the design rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampler<T> {
    /// `scale ·` standard Gaussian vector in ℝ^dim.
    Gaussian { dim: usize, scale: T },
    /// `scale ·` vector of independent random signs.
    Rademacher { dim: usize, scale: T },
    /// The same vector every draw.
    Fixed(Vec<T>),
}

impl<T: Real> Sampler<T> {
    pub fn gaussian(dim: usize) -> Self {
        Sampler::Gaussian { dim, scale: T::one() }
    }

    pub fn rademacher(dim: usize) -> Self {
        Sampler::Rademacher { dim, scale: T::one() }
    }

    pub fn dim(&self) -> usize {
        match self {
            Sampler::Gaussian { dim, .. } | Sampler::Rademacher { dim, .. } => *dim,
            Sampler::Fixed(v) => v.len(),
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<T> {
        match self {
            Sampler::Gaussian { dim, scale } => gauss_fill::<T, _>(rng, *dim).into_iter().map(|x| x * *scale).collect(),
            Sampler::Rademacher { dim, scale } => {
                (0..*dim).map(|_| if rng.random::<bool>() { *scale } else { -*scale }).collect()
            }
            Sampler::Fixed(v) => v.clone(),
        }
    }

    fn draw_matrix<R: Rng>(&self, rng: &mut R, rows: usize) -> Vec<Vec<T>> {
        (0..rows).map(|_| self.draw(rng)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "l")]
pub enum Provenance<T> {
    Assumed,
    MomentDerived(T),
    Subgaussian(T),
}

/// Constants (β₀, κ₀) with P(|⟨X,B⟩| ≥ β₀|B|₂) ≥ κ₀ for every B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SmallBallParams<T> {
    pub beta0: T,
    pub kappa0: T,
    pub provenance: Provenance<T>,
}

impl<T: Real> SmallBallParams<T> {
    pub fn new(beta0: T, kappa0: T, provenance: Provenance<T>) -> Result<Self> {
        if !(beta0 > T::zero() && beta0 <= T::one()) || !(kappa0 > T::zero() && kappa0 < T::one()) {
            return domain(format!("need beta0 in (0, 1] and kappa0 in (0, 1), got {beta0}, {kappa0}"));
        }
        Ok(SmallBallParams { beta0, kappa0, provenance })
    }
}

/// β₀ = 1/√2, κ₀ = 1/(64L⁴).
pub fn smallball_params_from_l<T: Real>(l: T) -> Result<SmallBallParams<T>> {
    if !(l > T::zero()) || !l.is_finite() {
        return domain(format!("L must be positive, got {l}"));
    }
    SmallBallParams::new(T::FRAC_1_SQRT_2(), T::one() / (T::lit(64.0) * l.powi(4)), Provenance::MomentDerived(l))
}

/// Mean and standard error of a Monte Carlo average.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub mean: T,
    pub stderr: T,
    pub trials: usize,
}

impl<T: Real> Estimate<T> {
    /// Compensated summation over values in a fixed order, so the result does
    /// not depend on how the values were produced.
    pub fn from_values(values: &[T]) -> Self {
        let n = values.len();
        let mean = kahan_sum(values.iter().copied()) / T::from_count(n.max(1));
        let var = if n > 1 {
            kahan_sum(values.iter().map(|&v| (v - mean) * (v - mean))) / T::from_count(n - 1)
        } else {
            T::zero()
        };
        Estimate { mean, stderr: (var / T::from_count(n.max(1))).sqrt(), trials: n }
    }
}

fn kahan_sum<T: Real>(it: impl Iterator<Item = T>) -> T {
    let (mut sum, mut c) = (T::zero(), T::zero());
    for x in it {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Runs `f` once per trial on its own child stream, in parallel, and returns
/// the values in trial order.
fn per_trial<T: Real, F>(stream: &RngStream, trials: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).generator();
            f(&mut rng)
        })
        .collect()
}

fn unit_directions<T: Real>(dim: usize, random: usize, stream: &RngStream) -> Vec<Vec<T>> {
    let mut dirs: Vec<Vec<T>> = (0..dim)
        .map(|j| {
            let mut e = vec![T::zero(); dim];
            e[j] = T::one();
            e
        })
        .collect();
    let mut rng = stream.generator();
    for _ in 0..random {
        let mut g: Vec<T> = gauss_fill(&mut rng, dim);
        let ng = norm2(&g);
        if ng > T::zero() {
            g.iter_mut().for_each(|x| *x /= ng);
            dirs.push(g);
        }
    }
    dirs
}

/// Empirical P(|⟨X,B⟩| ≥ β₀|B|₂) for one direction B.
pub fn small_ball_frequency<T: Real>(sampler: &Sampler<T>, b: &[T], beta0: T, samples: usize, stream: &RngStream) -> Result<T> {
    if b.len() != sampler.dim() || samples == 0 {
        return usage("direction length must match the sampler and samples >= 1");
    }
    let thr = beta0 * norm2(b);
    let mut rng = stream.generator();
    let hits = (0..samples).filter(|_| dot(&sampler.draw(&mut rng), b).abs() >= thr).count();
    Ok(T::from_count(hits) / T::from_count(samples))
}

/// Minimum over the canonical basis and `directions` random unit vectors of
/// the small-ball frequency, all directions sharing one sample of X. This is
/// a sampled surrogate for the infimum over all directions.
pub fn estimate_small_ball<T: Real>(
    sampler: &Sampler<T>,
    beta0: T,
    directions: usize,
    samples: usize,
    stream: &RngStream,
) -> Result<T> {
    if samples == 0 {
        return usage("samples must be >= 1");
    }
    let dirs = unit_directions::<T>(sampler.dim(), directions, &stream.child(0));
    let mut rng = stream.child(1).generator();
    let xs = sampler.draw_matrix(&mut rng, samples);
    let mut worst = T::one();
    for b in &dirs {
        let hits = xs.iter().filter(|x| dot(x, b).abs() >= beta0).count();
        worst = worst.min(T::from_count(hits) / T::from_count(samples));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MomentReport<T> {
    /// max over directions of (Ê⟨X,B⟩⁴)^{1/4} / (2 (Ê⟨X,B⟩²)^{1/2}).
    pub l: T,
    /// max over directions of |Ê⟨X,B⟩² − 1|.
    pub isotropy_deviation: T,
}

fn moments_along<T: Real>(xs: &[Vec<T>], b: &[T]) -> (T, T) {
    let (m2, m4) = xs.iter().fold((T::zero(), T::zero()), |(m2, m4), x| {
        let z = dot(x, b);
        let z2 = z * z;
        (m2 + z2, m4 + z2 * z2)
    });
    let n = T::from_count(xs.len());
    (m2 / n, m4 / n)
}

fn ratio_of_moments<T: Real>(m2: T, m4: T) -> T {
    if m2 == T::zero() {
        return T::zero();
    }
    m4.powf(T::lit(0.25)) / (T::lit(2.0) * m2.sqrt())
}

/// Moment ratio along one direction.
pub fn moment_ratio_direction<T: Real>(sampler: &Sampler<T>, b: &[T], samples: usize, stream: &RngStream) -> Result<MomentReport<T>> {
    if b.len() != sampler.dim() || samples == 0 {
        return usage("direction length must match the sampler and samples >= 1");
    }
    let mut rng = stream.generator();
    let xs = sampler.draw_matrix(&mut rng, samples);
    let (m2, m4) = moments_along(&xs, b);
    Ok(MomentReport { l: ratio_of_moments(m2, m4), isotropy_deviation: (m2 - T::one()).abs() })
}

pub fn moment_ratio_l<T: Real>(
    sampler: &Sampler<T>,
    directions: usize,
    samples: usize,
    stream: &RngStream,
) -> Result<MomentReport<T>> {
    if samples == 0 {
        return usage("samples must be >= 1");
    }
    let dirs = unit_directions::<T>(sampler.dim(), directions, &stream.child(0));
    let mut rng = stream.child(1).generator();
    let xs = sampler.draw_matrix(&mut rng, samples);
    let mut report = MomentReport { l: T::zero(), isotropy_deviation: T::zero() };
    for b in &dirs {
        let (m2, m4) = moments_along(&xs, b);
        report.l = report.l.max(ratio_of_moments(m2, m4));
        report.isotropy_deviation = report.isotropy_deviation.max((m2 - T::one()).abs());
    }
    Ok(report)
}

/// The convex set `((1+c₀)√s·B_pen) ∩ B₂` in ℝ^dim.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSection<T> {
    pub kind: PenaltyKind,
    pub dim: usize,
    pub s: usize,
    pub c0: T,
}

impl<T: Real> ConeSection<T> {
    pub fn new(kind: PenaltyKind, dim: usize, s: usize, c0: T) -> Result<Self> {
        kind.check_dim(dim)?;
        if s == 0 {
            return usage("cone section needs s >= 1");
        }
        if !(c0 >= T::zero()) || !c0.is_finite() {
            return usage(format!("c0 must be finite and nonnegative, got {c0}"));
        }
        Ok(ConeSection { kind, dim, s, c0 })
    }

    /// Radius (1+c₀)√s of the penalty ball.
    pub fn radius(&self) -> T {
        (T::one() + self.c0) * T::from_count(self.s).sqrt()
    }

    /// Largest ‖v‖_pen/|v|₂ possible in this space: √p, √M or √min(k,m).
    fn max_norm_ratio(&self) -> T {
        T::from_count(match &self.kind {
            PenaltyKind::L1 => self.dim,
            PenaltyKind::Group(g) => g.len(),
            PenaltyKind::Nuclear { k, m } => (*k).min(*m),
        })
        .sqrt()
    }

    /// Whether the penalty constraint is inactive, i.e. the section is B₂.
    pub fn is_euclidean_ball(&self) -> bool {
        self.radius() >= self.max_norm_ratio()
    }
}

/// Magnitudes of `v` for the penalty: |vᵢ|, block norms or singular values.
fn magnitudes<T: Real>(kind: &PenaltyKind, v: &[T]) -> Result<Vec<T>> {
    kind.check_dim(v.len())?;
    Ok(match kind {
        PenaltyKind::L1 => v.iter().map(|x| x.abs()).collect(),
        PenaltyKind::Group(g) => g.iter().map(|r| norm2(&v[r])).collect(),
        PenaltyKind::Nuclear { k, m } => svd(&Mat::from_vec(*k, *m, v.to_vec())?)?.singulars,
    })
}

/// Threshold θ ≥ 0 with ‖(a−θ)₊‖₁ ≤ r·|(a−θ)₊|₂, the smallest such up to
/// bisection accuracy (the returned side is always feasible).
fn section_threshold<T: Real>(a: &[T], r: T) -> T {
    let ratio = |theta: T| -> T {
        let (mut l1, mut l2) = (T::zero(), T::zero());
        for &x in a {
            let y = x - theta;
            if y > T::zero() {
                l1 += y;
                l2 += y * y;
            }
        }
        if l2 == T::zero() {
            T::one()
        } else {
            l1 / l2.sqrt()
        }
    };
    if ratio(T::zero()) <= r {
        return T::zero();
    }
    let amax = a.iter().fold(T::zero(), |m, &x| m.max(x));
    let (mut lo, mut hi) = (T::zero(), amax);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if ratio(mid) <= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// sup over the section of ⟨v, t⟩.
pub fn support_function<T: Real>(v: &[T], section: &ConeSection<T>) -> Result<T> {
    if v.len() != section.dim {
        return usage(format!("vector of length {} for a section in dimension {}", v.len(), section.dim));
    }
    let a = magnitudes(&section.kind, v)?;
    let l2 = norm2(&a);
    if l2 == T::zero() {
        return Ok(T::zero());
    }
    let theta = section_threshold(&a, section.radius());
    if theta == T::zero() {
        return Ok(l2);
    }
    let shrunk: Vec<T> = a.iter().map(|&x| (x - theta).max(T::zero())).collect();
    let ns = norm2(&shrunk);
    if ns == T::zero() {
        // θ reached the top magnitude: the optimiser is the top direction.
        return Ok(a.iter().fold(T::zero(), |m, &x| m.max(x)));
    }
    Ok(dot(&a, &shrunk) / ns)
}

/// Sets whose Gaussian mean width can be estimated.
#[derive(Clone, Debug, PartialEq)]
pub enum WidthSet<T> {
    Section(ConeSection<T>),
    /// Euclidean unit ball in ℝ^dim.
    Ball2 { dim: usize },
    /// Unit ball of the penalty norm (support function = dual norm).
    PenaltyBall { kind: PenaltyKind, dim: usize },
    Singleton(Vec<T>),
}

impl<T: Real> WidthSet<T> {
    pub fn dim(&self) -> usize {
        match self {
            WidthSet::Section(s) => s.dim,
            WidthSet::Ball2 { dim } | WidthSet::PenaltyBall { dim, .. } => *dim,
            WidthSet::Singleton(b) => b.len(),
        }
    }

    pub fn support(&self, g: &[T]) -> Result<T> {
        match self {
            WidthSet::Section(s) => support_function(g, s),
            WidthSet::Ball2 { .. } => Ok(norm2(g)),
            WidthSet::PenaltyBall { kind, .. } => kind.dual_norm(g),
            WidthSet::Singleton(b) => Ok(dot(g, b)),
        }
    }
}

/// Monte Carlo estimate of E sup_{t∈set} ⟨G, t⟩ for standard Gaussian G.
pub fn mean_width<T: Real>(stream: &RngStream, set: &WidthSet<T>, trials: usize) -> Result<Estimate<T>> {
    if trials < 2 {
        return usage("mean width needs at least two trials");
    }
    let d = set.dim();
    let values = per_trial(stream, trials, |rng| set.support(&gauss_fill::<T, _>(rng, d)))?;
    Ok(Estimate::from_values(&values))
}

/// Monte Carlo estimate of E sup_{B∈section} |(1/n) Σ εᵢ⟨Xᵢ, B⟩| with fresh
/// design rows and signs in every trial.
pub fn rademacher_complexity<T: Real>(
    sampler: &Sampler<T>,
    section: &ConeSection<T>,
    n: usize,
    trials: usize,
    stream: &RngStream,
) -> Result<Estimate<T>> {
    if trials < 2 || n == 0 {
        return usage("need at least two trials and n >= 1");
    }
    if sampler.dim() != section.dim {
        return usage("sampler and section dimensions differ");
    }
    let d = section.dim;
    let inv_n = T::one() / T::from_count(n);
    let values = per_trial(stream, trials, |rng| {
        let mut w = vec![T::zero(); d];
        for _ in 0..n {
            let x = sampler.draw(rng);
            let eps = if rng.random::<bool>() { inv_n } else { -inv_n };
            for (wi, xi) in w.iter_mut().zip(&x) {
                *wi += eps * *xi;
            }
        }
        let neg: Vec<T> = w.iter().map(|&x| -x).collect();
        Ok(support_function(&w, section)?.max(support_function(&neg, section)?))
    })?;
    Ok(Estimate::from_values(&values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct LowerBoundCheck<T> {
    pub min_ratio: T,
    pub threshold: T,
    pub pass: bool,
    /// True when `min_ratio` is the exact minimum over the section.
    pub exact: bool,
}

/// √(β₀²κ₀/8)
pub fn restricted_threshold<T: Real>(params: &SmallBallParams<T>) -> T {
    (params.beta0 * params.beta0 * params.kappa0 / T::lit(8.0)).sqrt()
}

/// Minimum of ‖𝕏B‖ₙ/|B|₂ over sampled section elements, compared with
/// √(β₀²κ₀/8). When the penalty constraint of the section is inactive the
/// minimum is the exact smallest singular value of 𝕏/√n.
pub fn restricted_lower_bound_check<T: Real>(
    design: &DesignOperator<T>,
    section: &ConeSection<T>,
    params: &SmallBallParams<T>,
    samples: usize,
    stream: &RngStream,
) -> Result<LowerBoundCheck<T>> {
    if design.dim() != section.dim {
        return usage("design and section dimensions differ");
    }
    let threshold = restricted_threshold(params);
    let root_n = T::from_count(design.n()).sqrt();
    let ratio = |b: &[T]| -> Result<T> { Ok(norm2(&design.apply(b)?) / (root_n * norm2(b))) };

    let (min_ratio, exact) = if section.is_euclidean_ball() {
        let d = section.dim;
        let m = if design.n() >= d {
            svd(design.matrix())?.singulars[d - 1] / root_n
        } else {
            T::zero()
        };
        (m, true)
    } else {
        let mut best = T::infinity();
        for j in 0..section.dim {
            let mut e = vec![T::zero(); section.dim];
            e[j] = T::one();
            best = best.min(ratio(&e)?);
        }
        // Section maximisers of random Gaussian linear forms are extreme
        // directions of the section.
        let mut rng = stream.generator();
        for _ in 0..samples {
            let g: Vec<T> = gauss_fill(&mut rng, section.dim);
            let b = section_maximizer(&g, section)?;
            if norm2(&b) > T::zero() {
                best = best.min(ratio(&b)?);
            }
        }
        (best, false)
    };
    Ok(LowerBoundCheck { min_ratio, threshold, pass: min_ratio >= threshold, exact })
}

/// The element of the section attaining [`support_function`] for `v`.
pub fn section_maximizer<T: Real>(v: &[T], section: &ConeSection<T>) -> Result<Vec<T>> {
    let kind = &section.kind;
    let a = magnitudes(kind, v)?;
    let theta = section_threshold(&a, section.radius());
    let shrunk: Vec<T> = a.iter().map(|&x| (x - theta).max(T::zero())).collect();
    let ns = norm2(&shrunk);
    if ns == T::zero() {
        return Ok(vec![T::zero(); v.len()]);
    }
    Ok(match kind {
        PenaltyKind::L1 => v.iter().zip(&shrunk).map(|(&x, &s)| x.signum() * s / ns).collect(),
        PenaltyKind::Group(g) => {
            let mut out = vec![T::zero(); v.len()];
            for (k, r) in g.iter().enumerate() {
                if a[k] > T::zero() {
                    for j in r {
                        out[j] = v[j] / a[k] * shrunk[k] / ns;
                    }
                }
            }
            out
        }
        PenaltyKind::Nuclear { k, m } => {
            let mut s = svd(&Mat::from_vec(*k, *m, v.to_vec())?)?;
            s.singulars = shrunk.iter().map(|&x| x / ns).collect();
            s.reconstruct().into_vec()
        }
    })
}

/// Shape data for the sample-size conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleDims<T> {
    /// `p` may be any real ≥ s (the condition only uses log(ep/s)).
    L1 { p: T },
    Group { t: usize, m: usize },
    Nuclear { k: usize, m: usize },
}

/// ⌈C·(1+c₀)²·term⌉ with term s·log(ep/s)/(κ₀β₀)² (L1), s(T + log(M/s))
/// (group) or s·max(k, m) (nuclear), and C the override constant.
pub fn min_sample_size<T: Real>(
    dims: SampleDims<T>,
    s: usize,
    c0: T,
    params: &SmallBallParams<T>,
    constant: T,
) -> Result<usize> {
    if s == 0 {
        return domain("s must be at least 1");
    }
    if !(constant > T::zero()) || !(c0 >= T::zero()) {
        return domain("the constant must be positive and c0 nonnegative");
    }
    let sf = T::from_count(s);
    let term = match dims {
        SampleDims::L1 { p } => {
            let kb = params.kappa0 * params.beta0;
            sf * (T::one() + (p / sf).ln()) / (kb * kb)
        }
        SampleDims::Group { t, m } => sf * (T::from_count(t) + (T::from_count(m) / sf).ln()),
        SampleDims::Nuclear { k, m } => sf * T::from_count(k.max(m)),
    };
    let x = constant * (T::one() + c0) * (T::one() + c0) * term;
    // Absorb rounding noise so exact integers do not round up.
    let n = (x * (T::one() - T::lit(64.0) * T::epsilon())).ceil();
    n.to_usize().ok_or_else(|| crate::error::Error::Domain(format!("sample size {x} is not representable")))
}
