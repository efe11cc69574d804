//! Observation model `y = f + ξ` with a linear design operator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::numeric::{dot, gauss_fill, norm2, Mat, RngStream};
use crate::penalties::{PenaltyKind, PenaltySpec};
use crate::scalar::Real;

/// Partition of `0..p` into contiguous half-open blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct Groups {
    blocks: Vec<(usize, usize)>,
}

impl Groups {
    pub fn new(blocks: Vec<(usize, usize)>) -> Result<Self> {
        let mut next = 0;
        for &(a, b) in &blocks {
            if a != next || b <= a {
                return usage(format!("groups must be non-empty contiguous blocks covering 0..p; bad block [{a}, {b})"));
            }
            next = b;
        }
        if blocks.is_empty() {
            return usage("at least one group is required");
        }
        Ok(Groups { blocks })
    }

    /// `count` blocks of `size` consecutive coordinates each.
    pub fn equal(count: usize, size: usize) -> Result<Self> {
        Self::new((0..count).map(|g| (g * size, (g + 1) * size)).collect())
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.1)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.blocks.iter().map(|&(a, b)| a..b)
    }

    pub fn block(&self, g: usize) -> std::ops::Range<usize> {
        let (a, b) = self.blocks[g];
        a..b
    }

    pub fn is_equal_sized(&self) -> bool {
        let first = self.blocks[0].1 - self.blocks[0].0;
        self.blocks.iter().all(|&(a, b)| b - a == first)
    }
}

impl TryFrom<Vec<(usize, usize)>> for Groups {
    type Error = Error;
    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Groups::new(v)
    }
}

impl From<Groups> for Vec<(usize, usize)> {
    fn from(g: Groups) -> Self {
        g.blocks
    }
}

/// How the coefficient space is organised.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Vector { p: usize },
    Grouped(Groups),
    /// `k × m` matrices flattened row-major.
    Matrix { k: usize, m: usize },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Vector { p } => *p,
            Shape::Grouped(g) => g.dim(),
            Shape::Matrix { k, m } => k * m,
        }
    }

    /// The penalty naturally attached to this shape.
    pub fn natural_penalty(&self) -> PenaltyKind {
        match self {
            Shape::Vector { .. } => PenaltyKind::L1,
            Shape::Grouped(g) => PenaltyKind::Group(g.clone()),
            Shape::Matrix { k, m } => PenaltyKind::Nuclear { k: *k, m: *m },
        }
    }
}

/// The linear map `β ↦ (⟨β, X₁⟩, …, ⟨β, Xₙ⟩)` stored as an `n × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignOperator<T> {
    matrix: Mat<T>,
    shape: Shape,
}

impl<T: Real> DesignOperator<T> {
    pub fn new(matrix: Mat<T>, shape: Shape) -> Result<Self> {
        if matrix.cols() != shape.dim() {
            return usage(format!("design has {} columns but shape needs {}", matrix.cols(), shape.dim()));
        }
        if matrix.rows() == 0 {
            return usage("design needs at least one row");
        }
        Ok(DesignOperator { matrix, shape })
    }

    pub fn vector(matrix: Mat<T>) -> Self {
        let p = matrix.cols();
        DesignOperator { matrix, shape: Shape::Vector { p } }
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// 𝕏β
    pub fn apply(&self, beta: &[T]) -> Result<Vec<T>> {
        self.matrix.matvec(beta)
    }

    /// 𝕏ᵀr
    pub fn adjoint(&self, r: &[T]) -> Result<Vec<T>> {
        self.matrix.tr_matvec(r)
    }

    /// Observation `i` reshaped as a `k × m` matrix (matrix shape only).
    pub fn observation_matrix(&self, i: usize) -> Result<Mat<T>> {
        match self.shape {
            Shape::Matrix { k, m } => Mat::from_vec(k, m, self.matrix.row(i).to_vec()),
            _ => usage("observation_matrix needs a matrix-shaped design"),
        }
    }

    /// Whether 𝕏ᵀ𝕏 = n·I to relative tolerance `tol`.
    pub fn is_orthonormal_scaled(&self, tol: T) -> bool {
        let g = self.matrix.gram();
        let n = T::from_count(self.n());
        (0..g.rows()).all(|a| {
            (0..g.cols()).all(|b| {
                let target = if a == b { n } else { T::zero() };
                (g[(a, b)] - target).abs() <= tol * n
            })
        })
    }
}

/// √((1/n) Σ uᵢ²)
pub fn empirical_norm<T: Real>(u: &[T]) -> Result<T> {
    if u.is_empty() {
        return usage("empirical norm of an empty vector");
    }
    Ok(norm2(u) / T::from_count(u.len()).sqrt())
}

/// 𝕏β
pub fn apply_design<T: Real>(design: &DesignOperator<T>, beta: &[T]) -> Result<Vec<T>> {
    design.apply(beta)
}

/// `sup_{‖v‖ ≤ 1} (1/n) ξᵀ𝕏v`, i.e. the dual penalty norm of `(1/n)𝕏ᵀξ`.
pub fn dual_norm_statistic<T: Real>(
    design: &DesignOperator<T>,
    xi: &[T],
    penalty: &PenaltySpec<T>,
) -> Result<T> {
    if xi.len() != design.n() {
        return usage(format!("noise length {} does not match n = {}", xi.len(), design.n()));
    }
    penalty.kind.check_dim(design.dim())?;
    let corr = design.adjoint(xi)?;
    Ok(penalty.kind.dual_norm(&corr)? / T::from_count(design.n()))
}

/// One draw of the regression model.
#[derive(Clone, Debug)]
pub struct Instance<T> {
    pub design: DesignOperator<T>,
    pub y: Vec<T>,
    pub f: Vec<T>,
    pub beta_star: Option<Vec<T>>,
    pub sigma: T,
    pub noise: Vec<T>,
}

impl<T: Real> Instance<T> {
    /// Instance with a known mean vector `f = 𝕏β*` and the given noise.
    pub fn from_parts(design: DesignOperator<T>, beta_star: Vec<T>, sigma: T, noise: Vec<T>) -> Result<Self> {
        let f = design.apply(&beta_star)?;
        if noise.len() != f.len() {
            return usage("noise length does not match n");
        }
        let y = f.iter().zip(&noise).map(|(&a, &b)| a + b).collect();
        Ok(Instance { design, y, f, beta_star: Some(beta_star), sigma, noise })
    }

    /// Instance from observed responses only; `f` is unknown and set to `y`.
    pub fn from_observations(design: DesignOperator<T>, y: Vec<T>) -> Result<Self> {
        if y.len() != design.n() {
            return usage(format!("response length {} does not match n = {}", y.len(), design.n()));
        }
        let noise = vec![T::zero(); y.len()];
        Ok(Instance { design, f: y.clone(), y, beta_star: None, sigma: T::zero(), noise })
    }
}

/// Distribution of the design rows.
#[derive(Clone, Debug)]
pub enum DesignLaw<T> {
    /// i.i.d. standard Gaussian entries.
    Gaussian,
    /// Gaussian draw whose columns are then orthonormalised and rescaled so
    /// that 𝕏ᵀ𝕏 = n·I (requires n ≥ d).
    OrthonormalGaussian,
    /// A deterministic design used as is.
    Fixed(DesignOperator<T>),
}

#[derive(Clone, Debug)]
pub struct InstanceSpec<T> {
    pub law: DesignLaw<T>,
    pub n: usize,
    pub shape: Shape,
    /// Active coordinates, active blocks, or rank, depending on the shape.
    pub sparsity: usize,
    pub amplitude: T,
    pub sigma: T,
}

/// Stream `stream.child(0)` draws the design, `child(1)` the signal and
/// `child(2)` the noise, so the noise is independent of everything else.
pub fn generate_instance<T: Real>(stream: &RngStream, spec: &InstanceSpec<T>) -> Result<Instance<T>> {
    let d = spec.shape.dim();
    if spec.n == 0 || d == 0 {
        return Err(Error::Config("n and the dimension must be positive".into()));
    }
    if !(spec.sigma >= T::zero()) || !spec.sigma.is_finite() || !spec.amplitude.is_finite() {
        return Err(Error::Config("sigma must be finite and nonnegative".into()));
    }
    let max_sparsity = match &spec.shape {
        Shape::Vector { p } => *p,
        Shape::Grouped(g) => g.len(),
        Shape::Matrix { k, m } => (*k).min(*m),
    };
    if spec.sparsity > max_sparsity {
        return Err(Error::Config(format!("sparsity {} exceeds the maximum {max_sparsity}", spec.sparsity)));
    }

    let design = draw_design(&stream.child(0), spec)?;
    let beta_star = draw_signal(&stream.child(1), &spec.shape, spec.sparsity, spec.amplitude);
    let noise = if spec.sigma == T::zero() {
        vec![T::zero(); spec.n]
    } else {
        let mut rng = stream.child(2).generator();
        gauss_fill::<T, _>(&mut rng, spec.n).into_iter().map(|z| z * spec.sigma).collect()
    };
    Instance::from_parts(design, beta_star, spec.sigma, noise)
}

fn draw_design<T: Real>(stream: &RngStream, spec: &InstanceSpec<T>) -> Result<DesignOperator<T>> {
    let d = spec.shape.dim();
    match &spec.law {
        DesignLaw::Fixed(design) => {
            if design.n() != spec.n || design.shape() != &spec.shape {
                return Err(Error::Config("fixed design does not match n/shape".into()));
            }
            Ok(design.clone())
        }
        DesignLaw::Gaussian => {
            let mut rng = stream.generator();
            let m = Mat::from_vec(spec.n, d, gauss_fill(&mut rng, spec.n * d))?;
            DesignOperator::new(m, spec.shape.clone())
        }
        DesignLaw::OrthonormalGaussian => {
            if spec.n < d {
                return Err(Error::Config(format!("orthonormal design needs n >= d (n = {}, d = {d})", spec.n)));
            }
            let mut rng = stream.generator();
            let m = Mat::from_vec(spec.n, d, gauss_fill(&mut rng, spec.n * d))?;
            DesignOperator::new(orthonormalize_columns(&m)?, spec.shape.clone())
        }
    }
}

/// Modified Gram–Schmidt (two passes) on the columns, rescaled so every
/// column has empirical norm one.
pub fn orthonormalize_columns<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let (n, d) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<T>> = (0..d).map(|j| a.col(j)).collect();
    for j in 0..d {
        for _ in 0..2 {
            for i in 0..j {
                let c = dot(&cols[i], &cols[j]);
                let (lo, hi) = cols.split_at_mut(j);
                for (x, &q) in hi[0].iter_mut().zip(&lo[i]) {
                    *x -= c * q;
                }
            }
        }
        let nrm = norm2(&cols[j]);
        if nrm <= T::epsilon() * T::from_count(n) {
            return Err(Error::Numerical("design columns are linearly dependent".into()));
        }
        cols[j].iter_mut().for_each(|x| *x /= nrm);
    }
    let root_n = T::from_count(n).sqrt();
    let mut out = Mat::zeros(n, d);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[(i, j)] = c[i] * root_n;
        }
    }
    Ok(out)
}

fn signed<T: Real, R: Rng>(rng: &mut R, amplitude: T) -> T {
    if rng.random::<bool>() {
        amplitude
    } else {
        -amplitude
    }
}

fn draw_signal<T: Real>(stream: &RngStream, shape: &Shape, s: usize, amplitude: T) -> Vec<T> {
    let mut rng = stream.generator();
    let d = shape.dim();
    let mut beta = vec![T::zero(); d];
    if s == 0 {
        return beta;
    }
    match shape {
        Shape::Vector { p } => {
            let mut idx = sample_indices(&mut rng, *p, s).into_vec();
            idx.sort_unstable();
            for j in idx {
                beta[j] = signed(&mut rng, amplitude);
            }
        }
        Shape::Grouped(groups) => {
            let mut idx = sample_indices(&mut rng, groups.len(), s).into_vec();
            idx.sort_unstable();
            for g in idx {
                for j in groups.block(g) {
                    beta[j] = signed(&mut rng, amplitude);
                }
            }
        }
        Shape::Matrix { k, m } => {
            let u = random_orthonormal::<T, _>(&mut rng, *k, s);
            let v = random_orthonormal::<T, _>(&mut rng, *m, s);
            for r in 0..s {
                for i in 0..*k {
                    for j in 0..*m {
                        beta[i * m + j] += amplitude * u[(i, r)] * v[(j, r)];
                    }
                }
            }
        }
    }
    beta
}

/// `dim × r` matrix with orthonormal columns drawn from the Haar measure.
pub(crate) fn random_orthonormal<T: Real, R: Rng>(rng: &mut R, dim: usize, r: usize) -> Mat<T> {
    loop {
        let g = Mat::from_vec(dim, r, gauss_fill(rng, dim * r)).expect("finite draws");
        if let Ok(q) = orthonormalize_columns(&g) {
            return q.scaled(T::one() / T::from_count(dim).sqrt());
        }
    }
}

// ---------------------------------------------------------------------------
// CSV + JSON sidecar persistence

#[derive(Serialize, Deserialize, Debug, PartialEq)]
#[serde(tag = "shape", rename_all = "lowercase")]
enum Sidecar {
    Vector { p: usize, n: usize },
    Grouped { groups: Groups, n: usize },
    Matrix { k: usize, m: usize, n: usize },
}

/// Sidecar path for a design CSV: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_design(design: &DesignOperator<f64>, csv_path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::CRLF)
        .from_path(csv_path)?;
    for i in 0..design.n() {
        w.write_record(design.matrix().row(i).iter().map(|x| format_real(*x)))?;
    }
    w.flush()?;
    let n = design.n();
    let sidecar = match design.shape() {
        Shape::Vector { p } => Sidecar::Vector { p: *p, n },
        Shape::Grouped(g) => Sidecar::Grouped { groups: g.clone(), n },
        Shape::Matrix { k, m } => Sidecar::Matrix { k: *k, m: *m, n },
    };
    fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_design(csv_path: &Path) -> Result<DesignOperator<f64>> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    let rows = read_csv_rows(csv_path)?;
    let (shape, n) = match sidecar {
        Sidecar::Vector { p, n } => (Shape::Vector { p }, n),
        Sidecar::Grouped { groups, n } => (Shape::Grouped(groups), n),
        Sidecar::Matrix { k, m, n } => (Shape::Matrix { k, m }, n),
    };
    if rows.len() != n {
        return Err(Error::Config(format!("sidecar says n = {n} but the CSV has {} rows", rows.len())));
    }
    let m = Mat::from_rows(&rows).map_err(|e| Error::Config(e.to_string()))?;
    DesignOperator::new(m, shape).map_err(|e| Error::Config(e.to_string()))
}

/// One value per line.
pub fn load_vector(csv_path: &Path) -> Result<Vec<f64>> {
    let rows = read_csv_rows(csv_path)?;
    if rows.iter().any(|r| r.len() != 1) {
        return Err(Error::Config("vector CSV must have exactly one column".into()));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

pub fn save_vector(v: &[f64], csv_path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::CRLF)
        .from_path(csv_path)?;
    for x in v {
        w.write_record([format_real(*x)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// 17 significant digits, '.' decimal separator.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}
