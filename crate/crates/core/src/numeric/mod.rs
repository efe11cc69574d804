//! Dense linear algebra, SVD, Gaussian CDF/quantile and seeded sampling.

mod mat;
mod normal;
mod rng;
mod svd;

pub use mat::{add, axpy, dot, norm1, norm2, norm_inf, scale, sub, Mat};
pub use normal::{normal_cdf, normal_quantile};
pub use rng::{gauss_fill, gauss_sample, RngStream};
pub use svd::{spectral_norm, svd, svd_with, SvdResult};

/// Tolerances for the numerical substrate, gathered in one record.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericConfig {
    /// Jacobi sweep cap is `svd_sweep_factor · min(rows, cols)`.
    pub svd_sweep_factor: usize,
    pub power_iters: usize,
    pub power_tol: f64,
    /// Support detection threshold relative to the largest magnitude.
    pub support_rel_tol: f64,
    /// Singular values below this fraction of the largest count as zero
    /// when extracting null spaces.
    pub null_rel_tol: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig { svd_sweep_factor: 100, power_iters: 50, power_tol: 1e-10, support_rel_tol: 1e-8, null_rel_tol: 1e-10 }
    }
}
