//! Right-hand sides of the sharp oracle inequalities, in deviation and in
//! expectation.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numeric::normal_quantile;
use crate::scalar::Real;

/// Where μ₄ came from. Only analytic values make a coverage run a true check
/// of the inequality; the others are indicative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuSource {
    #[default]
    AnalyticOrthonormal,
    Estimated,
    SmallballBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BoundInputs<T> {
    pub lambda: T,
    /// `None` encodes μ₄ = ∞.
    pub mu4: Option<T>,
    pub mu_source: MuSource,
    pub sigma: T,
    pub n: usize,
    pub delta: T,
    /// ‖𝕏β − f‖ₙ² for the chosen oracle β.
    pub bias: T,
}

impl<T: Real> BoundInputs<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return domain(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.n == 0 {
            return domain("n must be at least 1");
        }
        let finite = [self.lambda, self.sigma, self.bias].iter().all(|x| x.is_finite() && *x >= T::zero());
        if !finite || self.mu4.is_some_and(|m| !m.is_finite() || m < T::zero()) {
            return domain("lambda, sigma, bias and mu4 must be finite and nonnegative");
        }
        Ok(())
    }

    fn mu2(&self) -> T {
        self.mu4.map_or(T::infinity(), |m| m * m)
    }

    fn quantile_sq(&self) -> Result<T> {
        let q = normal_quantile(1.0 - self.delta.as_f64())?;
        Ok(T::lit(q * q))
    }
}

/// bias + (16/25)λ²μ₄² + 16σ²(Φ⁻¹(1−δ))²/n, infinite when μ₄ is.
pub fn oracle_rhs_deviation<T: Real>(b: &BoundInputs<T>) -> Result<T> {
    b.validate()?;
    if b.mu4.is_none() {
        return Ok(T::infinity());
    }
    let n = T::from_count(b.n);
    Ok(b.bias + T::lit(16.0 / 25.0) * b.lambda * b.lambda * b.mu2() + T::lit(16.0) * b.sigma * b.sigma * b.quantile_sq()? / n)
}

/// 4λμ₄² + 20σ²(Φ⁻¹(1−δ))²/(nλ).
pub fn estimation_rhs_deviation<T: Real>(b: &BoundInputs<T>) -> Result<T> {
    b.validate()?;
    if b.lambda <= T::zero() {
        return domain("the estimation bound needs lambda > 0");
    }
    if b.mu4.is_none() {
        return Ok(T::infinity());
    }
    let n = T::from_count(b.n);
    Ok(T::lit(4.0) * b.lambda * b.mu2() + T::lit(20.0) * b.sigma * b.sigma * b.quantile_sq()? / (n * b.lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExpectationRhs<T> {
    pub prediction: T,
    /// `None` when λ = 0.
    pub estimation: Option<T>,
}

/// prediction = bias + (16/25)λ²μ₄² + 16σ²/n,
/// estimation = 8λμ₄² + 20σ/(λn).
pub fn oracle_rhs_expectation<T: Real>(b: &BoundInputs<T>) -> Result<ExpectationRhs<T>> {
    b.validate()?;
    let n = T::from_count(b.n);
    if b.mu4.is_none() {
        let estimation = (b.lambda > T::zero()).then(T::infinity);
        return Ok(ExpectationRhs { prediction: T::infinity(), estimation });
    }
    let mu2 = b.mu2();
    let prediction = b.bias + T::lit(16.0 / 25.0) * b.lambda * b.lambda * mu2 + T::lit(16.0) * b.sigma * b.sigma / n;
    let estimation = (b.lambda > T::zero()).then(|| T::lit(8.0) * b.lambda * mu2 + T::lit(20.0) * b.sigma / (b.lambda * n));
    Ok(ExpectationRhs { prediction, estimation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(lambda: f64, mu4: f64, sigma: f64, n: usize, delta: f64, bias: f64) -> BoundInputs<f64> {
        BoundInputs { lambda, mu4: Some(mu4), mu_source: MuSource::AnalyticOrthonormal, sigma, n, delta, bias }
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(oracle_rhs_deviation(&inputs(0.0, 2.0, 0.0, 10, 0.1, 0.7)).unwrap(), 0.7);
        let b = inputs(1.5, 2.0, 1.0, 10, 0.5, 0.0);
        assert!((oracle_rhs_deviation(&b).unwrap() - 0.64 * 2.25 * 4.0).abs() < 1e-12);
        assert!((estimation_rhs_deviation(&b).unwrap() - 4.0 * 1.5 * 4.0).abs() < 1e-12);
        assert!(estimation_rhs_deviation(&inputs(0.0, 1.0, 1.0, 10, 0.1, 0.0)).is_err());
        assert!(oracle_rhs_deviation(&inputs(1.0, 1.0, 1.0, 10, 1.0, 0.0)).is_err());
        let e = oracle_rhs_expectation(&inputs(0.0, 1.0, 1.0, 10, 0.1, 0.0)).unwrap();
        assert!(e.estimation.is_none());
    }

    #[test]
    fn infinite_mu() {
        let mut b = inputs(1.0, 1.0, 1.0, 10, 0.1, 0.0);
        b.mu4 = None;
        assert!(oracle_rhs_deviation(&b).unwrap().is_infinite());
        assert!(estimation_rhs_deviation(&b).unwrap().is_infinite());
        assert!(oracle_rhs_expectation(&b).unwrap().prediction.is_infinite());
    }
}
