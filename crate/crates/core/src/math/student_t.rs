//! Location-scale ("non-standard") Student-t: the prior predictive of a
//! normal model under a NormalGamma prior.

use serde::{Deserialize, Serialize};

use super::special::{student_t_cdf, student_t_ln_pdf, student_t_quantile};
use crate::error::{LapError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentT {
    pub mu: f64,
    /// Squared scale; the variance is `scale_sq · df / (df - 2)` for df > 2.
    pub scale_sq: f64,
    pub df: f64,
}

/// Builds the evaluator for `St(μ, scale², ν)`.
pub fn student_t_nonstandard(mu: f64, scale_sq: f64, df: f64) -> Result<StudentT> {
    StudentT::new(mu, scale_sq, df)
}

impl StudentT {
    pub fn new(mu: f64, scale_sq: f64, df: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(LapError::domain("student-t location must be finite"));
        }
        if !(scale_sq > 0.0 && scale_sq.is_finite()) {
            return Err(LapError::domain(format!("student-t scale_sq must be > 0 (got {scale_sq})")));
        }
        if !(df > 0.0 && df.is_finite()) {
            return Err(LapError::domain(format!("student-t df must be > 0 (got {df})")));
        }
        Ok(Self { mu, scale_sq, df })
    }

    pub fn scale(&self) -> f64 {
        self.scale_sq.sqrt()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let s = self.scale();
        student_t_ln_pdf((x - self.mu) / s, self.df) - s.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        student_t_cdf((x - self.mu) / self.scale(), self.df)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(LapError::domain(format!("probability must be in (0, 1) (got {p})")));
        }
        Ok(self.mu + student_t_quantile(p, self.df) * self.scale())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_location() {
        let t = student_t_nonstandard(5.0, 3.716, 10.0).unwrap();
        assert_eq!(t.quantile(0.5).unwrap(), 5.0);
    }

    #[test]
    fn upper_quartiles_from_reference_hyperparameters() {
        // scale² = β(γ+1)/(αγ) with γ = 10, α = 5
        let t = student_t_nonstandard(5.0, 16.89 * 11.0 / 50.0, 10.0).unwrap();
        assert!((t.quantile(0.75).unwrap() - 6.35).abs() < 0.01);
        let t = student_t_nonstandard(3.0, 38.0 * 11.0 / 50.0, 10.0).unwrap();
        assert!((t.quantile(0.75).unwrap() - 5.02).abs() < 0.01);
    }

    #[test]
    fn density_is_symmetric() {
        let t = student_t_nonstandard(-1.0, 2.0, 3.0).unwrap();
        for &d in &[0.1, 1.0, 7.5] {
            assert!((t.ln_pdf(-1.0 + d) - t.ln_pdf(-1.0 - d)).abs() < 1e-14);
            assert!((t.cdf(-1.0 + d) + t.cdf(-1.0 - d) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        let t = student_t_nonstandard(0.0, 1.0, 4.0).unwrap();
        assert!(t.quantile(0.0).is_err());
        assert!(t.quantile(1.0).is_err());
        assert!(student_t_nonstandard(0.0, 0.0, 4.0).is_err());
        assert!(student_t_nonstandard(0.0, 1.0, -1.0).is_err());
    }
}
