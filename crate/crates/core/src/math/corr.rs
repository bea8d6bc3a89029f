//! Correlation matrices: concordance and Fisher-z conversions, the
//! unconstrained parameterization through canonical partial correlations,
//! and the LKJ density.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::special::{beta_ln_pdf, ln_sech2};
use crate::error::{LapError, Result};

/// Pairs `(i, j)`, `i < j`, in the order 12, 13, 23, 14, 24, 34, ...
pub fn pair_list(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for j in 1..k {
        for i in 0..j {
            out.push((i, j));
        }
    }
    out
}

pub fn n_pairs(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Concordance probability to correlation, `r = sin(pi (p - 1/2))`.
pub fn concordance_to_correlation(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(LapError::domain(format!("concordance must be in (0, 1) (got {p})")));
    }
    Ok((PI * (p - 0.5)).sin())
}

pub fn correlation_to_concordance(r: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(LapError::domain(format!("correlation must be in [-1, 1] (got {r})")));
    }
    Ok(0.5 + r.asin() / PI)
}

pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r > -1.0 && r < 1.0) {
        return Err(LapError::domain(format!("correlation must be in (-1, 1) (got {r})")));
    }
    Ok(r.atanh())
}

pub fn fisher_z_inv(z: f64) -> f64 {
    z.tanh()
}

/// Standard error of Fisher's z for an equivalent sample size `n_e`.
pub fn fisher_se(n_e: f64) -> Result<f64> {
    if !(n_e > 3.0) || !n_e.is_finite() {
        return Err(LapError::domain(format!("equivalent sample size must exceed 3 (got {n_e})")));
    }
    Ok(1.0 / (n_e - 3.0).sqrt())
}

/// A symmetric positive-definite matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    m: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let k = m.nrows();
        if k < 2 || m.ncols() != k {
            return Err(LapError::domain("correlation matrix must be square with dimension >= 2"));
        }
        for i in 0..k {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(LapError::domain(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(LapError::domain(format!("entries ({j}, {i}) are not symmetric")));
                }
                if a.abs() > 1.0 {
                    return Err(LapError::domain(format!("entry ({j}, {i}) = {a} outside [-1, 1]")));
                }
            }
        }
        let mut m = m;
        for i in 0..k {
            m[(i, i)] = 1.0;
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        if m.clone().cholesky().is_none() {
            return Err(LapError::NotPositiveDefinite);
        }
        Ok(Self { m })
    }

    /// Builds from off-diagonal entries in [`pair_list`] order.
    pub fn from_entries(k: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n_pairs(k) {
            return Err(LapError::domain(format!(
                "expected {} correlations for dimension {k}, got {}",
                n_pairs(k),
                entries.len()
            )));
        }
        let mut m = DMatrix::identity(k, k);
        for (&(i, j), &r) in pair_list(k).iter().zip(entries) {
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
        Self::new(m)
    }

    pub fn identity(k: usize) -> Self {
        Self { m: DMatrix::identity(k, k) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn entries(&self) -> Vec<f64> {
        pair_list(self.dim()).into_iter().map(|(i, j)| self.m[(i, j)]).collect()
    }

    pub fn log_det(&self) -> f64 {
        match self.m.clone().cholesky() {
            Some(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.m.clone().symmetric_eigenvalues().min()
    }
}

impl Serialize for CorrelationMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> =
            (0..self.dim()).map(|i| self.m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CorrelationMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(serde::de::Error::custom("correlation matrix must be square"));
        }
        let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        CorrelationMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Unconstrained coordinates for a `k x k` correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedCorrVector {
    pub k: usize,
    pub values: Vec<f64>,
}

impl UnconstrainedCorrVector {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k < 2 || values.len() != n_pairs(k) {
            return Err(LapError::domain(format!(
                "dimension {k} needs {} unconstrained values, got {}",
                n_pairs(k),
                values.len()
            )));
        }
        Ok(Self { k, values })
    }
}

/// Fills `out` (pair order) with the correlations for unconstrained `y`
/// and returns the log absolute Jacobian of the map.
///
/// Each `y` is squashed to a canonical partial correlation `z = tanh(y)`;
/// row `i` of the Cholesky factor is `L_ij = z_ij sqrt(1 - sum_{m<j} L_im^2)`.
pub fn corr_constrain(k: usize, y: &[f64], out: &mut [f64]) -> f64 {
    let mut l = vec![0.0; k * k];
    let mut ln_diag = vec![0.0; k];
    l[0] = 1.0;
    let mut log_jac = 0.0;
    for i in 1..k {
        let mut ln_rem: f64 = 0.0;
        for j in 0..i {
            let yv = y[i * (i - 1) / 2 + j];
            let z = yv.tanh();
            let ls = ln_sech2(yv);
            l[i * k + j] = z * (0.5 * ln_rem).exp();
            log_jac += 0.5 * ln_rem + ls;
            ln_rem += ls;
        }
        l[i * k + i] = (0.5 * ln_rem).exp();
        ln_diag[i] = 0.5 * ln_rem;
    }
    for (j, d) in ln_diag.iter().enumerate() {
        log_jac += (k - 1 - j) as f64 * d;
    }
    let mut idx = 0;
    for j in 1..k {
        for i in 0..j {
            let mut s = 0.0;
            for m in 0..=i {
                s += l[i * k + m] * l[j * k + m];
            }
            out[idx] = s.clamp(-1.0, 1.0);
            idx += 1;
        }
    }
    log_jac
}

/// Correlation matrix and log-Jacobian for an unconstrained vector.
pub fn corr_transform(v: &UnconstrainedCorrVector) -> Result<(CorrelationMatrix, f64)> {
    if v.values.iter().any(|x| !x.is_finite()) {
        return Err(LapError::domain("unconstrained values must be finite"));
    }
    let mut entries = vec![0.0; v.values.len()];
    let log_jac = corr_constrain(v.k, &v.values, &mut entries);
    let m = CorrelationMatrix::from_entries(v.k, &entries)?;
    Ok((m, log_jac))
}

pub fn corr_inverse(m: &CorrelationMatrix) -> Result<UnconstrainedCorrVector> {
    let k = m.dim();
    let ch = m.matrix().clone().cholesky().ok_or(LapError::NotPositiveDefinite)?;
    let l = ch.l();
    let mut values = vec![0.0; n_pairs(k)];
    for i in 1..k {
        let mut ln_rem: f64 = 0.0;
        for j in 0..i {
            let z = l[(i, j)] / (0.5 * ln_rem).exp();
            if !(z.abs() < 1.0) {
                return Err(LapError::NotPositiveDefinite);
            }
            values[i * (i - 1) / 2 + j] = z.atanh();
            ln_rem += (-z * z).ln_1p();
        }
    }
    UnconstrainedCorrVector::new(k, values)
}

/// Unnormalized LKJ log density, `(eta - 1) log det(S)`.
pub fn lkj_log_density(m: &CorrelationMatrix, eta: f64) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(LapError::domain(format!("LKJ shape must be > 0 (got {eta})")));
    }
    if eta == 1.0 {
        return Ok(0.0);
    }
    Ok((eta - 1.0) * m.log_det())
}

/// Marginal density of a single correlation under LKJ(eta) in dimension
/// `k`: `(r + 1) / 2 ~ Beta(a, a)` with `a = eta - 1 + k / 2`.
pub fn lkj_marginal_log_density(r: f64, eta: f64, k: usize) -> Result<f64> {
    let a = eta - 1.0 + k as f64 / 2.0;
    if !(a > 0.0) || !eta.is_finite() {
        return Err(LapError::domain(format!(
            "LKJ marginal needs eta - 1 + k/2 > 0 (eta = {eta}, k = {k})"
        )));
    }
    if !(r > -1.0 && r < 1.0) {
        return Err(LapError::domain(format!("correlation must be in (-1, 1) (got {r})")));
    }
    Ok(beta_ln_pdf(0.5 * (r + 1.0), a, a) - std::f64::consts::LN_2)
}

/// Exact LKJ(eta) draw via independent Beta partial correlations.
pub fn lkj_sample<R: Rng + ?Sized>(k: usize, eta: f64, rng: &mut R) -> Result<CorrelationMatrix> {
    if !(eta > 0.0) || k < 2 {
        return Err(LapError::domain("LKJ sampling needs eta > 0 and k >= 2"));
    }
    let mut y = vec![0.0; n_pairs(k)];
    for i in 1..k {
        for j in 0..i {
            let b = eta + (k - 2 - j) as f64 / 2.0;
            let dist = Beta::new(b, b).map_err(|e| LapError::Numerical(e.to_string()))?;
            let z: f64 = (2.0 * dist.sample(rng) - 1.0).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
            y[i * (i - 1) / 2 + j] = z.atanh();
        }
    }
    let mut entries = vec![0.0; y.len()];
    corr_constrain(k, &y, &mut entries);
    CorrelationMatrix::from_entries(k, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn concordance_examples() {
        assert!((concordance_to_correlation(0.75).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(concordance_to_correlation(0.5).unwrap().abs() < 1e-15);
        assert!(concordance_to_correlation(1.0).is_err());
        assert!(concordance_to_correlation(1.2).is_err());
        assert!((correlation_to_concordance(0.5f64.sqrt()).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn fisher_examples() {
        assert!((fisher_se(10.0).unwrap() - 1.0 / 7f64.sqrt()).abs() < 1e-15);
        assert!(fisher_se(3.0).is_err());
        assert!(fisher_z(1.0).is_err());
        assert!((fisher_z_inv(fisher_z(0.3).unwrap()) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn pair_order() {
        assert_eq!(pair_list(4), vec![(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]);
    }

    #[test]
    fn rejects_non_pd() {
        let r = CorrelationMatrix::from_entries(3, &[0.9, 0.9, -0.9]);
        assert!(matches!(r, Err(LapError::NotPositiveDefinite)));
        assert!(CorrelationMatrix::from_entries(3, &[0.5, 1.5, 0.0]).is_err());
    }

    #[test]
    fn k2_is_tanh() {
        let v = UnconstrainedCorrVector::new(2, vec![0.7]).unwrap();
        let (m, lj) = corr_transform(&v).unwrap();
        assert!((m.get(0, 1) - 0.7f64.tanh()).abs() < 1e-15);
        assert!((lj - ln_sech2(0.7)).abs() < 1e-14);
    }

    fn numeric_log_jac(k: usize, y: &[f64]) -> f64 {
        let d = y.len();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(d, d);
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        for c in 0..d {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[c] += h;
            ym[c] -= h;
            corr_constrain(k, &yp, &mut plus);
            corr_constrain(k, &ym, &mut minus);
            for r in 0..d {
                jac[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
        jac.determinant().abs().ln()
    }

    #[test]
    fn log_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &k in &[2usize, 3, 4, 5] {
            for _ in 0..20 {
                let y: Vec<f64> = (0..n_pairs(k)).map(|_| rng.random_range(-1.5..1.5)).collect();
                let mut out = vec![0.0; y.len()];
                let lj = corr_constrain(k, &y, &mut out);
                let num = numeric_log_jac(k, &y);
                assert!((lj - num).abs() < 1e-5, "k={k} analytic {lj} numeric {num}");
            }
        }
    }

    #[test]
    fn lkj_marginal_is_beta() {
        // uniform over 3x3 correlation matrices: marginal density (1 - r^2)^(1/2) * 2/pi
        for &r in &[-0.8, -0.2, 0.0, 0.4, 0.9] {
            let want = ((1.0 - r * r) as f64).sqrt() * 2.0 / PI;
            let got = lkj_marginal_log_density(r, 1.0, 3).unwrap().exp();
            assert!((got - want).abs() < 1e-12);
        }
        assert!(lkj_marginal_log_density(0.1, 1.0 - 1.0, 2).is_err());
    }

    #[test]
    fn lkj_sample_marginals() {
        // eta = 1, k = 4: each correlation is 2 Beta(2, 2) - 1, variance 1/5
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20000;
        let mut sums = vec![0.0; 6];
        let mut sq = vec![0.0; 6];
        for _ in 0..n {
            let m = lkj_sample(4, 1.0, &mut rng).unwrap();
            for (s, (q, r)) in sums.iter_mut().zip(sq.iter_mut().zip(m.entries())) {
                *s += r;
                *q += r * r;
            }
        }
        for p in 0..6 {
            let mean = sums[p] / n as f64;
            let var = sq[p] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.015, "pair {p} mean {mean}");
            assert!((var - 0.2).abs() < 0.01, "pair {p} var {var}");
        }
    }

    #[test]
    fn transform_is_pd_for_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for &k in &[2usize, 3, 4, 6] {
            for _ in 0..10_000 {
                let y: Vec<f64> = (0..n_pairs(k)).map(|_| rng.random_range(-4.0..4.0)).collect();
                let v = UnconstrainedCorrVector::new(k, y).unwrap();
                let (m, lj) = corr_transform(&v).unwrap();
                assert!(lj.is_finite());
                assert!(m.min_eigenvalue() > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn vector_round_trip(k in 2usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..n_pairs(k)).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (m, _) = corr_transform(&UnconstrainedCorrVector::new(k, y.clone()).unwrap()).unwrap();
            let back = corr_inverse(&m).unwrap();
            for (a, b) in back.values.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }

        #[test]
        fn round_trip_from_matrix(k in 2usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = lkj_sample(k, 1.5, &mut rng).unwrap();
            let v = corr_inverse(&m).unwrap();
            let (back, _) = corr_transform(&v).unwrap();
            for (a, b) in back.entries().iter().zip(m.entries()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
