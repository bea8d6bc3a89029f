//! Feasible ranges for single correlations given the others.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::math::corr::{correlation_to_concordance, n_pairs, pair_list};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherencyReport {
    /// 1-based indices.
    pub pair: (usize, usize),
    pub r: f64,
    pub concordance: f64,
    /// Open interval of `r` keeping the matrix positive definite, absent
    /// when the remaining entries are already incoherent.
    pub interval: Option<(f64, f64)>,
    pub concordance_interval: Option<(f64, f64)>,
    pub in_interval: bool,
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn build(k: usize, entries: &[f64]) -> Result<DMatrix<f64>> {
    if k < 2 || entries.len() != n_pairs(k) {
        return Err(LapError::domain(format!(
            "dimension {k} needs {} correlations, got {}",
            n_pairs(k),
            entries.len()
        )));
    }
    let mut m = DMatrix::identity(k, k);
    for (&(i, j), &r) in pair_list(k).iter().zip(entries) {
        if !(r > -1.0 && r < 1.0) {
            return Err(LapError::domain(format!("r[{},{}] = {r} must be in (-1, 1)", i + 1, j + 1)));
        }
        m[(i, j)] = r;
        m[(j, i)] = r;
    }
    Ok(m)
}

/// Principal minors that must be positive definite for pair `(i, j)` to
/// have a feasible interval: the matrix without row `i`, and without row `j`.
fn fixed_minors(k: usize, i: usize, j: usize) -> [Vec<usize>; 2] {
    let without = |x: usize| (0..k).filter(|&c| c != x).collect::<Vec<_>>();
    [without(j), without(i)]
}

/// Interval for pair `(i, j)` given coherent fixed entries. The centre
/// `r_iS R_SS^-1 r_Sj` is always feasible; the smallest eigenvalue is
/// concave along the line, so each end is found by bisection.
fn pair_interval(m: &DMatrix<f64>, i: usize, j: usize) -> (f64, f64) {
    let k = m.nrows();
    let rest: Vec<usize> = (0..k).filter(|&c| c != i && c != j).collect();
    let centre = if rest.is_empty() {
        0.0
    } else {
        let rss = submatrix(m, &rest);
        let ris = DMatrix::from_fn(1, rest.len(), |_, b| m[(i, rest[b])]);
        let rsj = DMatrix::from_fn(rest.len(), 1, |a, _| m[(rest[a], j)]);
        let sol = rss.cholesky().map(|c| c.solve(&rsj)).unwrap_or(rsj);
        (ris * sol)[(0, 0)]
    };
    let lam = |r: f64| {
        let mut a = m.clone();
        a[(i, j)] = r;
        a[(j, i)] = r;
        min_eig(&a)
    };
    let edge = |outer: f64| {
        let (mut inside, mut out) = (centre, outer);
        if lam(outer) > 0.0 {
            return outer;
        }
        for _ in 0..200 {
            let mid = 0.5 * (inside + out);
            if lam(mid) > 0.0 {
                inside = mid;
            } else {
                out = mid;
            }
            if (out - inside).abs() < 1e-14 {
                break;
            }
        }
        0.5 * (inside + out)
    };
    (edge(-1.0), edge(1.0))
}

/// Reports for every pair; pairs whose fixed minors are not positive
/// definite get no interval.
pub fn coherency_reports(k: usize, entries: &[f64]) -> Result<(Vec<CoherencyReport>, Vec<Vec<usize>>)> {
    let m = build(k, entries)?;
    let mut out = Vec::with_capacity(entries.len());
    let mut bad: Vec<Vec<usize>> = Vec::new();
    for (&(i, j), &r) in pair_list(k).iter().zip(entries) {
        let minors = fixed_minors(k, i, j);
        let mut ok = true;
        for idx in &minors {
            if idx.len() >= 2 && !is_pd(&submatrix(&m, idx)) {
                ok = false;
                let named: Vec<usize> = idx.iter().map(|x| x + 1).collect();
                if !bad.contains(&named) {
                    bad.push(named);
                }
            }
        }
        let interval = ok.then(|| pair_interval(&m, i, j));
        let concordance_interval = interval.map(|(lo, hi)| {
            (
                correlation_to_concordance(lo.max(-1.0)).unwrap_or(0.0),
                correlation_to_concordance(hi.min(1.0)).unwrap_or(1.0),
            )
        });
        out.push(CoherencyReport {
            pair: (i + 1, j + 1),
            r,
            concordance: correlation_to_concordance(r)?,
            interval,
            concordance_interval,
            in_interval: interval.is_some_and(|(lo, hi)| r > lo && r < hi),
        });
    }
    Ok((out, bad))
}

/// As [`coherency_reports`], but any incoherent fixed minor is an error.
pub fn coherency_intervals(k: usize, entries: &[f64]) -> Result<Vec<CoherencyReport>> {
    let (reports, bad) = coherency_reports(k, entries)?;
    if !bad.is_empty() {
        return Err(LapError::GlobalIncoherence { minors: bad });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_is_unrestricted() {
        let r = coherency_intervals(2, &[0.7]).unwrap();
        let (lo, hi) = r[0].interval.unwrap();
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!(r[0].in_interval);
    }

    #[test]
    fn three_by_three_closed_form() {
        // free r13 with r12 = r23 = 0.9
        let r = coherency_intervals(3, &[0.9, 0.0, 0.9]).unwrap();
        let (lo, hi) = r[1].interval.unwrap();
        assert!((lo - 0.62).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6, "{lo} {hi}");
        assert!(!r[1].in_interval);
        assert_eq!(r[1].pair, (1, 3));
    }

    #[test]
    fn incoherent_minor() {
        let e = coherency_intervals(4, &[0.9, 0.9, -0.9, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(e, LapError::GlobalIncoherence { ref minors } if minors.contains(&vec![1, 2, 3])));
        let (reports, bad) = coherency_reports(4, &[0.9, 0.9, -0.9, 0.0, 0.0, 0.0]).unwrap();
        assert!(!bad.is_empty());
        assert!(reports.iter().any(|r| r.interval.is_none()));
    }
}
