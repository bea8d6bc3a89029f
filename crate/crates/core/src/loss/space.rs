//! Named parameter blocks and their transforms to the real line.

use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::math::corr::{corr_constrain, corr_inverse, n_pairs, pair_list, CorrelationMatrix};
use crate::math::special::ln_sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Constraint {
    Real,
    Positive,
    Interval { lo: f64, hi: f64 },
    /// Off-diagonal entries of a `k x k` correlation matrix.
    Correlation { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub name: String,
    pub dim: usize,
    pub constraint: Constraint,
    /// Offset into the constrained (and unconstrained) vector.
    pub offset: usize,
}

/// Location of a block inside the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef {
    pub offset: usize,
    pub dim: usize,
}

impl BlockRef {
    pub fn slice<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.offset..self.offset + self.dim]
    }

    pub fn get(&self, theta: &[f64], i: usize) -> f64 {
        theta[self.offset + i]
    }
}

/// Ordered parameter blocks. Every block maps one-to-one between the real
/// line and its constrained set, so both vectors share one layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParameterSpace {
    blocks: Vec<Block>,
    dim: usize,
}

impl ParameterSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, dim: usize, constraint: Constraint) -> Result<BlockRef> {
        let dim = match constraint {
            Constraint::Correlation { k } => {
                if k < 2 {
                    return Err(LapError::Config(format!("{name}: correlation block needs k >= 2")));
                }
                n_pairs(k)
            }
            Constraint::Interval { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                return Err(LapError::Config(format!("{name}: invalid interval ({lo}, {hi})")));
            }
            _ => dim,
        };
        if dim == 0 {
            return Err(LapError::Config(format!("{name}: block dimension must be positive")));
        }
        if self.blocks.iter().any(|b| b.name == name) {
            return Err(LapError::Config(format!("duplicate parameter block `{name}`")));
        }
        let r = BlockRef { offset: self.dim, dim };
        self.blocks.push(Block { name: name.to_string(), dim, constraint, offset: self.dim });
        self.dim += dim;
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<BlockRef> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| BlockRef { offset: b.offset, dim: b.dim })
    }

    /// Names of the constrained coordinates: `t_med`, `mu[1]`, `rho[1,2]`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            match b.constraint {
                Constraint::Correlation { k } => {
                    for (i, j) in pair_list(k) {
                        out.push(format!("{}[{},{}]", b.name, i + 1, j + 1));
                    }
                }
                _ if b.dim == 1 => out.push(b.name.clone()),
                _ => out.extend((1..=b.dim).map(|i| format!("{}[{i}]", b.name))),
            }
        }
        out
    }

    /// Writes constrained values for `u` into `theta`, returning the log
    /// absolute Jacobian of the map.
    pub fn constrain(&self, u: &[f64], theta: &mut [f64]) -> f64 {
        let mut log_jac = 0.0;
        for b in &self.blocks {
            let r = b.offset..b.offset + b.dim;
            let (us, ts) = (&u[r.clone()], &mut theta[r]);
            match b.constraint {
                Constraint::Real => ts.copy_from_slice(us),
                Constraint::Positive => {
                    for (t, &x) in ts.iter_mut().zip(us) {
                        *t = x.exp();
                        log_jac += x;
                    }
                }
                Constraint::Interval { lo, hi } => {
                    let w = hi - lo;
                    for (t, &x) in ts.iter_mut().zip(us) {
                        let ls = ln_sigmoid(x);
                        let lsn = ln_sigmoid(-x);
                        // pick the representation that keeps precision near each bound
                        *t = if x < 0.0 { lo + w * ls.exp() } else { hi - w * lsn.exp() };
                        log_jac += w.ln() + ls + lsn;
                    }
                }
                Constraint::Correlation { k } => log_jac += corr_constrain(k, us, ts),
            }
        }
        log_jac
    }

    pub fn constrain_vec(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let mut theta = vec![0.0; self.dim];
        let lj = self.constrain(u, &mut theta);
        (theta, lj)
    }

    pub fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim {
            return Err(LapError::domain(format!(
                "expected {} parameter values, got {}",
                self.dim,
                theta.len()
            )));
        }
        let mut u = vec![0.0; self.dim];
        for b in &self.blocks {
            let r = b.offset..b.offset + b.dim;
            let (ts, us) = (&theta[r.clone()], &mut u[r]);
            match b.constraint {
                Constraint::Real => us.copy_from_slice(ts),
                Constraint::Positive => {
                    for (x, &t) in us.iter_mut().zip(ts) {
                        if !(t > 0.0) {
                            return Err(LapError::domain(format!("{}: {t} is not positive", b.name)));
                        }
                        *x = t.ln();
                    }
                }
                Constraint::Interval { lo, hi } => {
                    for (x, &t) in us.iter_mut().zip(ts) {
                        if !(t > lo && t < hi) {
                            return Err(LapError::domain(format!(
                                "{}: {t} outside ({lo}, {hi})",
                                b.name
                            )));
                        }
                        *x = (t - lo).ln() - (hi - t).ln();
                    }
                }
                Constraint::Correlation { k } => {
                    let m = CorrelationMatrix::from_entries(k, ts)?;
                    us.copy_from_slice(&corr_inverse(&m)?.values);
                }
            }
        }
        Ok(u)
    }

    /// True when `theta` satisfies every block constraint.
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.blocks.iter().all(|b| {
            let ts = &theta[b.offset..b.offset + b.dim];
            match b.constraint {
                Constraint::Real => ts.iter().all(|t| t.is_finite()),
                Constraint::Positive => ts.iter().all(|&t| t > 0.0 && t.is_finite()),
                Constraint::Interval { lo, hi } => ts.iter().all(|&t| t >= lo && t <= hi),
                Constraint::Correlation { k } => CorrelationMatrix::from_entries(k, ts).is_ok(),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space() -> ParameterSpace {
        let mut s = ParameterSpace::new();
        s.add("mu", 2, Constraint::Real).unwrap();
        s.add("tau", 2, Constraint::Positive).unwrap();
        s.add("t_med", 1, Constraint::Interval { lo: 0.001, hi: 10.0 }).unwrap();
        s.add("rho", 0, Constraint::Correlation { k: 3 }).unwrap();
        s
    }

    #[test]
    fn names_and_layout() {
        let s = space();
        assert_eq!(s.dim(), 8);
        assert_eq!(
            s.param_names(),
            vec!["mu[1]", "mu[2]", "tau[1]", "tau[2]", "t_med", "rho[1,2]", "rho[1,3]", "rho[2,3]"]
        );
        assert_eq!(s.block("t_med"), Some(BlockRef { offset: 4, dim: 1 }));
        assert!(s.block("nope").is_none());
    }

    #[test]
    fn reference_point() {
        let s = space();
        let (theta, _) = s.constrain_vec(&[0.0; 8]);
        assert_eq!(&theta[..4], &[0.0, 0.0, 1.0, 1.0]);
        assert!((theta[4] - 5.0005).abs() < 1e-12);
        assert_eq!(&theta[5..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_blocks() {
        let mut s = ParameterSpace::new();
        assert!(s.add("x", 1, Constraint::Interval { lo: 1.0, hi: 1.0 }).is_err());
        s.add("x", 1, Constraint::Real).unwrap();
        assert!(s.add("x", 1, Constraint::Real).is_err());
        assert!(s.unconstrain(&[0.0, 1.0]).is_err());
    }

    fn numeric_log_jac(s: &ParameterSpace, u: &[f64]) -> f64 {
        let d = u.len();
        let h = 1e-6;
        let mut jac = nalgebra::DMatrix::zeros(d, d);
        for c in 0..d {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[c] += h;
            um[c] -= h;
            let (tp, _) = s.constrain_vec(&up);
            let (tm, _) = s.constrain_vec(&um);
            for r in 0..d {
                jac[(r, c)] = (tp[r] - tm[r]) / (2.0 * h);
            }
        }
        jac.determinant().abs().ln()
    }

    proptest! {
        #[test]
        fn round_trip_and_jacobian(u in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let s = space();
            let (theta, lj) = s.constrain_vec(&u);
            prop_assert!(s.contains(&theta));
            let back = s.unconstrain(&theta).unwrap();
            let (again, _) = s.constrain_vec(&back);
            for (a, b) in again.iter().zip(&theta) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let num = numeric_log_jac(&s, &u);
            prop_assert!((lj - num).abs() < 1e-5, "{} vs {}", lj, num);
        }
    }
}
