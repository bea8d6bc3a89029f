//! Repeated-measures regression with quadratic orthogonal-polynomial time,
//! group interactions and per-subject random intercept, slope and curvature.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::loss::{Constraint, ModelParts, NamedFn, ParameterSpace};
use crate::math::special::{half_normal_ln_pdf, normal_ln_pdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmRecord {
    pub id: String,
    pub group: String,
    pub time: f64,
    pub response: f64,
}

/// Reads `id,group,time,response` CSV. Row numbers in errors count the
/// header as row 1.
pub fn read_rm_csv<R: std::io::Read>(reader: R) -> Result<Vec<RmRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| LapError::Ingestion {
            message: format!("missing column `{name}`"),
            rows: vec![1],
        })
    };
    let (ci, cg, ct, cr) = (col("id")?, col("group")?, col("time")?, col("response")?);
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let Ok(rec) = rec else {
            bad.push(row);
            continue;
        };
        let field = |c: usize| rec.get(c).unwrap_or("");
        let time = field(ct).parse::<f64>().ok().filter(|v| v.is_finite());
        let response = field(cr).parse::<f64>().ok().filter(|v| v.is_finite());
        match (time, response) {
            (Some(time), Some(response)) if !field(ci).is_empty() && !field(cg).is_empty() => out.push(RmRecord {
                id: field(ci).to_string(),
                group: field(cg).to_string(),
                time,
                response,
            }),
            _ => bad.push(row),
        }
    }
    if !bad.is_empty() {
        return Err(LapError::Ingestion {
            message: "rows need a nonempty id and group and numeric time and response".into(),
            rows: bad,
        });
    }
    Ok(out)
}

pub fn write_rm_csv<W: std::io::Write>(records: &[RmRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "group", "time", "response"])?;
    for r in records {
        w.write_record([r.id.clone(), r.group.clone(), r.time.to_string(), r.response.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Orthogonal polynomial contrasts for `times`: `degree` columns, each
/// mean-zero, unit-norm and orthogonal to the others.
pub fn orthogonal_poly(times: &[f64], degree: usize) -> Result<Vec<Vec<f64>>> {
    let distinct: BTreeSet<u64> = times.iter().map(|t| t.to_bits()).collect();
    if distinct.len() < degree + 1 {
        return Err(LapError::domain(format!(
            "degree {degree} contrasts need at least {} distinct times (got {})",
            degree + 1,
            distinct.len()
        )));
    }
    let n = times.len();
    let mean = times.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = times.iter().map(|t| t - mean).collect();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for d in 1..=degree {
        let mut v: Vec<f64> = centered.iter().map(|c| c.powi(d as i32)).collect();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(LapError::domain("time values are rank deficient for the requested degree"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis.remove(0);
    Ok(basis)
}

fn default_target() -> String {
    "WI".into()
}
fn default_fe_sd() -> f64 {
    10.0
}
fn default_scale_sd() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatedMeasuresModel {
    /// Group whose change from baseline is the observable `xi`.
    #[serde(default = "default_target")]
    pub target_group: String,
    /// Prior SD of every fixed effect.
    #[serde(default = "default_fe_sd")]
    pub fixed_effect_sd: f64,
    /// Half-normal prior scale of the residual and random-effect SDs.
    #[serde(default = "default_scale_sd")]
    pub scale_sd: f64,
    /// Design used when there is no data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<RmRecord>,
}

impl Default for RepeatedMeasuresModel {
    fn default() -> Self {
        Self {
            target_group: default_target(),
            fixed_effect_sd: default_fe_sd(),
            scale_sd: default_scale_sd(),
            times: None,
            groups: None,
            data: Vec::new(),
        }
    }
}

pub const DEFAULT_TIMES: [f64; 7] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0];
pub const DEFAULT_GROUPS: [&str; 3] = ["CONT", "RI", "WI"];

struct Subject {
    rows: Vec<usize>,
    pattern: usize,
}

struct Design {
    /// Fixed-effect design rows.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    subjects: Vec<Subject>,
    /// Random-effect design per distinct time pattern.
    patterns: Vec<DMatrix<f64>>,
}

impl RepeatedMeasuresModel {
    pub fn with_data(data: Vec<RmRecord>) -> Self {
        Self { data, ..Self::default() }
    }

    fn levels(&self) -> (Vec<f64>, Vec<String>) {
        if self.data.is_empty() {
            let times = self.times.clone().unwrap_or_else(|| DEFAULT_TIMES.to_vec());
            let groups = self
                .groups
                .clone()
                .unwrap_or_else(|| DEFAULT_GROUPS.iter().map(|s| s.to_string()).collect());
            let mut t: Vec<f64> = times;
            t.sort_by(f64::total_cmp);
            t.dedup();
            let g: BTreeSet<String> = groups.into_iter().collect();
            return (t, g.into_iter().collect());
        }
        let mut t: Vec<f64> = self.data.iter().map(|r| r.time).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        let g: BTreeSet<String> = self.data.iter().map(|r| r.group.clone()).collect();
        (t, g.into_iter().collect())
    }

    /// Names of the fixed-effect coefficients in design-column order.
    pub fn fixed_effect_names(&self) -> Vec<String> {
        let (times, groups) = self.levels();
        let degree = times.len().saturating_sub(1).min(2);
        fixed_names(&groups, degree)
    }

    /// `(group, time, weights)` such that the mean response of `group` at
    /// `time` is `weights . fixed_effects`.
    pub fn mean_weights(&self) -> Result<Vec<(String, f64, Vec<f64>)>> {
        let (times, groups) = self.levels();
        if times.len() < 2 {
            return Err(LapError::Config(format!("need at least 2 distinct timepoints (got {})", times.len())));
        }
        let poly = orthogonal_poly(&times, (times.len() - 1).min(2))?;
        let mut out = Vec::with_capacity(groups.len() * times.len());
        for (g, name) in groups.iter().enumerate() {
            for (ti, &t) in times.iter().enumerate() {
                out.push((name.clone(), t, design_row(g, ti, groups.len(), &poly)));
            }
        }
        Ok(out)
    }

    pub fn parts(&self) -> Result<ModelParts> {
        if !(self.fixed_effect_sd > 0.0 && self.scale_sd > 0.0) {
            return Err(LapError::Config("prior scales must be positive".into()));
        }
        let (times, groups) = self.levels();
        if times.len() < 2 {
            return Err(LapError::Config(format!("need at least 2 distinct timepoints (got {})", times.len())));
        }
        if !groups.contains(&self.target_group) {
            return Err(LapError::Config(format!(
                "target group `{}` not among groups {groups:?}",
                self.target_group
            )));
        }
        let degree = (times.len() - 1).min(2);
        let poly = orthogonal_poly(&times, degree)?;
        let names = fixed_names(&groups, degree);
        let n_fixed = names.len();

        let mut space = ParameterSpace::new();
        for n in &names {
            space.add(n, 1, Constraint::Real)?;
        }
        let mut scale_names = vec!["sigma", "sd_intercept", "sd_lin"];
        if degree == 2 {
            scale_names.push("sd_quad");
        }
        for n in &scale_names {
            space.add(n, 1, Constraint::Positive)?;
        }
        let n_scales = scale_names.len();

        let (fe_sd, sc_sd) = (self.fixed_effect_sd, self.scale_sd);
        let mut parts = ModelParts::new(space, move |t| {
            let mut lp = 0.0;
            for &b in &t[..n_fixed] {
                lp += normal_ln_pdf(b, 0.0, fe_sd);
            }
            for &s in &t[n_fixed..n_fixed + n_scales] {
                lp += half_normal_ln_pdf(s, sc_sd);
            }
            lp
        });

        // xi: target-group mean at the last time minus the first, fixed effects only
        let gi = groups.iter().position(|g| *g == self.target_group).unwrap();
        let last = times.len() - 1;
        let mut xi_weights = vec![0.0; n_fixed];
        for (d, col) in poly.iter().enumerate() {
            let diff = col[last] - col[0];
            xi_weights[groups.len() + d] = diff;
            if gi > 0 {
                xi_weights[groups.len() + degree + (gi - 1) * degree + d] = diff;
            }
        }
        parts.functionals.push(NamedFn::new("xi", move |t| {
            xi_weights.iter().zip(t).map(|(w, b)| w * b).sum()
        }));

        if !self.data.is_empty() {
            let design = build_design(&self.data, &times, &groups, &poly)?;
            if !self.data.iter().any(|r| r.group == self.target_group) {
                return Err(LapError::Config(format!("no subjects in target group `{}`", self.target_group)));
            }
            let design = Arc::new(design);
            parts.log_likelihood = Some(Arc::new(move |t| marginal_log_likelihood(&design, t, n_fixed, degree)));
        }

        let n_dim = n_fixed + n_scales;
        parts.prior_sampler = Some(Arc::new(move |rng| {
            let fe = Normal::new(0.0, fe_sd).unwrap();
            let sc = Normal::new(0.0, sc_sd).unwrap();
            let mut theta = vec![0.0; n_dim];
            for v in theta[..n_fixed].iter_mut() {
                *v = fe.sample(rng);
            }
            for v in theta[n_fixed..].iter_mut() {
                *v = sc.sample(rng).abs();
            }
            theta
        }));
        Ok(parts)
    }
}

fn fixed_names(groups: &[String], degree: usize) -> Vec<String> {
    let terms = ["time_lin", "time_quad"];
    let mut names = vec!["intercept".to_string()];
    names.extend(groups.iter().skip(1).map(|g| format!("group_{g}")));
    names.extend(terms[..degree].iter().map(|s| s.to_string()));
    for g in groups.iter().skip(1) {
        names.extend(terms[..degree].iter().map(|s| format!("{g}_x_{s}")));
    }
    names
}

/// Fixed-effect design row for group `g` at time index `ti`.
fn design_row(g: usize, ti: usize, n_groups: usize, poly: &[Vec<f64>]) -> Vec<f64> {
    let mut row = vec![1.0];
    row.extend((1..n_groups).map(|j| if j == g { 1.0 } else { 0.0 }));
    row.extend(poly.iter().map(|c| c[ti]));
    for j in 1..n_groups {
        row.extend(poly.iter().map(|c| if j == g { c[ti] } else { 0.0 }));
    }
    row
}

fn build_design(data: &[RmRecord], times: &[f64], groups: &[String], poly: &[Vec<f64>]) -> Result<Design> {
    let degree = poly.len();
    let time_index: HashMap<u64, usize> = times.iter().enumerate().map(|(i, t)| (t.to_bits(), i)).collect();
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<&str, (usize, &str, Vec<usize>)> = HashMap::new();
    let mut conflict = Vec::new();
    for (row, r) in data.iter().enumerate() {
        let e = by_id.entry(&r.id).or_insert_with(|| {
            order.push(r.id.clone());
            (order.len() - 1, &r.group, Vec::new())
        });
        if e.1 != r.group {
            conflict.push(row + 2);
        }
        e.2.push(row);
    }
    if !conflict.is_empty() {
        return Err(LapError::Ingestion {
            message: "a subject appears in more than one group".into(),
            rows: conflict,
        });
    }
    let x: Vec<Vec<f64>> = data
        .iter()
        .map(|r| {
            let g = groups.iter().position(|g| *g == r.group).unwrap();
            design_row(g, time_index[&r.time.to_bits()], groups.len(), poly)
        })
        .collect();
    let mut pattern_keys: Vec<Vec<usize>> = Vec::new();
    let mut patterns = Vec::new();
    let mut subjects = Vec::new();
    for id in &order {
        let rows = by_id[id.as_str()].2.clone();
        let key: Vec<usize> = rows.iter().map(|&r| time_index[&data[r].time.to_bits()]).collect();
        let pattern = match pattern_keys.iter().position(|k| *k == key) {
            Some(p) => p,
            None => {
                let z = DMatrix::from_fn(key.len(), degree + 1, |i, j| if j == 0 { 1.0 } else { poly[j - 1][key[i]] });
                patterns.push(z);
                pattern_keys.push(key);
                patterns.len() - 1
            }
        };
        subjects.push(Subject { rows, pattern });
    }
    Ok(Design { x, y: data.iter().map(|r| r.response).collect(), subjects, patterns })
}

fn marginal_log_likelihood(d: &Design, t: &[f64], n_fixed: usize, degree: usize) -> f64 {
    let beta = &t[..n_fixed];
    let sigma = t[n_fixed];
    let re_var: Vec<f64> = t[n_fixed + 1..n_fixed + 2 + degree].iter().map(|s| s * s).collect();
    let mut chols = Vec::with_capacity(d.patterns.len());
    for z in &d.patterns {
        let n = z.nrows();
        let mut v = DMatrix::from_diagonal_element(n, n, sigma * sigma);
        for (c, var) in re_var.iter().enumerate() {
            let col = z.column(c);
            v += (&col * col.transpose()) * *var;
        }
        match v.cholesky() {
            Some(ch) => {
                let log_det = 2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
                chols.push((ch, log_det));
            }
            None => return f64::NEG_INFINITY,
        }
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    for s in &d.subjects {
        let (ch, log_det) = &chols[s.pattern];
        let resid = DVector::from_iterator(
            s.rows.len(),
            s.rows.iter().map(|&r| d.y[r] - d.x[r].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()),
        );
        let w = ch.l_dirty().solve_lower_triangular(&resid).unwrap_or(resid);
        ll -= 0.5 * (s.rows.len() as f64 * ln_2pi + log_det + w.norm_squared());
    }
    ll
}

/// Settings for the synthetic three-arm exercise dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub subjects_per_group: usize,
    pub sigma: f64,
    pub sd_intercept: f64,
    pub sd_lin: f64,
    pub sd_quad: f64,
    /// Fixed effects in the order of [`RepeatedMeasuresModel::fixed_effect_names`].
    pub fixed_effects: Vec<f64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            subjects_per_group: 13,
            sigma: 1.0,
            sd_intercept: 3.0,
            sd_lin: 1.85,
            sd_quad: 0.5,
            fixed_effects: vec![10.0, 0.5, 1.0, 0.3, 0.1, 0.5, 0.0, 1.02, -0.1],
        }
    }
}

impl SyntheticSpec {
    /// Change from baseline in the WI arm implied by the fixed effects.
    pub fn xi_true(&self) -> f64 {
        let poly = orthogonal_poly(&DEFAULT_TIMES, 2).unwrap();
        let fe = &self.fixed_effects;
        (0..2).map(|d| (fe[3 + d] + fe[7 + d]) * (poly[d][6] - poly[d][0])).sum()
    }
}

/// Draws a CONT / RI / WI dataset over times 2, 4, ..., 14.
pub fn synthetic_repeated_measures(spec: &SyntheticSpec, seed: u64) -> Vec<RmRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poly = orthogonal_poly(&DEFAULT_TIMES, 2).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let fe = &spec.fixed_effects;
    let mut out = Vec::new();
    for (g, name) in DEFAULT_GROUPS.iter().enumerate() {
        for s in 0..spec.subjects_per_group {
            let b0 = spec.sd_intercept * std.sample(&mut rng);
            let b1 = spec.sd_lin * std.sample(&mut rng);
            let b2 = spec.sd_quad * std.sample(&mut rng);
            for (ti, &time) in DEFAULT_TIMES.iter().enumerate() {
                let (p1, p2) = (poly[0][ti], poly[1][ti]);
                let mut mean = fe[0] + fe[3] * p1 + fe[4] * p2;
                if g > 0 {
                    let base = 5 + 2 * (g - 1);
                    mean += fe[g] + fe[base] * p1 + fe[base + 1] * p2;
                }
                let y = mean + b0 + b1 * p1 + b2 * p2 + spec.sigma * std.sample(&mut rng);
                out.push(RmRecord { id: format!("{name}{:02}", s + 1), group: name.to_string(), time, response: y });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn poly_three_points() {
        let p = orthogonal_poly(&[1.0, 2.0, 3.0], 2).unwrap();
        let s6 = 6f64.sqrt();
        for (got, want) in p[1].iter().zip([1.0 / s6, -2.0 / s6, 1.0 / s6]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn poly_properties() {
        let t: Vec<f64> = (1..=7).map(f64::from).collect();
        let p = orthogonal_poly(&t, 2).unwrap();
        for c in &p {
            assert!(c.iter().sum::<f64>().abs() < 1e-12);
            assert!((dot(c, c) - 1.0).abs() < 1e-12);
        }
        assert!(dot(&p[0], &p[1]).abs() < 1e-12);
        let shifted: Vec<f64> = t.iter().map(|x| x + 100.0).collect();
        let q = orthogonal_poly(&shifted, 2).unwrap();
        for (a, b) in p.iter().flatten().zip(q.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(orthogonal_poly(&[1.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn mean_weights_difference_is_xi() {
        let model = RepeatedMeasuresModel::default();
        let parts = model.parts().unwrap();
        let xi = parts.functionals.iter().find(|f| f.name == "xi").unwrap();
        let theta = vec![9.0, 0.4, 1.1, 0.2, 0.1, 0.4, 0.0, 0.9, -0.1, 1.2, 2.5, 1.5, 0.6];
        let w = model.mean_weights().unwrap();
        assert_eq!(w.len(), 21);
        let at = |t: f64| w.iter().find(|(g, tt, _)| g == "WI" && *tt == t).map(|(_, _, r)| dot(r, &theta)).unwrap();
        assert!((at(14.0) - at(2.0) - xi.eval(&theta)).abs() < 1e-12);
        let cont: Vec<f64> = w.iter().filter(|(g, _, _)| g == "CONT").map(|(_, _, r)| dot(r, &theta)).collect();
        let mean: f64 = cont.iter().sum::<f64>() / cont.len() as f64;
        assert!((mean - theta[0]).abs() < 1e-12);
    }

    #[test]
    fn synthetic_xi_close_to_one_and_a_half() {
        assert!((SyntheticSpec::default().xi_true() - 1.5).abs() < 0.01);
    }

    #[test]
    fn likelihood_matches_dense_gaussian() {
        let data = synthetic_repeated_measures(&SyntheticSpec { subjects_per_group: 2, ..Default::default() }, 3);
        let model = RepeatedMeasuresModel::with_data(data.clone());
        let parts = model.parts().unwrap();
        let theta = vec![9.0, 0.4, 1.1, 0.2, 0.1, 0.4, 0.0, 0.9, -0.1, 1.2, 2.5, 1.5, 0.6];
        let ll = (parts.log_likelihood.as_ref().unwrap())(&theta);
        // dense block-diagonal oracle
        let n = data.len();
        let poly = orthogonal_poly(&DEFAULT_TIMES, 2).unwrap();
        let ti = |t: f64| DEFAULT_TIMES.iter().position(|x| *x == t).unwrap();
        let mut v = DMatrix::zeros(n, n);
        let mut mu = DVector::zeros(n);
        let gidx = |g: &str| DEFAULT_GROUPS.iter().position(|x| *x == g).unwrap();
        for i in 0..n {
            let (a, g) = (ti(data[i].time), gidx(&data[i].group));
            let (p1, p2) = (poly[0][a], poly[1][a]);
            let mut m = theta[0] + theta[3] * p1 + theta[4] * p2;
            if g > 0 {
                m += theta[g] + theta[5 + 2 * (g - 1)] * p1 + theta[6 + 2 * (g - 1)] * p2;
            }
            mu[i] = m;
            for j in 0..n {
                if data[i].id == data[j].id {
                    let b = ti(data[j].time);
                    v[(i, j)] = theta[10].powi(2)
                        + theta[11].powi(2) * p1 * poly[0][b]
                        + theta[12].powi(2) * p2 * poly[1][b];
                    if i == j {
                        v[(i, j)] += theta[9].powi(2);
                    }
                }
            }
        }
        let y = DVector::from_iterator(n, data.iter().map(|r| r.response));
        let d = &y - &mu;
        let inv = v.clone().try_inverse().unwrap();
        let want = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + v.determinant().ln() + d.dot(&(&inv * &d)));
        assert!((ll - want).abs() < 1e-8 * want.abs(), "{ll} vs {want}");
    }

    #[test]
    fn csv_errors_name_rows() {
        let text = "id,group,time,response\nA,WI,2,1.0\nB,WI,x,2\nC,,4,1\n";
        match read_rm_csv(text.as_bytes()) {
            Err(LapError::Ingestion { rows, .. }) => assert_eq!(rows, vec![3, 4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let data = synthetic_repeated_measures(&SyntheticSpec::default(), 1);
        let mut buf = Vec::new();
        write_rm_csv(&data, &mut buf).unwrap();
        assert_eq!(read_rm_csv(buf.as_slice()).unwrap(), data);
    }
}
