//! Thin wrappers over `statrs` special functions plus the log densities
//! shared by model priors.

use std::f64::consts::{LN_2, PI, SQRT_2};

use statrs::function::{beta, erf, gamma};

use super::roots;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    beta::ln_beta(a, b)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma::gamma_lr(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma::gamma_ur(a, x)
    }
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta::beta_reg(a, b, x)
    }
}

/// `erfc` through the upper incomplete gamma, which is markedly more
/// accurate than the rational approximation in `statrs::function::erf`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile; Newton steps on top of `erfc_inv`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut z = -SQRT_2 * erf::erfc_inv(2.0 * p);
    for _ in 0..2 {
        let dens = (-0.5 * z * z - LN_SQRT_2PI).exp();
        if dens <= 1e-300 {
            break;
        }
        // cdf(z) - p, evaluated on the tail that avoids cancellation
        let err = if p < 0.5 {
            normal_cdf(z) - p
        } else {
            (1.0 - p) - normal_upper(z)
        };
        z -= err / dens;
    }
    z
}

fn normal_upper(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

pub fn normal_ln_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Half-normal on (0, ∞) with scale `sd`.
pub fn half_normal_ln_pdf(x: f64, sd: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    normal_ln_pdf(x, 0.0, sd) + LN_2
}

/// Gamma density with shape/rate parameterization.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        if x == 0.0 && shape == 1.0 {
            return rate.ln();
        }
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
}

/// Inverse-gamma density with shape/scale parameterization.
pub fn inverse_gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn lognormal_ln_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let lx = x.ln();
    normal_ln_pdf(lx, mu, sigma) - lx
}

pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    let la = if a == 1.0 { 0.0 } else { (a - 1.0) * x.ln() };
    let lb = if b == 1.0 { 0.0 } else { (b - 1.0) * (-x).ln_1p() };
    la + lb - ln_beta(a, b)
}

/// CDF of the standard Student-t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn student_t_ln_pdf(t: f64, df: f64) -> f64 {
    ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln()
        - 0.5 * (df + 1.0) * (t * t / df).ln_1p()
}

/// Quantile of the standard Student-t.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, df);
    }
    // Upper half: bracket [0, hi] and invert the CDF.
    let mut hi = normal_quantile(p).max(1.0);
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    roots::invert_increasing(
        |t| student_t_cdf(t, df),
        |t| student_t_ln_pdf(t, df).exp(),
        p,
        0.0,
        hi,
    )
}

/// Quantile of Gamma(shape, rate = 1).
pub fn gamma_quantile(p: f64, shape: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // P(a, x) = x^a / Gamma(a + 1) (1 - a x / (a + 1) + ...) for small x
    let small = ((p.ln() + ln_gamma(shape + 1.0)) / shape).exp();
    if small < 1e-12 {
        return small;
    }
    let mut hi = shape.max(1.0);
    while gamma_p(shape, hi) < p {
        hi *= 2.0;
    }
    let mut lo = hi;
    while lo > 1e-300 && gamma_p(shape, lo) > p {
        lo *= 0.5;
    }
    if lo <= 1e-300 {
        lo = 0.0;
    }
    roots::invert_increasing(
        |x| gamma_p(shape, x),
        |x| gamma_ln_pdf(x, shape, 1.0).exp(),
        p,
        lo,
        hi,
    )
}

/// Numerically stable `log(1 - tanh(y)^2)`.
pub fn ln_sech2(y: f64) -> f64 {
    let a = y.abs();
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Stable `log(sigmoid(y))`.
pub fn ln_sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        -(-y).exp().ln_1p()
    } else {
        y - y.exp().ln_1p()
    }
}

pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}
