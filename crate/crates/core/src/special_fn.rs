//! Scalar special functions: error functions, the standard normal CDF and
//! quantile, the inverse complementary error function, and `ln Γ` / `ψ`.
//!
//! `erf` and `erfc` are the FreeBSD msun implementations (via `libm`), which
//! keep full relative accuracy in the far tail. Everything that the flow
//! layers need in log space (`log_erfc`, `erfc_inv_from_log`) is built here on
//! top of them so that nothing underflows for large arguments.
//!
//! The `*_unchecked` helpers return NaN outside their domain and are what the
//! differentiable scalar types call; the public checked functions return
//! [`crate::Error::Domain`].

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use crate::error::{domain, Result};

/// `ln(2π) / 2`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// `sqrt(2/π)`
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// `2/sqrt(π)`
pub const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

pub fn erf(z: f64) -> f64 {
    libm::erf(z)
}

pub fn erfc(z: f64) -> f64 {
    libm::erfc(z)
}

/// `ln erfc(x)`, finite for every finite `x`.
pub fn log_erfc(x: f64) -> f64 {
    if x < 0.5 {
        // erfc close to 1: keep the relative accuracy of erf.
        (-erf(x)).ln_1p()
    } else if x < 26.0 {
        erfc(x).ln()
    } else {
        // erfc(x) ~ exp(-x²)/(x√π) · (1 - 1/(2x²) + 3/(4x⁴) - 15/(8x⁶) + 105/(16x⁸))
        let w = 1.0 / (2.0 * x * x);
        let series = 1.0 - w * (1.0 - 3.0 * w * (1.0 - 5.0 * w * (1.0 - 7.0 * w)));
        -x * x - x.ln() - 0.5 * PI.ln() + series.ln()
    }
}

/// Derivative of [`log_erfc`]: `-(2/√π) exp(-x²) / erfc(x)`.
pub fn log_erfc_deriv(x: f64) -> f64 {
    -FRAC_2_SQRT_PI * (-x * x - log_erfc(x)).exp()
}

/// Standard normal CDF, `½(1 + erf(z/√2)) = ½ erfc(-z/√2)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `ln Φ(z)` without underflow for very negative `z`.
pub fn log_normal_cdf(z: f64) -> f64 {
    log_erfc(-z * FRAC_1_SQRT_2) - LN_2
}

pub fn normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}

// Acklam's rational approximation, |relative error| < 1.15e-9 before polishing.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const ACKLAM_P_LOW: f64 = 0.02425;

/// Initial estimate of `Φ⁻¹(p)` for `0 < p ≤ 0.5`.
fn acklam_lower(p: f64) -> f64 {
    if p < ACKLAM_P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}

/// `Φ⁻¹(p)` for `0 < p ≤ 0.5`, one Halley step on top of Acklam.
fn ndtri_lower(p: f64) -> f64 {
    let x = acklam_lower(p);
    // Relative residual keeps the step accurate down to p ~ 1e-308.
    let r = normal_cdf(x) / p - 1.0;
    let u = r * (p.ln() - normal_log_pdf(x)).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// `Φ⁻¹(p)`, NaN outside `(0, 1)`.
pub fn normal_quantile_unchecked(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    if p <= 0.5 {
        ndtri_lower(p)
    } else {
        -ndtri_lower(1.0 - p)
    }
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("normal_quantile", p, "(0, 1)"));
    }
    Ok(normal_quantile_unchecked(p))
}

/// `Φ⁻¹(exp(log_p))` for `log_p ≤ ln ½`, valid far below the smallest double.
pub fn normal_quantile_from_log_unchecked(log_p: f64) -> f64 {
    if !(log_p <= -LN_2) {
        return if log_p < 0.0 {
            normal_quantile_unchecked(log_p.exp())
        } else {
            f64::NAN
        };
    }
    if log_p > -700.0 {
        return ndtri_lower(log_p.exp());
    }
    // Φ(x) ≈ φ(x)/|x| for the start, then Newton on ln Φ(x) = log_p.
    let mut x2 = -2.0 * log_p;
    for _ in 0..3 {
        x2 = -2.0 * log_p - 2.0 * HALF_LN_2PI - x2.sqrt().ln();
        x2 = x2.max(1.0);
    }
    let mut x = -x2.sqrt();
    for _ in 0..50 {
        let lc = log_normal_cdf(x);
        let step = (lc - log_p) / (normal_log_pdf(x) - lc).exp();
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    x
}

/// `erfc⁻¹(x) = -Φ⁻¹(x/2)/√2`, NaN outside `(0, 2)`.
pub fn erfc_inv_unchecked(x: f64) -> f64 {
    if !(x > 0.0 && x < 2.0) {
        return f64::NAN;
    }
    if x <= 1.0 {
        -ndtri_lower(0.5 * x) * FRAC_1_SQRT_2
    } else {
        ndtri_lower(1.0 - 0.5 * x) * FRAC_1_SQRT_2
    }
}

pub fn erfc_inv(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 2.0) {
        return Err(domain("erfc_inv", x, "(0, 2)"));
    }
    Ok(erfc_inv_unchecked(x))
}

/// `erfc⁻¹(exp(log_x))` for `log_x < ln 2`; usable when `exp(log_x)` underflows.
pub fn erfc_inv_from_log_unchecked(log_x: f64) -> f64 {
    if log_x > -700.0 {
        erfc_inv_unchecked(log_x.exp())
    } else {
        -normal_quantile_from_log_unchecked(log_x - LN_2) * FRAC_1_SQRT_2
    }
}

/// Derivative of `erfc⁻¹` at `x`, given `t = erfc⁻¹(x)`: `-(√π/2) exp(t²)`.
pub fn erfc_inv_deriv(t: f64) -> f64 {
    -0.5 * PI.sqrt() * (t * t).exp()
}

/// `erf⁻¹(v)` for `v ∈ (-1, 1)`.
pub fn erf_inv(v: f64) -> Result<f64> {
    if !(v > -1.0 && v < 1.0) {
        return Err(domain("erf_inv", v, "(-1, 1)"));
    }
    Ok(erfc_inv_unchecked(1.0 - v))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`, NaN otherwise.
pub fn log_gamma_unchecked(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        return log_gamma_unchecked(x + 1.0) - x.ln();
    }
    let x = x - 1.0;
    let mut sum = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    HALF_LN_2PI + (x + 0.5) * t.ln() - t + sum.ln()
}

pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain("log_gamma", x, "(0, inf)"));
    }
    Ok(log_gamma_unchecked(x))
}

/// `ψ(x) = d/dx ln Γ(x)` for `x > 0`, NaN otherwise.
pub fn digamma_unchecked(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // Bernoulli-number asymptotic series.
    let tail = r * (1.0 / 12.0 - r * (1.0 / 120.0 - r * (1.0 / 252.0 - r * (1.0 / 240.0 - r * (1.0 / 132.0 - r * 691.0 / 32_760.0)))));
    acc + x.ln() - 0.5 / x - tail
}

pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain("digamma", x, "(0, inf)"));
    }
    Ok(digamma_unchecked(x))
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
