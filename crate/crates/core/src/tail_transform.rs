//! Flexible tail transformation.
//!
//! The forward map sends a standard-normal-tailed input `z` to an output whose
//! upper and lower tails are generalized Pareto with indices `λ₊`, `λ₋`:
//!
//! ```text
//! R(z) = μ + σ · (s/λ_s) · [erfc(|z|/√2)^(-λ_s) - 1],    s = sign(z)
//! ```
//!
//! For negative indices (`-1 ≤ λ_s < 0`, extended mode only) the side uses the
//! power branch `μ + σ·s·S(|z|; λ_s + 2)` with `S(z; ξ) = √(2/π)[(1 + z/ξ)^ξ - 1]`,
//! which matches value and slope at the origin.
//!
//! Everything is evaluated through `ln erfc` and `expm1`/`ln_1p`; the
//! intermediate `u = 2Φ(z) - 1` is never formed.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{domain, Error, Result};
use crate::special_fn::{self as sf, SQRT_2_OVER_PI};

/// Inputs beyond this magnitude saturate before `erfc`.
pub const Z_CAP: f64 = 38.0;
pub const SIGMA_FLOOR: f64 = 1e-4;
/// Tail indices are kept at least this far from zero.
pub const LAMBDA_FLOOR: f64 = 1e-4;
/// Tail index decoded from a zero raw output.
pub const INITIAL_LAMBDA: f64 = 0.1;

/// Which tail shapes a layer may produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailMode {
    /// Only `λ > 0` (generalized Pareto tails).
    GpdOnly,
    /// `λ ∈ [-1, 0) ∪ (0, ∞)`; negative values select the power branch.
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailParams<S = f64> {
    pub mu: S,
    pub sigma: S,
    pub lambda_plus: S,
    pub lambda_minus: S,
}

impl TailParams<f64> {
    pub fn new(mu: f64, sigma: f64, lambda_plus: f64, lambda_minus: f64) -> Self {
        Self {
            mu,
            sigma,
            lambda_plus,
            lambda_minus,
        }
    }

    pub fn validate(&self, mode: TailMode) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(domain("tail params", self.sigma, "sigma > 0"));
        }
        if !self.mu.is_finite() {
            return Err(domain("tail params", self.mu, "finite mu"));
        }
        for lambda in [self.lambda_plus, self.lambda_minus] {
            let ok = match mode {
                TailMode::GpdOnly => lambda > 0.0 && lambda.is_finite(),
                TailMode::Extended => lambda.is_finite() && lambda >= -1.0 && lambda != 0.0,
            };
            if !ok {
                let allowed = match mode {
                    TailMode::GpdOnly => "lambda > 0",
                    TailMode::Extended => "-1 <= lambda < 0 or lambda > 0",
                };
                return Err(domain("tail params", lambda, allowed));
            }
        }
        Ok(())
    }
}

impl<S: Scalar> TailParams<S> {
    /// Tail index governing the side of `sign`.
    pub fn lambda_for(&self, positive: bool) -> S {
        if positive {
            self.lambda_plus
        } else {
            self.lambda_minus
        }
    }

    pub fn values(&self) -> TailParams<f64> {
        TailParams {
            mu: self.mu.value(),
            sigma: self.sigma.value(),
            lambda_plus: self.lambda_plus.value(),
            lambda_minus: self.lambda_minus.value(),
        }
    }

    /// Maps unconstrained raw values `(μ, σ, λ₊, λ₋)` into valid parameters.
    ///
    /// A zero raw vector decodes to `μ = 0`, `σ = √(π/2)` (unit slope at the
    /// origin) and `λ± = INITIAL_LAMBDA`.
    pub fn decode(raw: [S; 4], mode: TailMode) -> Self {
        let sigma_offset = sf::softplus_inv((PI / 2.0).sqrt() - SIGMA_FLOOR);
        TailParams {
            mu: raw[0],
            sigma: (raw[1] + sigma_offset).softplus() + SIGMA_FLOOR,
            lambda_plus: decode_lambda(raw[2], mode),
            lambda_minus: decode_lambda(raw[3], mode),
        }
    }
}

fn decode_lambda<S: Scalar>(raw: S, mode: TailMode) -> S {
    match mode {
        TailMode::GpdOnly => {
            let offset = sf::softplus_inv(INITIAL_LAMBDA - LAMBDA_FLOOR);
            (raw + offset).softplus() + LAMBDA_FLOOR
        }
        TailMode::Extended => {
            let offset = sf::softplus_inv(INITIAL_LAMBDA + 1.0);
            let lambda = (raw + offset).softplus() - 1.0;
            let v = lambda.value();
            if (0.0..LAMBDA_FLOOR).contains(&v) {
                S::cst(LAMBDA_FLOOR)
            } else if v < 0.0 && v > -LAMBDA_FLOOR {
                S::cst(-LAMBDA_FLOOR)
            } else {
                lambda
            }
        }
    }
}

/// GPD quantile `P(u; λ) = ((1-u)^(-λ) - 1)/λ`.
pub fn gpd_quantile(u: f64, lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(domain("gpd_quantile", u, "[0, 1)"));
    }
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(domain("gpd_quantile", lambda, "lambda != 0"));
    }
    Ok((-lambda * (-u).ln_1p()).exp_m1() / lambda)
}

/// Two-tailed GPD transform `Q(u) = s·P(|u|; λ_s)` on `(-1, 1)`.
pub fn two_tailed(u: f64, lambda_plus: f64, lambda_minus: f64) -> Result<f64> {
    if !(u.abs() < 1.0) {
        return Err(domain("two_tailed", u, "(-1, 1)"));
    }
    for lambda in [lambda_plus, lambda_minus] {
        if !(lambda > 0.0) {
            return Err(domain("two_tailed", lambda, "lambda > 0"));
        }
    }
    if u >= 0.0 {
        gpd_quantile(u, lambda_plus)
    } else {
        gpd_quantile(-u, lambda_minus).map(|v| -v)
    }
}

/// Power transform `S(z; ξ) = √(2/π)[(1 + z/ξ)^ξ - 1]` for `z ≥ 0`.
pub fn power_tail(z: f64, xi: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(domain("power_tail", z, "z >= 0"));
    }
    if !(xi > 0.0) {
        return Err(domain("power_tail", xi, "xi > 0"));
    }
    Ok(SQRT_2_OVER_PI * (xi * (z / xi).ln_1p()).exp_m1())
}

fn sign_of<S: Scalar>(v: S) -> f64 {
    if v.value() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Forward map of one coordinate. Branches on the sign of `λ_s`.
pub fn forward<S: Scalar>(z: S, p: &TailParams<S>) -> S {
    let s = sign_of(z);
    let lambda = p.lambda_for(s > 0.0);
    let a = (z * s).saturate(0.0, Z_CAP);
    let magnitude = if lambda.value() > 0.0 {
        // (erfc(a/√2)^(-λ) - 1)/λ
        (-lambda * (a * FRAC_1_SQRT_2).log_erfc()).expm1() / lambda
    } else {
        let xi = lambda + 2.0;
        (xi * (a / xi).ln_1p()).expm1() * SQRT_2_OVER_PI
    };
    p.mu + p.sigma * magnitude * s
}

/// `ln dR/dz` of the forward map.
pub fn forward_log_slope<S: Scalar>(z: S, p: &TailParams<S>) -> S {
    let s = sign_of(z);
    let lambda = p.lambda_for(s > 0.0);
    let a = (z * s).saturate(0.0, Z_CAP);
    let base = p.sigma.ln() + 0.5 * (2.0 / PI).ln();
    if lambda.value() > 0.0 {
        base - a * a * 0.5 - (lambda + 1.0) * (a * FRAC_1_SQRT_2).log_erfc()
    } else {
        let xi = lambda + 2.0;
        base + (xi - 1.0) * (a / xi).ln_1p()
    }
}

/// Inverse map of one coordinate together with `ln dz/dx`.
pub fn inverse<S: Scalar>(x: S, p: &TailParams<S>) -> (S, S) {
    let centred = x - p.mu;
    let s = sign_of(centred);
    let lambda = p.lambda_for(s > 0.0);
    let r = centred * s / p.sigma;
    if lambda.value() > 0.0 {
        let ln_y = (lambda * r).ln_1p();
        let t = (-ln_y / lambda).erfc_inv_from_log();
        let z = t * (SQRT_2 * s);
        let log_slope = -p.sigma.ln() + 0.5 * (PI / 2.0).ln() - (S::cst(1.0) / lambda + 1.0) * ln_y + t * t;
        (z, log_slope)
    } else {
        let xi = lambda + 2.0;
        let ln_1p_a = (r / SQRT_2_OVER_PI).ln_1p();
        let z = xi * (ln_1p_a / xi).expm1() * s;
        let log_slope = -p.sigma.ln() - 0.5 * (2.0 / PI).ln() - (xi - 1.0) / xi * ln_1p_a;
        (z, log_slope)
    }
}

/// Forward map for the GPD-only parameterization.
pub fn tail_forward(z: f64, p: &TailParams) -> f64 {
    forward(z, p)
}

/// `dR/dz = σ√(2/π) exp(-z²/2) erfc(|z|/√2)^(-λ_s-1)`.
pub fn tail_forward_dz(z: f64, p: &TailParams) -> f64 {
    forward_log_slope(z, p).exp()
}

fn gpd_y(x: f64, p: &TailParams) -> Result<(f64, f64)> {
    let lambda = p.lambda_for(x - p.mu >= 0.0);
    let y = lambda * ((x - p.mu) / p.sigma).abs() + 1.0;
    if !(y > 0.0) {
        return Err(domain("tail_inverse", y, "y = lambda*|x-mu|/sigma + 1 > 0"));
    }
    Ok((y, lambda))
}

/// `R⁻¹(x) = s√2 erfc⁻¹(y^(-1/λ_s))`, `y = λ_s|x-μ|/σ + 1`.
pub fn tail_inverse(x: f64, p: &TailParams) -> Result<f64> {
    let (_, lambda) = gpd_y(x, p)?;
    if lambda < 0.0 {
        return Err(domain("tail_inverse", lambda, "lambda > 0"));
    }
    Ok(inverse(x, p).0)
}

/// `dR⁻¹/dx = (1/σ)√(π/2) y^(-1/λ_s-1) exp(erfc⁻¹(y^(-1/λ_s))²)`.
pub fn tail_inverse_dx(x: f64, p: &TailParams) -> Result<f64> {
    let (_, lambda) = gpd_y(x, p)?;
    if lambda < 0.0 {
        return Err(domain("tail_inverse_dx", lambda, "lambda > 0"));
    }
    Ok(inverse(x, p).1.exp())
}

/// Piecewise forward map (GPD branch for `λ_s > 0`, power branch for
/// `-1 ≤ λ_s < 0`), validated against `mode`.
pub fn tail_forward_ext(z: f64, p: &TailParams, mode: TailMode) -> Result<f64> {
    p.validate(mode)?;
    Ok(forward(z, p))
}

pub fn tail_forward_ext_dz(z: f64, p: &TailParams, mode: TailMode) -> Result<f64> {
    p.validate(mode)?;
    Ok(forward_log_slope(z, p).exp())
}

pub fn tail_inverse_ext(x: f64, p: &TailParams, mode: TailMode) -> Result<f64> {
    p.validate(mode)?;
    Ok(inverse(x, p).0)
}

pub fn tail_inverse_ext_dx(x: f64, p: &TailParams, mode: TailMode) -> Result<f64> {
    p.validate(mode)?;
    Ok(inverse(x, p).1.exp())
}

/// `Σ ln R'(zᵢ; pᵢ)` for an elementwise transform, evaluated in log space.
pub fn tail_log_det(z: &[f64], params: &[TailParams]) -> Result<f64> {
    if z.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: params.len(),
        });
    }
    Ok(z.iter().zip(params).map(|(&zi, p)| forward_log_slope(zi, p)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_gradient;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(mu: f64, sigma: f64, lambda: f64) -> TailParams {
        TailParams::new(mu, sigma, lambda, lambda)
    }

    fn random_params(rng: &mut ChaCha8Rng, mode: TailMode) -> TailParams {
        let lambda = |rng: &mut ChaCha8Rng| match mode {
            TailMode::GpdOnly => rng.gen_range(0.01..1.5),
            TailMode::Extended => {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.01..1.5)
                } else {
                    rng.gen_range(-1.0..-0.01)
                }
            }
        };
        TailParams::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0), lambda(rng), lambda(rng))
    }

    #[test]
    fn gpd_quantile_examples() {
        assert_eq!(gpd_quantile(0.0, 0.7).unwrap(), 0.0);
        assert_relative_eq!(gpd_quantile(0.75, 0.5).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(gpd_quantile(0.5, 1e-12).unwrap(), 2f64.ln(), max_relative = 1e-10);
        assert!(gpd_quantile(1.0, 0.5).is_err());
        assert!(gpd_quantile(-0.1, 0.5).is_err());
        assert!(gpd_quantile(0.5, 0.0).is_err());
        let mut prev = -1.0;
        for i in 0..100 {
            let v = gpd_quantile(i as f64 / 100.0, 0.3).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn two_tailed_examples() {
        assert_eq!(two_tailed(0.0, 0.3, 0.4).unwrap(), 0.0);
        assert_relative_eq!(two_tailed(-0.75, 0.9, 0.5).unwrap(), -2.0, max_relative = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let u: f64 = rng.gen_range(-0.999..0.999);
            assert_eq!(two_tailed(-u, 0.4, 0.4).unwrap(), -two_tailed(u, 0.4, 0.4).unwrap());
        }
        assert!(two_tailed(1.0, 0.3, 0.3).is_err());
        assert!(two_tailed(0.2, -0.3, 0.3).is_err());
    }

    #[test]
    fn forward_reference_values() {
        let p = sym(0.0, 1.0, 0.5);
        assert_eq!(tail_forward(0.0, &TailParams::new(1.7, 2.0, 0.3, 0.9)), 1.7);
        // 50-digit reference
        assert_relative_eq!(tail_forward(1.0, &p), 1.550_485_706_229_150_3, max_relative = 1e-14);
        assert_relative_eq!(
            tail_forward(-2.0, &TailParams::new(0.3, 1.7, 0.5, 0.2)),
            -6.969_435_336_017_818,
            max_relative = 1e-14
        );
        assert_relative_eq!(tail_forward(3.0, &sym(0.0, 1.0, 1.0)), 369.398_347_344_958_85, max_relative = 1e-13);
    }

    #[test]
    fn forward_matches_two_tailed_composition() {
        // R(z) = μ + σ·Q(2Φ(z) - 1) wherever u is representable.
        let p = TailParams::new(0.4, 1.3, 0.35, 0.8);
        for &z in &[-3.0, -1.0, -0.1, 0.2, 1.5, 4.0] {
            let u = 2.0 * sf::normal_cdf(z) - 1.0;
            let expected = p.mu + p.sigma * two_tailed(u, p.lambda_plus, p.lambda_minus).unwrap();
            assert_relative_eq!(tail_forward(z, &p), expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn antisymmetric_when_tails_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sym(0.0, 1.4, 0.6);
        for _ in 0..200 {
            let z: f64 = rng.gen_range(-6.0..6.0);
            assert_relative_eq!(tail_forward(-z, &p), -tail_forward(z, &p), max_relative = 1e-14);
        }
    }

    #[test]
    fn slope_at_origin_is_parameter_free() {
        for &l in &[0.05, 0.5, 2.0] {
            let p = TailParams::new(0.3, 1.0, l, 3.0 * l);
            assert_relative_eq!(tail_forward_dz(0.0, &p), SQRT_2_OVER_PI, max_relative = 1e-15);
        }
        let p1 = sym(0.0, 1.0, 0.4);
        let p2 = sym(0.0, 2.0, 0.4);
        for &z in &[-2.0, 0.5, 3.0] {
            assert_relative_eq!(tail_forward_dz(z, &p2), 2.0 * tail_forward_dz(z, &p1), max_relative = 1e-14);
        }
    }

    #[test]
    fn forward_slope_matches_finite_difference() {
        let p = TailParams::new(0.2, 1.3, 0.5, 0.25);
        for &z in &[-3.0, -1.0, 0.1, 1.0, 3.0] {
            let fd = finite_difference_gradient(|v| tail_forward(v[0], &p), &[z], 1e-6)[0];
            assert_relative_eq!(tail_forward_dz(z, &p), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn inverse_examples() {
        let p = sym(0.0, 1.0, 0.5);
        assert_eq!(tail_inverse(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(tail_inverse(1.5505, &p).unwrap(), 1.000_005_279_334_744, max_relative = 1e-12);
        let q = TailParams::new(1.0, 2.5, 0.3, 0.7);
        assert_relative_eq!(tail_inverse_dx(1.0, &q).unwrap(), (PI / 2.0).sqrt() / 2.5, max_relative = 1e-14);
        // y <= 0 only with an invalid negative index
        let bad = TailParams::new(0.0, 1.0, -0.5, 0.5);
        assert!(tail_inverse(3.0, &bad).is_err());
    }

    #[test]
    fn inverse_slope_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = random_params(&mut rng, TailMode::GpdOnly);
            let z: f64 = rng.gen_range(-5.0..5.0);
            let x = tail_forward(z, &p);
            let reciprocal = 1.0 / tail_forward_dz(tail_inverse(x, &p).unwrap(), &p);
            assert_relative_eq!(tail_inverse_dx(x, &p).unwrap(), reciprocal, max_relative = 1e-8);
        }
        let p = TailParams::new(-0.3, 0.8, 0.4, 0.9);
        for &x in &[-20.0, -1.0, 0.5, 2.0, 40.0] {
            let fd = finite_difference_gradient(|v| tail_inverse(v[0], &p).unwrap(), &[x], 1e-6)[0];
            assert_relative_eq!(tail_inverse_dx(x, &p).unwrap(), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn power_tail_examples() {
        assert_eq!(power_tail(0.0, 1.7).unwrap(), 0.0);
        for &z in &[0.1, 1.0, 7.5] {
            assert_relative_eq!(power_tail(z, 1.0).unwrap(), SQRT_2_OVER_PI * z, max_relative = 1e-14);
        }
        for &xi in &[1.0, 1.3, 1.99] {
            let h = 1e-7;
            let slope = (power_tail(h, xi).unwrap() - power_tail(0.0, xi).unwrap()) / h;
            assert!((slope - SQRT_2_OVER_PI).abs() < 1e-6);
            let fd = finite_difference_gradient(|v| power_tail(v[0], xi).unwrap(), &[1e-3], 1e-6)[0];
            assert!((fd - SQRT_2_OVER_PI * (1.0 + 1e-3 / xi).powf(xi - 1.0)).abs() < 1e-9);
        }
        assert!(power_tail(-0.1, 1.5).is_err());
    }

    #[test]
    fn extended_linear_branch() {
        let p = TailParams::new(0.5, 2.0, -1.0, -1.0);
        for &z in &[-3.0, -0.2, 0.0, 1.1, 6.0] {
            let x = tail_forward_ext(z, &p, TailMode::Extended).unwrap();
            assert_relative_eq!(x, 0.5 + 2.0 * SQRT_2_OVER_PI * z, max_relative = 1e-14, epsilon = 1e-15);
            assert_relative_eq!(
                tail_forward_ext_dz(z, &p, TailMode::Extended).unwrap(),
                2.0 * SQRT_2_OVER_PI,
                max_relative = 1e-14
            );
        }
        assert!(tail_forward_ext(1.0, &p, TailMode::GpdOnly).is_err());
        let zero = TailParams::new(0.0, 1.0, 0.0, 0.5);
        assert!(tail_forward_ext(1.0, &zero, TailMode::Extended).is_err());
        let too_light = TailParams::new(0.0, 1.0, -1.5, 0.5);
        assert!(tail_forward_ext(1.0, &too_light, TailMode::Extended).is_err());
    }

    #[test]
    fn both_regimes_agree_at_origin() {
        for &(lp, lm) in &[(0.4, -0.5), (-1.0, 0.9), (-0.2, -0.7)] {
            let p = TailParams::new(0.7, 1.9, lp, lm);
            assert_eq!(tail_forward_ext(0.0, &p, TailMode::Extended).unwrap(), 0.7);
            assert_relative_eq!(
                tail_forward_ext_dz(0.0, &p, TailMode::Extended).unwrap(),
                1.9 * SQRT_2_OVER_PI,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn extended_roundtrip_and_slopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2_000 {
            let p = random_params(&mut rng, TailMode::Extended);
            let z: f64 = rng.gen_range(-8.0..8.0);
            let x = tail_forward_ext(z, &p, TailMode::Extended).unwrap();
            let back = tail_inverse_ext(x, &p, TailMode::Extended).unwrap();
            assert!((back - z).abs() <= 1e-8, "{p:?} z={z} back={back}");
            let prod = tail_forward_ext_dz(z, &p, TailMode::Extended).unwrap() * tail_inverse_ext_dx(x, &p, TailMode::Extended).unwrap();
            assert_relative_eq!(prod, 1.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn log_det_examples() {
        let p = TailParams::new(0.0, 1.7, 0.3, 0.3);
        assert_relative_eq!(
            tail_log_det(&[0.0], &[p]).unwrap(),
            1.7f64.ln() + 0.5 * (2.0 / PI).ln(),
            max_relative = 1e-15
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params: Vec<_> = (0..5).map(|_| random_params(&mut rng, TailMode::GpdOnly)).collect();
        let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let direct: f64 = z.iter().zip(&params).map(|(&zi, p)| tail_forward_dz(zi, p)).product();
        let ld = tail_log_det(&z, &params).unwrap();
        assert_relative_eq!(ld, direct.ln(), max_relative = 1e-10);
        let scaled: Vec<_> = params
            .iter()
            .map(|p| TailParams {
                sigma: p.sigma * 3.0,
                ..*p
            })
            .collect();
        assert_relative_eq!(tail_log_det(&z, &scaled).unwrap(), ld + 5.0 * 3f64.ln(), max_relative = 1e-12);
        assert!(tail_log_det(&z[..2], &params).is_err());
    }

    #[test]
    fn log_space_survives_huge_inputs() {
        let p = sym(0.0, 1.0, 0.8);
        let x = tail_forward(37.0, &p);
        assert!(x.is_finite());
        assert!(forward_log_slope(37.0, &p).is_finite());
        let (z, ls) = inverse(1e30, &p);
        assert!(z.is_finite() && ls.is_finite());
        // tiny λ: the inverse of a large value still maps to a finite z
        let q = sym(0.0, 1.0, LAMBDA_FLOOR);
        let (z, ls) = inverse(500.0, &q);
        assert!(z.is_finite() && ls.is_finite());
        assert_relative_eq!(tail_forward(z, &q), 500.0, max_relative = 1e-8);
    }

    #[test]
    fn decode_zero_raw_gives_initial_shape() {
        for mode in [TailMode::GpdOnly, TailMode::Extended] {
            let p = TailParams::decode([0.0; 4], mode);
            assert_eq!(p.mu, 0.0);
            assert_relative_eq!(p.sigma, (PI / 2.0).sqrt(), max_relative = 1e-14);
            assert_relative_eq!(p.lambda_plus, INITIAL_LAMBDA, max_relative = 1e-13);
            assert_relative_eq!(tail_forward_dz(0.0, &p), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn decode_respects_mode_domain() {
        for raw in [-50.0, -10.0, -3.0, -2.3, -2.2, 0.0, 3.0, 40.0] {
            let g = TailParams::decode([0.0, raw, raw, raw], TailMode::GpdOnly);
            assert!(g.validate(TailMode::GpdOnly).is_ok(), "raw={raw} {g:?}");
            let e = TailParams::decode([0.0, raw, raw, raw], TailMode::Extended);
            assert!(e.validate(TailMode::Extended).is_ok(), "raw={raw} {e:?}");
            assert!(e.lambda_plus.abs() >= LAMBDA_FLOOR);
        }
        // raw value whose decoded λ lands inside (-1e-4, 0) clamps to the negative side
        let offset = sf::softplus_inv(INITIAL_LAMBDA + 1.0);
        let raw = sf::softplus_inv(1.0 - 5e-5) - offset;
        let e = TailParams::decode([0.0, 0.0, raw, raw], TailMode::Extended);
        assert_eq!(e.lambda_plus, -LAMBDA_FLOOR);
    }
}
