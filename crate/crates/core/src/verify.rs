//! Numerical self-checks run by the `check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{finite_difference_gradient, Tape, Var};
use crate::flow_layers::{rqs, LuLayer, ParamStore, SplineKnots};
use crate::flow_model::{build_variant, Variant};
use crate::special_fn::SQRT_2_OVER_PI;
use crate::tail_transform::{self as tt, TailMode, TailParams};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed error next to its tolerance.
    pub detail: String,
}

fn outcome(name: &str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tolerance {tol:.0e})"),
    }
}

/// Random valid tail parameters for `mode`.
pub fn random_tail_params<R: Rng>(rng: &mut R, mode: TailMode) -> TailParams {
    let mut lambda = || match mode {
        TailMode::GpdOnly => rng.gen_range(0.01..1.5),
        TailMode::Extended if rng.gen_bool(0.5) => rng.gen_range(0.01..1.5),
        TailMode::Extended => rng.gen_range(-1.0..-0.01),
    };
    let (lp, lm) = (lambda(), lambda());
    TailParams::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0), lp, lm)
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

pub fn tail_round_trip(draws: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for mode in [TailMode::GpdOnly, TailMode::Extended] {
        for _ in 0..draws {
            let p = random_tail_params(&mut rng, mode);
            let z = rng.gen_range(-8.0..8.0);
            let x = tt::forward(z, &p);
            worst = worst.max((tt::inverse(x, &p).0 - z).abs());
        }
    }
    outcome("tail transform round trip", worst, 1e-6)
}

pub fn tail_slopes(draws: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for mode in [TailMode::GpdOnly, TailMode::Extended] {
        for _ in 0..draws {
            let p = random_tail_params(&mut rng, mode);
            let z: f64 = rng.gen_range(-5.0..5.0);
            if z.abs() < 1e-3 {
                continue;
            }
            let fd = finite_difference_gradient(|v| tt::forward(v[0], &p), &[z], 1e-7)[0];
            worst = worst.max(relative(tt::forward_log_slope(z, &p).exp(), fd, 1e-9));
            let x = tt::forward(z, &p);
            let fd_inv = finite_difference_gradient(|v| tt::inverse(v[0], &p).0, &[x], 1e-7)[0];
            worst = worst.max(relative(tt::inverse(x, &p).1.exp(), fd_inv, 1e-9));
        }
    }
    outcome("tail transform derivatives", worst, 1e-6)
}

/// Two-sided difference at 0 with one Richardson step. The second derivative
/// jumps at the origin when the two tails differ, which leaves a plain central
/// difference with an `O(h)` error; `2·D(h/2) - D(h)` cancels it.
pub fn origin_difference(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    2.0 * d(h / 2.0) - d(h)
}

pub fn origin_slope(draws: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let p = random_tail_params(&mut rng, TailMode::Extended);
        let fd = origin_difference(|z| tt::forward(z, &p), 1e-5);
        worst = worst.max(relative(fd, p.sigma * SQRT_2_OVER_PI, 1.0));
    }
    outcome("tail slope at the origin", worst, 1e-8)
}

pub fn spline_round_trip(draws: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let raw: Vec<f64> = (0..rqs::raw_len(rqs::DEFAULT_BINS)).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let knots = SplineKnots::from_raw(&raw, rqs::DEFAULT_BOUND);
        let z = rng.gen_range(-4.0..4.0);
        let x = rqs::rqs_forward(z, &knots).0;
        worst = worst.max((rqs::rqs_inverse(x, &knots).0 - z).abs());
    }
    outcome("spline round trip", worst, 1e-8)
}

pub fn lu_round_trip(seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let lu = LuLayer::new(&mut store, "lu", 10);
    for v in store.values.iter_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    let z: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let (x, _) = lu.forward(&store.values, &z);
    let (back, _) = lu.inverse(&store.values, &x);
    let worst = z.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome("LU round trip (d = 10)", worst, 1e-10)
}

/// Reverse-mode against central differences for each variant at d = 2.
pub fn model_gradients(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Variant::ALL
        .iter()
        .map(|&v| {
            let mut model = build_variant(v, 2, seed).expect("valid variant");
            for p in model.params_mut() {
                *p += rng.gen_range(-0.3..0.3);
            }
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let params = model.params().to_vec();
            let tape = Tape::new();
            let pv: Vec<Var> = params.iter().map(|&p| tape.var(p)).collect();
            let xv = x.map(Var::constant);
            let worst = match model.log_prob_with(&pv, &xv) {
                Ok(lp) => {
                    let g = tape.backward(lp).expect("fresh tape").leading(params.len()).to_vec();
                    let fd = finite_difference_gradient(|p| model.log_prob_with(p, &x).unwrap_or(f64::NAN), &params, 1e-6);
                    g.iter().zip(&fd).map(|(a, b)| relative(*a, *b, 1e-2)).fold(0.0, f64::max)
                }
                Err(_) => f64::INFINITY,
            };
            outcome(&format!("{v} log-density gradient"), worst, 1e-4)
        })
        .collect()
}

pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut out = vec![
        tail_round_trip(10_000, seed),
        tail_slopes(2_000, seed + 1),
        origin_slope(1_000, seed + 2),
        spline_round_trip(10_000, seed + 3),
        lu_round_trip(seed + 4),
    ];
    out.extend(model_gradients(seed + 5));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks(0) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
