use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tailflow::autodiff::Tape;
use tailflow::flow_model::{build_variant, Architecture, BaseSpec, FlowModel, LayerSpec, Variant};
use tailflow::trainer::nll_and_gradient;

fn perturbed(v: Variant, dim: usize, seed: u64, scale: f64) -> FlowModel {
    let mut m = build_variant(v, dim, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in m.params_mut() {
        *p += rng.gen_range(-scale..scale);
    }
    m
}

#[test]
fn density_of_pushed_sample_matches_change_of_variables() {
    for v in Variant::ALL {
        let m = perturbed(v, 3, 1, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let z = m.base().sample_one(m.params(), &mut rng);
            let (x, ld) = m.push_forward(&z).unwrap();
            let expected = m.base().log_prob(m.params(), &z) - ld;
            let got = m.log_prob(&x).unwrap();
            assert!((got - expected).abs() < 1e-7 * expected.abs().max(1.0), "{v}: {got} vs {expected}");
        }
    }
}

fn numeric_log_det(m: &FlowModel, z: &[f64]) -> f64 {
    let d = z.len();
    let mut jac = vec![vec![0.0; d]; d];
    for j in 0..d {
        let h = 1e-6 * z[j].abs().max(1.0);
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let (xp, _) = m.push_forward(&zp).unwrap();
        let (xm, _) = m.push_forward(&zm).unwrap();
        for i in 0..d {
            jac[i][j] = (xp[i] - xm[i]) / (2.0 * h);
        }
    }
    assert_eq!(d, 2);
    (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]).abs().ln()
}

#[test]
fn exf_density_matches_numerical_jacobian_of_sampler() {
    let m = perturbed(Variant::Exf, 2, 3, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..25 {
        let z: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (x, _) = m.push_forward(&z).unwrap();
        let expected = m.base().log_prob(m.params(), &z) - numeric_log_det(&m, &z);
        let got = m.log_prob(&x).unwrap();
        assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
    }
}

/// Importance-sampling estimate of ∫ q(x) dx with a product-Cauchy proposal.
#[test]
fn densities_integrate_to_one_at_d2() {
    let n = 40_000;
    for v in Variant::ALL {
        let m = perturbed(v, 2, 5, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let scale = 3.0;
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..2)
                .map(|_| scale * (std::f64::consts::PI * (rng.gen::<f64>() - 0.5)).tan())
                .collect();
            let log_prop: f64 = x
                .iter()
                .map(|xi| -(std::f64::consts::PI * scale * (1.0 + (xi / scale).powi(2))).ln())
                .sum();
            w.push((m.log_prob(&x).unwrap() - log_prop).exp());
        }
        let mean = w.iter().sum::<f64>() / n as f64;
        let se = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se + 1e-3, "{v}: mass {mean} ± {se}");
    }
}

#[test]
fn exf_sample_mean_follows_forced_location() {
    // a lone tail layer with μ forced through the head bias
    let arch = Architecture {
        base: BaseSpec::Normal,
        layers: vec![LayerSpec::Tail {
            marginal: false,
            mode: tailflow::tail_transform::TailMode::GpdOnly,
        }],
    };
    let mut m = FlowModel::new(2, arch, 0).unwrap();
    let b3 = m.store().block("layer0.cond.b3").unwrap().range();
    let mu = [1.5, -0.7];
    for (i, &v) in mu.iter().enumerate() {
        m.params_mut()[b3.start + 4 * i] = v;
    }
    let n = 100_000;
    let xs = m.sample_seeded(n, 7);
    for (i, &target) in mu.iter().enumerate() {
        let col: Vec<f64> = xs.iter().map(|r| r[i]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        // symmetric tails (λ₊ = λ₋) make μ the mean
        assert!((mean - target).abs() < 4.0 * sd / (n as f64).sqrt(), "dim {i}: {mean} vs {target}");
    }
}

#[test]
fn average_log_density_of_own_samples_matches_entropy_estimate() {
    // Two independent estimators of -H(q): the plain average over model
    // samples, and the change-of-variables average base(z) - ln|det| on a
    // second stream. They must agree within sampling error.
    let n = 10_000;
    for v in Variant::ALL {
        let m = perturbed(v, 2, 8, 0.2);
        let xs = m.sample_seeded(n, 9);
        let a: Vec<f64> = xs.iter().map(|x| m.log_prob(x).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b: Vec<f64> = (0..n)
            .map(|_| {
                let z = m.base().sample_one(m.params(), &mut rng);
                let (_, ld) = m.push_forward(&z).unwrap();
                m.base().log_prob(m.params(), &z) - ld
            })
            .collect();
        let stats = |s: &[f64]| {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() as f64 - 1.0);
            (mean, var / s.len() as f64)
        };
        let ((ma, va), (mb, vb)) = (stats(&a), stats(&b));
        assert!((ma - mb).abs() < 3.0 * (va + vb).sqrt(), "{v}: {ma} vs {mb}");
    }
}

#[test]
fn expected_score_vanishes_at_the_true_parameters() {
    // d = 1 affine-only flow; data drawn from the model itself
    let arch = Architecture {
        base: BaseSpec::Normal,
        layers: vec![LayerSpec::Affine],
    };
    let mut m = FlowModel::new(1, arch, 0).unwrap();
    let b3 = m.store().block("layer0.cond.b3").unwrap().range();
    m.params_mut()[b3.start] = 0.8;
    m.params_mut()[b3.start + 1] = -0.4;
    let n = 20_000;
    let rows = m.sample_seeded(n, 11);
    let mut tape = Tape::new();
    let per_row: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| nll_and_gradient(&m, std::slice::from_ref(r), &mut tape).unwrap().1)
        .collect();
    for k in [b3.start, b3.start + 1] {
        let g: Vec<f64> = per_row.iter().map(|g| g[k]).collect();
        let mean = g.iter().sum::<f64>() / n as f64;
        let se = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "param {k}: {mean} ± {se}");
    }
}

#[test]
fn fresh_models_are_finite_on_extreme_inputs() {
    for v in Variant::ALL {
        let m = build_variant(v, 3, 0).unwrap();
        for x in [[0.0, 0.0, 0.0], [40.0, -40.0, 1e3], [-1e6, 1e-9, 5.0]] {
            let lp = m.log_prob(&x).unwrap();
            assert!(lp.is_finite(), "{v} at {x:?}");
        }
    }
}
