//! Base densities on the `z` side of a flow.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::autodiff::Scalar;
use crate::flow_layers::ParamStore;
use crate::special_fn::{self as sf, HALF_LN_2PI};

pub const NU_FLOOR: f64 = 1e-3;
pub const INITIAL_NU: f64 = 30.0;

#[derive(Debug, Clone)]
pub enum BaseDistribution {
    StdNormal {
        dim: usize,
    },
    /// Independent Student-T marginals, `ν_i = softplus(raw_i) + 1e-3`.
    StudentT {
        dim: usize,
        raw_nu: Range<usize>,
    },
}

/// `ln` density of a standard Student-T at `z`.
pub fn student_t_log_pdf<S: Scalar>(z: S, nu: S) -> S {
    let half = (nu + 1.0) * 0.5;
    half.log_gamma() - (nu * 0.5).log_gamma() - (nu * PI).ln() * 0.5 - half * (z * z / nu).ln_1p()
}

impl BaseDistribution {
    pub fn std_normal(dim: usize) -> Self {
        BaseDistribution::StdNormal { dim }
    }

    pub fn student_t(store: &mut ParamStore, prefix: &str, dim: usize, initial_nu: f64) -> Self {
        let raw = sf::softplus_inv(initial_nu - NU_FLOOR);
        let raw_nu = store.alloc(format!("{prefix}.raw_nu"), &[dim], |_| raw);
        BaseDistribution::StudentT { dim, raw_nu }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseDistribution::StdNormal { dim } | BaseDistribution::StudentT { dim, .. } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseDistribution::StdNormal { .. } => "normal",
            BaseDistribution::StudentT { .. } => "student-t",
        }
    }

    /// Degrees of freedom per dimension (Student-T only).
    pub fn degrees_of_freedom<S: Scalar>(&self, params: &[S]) -> Option<Vec<S>> {
        match self {
            BaseDistribution::StdNormal { .. } => None,
            BaseDistribution::StudentT { raw_nu, .. } => Some(params[raw_nu.clone()].iter().map(|&r| r.softplus() + NU_FLOOR).collect()),
        }
    }

    pub fn log_prob<S: Scalar>(&self, params: &[S], z: &[S]) -> S {
        match self {
            BaseDistribution::StdNormal { dim } => S::sum_products(S::cst(-(*dim as f64) * HALF_LN_2PI), z.iter().map(|&v| (v, v * -0.5))),
            BaseDistribution::StudentT { .. } => {
                let nus = self.degrees_of_freedom(params).expect("student-t");
                let terms: Vec<S> = z.iter().zip(nus).map(|(&zi, nu)| student_t_log_pdf(zi, nu)).collect();
                S::sum(&terms)
            }
        }
    }

    /// Marginal CDF of coordinate `i`.
    pub fn marginal_cdf(&self, params: &[f64], i: usize, z: f64) -> f64 {
        match self {
            BaseDistribution::StdNormal { .. } => sf::normal_cdf(z),
            BaseDistribution::StudentT { .. } => {
                let nu = self.degrees_of_freedom(params).expect("student-t")[i];
                StudentsT::new(0.0, 1.0, nu).expect("nu > 0").cdf(z)
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, params: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            BaseDistribution::StdNormal { dim } => (0..*dim).map(|_| rng.sample(StandardNormal)).collect(),
            BaseDistribution::StudentT { .. } => {
                let nus = self.degrees_of_freedom(params).expect("student-t");
                nus.into_iter()
                    .map(|nu| {
                        let n: f64 = rng.sample(StandardNormal);
                        let c = ChiSquared::new(nu).expect("nu > 0").sample(rng);
                        n / (c / nu).sqrt()
                    })
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, params: &[f64], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.sample_one(params, rng)).collect()
    }
}
