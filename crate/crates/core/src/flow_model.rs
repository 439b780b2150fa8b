//! Base distribution plus layer stack, and the five named architectures.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::base_dist::{BaseDistribution, INITIAL_NU};
use crate::error::{Error, Result};
use crate::flow_layers::{rqs, AffineLayer, Layer, LuLayer, ParamStore, RqsLayer, TailLayer};
use crate::tail_transform::TailMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "rqs")]
    Rqs,
    #[serde(rename = "gtaf")]
    Gtaf,
    #[serde(rename = "ttf")]
    Ttf,
    #[serde(rename = "ttf_m")]
    TtfM,
    #[serde(rename = "exf")]
    Exf,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Rqs, Variant::Gtaf, Variant::Ttf, Variant::TtfM, Variant::Exf];

    /// Lower-case identifier used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            Variant::Rqs => "rqs",
            Variant::Gtaf => "gtaf",
            Variant::Ttf => "ttf",
            Variant::TtfM => "ttf_m",
            Variant::Exf => "exf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Rqs => "RQS",
            Variant::Gtaf => "gTAF",
            Variant::Ttf => "TTF",
            Variant::TtfM => "TTF_m",
            Variant::Exf => "EXF",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == key)
            .ok_or_else(|| Error::Config(format!("unknown flow '{s}' (expected one of rqs, gtaf, ttf, ttf_m, exf)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSpec {
    Normal,
    StudentT { initial_nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `reverse = false` gives the identity permutation.
    Lu {
        reverse: bool,
    },
    Rqs {
        bins: usize,
        bound: f64,
    },
    Affine,
    Tail {
        marginal: bool,
        mode: TailMode,
    },
}

/// Base plus layers, z-side first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub base: BaseSpec,
    pub layers: Vec<LayerSpec>,
}

/// Knobs that modify the stock architectures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantOptions {
    /// Insert an autoregressive affine layer directly before the tail layer.
    pub tail_affine: bool,
}

impl Architecture {
    pub fn for_variant(variant: Variant, options: VariantOptions) -> Self {
        let spline = LayerSpec::Rqs {
            bins: rqs::DEFAULT_BINS,
            bound: rqs::DEFAULT_BOUND,
        };
        let lu = LayerSpec::Lu { reverse: true };
        let tailed = |marginal: bool, mode: TailMode| {
            let mut layers = vec![spline.clone(), lu.clone()];
            if options.tail_affine {
                layers.push(LayerSpec::Affine);
            }
            layers.push(LayerSpec::Tail { marginal, mode });
            Architecture {
                base: BaseSpec::Normal,
                layers,
            }
        };
        match variant {
            Variant::Rqs => Architecture {
                base: BaseSpec::Normal,
                layers: vec![lu.clone(), spline.clone(), LayerSpec::Affine],
            },
            Variant::Gtaf => Architecture {
                base: BaseSpec::StudentT { initial_nu: INITIAL_NU },
                layers: vec![lu.clone(), spline.clone(), LayerSpec::Affine],
            },
            Variant::Ttf => tailed(false, TailMode::Extended),
            Variant::TtfM => tailed(true, TailMode::Extended),
            Variant::Exf => tailed(false, TailMode::GpdOnly),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowModel {
    dim: usize,
    variant: Option<Variant>,
    architecture: Architecture,
    base: BaseDistribution,
    layers: Vec<Layer>,
    store: ParamStore,
}

/// Builds one of the five named architectures with its default options.
pub fn build_variant(variant: Variant, dim: usize, seed: u64) -> Result<FlowModel> {
    FlowModel::for_variant(variant, dim, VariantOptions::default(), seed)
}

impl FlowModel {
    pub fn for_variant(variant: Variant, dim: usize, options: VariantOptions, seed: u64) -> Result<Self> {
        let mut model = Self::new(dim, Architecture::for_variant(variant, options), seed)?;
        model.variant = Some(variant);
        Ok(model)
    }

    /// Parameters are allocated base first, then layers z-side first, with
    /// conditioner weights drawn from a stream seeded by `seed`.
    pub fn new(dim: usize, architecture: Architecture, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let base = match architecture.base {
            BaseSpec::Normal => BaseDistribution::std_normal(dim),
            BaseSpec::StudentT { initial_nu } => {
                if !(initial_nu > 0.0) {
                    return Err(Error::Config(format!("initial nu must be positive, got {initial_nu}")));
                }
                BaseDistribution::student_t(&mut store, "base", dim, initial_nu)
            }
        };
        let layers = architecture
            .layers
            .iter()
            .enumerate()
            .map(|(k, spec)| build_layer(&mut store, &format!("layer{k}"), dim, spec, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            variant: None,
            architecture,
            base,
            layers,
            store,
        })
    }

    /// Rebuilds a model and installs saved parameter values.
    pub fn from_parts(dim: usize, variant: Option<Variant>, architecture: Architecture, store: ParamStore) -> Result<Self> {
        let mut model = Self::new(dim, architecture, 0)?;
        if model.store.blocks != store.blocks || model.store.len() != store.len() {
            return Err(Error::Checkpoint("parameter layout does not match the architecture".into()));
        }
        model.store.values = store.values;
        model.variant = variant;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> Option<Variant> {
        self.variant
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn base(&self) -> &BaseDistribution {
        &self.base
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn params(&self) -> &[f64] {
        &self.store.values
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.store.values
    }

    pub fn num_params(&self) -> usize {
        self.store.len()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got });
        }
        Ok(())
    }

    /// Maps `x` back to the base side: `(z, Σ ln|det ∂z/∂x|)`.
    ///
    /// Non-finite intermediates are reported with the index of the layer
    /// (z-side first) that produced them.
    pub fn to_base<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        self.check_dim(x.len())?;
        let mut cur = x.to_vec();
        let mut log_dets = Vec::with_capacity(self.layers.len() + 1);
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (z, ld) = layer.inverse(params, &cur);
            if !ld.value().is_finite() || z.iter().any(|v| !v.value().is_finite()) {
                return Err(Error::NonFinite {
                    layer: idx,
                    stage: "inverse",
                });
            }
            log_dets.push(ld);
            cur = z;
        }
        Ok((cur, log_dets))
    }

    /// `ln q_x(x)` with parameters supplied explicitly (differentiable).
    pub fn log_prob_with<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<S> {
        let (z, mut terms) = self.to_base(params, x)?;
        let base = self.base.log_prob(params, &z);
        if !base.value().is_finite() {
            return Err(Error::NonFinite {
                layer: self.layers.len(),
                stage: "base",
            });
        }
        terms.push(base);
        Ok(S::sum(&terms))
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        self.log_prob_with(self.params(), x)
    }

    /// Row-wise log densities; identical to calling [`Self::log_prob`] per row.
    pub fn log_prob_batch<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.log_prob(r.as_ref())).collect()
    }

    /// Pushes one base draw through the layers.
    pub fn push_forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_dim(z.len())?;
        let mut cur = z.to_vec();
        let mut log_det = 0.0;
        for layer in &self.layers {
            let (x, ld) = layer.forward(self.params(), &cur);
            cur = x;
            log_det += ld;
        }
        Ok((cur, log_det))
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let z = self.base.sample_one(self.params(), rng);
                self.push_forward(&z).expect("base draw has model dimension").0
            })
            .collect()
    }

    pub fn sample_seeded(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample(count, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// CDF of a one-dimensional model; every layer is increasing at `d = 1`.
    pub fn cdf_1d(&self, x: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim,
            });
        }
        let (z, _) = self.to_base(self.params(), &[x])?;
        Ok(self.base.marginal_cdf(self.params(), 0, z[0]))
    }
}

fn build_layer<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, spec: &LayerSpec, rng: &mut R) -> Result<Layer> {
    Ok(match *spec {
        LayerSpec::Lu { reverse } => {
            let perm = if reverse { (0..dim).rev().collect() } else { (0..dim).collect() };
            Layer::Lu(LuLayer::with_permutation(store, prefix, perm))
        }
        LayerSpec::Rqs { bins, bound } => {
            if bins < 2 || !(bound > 0.0) {
                return Err(Error::Config(format!("invalid spline: bins={bins}, bound={bound}")));
            }
            Layer::Rqs(RqsLayer::new(store, prefix, dim, bins, bound, rng))
        }
        LayerSpec::Affine => Layer::Affine(AffineLayer::new(store, prefix, dim, rng)),
        LayerSpec::Tail { marginal: true, mode } => Layer::Tail(TailLayer::marginal(store, prefix, dim, mode)),
        LayerSpec::Tail { marginal: false, mode } => Layer::Tail(TailLayer::autoregressive(store, prefix, dim, mode, rng)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_gradient, Tape, Var};
    use crate::flow_layers::TailSource;

    fn perturb(model: &mut FlowModel, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in model.params_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("maf".parse::<Variant>().is_err());
    }

    #[test]
    fn empty_stack_is_base() {
        let arch = Architecture {
            base: BaseSpec::Normal,
            layers: vec![],
        };
        let m = FlowModel::new(2, arch, 0).unwrap();
        let x = [0.3, -1.0];
        let expected = BaseDistribution::std_normal(2).log_prob::<f64>(&[], &x);
        assert_eq!(m.log_prob(&x).unwrap(), expected);
    }

    #[test]
    fn single_affine_is_change_of_variables() {
        let arch = Architecture {
            base: BaseSpec::Normal,
            layers: vec![LayerSpec::Affine],
        };
        let mut m = FlowModel::new(2, arch, 0).unwrap();
        let b3 = m.store().block("layer0.cond.b3").unwrap().range();
        let (shift, log_scale) = ([0.5, -1.0], [0.3, -0.2]);
        for i in 0..2 {
            m.params_mut()[b3.start + 2 * i] = shift[i];
            m.params_mut()[b3.start + 2 * i + 1] = log_scale[i];
        }
        let x = [1.2, 0.7];
        let z: Vec<f64> = (0..2).map(|i| (x[i] - shift[i]) / log_scale[i].exp()).collect();
        let expected = BaseDistribution::std_normal(2).log_prob::<f64>(&[], &z) - log_scale.iter().sum::<f64>();
        assert!((m.log_prob(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn stacks_match_constructor_contract() {
        let exf = build_variant(Variant::Exf, 3, 0).unwrap();
        match exf.layers().last().unwrap() {
            Layer::Tail(t) => {
                assert_eq!(t.mode(), TailMode::GpdOnly);
                assert!(matches!(t.source, TailSource::Autoregressive(_)));
            }
            other => panic!("unexpected {}", other.name()),
        }
        let gtaf = build_variant(Variant::Gtaf, 3, 0).unwrap();
        assert!(matches!(gtaf.base(), BaseDistribution::StudentT { .. }));
        assert!(matches!(gtaf.layers()[0], Layer::Lu(_)));
        let ttf = build_variant(Variant::Ttf, 10, 0).unwrap();
        let ttf_m = build_variant(Variant::TtfM, 10, 0).unwrap();
        assert!(ttf.num_params() > ttf_m.num_params());
        let with_affine = FlowModel::for_variant(Variant::Ttf, 3, VariantOptions { tail_affine: true }, 0).unwrap();
        assert_eq!(with_affine.layers().len(), 4);
        assert!(matches!(with_affine.layers()[2], Layer::Affine(_)));
    }

    #[test]
    fn identity_initialized_stack_reproduces_base_samples() {
        let arch = Architecture {
            base: BaseSpec::Normal,
            layers: vec![
                LayerSpec::Lu { reverse: false },
                LayerSpec::Rqs { bins: 8, bound: 2.5 },
                LayerSpec::Affine,
            ],
        };
        let m = FlowModel::new(3, arch, 1).unwrap();
        let xs = m.sample_seeded(50, 9);
        let zs = m.base().sample(m.params(), 50, &mut ChaCha8Rng::seed_from_u64(9));
        for (x, z) in xs.iter().zip(&zs) {
            for (a, b) in x.iter().zip(z) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(m.sample_seeded(5, 3), m.sample_seeded(5, 3));
    }

    #[test]
    fn inserting_identity_layer_leaves_density_unchanged() {
        let mut a = build_variant(Variant::Exf, 2, 4).unwrap();
        perturb(&mut a, 5, 0.3);
        let mut arch = a.architecture().clone();
        arch.layers.insert(1, LayerSpec::Affine);
        let mut b = FlowModel::new(2, arch, 4).unwrap();
        // copy the shared blocks by name; the inserted layer keeps its zero head
        let renamed = |name: &str| -> String {
            match name.strip_prefix("layer").and_then(|r| r.split_once('.')) {
                Some((k, rest)) => {
                    let k: usize = k.parse().unwrap();
                    let k = if k >= 1 { k + 1 } else { k };
                    format!("layer{k}.{rest}")
                }
                None => name.to_string(),
            }
        };
        for block in a.store().blocks.clone() {
            let target = b.store().block(&renamed(&block.name)).unwrap().range();
            let values = a.params()[block.range()].to_vec();
            b.params_mut()[target].copy_from_slice(&values);
        }
        for x in [[0.1, 0.2], [-3.0, 4.0], [10.0, -0.5]] {
            let diff = a.log_prob(&x).unwrap() - b.log_prob(&x).unwrap();
            assert!(diff.abs() < 1e-10, "{diff}");
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let x = [0.7, -1.4];
        for v in Variant::ALL {
            let mut m = build_variant(v, 2, 6).unwrap();
            perturb(&mut m, 7, 0.3);
            let params = m.params().to_vec();
            let tape = Tape::new();
            let pv: Vec<Var> = params.iter().map(|&p| tape.var(p)).collect();
            let xv: Vec<Var> = x.iter().map(|&c| Var::constant(c)).collect();
            let lp = m.log_prob_with(&pv, &xv).unwrap();
            let g = tape.backward(lp).unwrap().leading(params.len()).to_vec();
            let fd = finite_difference_gradient(|p| m.log_prob_with(p, &x).unwrap(), &params, 1e-6);
            for (k, (a, b)) in g.iter().zip(&fd).enumerate() {
                assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-2), "{v} param {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn non_finite_reports_layer() {
        let mut m = build_variant(Variant::Rqs, 1, 0).unwrap();
        let b3 = m.store().block("layer2.cond.b3").unwrap().range();
        m.params_mut()[b3.start + 1] = -800.0; // scale = exp(-800) underflows to 0
        match m.log_prob(&[1.0]) {
            Err(Error::NonFinite { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_equals_rows() {
        let mut m = build_variant(Variant::Ttf, 3, 2).unwrap();
        perturb(&mut m, 3, 0.2);
        let rows = vec![vec![0.1, 0.2, 0.3], vec![-2.0, 5.0, 0.0]];
        let batch = m.log_prob_batch(&rows).unwrap();
        for (r, b) in rows.iter().zip(&batch) {
            assert_eq!(m.log_prob(r).unwrap().to_bits(), b.to_bits());
        }
    }

    #[test]
    fn round_trip_through_parts() {
        let mut m = build_variant(Variant::Gtaf, 2, 2).unwrap();
        perturb(&mut m, 1, 0.1);
        let r = FlowModel::from_parts(2, m.variant(), m.architecture().clone(), m.store().clone()).unwrap();
        assert_eq!(r.log_prob(&[0.3, 0.4]).unwrap(), m.log_prob(&[0.3, 0.4]).unwrap());
        let other = build_variant(Variant::Exf, 2, 0).unwrap();
        assert!(FlowModel::from_parts(2, None, other.architecture().clone(), m.store().clone()).is_err());
    }
}
