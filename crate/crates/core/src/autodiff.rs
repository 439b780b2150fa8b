//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] is an arena of recorded nodes. Each node stores its value and the
//! local partial derivatives with respect to its parents; [`Tape::backward`]
//! walks the arena once in reverse creation order and accumulates adjoints.
//!
//! [`Var`] is `Copy` and carries its own value, so arithmetic on it reads like
//! plain `f64` code. Constants are `Var`s without a tape and never allocate a
//! node. All model code is written against the [`Scalar`] trait, which both
//! `f64` (plain evaluation) and `Var` (recorded evaluation) implement, so the
//! two paths share every formula and produce bit-identical values.
//!
//! ```
//! use tailflow::autodiff::{Scalar, Tape};
//!
//! let tape = Tape::new();
//! let a = tape.var(2.0);
//! let b = tape.var(3.0);
//! let y = a * b + a.exp();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(b), 2.0);
//! assert!((grads.get(a) - (3.0 + 2f64.exp())).abs() < 1e-12);
//! ```

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::special_fn as sf;

/// Kind tag stored with every recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sqrt,
    Expm1,
    Ln1p,
    Pow,
    Tanh,
    Softplus,
    Abs,
    Max,
    Erfc,
    LogErfc,
    ErfcInv,
    ErfcInvFromLog,
    NormalCdf,
    NormalQuantile,
    LogGamma,
    Saturate,
    Sum,
    Custom,
}

#[derive(Default)]
struct Arena {
    values: Vec<f64>,
    kinds: Vec<OpKind>,
    // node i owns edges[edge_start[i]..edge_start[i + 1]]
    edge_start: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

impl Arena {
    fn push(&mut self, kind: OpKind, value: f64) -> u32 {
        let idx = self.values.len() as u32;
        self.values.push(value);
        self.kinds.push(kind);
        self.edge_start.push(self.edges.len() as u32);
        idx
    }
}

/// Recording structure for one differentiation pass.
pub struct Tape {
    arena: RefCell<Arena>,
    consumed: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("consumed", &self.consumed.get())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            arena: RefCell::new(Arena::default()),
            consumed: Cell::new(false),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.arena.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all nodes but keeps the allocation, making the tape reusable.
    pub fn clear(&mut self) {
        let arena = self.arena.get_mut();
        arena.values.clear();
        arena.kinds.clear();
        arena.edge_start.clear();
        arena.edges.clear();
        self.consumed.set(false);
    }

    /// New independent variable (a leaf).
    pub fn var(&self, value: f64) -> Var<'_> {
        self.assert_open();
        let idx = self.arena.borrow_mut().push(OpKind::Leaf, value);
        Var {
            tape: Some(self),
            idx,
            value,
        }
    }

    /// Records a node with explicit local partials.
    ///
    /// Backward accumulates `grad(input[k]) += grad(out) * partials[k]`.
    /// Panics if an input lives on another tape or the tape was consumed.
    pub fn record(&self, kind: OpKind, inputs: &[Var<'_>], value: f64, partials: &[f64]) -> Var<'_> {
        assert_eq!(inputs.len(), partials.len(), "one partial per input");
        self.assert_open();
        let mut arena = self.arena.borrow_mut();
        let idx = arena.push(kind, value);
        for (input, &d) in inputs.iter().zip(partials) {
            if let Some(t) = input.tape {
                assert!(std::ptr::eq(t, self), "input recorded on a different tape");
                arena.edges.push((input.idx, d));
            }
        }
        Var {
            tape: Some(self),
            idx,
            value,
        }
    }

    fn assert_open(&self) {
        assert!(!self.consumed.get(), "tape already consumed by backward; clear it first");
    }

    /// Reverse sweep from `loss`. The tape can be swept only once until cleared.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if self.consumed.get() {
            return Err(Error::Tape("tape already consumed".into()));
        }
        let arena = self.arena.borrow();
        let n = arena.values.len();
        let mut adjoint = vec![0.0; n];
        match loss.tape {
            None => {
                self.consumed.set(true);
                return Ok(Gradients { adjoint });
            }
            Some(t) if !std::ptr::eq(t, self) => {
                return Err(Error::Tape("loss recorded on a different tape".into()));
            }
            Some(_) => {}
        }
        self.consumed.set(true);
        adjoint[loss.idx as usize] = 1.0;
        for i in (0..=loss.idx as usize).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let start = arena.edge_start[i] as usize;
            let end = arena.edge_start.get(i + 1).map_or(arena.edges.len(), |&e| e as usize);
            for &(parent, d) in &arena.edges[start..end] {
                adjoint[parent as usize] += a * d;
            }
        }
        Ok(Gradients { adjoint })
    }

    fn unary<'t>(&'t self, kind: OpKind, x: Var<'t>, value: f64, d: f64) -> Var<'t> {
        self.assert_open();
        let mut arena = self.arena.borrow_mut();
        let idx = arena.push(kind, value);
        arena.edges.push((x.idx, d));
        Var {
            tape: Some(self),
            idx,
            value,
        }
    }
}

/// Adjoints of every node after a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    /// d loss / d var; zero for constants.
    pub fn get(&self, var: Var<'_>) -> f64 {
        match var.tape {
            Some(_) => self.adjoint.get(var.idx as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn wrt(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|&v| self.get(v)).collect()
    }

    /// Adjoints of the first `n` nodes; these are the leaves when parameters
    /// are created before any other operation.
    pub fn leading(&self, n: usize) -> &[f64] {
        &self.adjoint[..n.min(self.adjoint.len())]
    }
}

/// A differentiable scalar: value plus its handle on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{}: {})", self.idx, self.value),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    /// A value that is not differentiated.
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            idx: u32::MAX,
            value,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    fn map(self, kind: OpKind, value: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(t) => t.unary(kind, self, value, d),
        }
    }

    fn binary(kind: OpKind, a: Self, b: Self, value: f64, da: f64, db: f64) -> Self {
        let tape = match (a.tape, b.tape) {
            (None, None) => return Var::constant(value),
            (Some(t), None) | (None, Some(t)) => t,
            (Some(ta), Some(tb)) => {
                assert!(std::ptr::eq(ta, tb), "operands recorded on different tapes");
                ta
            }
        };
        tape.assert_open();
        let mut arena = tape.arena.borrow_mut();
        let idx = arena.push(kind, value);
        if a.tape.is_some() {
            arena.edges.push((a.idx, da));
        }
        if b.tape.is_some() {
            arena.edges.push((b.idx, db));
        }
        Var {
            tape: Some(tape),
            idx,
            value,
        }
    }

    fn nary<I>(kind: OpKind, value: f64, edges: I) -> Self
    where
        I: IntoIterator<Item = (Var<'t>, f64)>,
    {
        let mut tape: Option<&'t Tape> = None;
        let mut pending: Vec<(u32, f64)> = Vec::new();
        for (v, d) in edges {
            if let Some(t) = v.tape {
                match tape {
                    None => tape = Some(t),
                    Some(prev) => assert!(std::ptr::eq(prev, t), "operands recorded on different tapes"),
                }
                pending.push((v.idx, d));
            }
        }
        let Some(tape) = tape else {
            return Var::constant(value);
        };
        tape.assert_open();
        let mut arena = tape.arena.borrow_mut();
        let idx = arena.push(kind, value);
        arena.edges.extend(pending);
        Var {
            tape: Some(tape),
            idx,
            value,
        }
    }
}

/// Operations shared by plain and recorded evaluation.
///
/// Every method computes the same `f64` value on both implementations; the
/// `Var` versions additionally record the analytic local derivative.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn expm1(self) -> Self;
    fn ln_1p(self) -> Self;
    /// `self^e`; the exponent derivative needs `self > 0`.
    fn powf(self, e: Self) -> Self;
    fn tanh(self) -> Self;
    fn softplus(self) -> Self;
    /// `|x|` with subgradient 0 at the origin.
    fn abs(self) -> Self;
    /// Larger operand; ties route the gradient to `self`.
    fn max(self, other: Self) -> Self;
    fn erfc(self) -> Self;
    fn log_erfc(self) -> Self;
    fn erfc_inv(self) -> Self;
    /// `erfc⁻¹(exp(self))`.
    fn erfc_inv_from_log(self) -> Self;
    fn normal_cdf(self) -> Self;
    fn normal_quantile(self) -> Self;
    fn log_gamma(self) -> Self;
    /// Clamp into `[lo, hi]`; zero derivative where clamped.
    fn saturate(self, lo: f64, hi: f64) -> Self;

    /// `bias + Σ w·x` as a single node.
    fn sum_products<I: IntoIterator<Item = (Self, Self)>>(bias: Self, terms: I) -> Self;
    /// `Σ xᵢ` as a single node.
    fn sum(terms: &[Self]) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn expm1(self) -> Self {
        f64::exp_m1(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn softplus(self) -> Self {
        sf::softplus(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    fn erfc(self) -> Self {
        sf::erfc(self)
    }
    fn log_erfc(self) -> Self {
        sf::log_erfc(self)
    }
    fn erfc_inv(self) -> Self {
        sf::erfc_inv_unchecked(self)
    }
    fn erfc_inv_from_log(self) -> Self {
        sf::erfc_inv_from_log_unchecked(self)
    }
    fn normal_cdf(self) -> Self {
        sf::normal_cdf(self)
    }
    fn normal_quantile(self) -> Self {
        sf::normal_quantile_unchecked(self)
    }
    fn log_gamma(self) -> Self {
        sf::log_gamma_unchecked(self)
    }
    fn saturate(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }
    fn sum_products<I: IntoIterator<Item = (Self, Self)>>(bias: Self, terms: I) -> Self {
        terms.into_iter().fold(bias, |acc, (w, x)| acc + w * x)
    }
    fn sum(terms: &[Self]) -> Self {
        terms.iter().fold(0.0, |acc, &x| acc + x)
    }
}

impl<'t> Scalar for Var<'t> {
    #[inline]
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        let v = self.value.exp();
        self.map(OpKind::Exp, v, v)
    }
    fn ln(self) -> Self {
        self.map(OpKind::Ln, self.value.ln(), 1.0 / self.value)
    }
    fn sqrt(self) -> Self {
        let v = self.value.sqrt();
        self.map(OpKind::Sqrt, v, 0.5 / v)
    }
    fn expm1(self) -> Self {
        self.map(OpKind::Expm1, self.value.exp_m1(), self.value.exp())
    }
    fn ln_1p(self) -> Self {
        self.map(OpKind::Ln1p, self.value.ln_1p(), 1.0 / (1.0 + self.value))
    }
    fn powf(self, e: Self) -> Self {
        let v = self.value.powf(e.value);
        let db = if e.value == 0.0 {
            0.0
        } else {
            e.value * self.value.powf(e.value - 1.0)
        };
        let de = if self.value > 0.0 { v * self.value.ln() } else { 0.0 };
        Var::binary(OpKind::Pow, self, e, v, db, de)
    }
    fn tanh(self) -> Self {
        let v = self.value.tanh();
        self.map(OpKind::Tanh, v, 1.0 - v * v)
    }
    fn softplus(self) -> Self {
        self.map(OpKind::Softplus, sf::softplus(self.value), sf::sigmoid(self.value))
    }
    fn abs(self) -> Self {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.map(OpKind::Abs, self.value.abs(), d)
    }
    fn max(self, other: Self) -> Self {
        if other.value > self.value {
            Var::binary(OpKind::Max, self, other, other.value, 0.0, 1.0)
        } else {
            Var::binary(OpKind::Max, self, other, self.value, 1.0, 0.0)
        }
    }
    fn erfc(self) -> Self {
        let x = self.value;
        self.map(OpKind::Erfc, sf::erfc(x), -sf::FRAC_2_SQRT_PI * (-x * x).exp())
    }
    fn log_erfc(self) -> Self {
        let x = self.value;
        let v = sf::log_erfc(x);
        self.map(OpKind::LogErfc, v, -sf::FRAC_2_SQRT_PI * (-x * x - v).exp())
    }
    fn erfc_inv(self) -> Self {
        let t = sf::erfc_inv_unchecked(self.value);
        self.map(OpKind::ErfcInv, t, sf::erfc_inv_deriv(t))
    }
    fn erfc_inv_from_log(self) -> Self {
        let t = sf::erfc_inv_from_log_unchecked(self.value);
        // d/dl erfc⁻¹(eˡ) = -(√π/2) exp(l + t²)
        let d = -0.5 * std::f64::consts::PI.sqrt() * (self.value + t * t).exp();
        self.map(OpKind::ErfcInvFromLog, t, d)
    }
    fn normal_cdf(self) -> Self {
        let z = self.value;
        self.map(OpKind::NormalCdf, sf::normal_cdf(z), sf::normal_log_pdf(z).exp())
    }
    fn normal_quantile(self) -> Self {
        let z = sf::normal_quantile_unchecked(self.value);
        self.map(OpKind::NormalQuantile, z, (-sf::normal_log_pdf(z)).exp())
    }
    fn log_gamma(self) -> Self {
        let x = self.value;
        self.map(OpKind::LogGamma, sf::log_gamma_unchecked(x), sf::digamma_unchecked(x))
    }
    fn saturate(self, lo: f64, hi: f64) -> Self {
        let x = self.value;
        let d = if x < lo || x > hi { 0.0 } else { 1.0 };
        self.map(OpKind::Saturate, x.clamp(lo, hi), d)
    }
    fn sum_products<I: IntoIterator<Item = (Self, Self)>>(bias: Self, terms: I) -> Self {
        let mut value = bias.value;
        let mut edges = Vec::new();
        edges.push((bias, 1.0));
        for (w, x) in terms {
            value += w.value * x.value;
            edges.push((w, x.value));
            edges.push((x, w.value));
        }
        Var::nary(OpKind::Sum, value, edges)
    }
    fn sum(terms: &[Self]) -> Self {
        let value = terms.iter().fold(0.0, |acc, x| acc + x.value);
        Var::nary(OpKind::Sum, value, terms.iter().map(|&x| (x, 1.0)))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        Var::binary(OpKind::Add, self, rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        Var::binary(OpKind::Sub, self, rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        Var::binary(OpKind::Mul, self, rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let v = self.value / rhs.value;
        Var::binary(OpKind::Div, self, rhs, v, 1.0 / rhs.value, -v / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.map(OpKind::Neg, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.map(OpKind::Add, self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.map(OpKind::Sub, self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.map(OpKind::Mul, self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.map(OpKind::Div, self.value / rhs, 1.0 / rhs)
    }
}

/// Central finite-difference gradient of `f` at `x`, step `rel_step·max(1, |xᵢ|)`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], rel_step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Value and reverse-mode gradient of a function written against [`Scalar`].
pub fn value_and_gradient<F>(f: F, x: &[f64]) -> (f64, Vec<f64>)
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = x.iter().map(|&v| tape.var(v)).collect();
    let out = f(&vars);
    let grads = tape.backward(out).expect("fresh tape");
    (out.value(), grads.wrt(&vars))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_via_record() {
        let tape = Tape::new();
        let a = tape.var(2.0);
        let b = tape.var(3.0);
        let y = tape.record(OpKind::Mul, &[a, b], 6.0, &[3.0, 2.0]);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(a), 3.0);
        assert_eq!(g.get(b), 2.0);
    }

    #[test]
    fn fan_in_accumulates() {
        let tape = Tape::new();
        let a = tape.var(1.5);
        let y = tape.record(OpKind::Add, &[a, a], 3.0, &[1.0, 1.0]);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(a), 2.0);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let tape = Tape::new();
        let a = tape.var(1.0);
        let c = Var::constant(4.0) * 2.0;
        let g = tape.backward(c).unwrap();
        assert_eq!(g.get(a), 0.0);
    }

    #[test]
    fn long_identity_chain() {
        let tape = Tape::new();
        let x = tape.var(0.7);
        let mut y = x;
        for _ in 0..1000 {
            y = y * 1.0;
        }
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x), 1.0);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        let y = x * x;
        assert!(tape.backward(y).is_ok());
        assert!(matches!(tape.backward(y), Err(Error::Tape(_))));
    }

    #[test]
    fn clear_makes_tape_reusable() {
        let mut tape = Tape::new();
        {
            let x = tape.var(1.0);
            tape.backward(x * x).unwrap();
        }
        tape.clear();
        assert!(tape.is_empty());
        let x = tape.var(3.0);
        let g = tape.backward(x * x).unwrap();
        assert_eq!(g.get(x), 6.0);
    }

    #[test]
    #[should_panic(expected = "different tape")]
    fn mixing_tapes_panics() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let _ = t1.var(1.0) + t2.var(2.0);
    }

    #[test]
    #[should_panic(expected = "consumed")]
    fn recording_after_backward_panics() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        tape.backward(x).unwrap();
        let _ = x * x;
    }

    #[test]
    fn foreign_loss_is_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let y = t2.var(1.0);
        assert!(t1.backward(y).is_err());
    }

    #[test]
    fn erfc_gradient_matches_closed_form() {
        for &z in &[0.0, 1.0, 3.0] {
            let (_, g) = value_and_gradient(|v| v[0].erfc(), &[z]);
            let expected = -sf::FRAC_2_SQRT_PI * (-z * z).exp();
            assert!((g[0] - expected).abs() <= 1e-15 + 1e-12 * expected.abs());
            let fd = finite_difference_gradient(|x| sf::erfc(x[0]), &[z], 1e-5);
            assert!((g[0] - fd[0]).abs() <= 1e-7 * g[0].abs().max(1e-3));
        }
    }

    #[test]
    fn abs_subgradient_at_zero() {
        let (_, g) = value_and_gradient(|v| v[0].abs(), &[0.0]);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn saturate_blocks_gradient() {
        let (_, g) = value_and_gradient(|v| v[0].saturate(-1.0, 1.0), &[2.0]);
        assert_eq!(g[0], 0.0);
        let (_, g) = value_and_gradient(|v| v[0].saturate(-1.0, 1.0), &[0.5]);
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn sum_products_gradient() {
        let (v, g) = value_and_gradient(
            |p| Scalar::sum_products(p[0], [(p[1], p[2]), (p[3], p[4])]),
            &[0.5, 2.0, 3.0, -1.0, 4.0],
        );
        assert_eq!(v, 0.5 + 6.0 - 4.0);
        assert_eq!(g, vec![1.0, 3.0, 2.0, 4.0, -1.0]);
    }

    #[test]
    fn mixed_constants_do_not_allocate() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let c = Var::constant(3.0);
        let y = c * c + x;
        // x and the final add only
        assert_eq!(tape.len(), 2);
        assert_eq!(y.value(), 11.0);
    }
}
