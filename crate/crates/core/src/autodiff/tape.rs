//! Scalar reverse-mode tape.
//!
//! Every operation on a [`Var`] appends a node holding the primitive, its
//! argument indices, the computed value and the local partials. `backward`
//! sweeps the nodes in reverse; `replay` recomputes every value from the
//! leaves through the same `apply` routine used while recording.

use std::cell::{Cell, RefCell};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Real;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddF(f64),
    SubF(f64),
    MulF(f64),
    DivF(f64),
    Tanh,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Powi(i32),
}

impl Op {
    fn label(self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add | Op::AddF(_) => "add",
            Op::Sub | Op::SubF(_) => "sub",
            Op::Mul | Op::MulF(_) => "mul",
            Op::Div | Op::DivF(_) => "div",
            Op::Neg => "neg",
            Op::Tanh => "tanh",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Sqrt => "sqrt",
            Op::Abs => "abs",
            Op::Powi(_) => "powi",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op,
    args: [usize; 2],
    value: T,
    partials: [T; 2],
}

/// Value and local partials of a primitive applied to `a` (and `b`).
fn apply<T: Real>(op: Op, a: T, b: T) -> (T, [T; 2]) {
    let z = T::zero();
    let one = T::one();
    match op {
        Op::Leaf => (a, [z, z]),
        Op::Add => (a + b, [one, one]),
        Op::Sub => (a - b, [one, -one]),
        Op::Mul => (a * b, [b, a]),
        Op::Div => {
            let q = a / b;
            (q, [one / b, -q / b])
        }
        Op::Neg => (-a, [-one, z]),
        Op::AddF(c) => (a + c, [one, z]),
        Op::SubF(c) => (a - c, [one, z]),
        Op::MulF(c) => (a * c, [T::cst(c), z]),
        Op::DivF(c) => (a / c, [T::cst(1.0 / c), z]),
        Op::Tanh => {
            let t = a.tanh();
            (t, [one - t * t, z])
        }
        Op::Sin => (a.sin(), [a.cos(), z]),
        Op::Cos => (a.cos(), [-a.sin(), z]),
        Op::Exp => {
            let e = a.exp();
            (e, [e, z])
        }
        Op::Ln => (a.ln(), [one / a, z]),
        Op::Sqrt => {
            let s = a.sqrt();
            (s, [one / (s * 2.0), z])
        }
        Op::Abs => {
            let s = if a.value() < 0.0 { -one } else { one };
            (a.abs(), [s, z])
        }
        Op::Powi(n) => match n {
            0 => (one, [z, z]),
            _ => (a.powi(n), [a.powi(n - 1) * n as f64, z]),
        },
    }
}

/// A recording of scalar operations. Each evaluation owns its tape.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    first_non_finite: Cell<Option<&'static str>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            first_non_finite: Cell::new(None),
        }
    }

    /// Registers an independent variable.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let idx = self.push(Op::Leaf, [NONE, NONE], value, [T::zero(), T::zero()]);
        Var { tape: Some(self), idx, val: value }
    }

    pub fn vars(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all nodes so the allocation can be reused.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.first_non_finite.set(None);
    }

    /// Name of the first primitive that produced a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.first_non_finite.get()
    }

    fn push(&self, op: Op, args: [usize; 2], value: T, partials: [T; 2]) -> usize {
        if self.first_non_finite.get().is_none()
            && !(value.is_finite() && partials[0].is_finite() && partials[1].is_finite())
        {
            self.first_non_finite.set(Some(op.label()));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, args, value, partials });
        nodes.len() - 1
    }

    fn record(&self, op: Op, a: Var<'_, T>, b: Option<Var<'_, T>>) -> Var<'_, T> {
        let ai = self.index_of(a);
        let (bv, bi) = match b {
            Some(b) => (b.val, self.index_of(b)),
            None => (T::zero(), NONE),
        };
        let (value, partials) = apply(op, a.val, bv);
        let idx = self.push(op, [ai, bi], value, partials);
        Var { tape: Some(self), idx, val: value }
    }

    /// Constants entering the tape become leaves with no adjoint consumer.
    fn index_of(&self, v: Var<'_, T>) -> usize {
        match v.tape {
            Some(_) => v.idx,
            None => self.push(Op::Leaf, [NONE, NONE], v.val, [T::zero(), T::zero()]),
        }
    }

    /// Adjoints of every node for a unit seed on `output`.
    pub fn adjoints(&self, output: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        if output.tape.is_none() {
            return adj;
        }
        adj[output.idx] = T::one();
        for i in (0..=output.idx).rev() {
            let node = &nodes[i];
            if node.op == Op::Leaf {
                continue;
            }
            let g = adj[i];
            let [a, b] = node.args;
            adj[a] += g * node.partials[0];
            if b != NONE {
                adj[b] += g * node.partials[1];
            }
        }
        adj
    }

    /// Gradient of `output` with respect to `inputs`.
    pub fn gradient(&self, output: Var<'_, T>, inputs: &[Var<'_, T>]) -> Vec<T> {
        let adj = self.adjoints(output);
        inputs
            .iter()
            .map(|v| match v.tape {
                Some(_) => adj[v.idx],
                None => T::zero(),
            })
            .collect()
    }

    /// Recomputes all node values from the recorded leaves.
    pub fn replay(&self) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let mut vals: Vec<T> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Leaf => node.value,
                op => {
                    let [a, b] = node.args;
                    let bv = if b == NONE { T::zero() } else { vals[b] };
                    apply(op, vals[a], bv).0
                }
            };
            vals.push(v);
        }
        vals
    }

    /// Recorded value of a node.
    pub fn value_at(&self, v: Var<'_, T>) -> T {
        v.val
    }
}

/// A scalar that records itself on a tape. Constants carry no tape.
#[derive(Clone, Copy, Debug)]
pub struct Var<'t, T> {
    tape: Option<&'t Tape<T>>,
    idx: usize,
    val: T,
}

impl<'t, T: Real> Var<'t, T> {
    pub fn constant(val: T) -> Self {
        Var { tape: None, idx: NONE, val }
    }

    /// Primal value in the underlying scalar type.
    pub fn val(&self) -> T {
        self.val
    }

    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx)
    }

    fn unary(self, op: Op) -> Self {
        match self.tape {
            Some(t) => t.record(op, self, None),
            None => Var::constant(apply(op, self.val, T::zero()).0),
        }
    }

    fn binary(self, op: Op, o: Self) -> Self {
        match (self.tape, o.tape) {
            (Some(t), _) | (None, Some(t)) => t.record(op, self, Some(o)),
            (None, None) => Var::constant(apply(op, self.val, o.val).0),
        }
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $op:ident, $opf:ident) => {
        impl<'t, T: Real> $tr for Var<'t, T> {
            type Output = Self;
            #[inline]
            fn $f(self, o: Self) -> Self {
                self.binary(Op::$op, o)
            }
        }
        impl<'t, T: Real> $tr<f64> for Var<'t, T> {
            type Output = Self;
            #[inline]
            fn $f(self, c: f64) -> Self {
                self.unary(Op::$opf(c))
            }
        }
    };
}

binop!(Add, add, Add, AddF);
binop!(Sub, sub, Sub, SubF);
binop!(Mul, mul, Mul, MulF);
binop!(Div, div, Div, DivF);

impl<'t, T: Real> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(Op::Neg)
    }
}

impl<'t, T: Real> AddAssign for Var<'t, T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<'t, T: Real> SubAssign for Var<'t, T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<'t, T: Real> MulAssign for Var<'t, T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<'t, T: Real> Real for Var<'t, T> {
    fn cst(v: f64) -> Self {
        Var::constant(T::cst(v))
    }
    fn value(&self) -> f64 {
        self.val.value()
    }
    fn tanh(self) -> Self {
        self.unary(Op::Tanh)
    }
    fn sin(self) -> Self {
        self.unary(Op::Sin)
    }
    fn cos(self) -> Self {
        self.unary(Op::Cos)
    }
    fn exp(self) -> Self {
        self.unary(Op::Exp)
    }
    fn ln(self) -> Self {
        self.unary(Op::Ln)
    }
    fn sqrt(self) -> Self {
        self.unary(Op::Sqrt)
    }
    fn abs(self) -> Self {
        self.unary(Op::Abs)
    }
    fn powi(self, n: i32) -> Self {
        self.unary(Op::Powi(n))
    }
    fn is_finite(&self) -> bool {
        self.val.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_product_and_quotient() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = tape.var(3.0);
        let f = x * y + x / y;
        let g = tape.gradient(f, &[x, y]);
        assert_eq!(f.val(), 6.0 + 2.0 / 3.0);
        assert!((g[0] - (3.0 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((g[1] - (2.0 - 2.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn replay_is_bit_exact() {
        let tape = Tape::new();
        let x = tape.var(0.37);
        let y = tape.var(-1.3);
        let f = ((x * y).tanh() + x.sin() * y.cos()).powi(3) / (y.abs() + 0.2).sqrt() - x.exp().ln();
        let vals = tape.replay();
        assert_eq!(vals[f.index().unwrap()].to_bits(), f.val().to_bits());
    }

    #[test]
    fn constants_do_not_touch_the_tape() {
        let tape: Tape<f64> = Tape::new();
        let c = Var::constant(2.0) * Var::constant(3.0);
        assert_eq!(c.val(), 6.0);
        assert!(tape.is_empty());
        let x = tape.var(1.5);
        let f = x * c;
        assert_eq!(tape.gradient(f, &[x]), vec![6.0]);
    }

    #[test]
    fn non_finite_primitive_is_named() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let _ = (x + 1.0).ln();
        assert_eq!(tape.first_non_finite(), None);
        let _ = x.ln();
        assert_eq!(tape.first_non_finite(), Some("ln"));
    }

    #[test]
    fn reverse_over_dual_values() {
        use crate::autodiff::Dual;
        // d/dx (a·x²) = 2·a·x, with a carrying a tangent: ∂/∂a = 2x.
        let tape = Tape::new();
        let a = Var::constant(Dual::var(1.5));
        let x = tape.var(Dual::constant(2.0));
        let f = a * x * x;
        let g = tape.gradient(f, &[x]);
        assert_eq!(g[0].re, 6.0);
        assert_eq!(g[0].eps, 4.0);
    }
}
