use super::{Dual, Real, Tape, Var};
use crate::error::{Error, Result};

/// A vector function written once against the generic scalar.
pub trait DifferentiableFunction {
    fn arity_in(&self) -> usize;
    fn arity_out(&self) -> usize;
    fn eval<T: Real>(&self, x: &[T]) -> Vec<T>;
}

/// Wraps a closure-like generic evaluator. Handy for tests and small helpers.
pub struct FnOf<F> {
    pub n_in: usize,
    pub n_out: usize,
    pub f: F,
}

pub trait GenericEval {
    fn call<T: Real>(&self, x: &[T]) -> Vec<T>;
}

impl<F: GenericEval> DifferentiableFunction for FnOf<F> {
    fn arity_in(&self) -> usize {
        self.n_in
    }
    fn arity_out(&self) -> usize {
        self.n_out
    }
    fn eval<T: Real>(&self, x: &[T]) -> Vec<T> {
        self.f.call(x)
    }
}

type DD = Dual<Dual<f64>>;

fn check_arity<F: DifferentiableFunction>(f: &F, at: &[f64]) -> Result<()> {
    if at.len() != f.arity_in() {
        return Err(Error::InvalidParameter(format!(
            "expected {} inputs, got {}",
            f.arity_in(),
            at.len()
        )));
    }
    Ok(())
}

fn reverse_rows<F: DifferentiableFunction>(f: &F, at: &[f64], rows: Option<usize>) -> Result<Vec<Vec<f64>>> {
    check_arity(f, at)?;
    let tape = Tape::new();
    let xs = tape.vars(at);
    let ys = f.eval(&xs);
    if let Some(p) = tape.first_non_finite() {
        return Err(Error::NonFinite { primitive: p });
    }
    let n = rows.unwrap_or(ys.len());
    let mut out = Vec::with_capacity(n);
    for &y in ys.iter().take(n) {
        let g = tape.gradient(y, &xs);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { primitive: "backward" });
        }
        out.push(g);
    }
    Ok(out)
}

/// Gradient of a scalar-output function.
pub fn grad<F: DifferentiableFunction>(f: &F, at: &[f64]) -> Result<Vec<f64>> {
    if f.arity_out() != 1 {
        return Err(Error::InvalidParameter(format!(
            "grad needs a scalar output, got {}",
            f.arity_out()
        )));
    }
    Ok(reverse_rows(f, at, Some(1))?.remove(0))
}

/// Jacobian, one reverse sweep per output row.
pub fn jacobian<F: DifferentiableFunction>(f: &F, at: &[f64]) -> Result<Vec<Vec<f64>>> {
    reverse_rows(f, at, None)
}

/// Reruns on a tape to name the primitive behind a non-finite forward-mode result.
fn diagnose<F: DifferentiableFunction>(f: &F, at: &[DD]) -> Error {
    let tape = Tape::new();
    let xs: Vec<Var<'_, DD>> = at.iter().map(|&v| tape.var(v)).collect();
    let _ = f.eval(&xs);
    Error::NonFinite { primitive: tape.first_non_finite().unwrap_or("unknown") }
}

fn seeded(at: &[f64], inner: usize, outer: usize) -> Vec<DD> {
    at.iter()
        .enumerate()
        .map(|(k, &v)| {
            let a = if k == inner { 1.0 } else { 0.0 };
            let b = if k == outer { 1.0 } else { 0.0 };
            Dual::new(Dual::new(v, a), Dual::new(b, 0.0))
        })
        .collect()
}

/// Mixed second partial ∂²f/∂x_i∂x_j of every output, by nested duals.
pub fn second_derivative<F: DifferentiableFunction>(f: &F, at: &[f64], i: usize, j: usize) -> Result<Vec<f64>> {
    check_arity(f, at)?;
    if i >= at.len() || j >= at.len() {
        return Err(Error::InvalidParameter(format!("axis out of range for {} inputs", at.len())));
    }
    let xs = seeded(at, i, j);
    let ys = f.eval(&xs);
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(diagnose(f, &xs));
    }
    Ok(ys.iter().map(|y| y.eps.eps).collect())
}

/// Partial derivative of each output along `axis`, of order 1 or 2.
pub fn input_derivative<F: DifferentiableFunction>(f: &F, at: &[f64], axis: usize, order: u8) -> Result<Vec<f64>> {
    match order {
        1 => {
            check_arity(f, at)?;
            if axis >= at.len() {
                return Err(Error::InvalidParameter(format!("axis {axis} out of range")));
            }
            let xs = seeded(at, axis, axis);
            let ys = f.eval(&xs);
            if ys.iter().any(|y| !y.is_finite()) {
                return Err(diagnose(f, &xs));
            }
            Ok(ys.iter().map(|y| y.re.eps).collect())
        }
        2 => second_derivative(f, at, axis, axis),
        _ => Err(Error::InvalidParameter(format!("order must be 1 or 2, got {order}"))),
    }
}

/// Full Hessian of output `k`.
pub fn hessian<F: DifferentiableFunction>(f: &F, at: &[f64], k: usize) -> Result<Vec<Vec<f64>>> {
    let n = at.len();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = second_derivative(f, at, i, j)?[k];
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    Ok(h)
}
