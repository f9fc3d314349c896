//! Composite loss, its gradient, and stacked residual Jacobians.

use crate::autodiff::{Real, Tape};
use crate::network::{backward_batch, forward_batch, JetSpec, Jets};
use crate::pde::{Collocation, Problem};

/// Observation inputs and targets in the working scalar (they may carry
/// tangents with respect to a design parameter).
#[derive(Clone, Copy, Debug)]
pub struct ObsRef<'a, T> {
    pub x: &'a [T],
    pub y: &'a [T],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts<T> {
    pub total: T,
    pub obs: T,
    pub pde: T,
}

/// Loss value and gradients with respect to network and PDE parameters.
#[derive(Clone, Debug)]
pub struct LossGrad<T> {
    pub loss: LossParts<T>,
    pub theta: Vec<T>,
    pub beta: Vec<T>,
}

fn lift<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&v| T::cst(v)).collect()
}

/// Interior residual with partials on the jets and on β.
struct LocalResidual<T> {
    r: T,
    du: T,
    d1: Vec<T>,
    d2: Vec<T>,
    dbeta: Vec<T>,
}

fn local_interior<T: Real>(
    problem: &Problem,
    tape: &mut Tape<T>,
    beta: &[T],
    x: &[f64],
    u: T,
    d1: &[T],
    d2: &[T],
) -> LocalResidual<T> {
    tape.clear();
    let uv = tape.var(u);
    let d1v = tape.vars(d1);
    let d2v = tape.vars(d2);
    let bv = tape.vars(beta);
    let r = problem.residual(&bv, x, uv, &d1v, &d2v);
    let adj = tape.adjoints(r);
    let pick = |v: &crate::autodiff::Var<'_, T>| v.index().map_or(T::zero(), |i| adj[i]);
    LocalResidual {
        r: r.val(),
        du: pick(&uv),
        d1: d1v.iter().map(pick).collect(),
        d2: d2v.iter().map(pick).collect(),
        dbeta: bv.iter().map(pick).collect(),
    }
}

/// Boundary residuals with partials on `(u, d1)`.
fn local_boundary<T: Real>(
    problem: &Problem,
    tape: &mut Tape<T>,
    kind: crate::pde::BoundaryKind,
    x: &[f64],
    u: T,
    d1: &[T],
) -> Vec<(T, T, Vec<T>)> {
    tape.clear();
    let uv = tape.var(u);
    let d1v = tape.vars(d1);
    let rs = problem.boundary_residuals(kind, x, uv, &d1v);
    rs.into_iter()
        .map(|r| {
            let adj = tape.adjoints(r);
            let pick = |v: &crate::autodiff::Var<'_, T>| v.index().map_or(T::zero(), |i| adj[i]);
            (r.val(), pick(&uv), d1v.iter().map(pick).collect())
        })
        .collect()
}

/// ℒ = ‖û(X) − Y‖²/(2|X|) + ‖R(X_p)‖²/(2|X_p|) + ‖B(X_b)‖²/(2|X_b|) and its gradient.
pub fn loss_and_grad<T: Real>(
    problem: &Problem,
    theta: &[T],
    beta: &[T],
    colloc: &Collocation,
    obs: Option<ObsRef<'_, T>>,
) -> LossGrad<T> {
    let net = &problem.net;
    let d = problem.input_dim();
    let mut g_theta = vec![T::zero(); theta.len()];
    let mut g_beta = vec![T::zero(); beta.len()];
    let mut tape = Tape::new();

    // Interior.
    let spec = problem.interior_spec();
    let np = colloc.n_interior(d);
    let mut pde = T::zero();
    if np > 0 {
        let pts = lift::<T>(&colloc.interior);
        let (jets, trace) = forward_batch(net, theta, &pts, &spec);
        let mut cot = Jets::zeros(np, &spec);
        let inv = 1.0 / np as f64;
        for p in 0..np {
            let d1: Vec<T> = jets.d1.iter().map(|a| a[p]).collect();
            let d2: Vec<T> = jets.d2.iter().map(|a| a[p]).collect();
            let x = &colloc.interior[p * d..(p + 1) * d];
            let lr = local_interior(problem, &mut tape, beta, x, jets.u[p], &d1, &d2);
            pde += lr.r * lr.r * (0.5 * inv);
            let w = lr.r * inv;
            cot.u[p] = w * lr.du;
            for a in 0..d1.len() {
                cot.d1[a][p] = w * lr.d1[a];
            }
            for a in 0..d2.len() {
                cot.d2[a][p] = w * lr.d2[a];
            }
            for (g, &db) in g_beta.iter_mut().zip(&lr.dbeta) {
                *g += w * db;
            }
        }
        backward_batch(net, theta, &trace, &cot, &mut g_theta);
    }

    // Boundary.
    let bspec = problem.boundary_spec();
    let nb = colloc.n_boundary();
    if nb > 0 {
        let pts = lift::<T>(&colloc.boundary);
        let (jets, trace) = forward_batch(net, theta, &pts, &bspec);
        let mut cot = Jets::zeros(nb, &bspec);
        let inv = 1.0 / nb as f64;
        for p in 0..nb {
            let d1: Vec<T> = jets.d1.iter().map(|a| a[p]).collect();
            let x = &colloc.boundary[p * d..(p + 1) * d];
            for (r, du, dd1) in local_boundary(problem, &mut tape, colloc.kinds[p], x, jets.u[p], &d1) {
                pde += r * r * (0.5 * inv);
                let w = r * inv;
                cot.u[p] += w * du;
                for a in 0..dd1.len() {
                    cot.d1[a][p] += w * dd1[a];
                }
            }
        }
        backward_batch(net, theta, &trace, &cot, &mut g_theta);
    }

    // Observations.
    let mut lobs = T::zero();
    if let Some(o) = obs {
        let m = o.y.len();
        if m > 0 {
            let vspec = JetSpec::value();
            let (jets, trace) = forward_batch(net, theta, o.x, &vspec);
            let mut cot = Jets::zeros(m, &vspec);
            let inv = 1.0 / m as f64;
            for p in 0..m {
                let e = jets.u[p] - o.y[p];
                lobs += e * e * (0.5 * inv);
                cot.u[p] = e * inv;
            }
            backward_batch(net, theta, &trace, &cot, &mut g_theta);
        }
    }

    LossGrad { loss: LossParts { total: lobs + pde, obs: lobs, pde }, theta: g_theta, beta: g_beta }
}

/// Residual rows and their Jacobians, row-major.
#[derive(Clone, Debug)]
pub struct ResidualRows<T> {
    pub values: Vec<T>,
    /// `rows × n_theta`.
    pub d_theta: Vec<T>,
    /// `rows × n_beta`.
    pub d_beta: Vec<T>,
    /// 1/|X_p| for interior rows, 1/|X_b| for boundary rows.
    pub weights: Vec<f64>,
}

impl<T: Real> ResidualRows<T> {
    pub fn rows(&self) -> usize {
        self.values.len()
    }
}

/// Interior then boundary residual rows with θ- and β-Jacobians.
pub fn pde_rows<T: Real>(problem: &Problem, theta: &[T], beta: &[T], colloc: &Collocation) -> ResidualRows<T> {
    let net = &problem.net;
    let d = problem.input_dim();
    let (nt, nbeta) = (theta.len(), beta.len());
    let mut out = ResidualRows { values: Vec::new(), d_theta: Vec::new(), d_beta: Vec::new(), weights: Vec::new() };
    let mut tape = Tape::new();

    let spec = problem.interior_spec();
    let np = colloc.n_interior(d);
    for p in 0..np {
        let x = &colloc.interior[p * d..(p + 1) * d];
        let (jets, trace) = forward_batch(net, theta, &lift::<T>(x), &spec);
        let d1: Vec<T> = jets.d1.iter().map(|a| a[0]).collect();
        let d2: Vec<T> = jets.d2.iter().map(|a| a[0]).collect();
        let lr = local_interior(problem, &mut tape, beta, x, jets.u[0], &d1, &d2);
        let mut cot = Jets::zeros(1, &spec);
        cot.u[0] = lr.du;
        for a in 0..d1.len() {
            cot.d1[a][0] = lr.d1[a];
        }
        for a in 0..d2.len() {
            cot.d2[a][0] = lr.d2[a];
        }
        let mut g = vec![T::zero(); nt];
        backward_batch(net, theta, &trace, &cot, &mut g);
        out.values.push(lr.r);
        out.d_theta.extend(g);
        out.d_beta.extend(lr.dbeta);
        out.weights.push(1.0 / np as f64);
    }

    let bspec = problem.boundary_spec();
    let nb = colloc.n_boundary();
    for p in 0..nb {
        let x = &colloc.boundary[p * d..(p + 1) * d];
        let (jets, trace) = forward_batch(net, theta, &lift::<T>(x), &bspec);
        let d1: Vec<T> = jets.d1.iter().map(|a| a[0]).collect();
        for (r, du, dd1) in local_boundary(problem, &mut tape, colloc.kinds[p], x, jets.u[0], &d1) {
            let mut cot = Jets::zeros(1, &bspec);
            cot.u[0] = du;
            for a in 0..dd1.len() {
                cot.d1[a][0] = dd1[a];
            }
            let mut g = vec![T::zero(); nt];
            backward_batch(net, theta, &trace, &cot, &mut g);
            out.values.push(r);
            out.d_theta.extend(g);
            out.d_beta.extend(std::iter::repeat(T::zero()).take(nbeta));
            out.weights.push(1.0 / nb as f64);
        }
    }
    out
}

/// Network values at observation inputs and their θ-Jacobian (`m × n_theta`).
pub fn output_rows<T: Real>(problem: &Problem, theta: &[T], x: &[T]) -> (Vec<T>, Vec<T>) {
    let net = &problem.net;
    let d = problem.input_dim();
    let m = x.len() / d;
    let spec = JetSpec::value();
    let mut vals = Vec::with_capacity(m);
    let mut jac = Vec::with_capacity(m * theta.len());
    for p in 0..m {
        let (jets, trace) = forward_batch(net, theta, &x[p * d..(p + 1) * d], &spec);
        let mut cot = Jets::zeros(1, &spec);
        cot.u[0] = T::one();
        let mut g = vec![T::zero(); theta.len()];
        backward_batch(net, theta, &trace, &cot, &mut g);
        vals.push(jets.u[0]);
        jac.extend(g);
    }
    (vals, jac)
}

/// Network values at many points (value only).
pub fn predict<T: Real>(problem: &Problem, theta: &[T], x: &[T]) -> Vec<T> {
    forward_batch(&problem.net, theta, x, &JetSpec::value()).0.u
}
