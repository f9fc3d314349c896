//! Tolerable inverse parameter: log-determinant of the β-Hessian of the
//! observation fit, where the network follows β through a Newton shift of
//! the converged forward parameters.

use super::CriterionContext;
use crate::autodiff::{Dual, Real, DD};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_jittered, chol_logdet, chol_solve_f64};
use crate::pinn::{loss_and_grad, output_rows, pde_rows, predict};

/// `Σ_r w_r ∇R_r ∇R_rᵀ` from `rows × n` residual Jacobians.
pub fn gauss_newton(d_theta: &[f64], weights: &[f64], n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for (row, &w) in d_theta.chunks(n).zip(weights) {
        for i in 0..n {
            let a = w * row[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..=i {
                h[i * n + j] += a * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[j * n + i] = h[i * n + j];
        }
    }
    h
}

/// `θ − H⁻¹ (g_new − g_old)` with `H` given by its Cholesky factor.
pub fn newton_shift<T: Real>(h_chol: &[f64], theta: &[f64], g_new: &[T], g_old: &[f64]) -> Vec<T> {
    let n = theta.len();
    let diff: Vec<T> = g_new.iter().zip(g_old).map(|(&a, &b)| a - b).collect();
    let step = chol_solve_f64(h_chol, n, &diff);
    theta.iter().zip(step).map(|(&t, s)| -s + t).collect()
}

#[derive(Clone, Debug)]
pub struct TipThread {
    theta: Vec<f64>,
    h_chol: Vec<f64>,
    g0: Vec<f64>,
    /// `dθ̃/dβ′` at β_i, `n_theta × n_beta`.
    d1: Vec<f64>,
    /// `d²θ̃/dβ′_j dβ′_k`, `[j][k][n_theta]`; only built for noisy targets.
    d2: Option<Vec<f64>>,
}

impl TipThread {
    pub fn new(ctx: &CriterionContext, i: usize) -> Result<Self> {
        let m = &ctx.ensemble[i];
        let (nt, nb) = (m.theta.len(), m.beta.len());
        let rows = pde_rows(&ctx.problem, &m.theta, &m.beta, &ctx.colloc);
        let gn = gauss_newton(&rows.d_theta, &rows.weights, nt);
        let h_chol = cholesky_jittered(&gn, nt, ctx.params.jitter, "TIP Hessian")?;
        let g0 = loss_and_grad(&ctx.problem, &m.theta, &m.beta, &ctx.colloc, None).theta;

        let theta_d: Vec<Dual<f64>> = m.theta.iter().map(|&v| Dual::constant(v)).collect();
        let mut d1 = vec![0.0; nt * nb];
        for j in 0..nb {
            let beta: Vec<Dual<f64>> =
                m.beta.iter().enumerate().map(|(k, &v)| Dual::new(v, if k == j { 1.0 } else { 0.0 })).collect();
            let g = loss_and_grad(&ctx.problem, &theta_d, &beta, &ctx.colloc, None).theta;
            let dg: Vec<f64> = g.iter().map(|v| v.eps).collect();
            for (p, s) in chol_solve_f64(&h_chol, nt, &dg).into_iter().enumerate() {
                d1[p * nb + j] = -s;
            }
        }

        let d2 = if ctx.params.noise_var > 0.0 {
            let theta_dd: Vec<DD<f64>> = m.theta.iter().map(|&v| DD::constant(Dual::constant(v))).collect();
            let mut d2 = vec![0.0; nb * nb * nt];
            for j in 0..nb {
                for k in j..nb {
                    let beta: Vec<DD<f64>> = m
                        .beta
                        .iter()
                        .enumerate()
                        .map(|(q, &v)| {
                            let inner = Dual::new(v, if q == k { 1.0 } else { 0.0 });
                            DD::new(inner, Dual::constant(if q == j { 1.0 } else { 0.0 }))
                        })
                        .collect();
                    let g = loss_and_grad(&ctx.problem, &theta_dd, &beta, &ctx.colloc, None).theta;
                    let dg: Vec<f64> = g.iter().map(|v| v.eps.eps).collect();
                    let s = chol_solve_f64(&h_chol, nt, &dg);
                    for p in 0..nt {
                        d2[(j * nb + k) * nt + p] = -s[p];
                        d2[(k * nb + j) * nt + p] = -s[p];
                    }
                }
            }
            Some(d2)
        } else {
            None
        };
        Ok(TipThread { theta: m.theta.clone(), h_chol, g0, d1, d2 })
    }

    /// `θ̃_i(β′) = θ_i − H⁻¹(∇_θℒ_PDE(θ_i, β′) − ∇_θℒ_PDE(θ_i, β_i))`.
    pub fn param_shift<T: Real>(&self, ctx: &CriterionContext, beta: &[T]) -> Vec<T> {
        let theta: Vec<T> = self.theta.iter().map(|&v| T::cst(v)).collect();
        let g = loss_and_grad(&ctx.problem, &theta, beta, &ctx.colloc, None).theta;
        newton_shift(&self.h_chol, &self.theta, &g, &self.g0)
    }

    /// `ℓ(β′) = ‖û_{θ̃(β′)}(x) − Ỹ_i‖²`.
    pub fn fit_loss<T: Real>(&self, ctx: &CriterionContext, i: usize, x: &[T], beta: &[T]) -> T {
        let y = ctx.targets(i, x);
        let theta = self.param_shift(ctx, beta);
        let u = predict(&ctx.problem, &theta, x);
        u.iter().zip(&y).fold(T::zero(), |s, (&a, &b)| s + (a - b).square())
    }

    /// `∇²_{β′} ℓ` at β_i, `n_beta × n_beta`, without jitter.
    pub fn hessian<T: Real>(&self, ctx: &CriterionContext, i: usize, x: &[T]) -> Vec<T> {
        let nt = self.theta.len();
        let nb = self.d1.len() / nt;
        let theta: Vec<T> = self.theta.iter().map(|&v| T::cst(v)).collect();
        let (u, jo) = output_rows(&ctx.problem, &theta, x);
        let m = u.len();
        // Sensitivities J = J_θ D1, m × n_beta.
        let mut j = vec![T::zero(); m * nb];
        for o in 0..m {
            let row = &jo[o * nt..(o + 1) * nt];
            for b in 0..nb {
                let mut s = T::zero();
                for (p, &r) in row.iter().enumerate() {
                    s += r * self.d1[p * nb + b];
                }
                j[o * nb + b] = s;
            }
        }
        let mut h = vec![T::zero(); nb * nb];
        for a in 0..nb {
            for b in 0..=a {
                let mut s = T::zero();
                for o in 0..m {
                    s += j[o * nb + a] * j[o * nb + b];
                }
                h[a * nb + b] = s * 2.0;
                h[b * nb + a] = s * 2.0;
            }
        }
        let y = ctx.targets(i, x);
        let e: Vec<T> = u.iter().zip(&y).map(|(&a, &b)| a - b).collect();
        if let (Some(d2), true) = (&self.d2, e.iter().any(|v| v.value() != 0.0)) {
            let xd: Vec<DD<T>> = x.iter().map(|&v| DD::constant(Dual::constant(v))).collect();
            for a in 0..nb {
                for b in 0..=a {
                    let th: Vec<DD<T>> = (0..nt)
                        .map(|p| {
                            let inner = Dual::new(T::cst(self.theta[p]), T::cst(self.d1[p * nb + b]));
                            let outer = Dual::new(T::cst(self.d1[p * nb + a]), T::cst(d2[(a * nb + b) * nt + p]));
                            DD::new(inner, outer)
                        })
                        .collect();
                    let uu = predict(&ctx.problem, &th, &xd);
                    let mut s = T::zero();
                    for (q, v) in uu.iter().enumerate() {
                        s += e[q] * v.eps.eps;
                    }
                    h[a * nb + b] += s * 2.0;
                    if a != b {
                        h[b * nb + a] += s * 2.0;
                    }
                }
            }
        }
        h
    }

    /// `log det(∇²ℓ + λI)`, escalating λ as the other solves do.
    pub fn score<T: Real>(&self, ctx: &CriterionContext, i: usize, x: &[T]) -> Result<T> {
        let h = self.hessian(ctx, i, x);
        let nb = self.d1.len() / self.theta.len();
        let mut lambda = ctx.params.jitter;
        for _ in 0..4 {
            let mut a = h.clone();
            for k in 0..nb {
                a[k * nb + k] += T::cst(lambda);
            }
            if let Some(l) = cholesky(&a, nb) {
                return Ok(chol_logdet(&l, nb));
            }
            lambda *= 10.0;
        }
        Err(Error::DegenerateDesign("β-Hessian not positive definite".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{CriterionParams, Member};
    use crate::design::DesignSpace;
    use crate::network::init_params;
    use crate::pde::{Problem, ProblemKind};

    fn context(noise_var: f64) -> CriterionContext {
        let p = Problem::oscillator();
        let ensemble: Vec<Member> =
            (0..2).map(|k| Member { beta: vec![0.7 + k as f64, 1.9], theta: init_params(&p.net, 20 + k).values }).collect();
        let params = CriterionParams { n_interior: 40, noise_var, ..CriterionParams::defaults(p.kind) };
        let theta_si = init_params(&p.net, 3).values;
        CriterionContext::new(p, DesignSpace::default_for(ProblemKind::Oscillator), ensemble, theta_si, params, 9).unwrap()
    }

    /// Hessian of the fit loss in β′ at β_i by nested duals through the shift.
    fn exact_hessian(t: &TipThread, ctx: &CriterionContext, i: usize, x: &[f64]) -> Vec<f64> {
        let beta = &ctx.ensemble[i].beta;
        let nb = beta.len();
        let xd: Vec<DD<f64>> = x.iter().map(|&v| DD::constant(Dual::constant(v))).collect();
        let mut h = vec![0.0; nb * nb];
        for a in 0..nb {
            for b in 0..nb {
                let bd: Vec<DD<f64>> = beta
                    .iter()
                    .enumerate()
                    .map(|(q, &v)| {
                        DD::new(Dual::new(v, if q == b { 1.0 } else { 0.0 }), Dual::constant(if q == a { 1.0 } else { 0.0 }))
                    })
                    .collect();
                h[a * nb + b] = t.fit_loss(ctx, i, &xd, &bd).eps.eps;
            }
        }
        h
    }

    #[test]
    fn gauss_newton_sums_weighted_outer_products() {
        let rows = [1.0, 2.0, 0.0, -1.0, 3.0, 0.5];
        let h = gauss_newton(&rows, &[0.5, 2.0], 3);
        let want = [
            0.5 * 1.0 + 2.0 * 1.0,
            0.5 * 2.0 - 2.0 * 3.0,
            0.0 - 2.0 * 0.5,
            0.5 * 2.0 - 2.0 * 3.0,
            0.5 * 4.0 + 2.0 * 9.0,
            0.0 + 2.0 * 1.5,
            -1.0,
            3.0,
            0.5,
        ];
        for (a, b) in h.iter().zip(want) {
            assert!((a - b).abs() < 1e-14, "{h:?}");
        }
    }

    #[test]
    fn newton_shift_solves_diagonal_quadratic() {
        // H = diag(2, 4), gradient difference (1, -2)
        let l = cholesky(&[2.0, 0.0, 0.0, 4.0], 2).unwrap();
        let out = newton_shift(&l, &[1.0, 1.0], &[3.0, 0.0], &[2.0, 2.0]);
        assert!((out[0] - 0.5).abs() < 1e-14 && (out[1] - 1.5).abs() < 1e-14, "{out:?}");
    }

    #[test]
    fn shift_is_identity_at_the_reference() {
        let ctx = context(0.0);
        let t = TipThread::new(&ctx, 0).unwrap();
        let th = t.param_shift(&ctx, &ctx.ensemble[0].beta);
        assert!(th.iter().zip(&ctx.ensemble[0].theta).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn hessian_matches_nested_duals_without_noise() {
        let ctx = context(0.0);
        let x = [2.0, 9.5, 16.0];
        for i in 0..2 {
            let t = TipThread::new(&ctx, i).unwrap();
            assert!(t.d2.is_none());
            let h = t.hessian(&ctx, i, &x);
            let e = exact_hessian(&t, &ctx, i, &x);
            for (a, b) in h.iter().zip(&e) {
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{h:?} {e:?}");
            }
        }
    }

    #[test]
    fn hessian_matches_nested_duals_with_noise() {
        let ctx = context(1e-2);
        let x = [1.0, 4.0, 11.0];
        let t = TipThread::new(&ctx, 1).unwrap();
        assert!(t.d2.is_some());
        let h = t.hessian(&ctx, 1, &x);
        let e = exact_hessian(&t, &ctx, 1, &x);
        for (a, b) in h.iter().zip(&e) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{h:?} {e:?}");
        }
    }

    #[test]
    fn more_observations_never_lower_the_score() {
        let ctx = context(0.0);
        let t = TipThread::new(&ctx, 0).unwrap();
        let a = t.score(&ctx, 0, &[3.0, 8.0]).unwrap();
        let b = t.score(&ctx, 0, &[3.0, 8.0, 14.0]).unwrap();
        assert!(b >= a - 1e-10, "{a} {b}");
    }
}
