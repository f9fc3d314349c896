//! Model training estimate: the converged inverse estimate predicted by
//! linearized training dynamics.
//!
//! With stacked residuals `r = [û(X) − Ỹ; R_p]` and Jacobian
//! `G = [G_θ | G_β]` (the observation rows have no β part) the estimate is
//! `β^{(∞)} = β^{(r)} − G_βᵀ (G_θ G_θᵀ + G_β G_βᵀ + λI)⁻¹ r`.
//! The PDE block does not depend on γ, so it is factored once per thread
//! and the γ-dependent observation rows enter through a Schur complement.

use super::fist::perturb;
use super::CriterionContext;
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_jittered, chol_solve, chol_solve_f64, gram_rows};
use crate::pinn::{loss_and_grad, output_rows, pde_rows};

const ESCALATIONS: usize = 4;

/// Dense estimate from full Jacobians (`rows × n_theta`, `rows × n_beta`).
pub fn kernel_estimate<T: Real>(
    g_theta: &[T],
    g_beta: &[T],
    r: &[T],
    beta_r: &[T],
    lambda: f64,
) -> Result<Vec<T>> {
    let rows = r.len();
    let nb = beta_r.len();
    let nt = if rows == 0 { 0 } else { g_theta.len() / rows };
    let mut k = gram_rows(g_theta, rows, nt);
    let kb = gram_rows(g_beta, rows, nb);
    for (a, b) in k.iter_mut().zip(kb) {
        *a += b;
    }
    let l = cholesky_jittered(&k, rows, lambda, "MoTE kernel")?;
    let alpha = chol_solve(&l, rows, r);
    let mut out = beta_r.to_vec();
    for (row, &a) in alpha.iter().enumerate() {
        for j in 0..nb {
            out[j] -= g_beta[row * nb + j] * a;
        }
    }
    Ok(out)
}

/// Factored PDE block at one jitter level.
#[derive(Clone, Debug)]
struct Block {
    lambda: f64,
    chol: Vec<f64>,
    /// `A⁻¹ r_p`.
    w: Vec<f64>,
    /// `A⁻¹ G_β`, `n_p × n_beta`.
    c: Vec<f64>,
    /// `G_βᵀ A⁻¹ r_p`.
    v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MoteThread {
    pub theta_r: Vec<f64>,
    pub beta_r: Vec<f64>,
    np: usize,
    g_theta: Vec<f64>,
    g_beta: Vec<f64>,
    r_p: Vec<f64>,
    gram: Vec<f64>,
    base: Block,
}

impl MoteThread {
    pub fn new(ctx: &CriterionContext, i: usize) -> Result<Self> {
        let (theta_r, beta_r) = match ctx.params.mote_steps {
            None => {
                let m = &ctx.ensemble[i];
                let (vt, vb) = (ctx.params.mote_theta_var, ctx.params.perturb_var);
                perturb(&m.theta, &m.beta, vt, vb, ctx.thread_seed(i, "mote-perturb"))
            }
            Some(steps) => warm_up(ctx, steps)?,
        };
        let rows = pde_rows(&ctx.problem, &theta_r, &beta_r, &ctx.colloc);
        let np = rows.rows();
        let mut gram = gram_rows(&rows.d_theta, np, theta_r.len());
        let gb = gram_rows(&rows.d_beta, np, beta_r.len());
        for (a, b) in gram.iter_mut().zip(gb) {
            *a += b;
        }
        let mut t = MoteThread {
            theta_r,
            beta_r,
            np,
            g_theta: rows.d_theta,
            g_beta: rows.d_beta,
            r_p: rows.values,
            gram,
            base: Block { lambda: 0.0, chol: Vec::new(), w: Vec::new(), c: Vec::new(), v: Vec::new() },
        };
        let mut lambda = ctx.params.jitter;
        for _ in 0..ESCALATIONS {
            if let Some(b) = t.block(lambda) {
                t.base = b;
                return Ok(t);
            }
            lambda *= 10.0;
        }
        Err(Error::IllConditioned { what: "MoTE kernel" })
    }

    fn block(&self, lambda: f64) -> Option<Block> {
        let (np, nb) = (self.np, self.beta_r.len());
        let mut a = self.gram.clone();
        for k in 0..np {
            a[k * np + k] += lambda;
        }
        let chol = cholesky(&a, np)?;
        let w = chol_solve(&chol, np, &self.r_p);
        let mut c = vec![0.0; np * nb];
        for j in 0..nb {
            let col: Vec<f64> = (0..np).map(|r| self.g_beta[r * nb + j]).collect();
            for (r, v) in chol_solve(&chol, np, &col).into_iter().enumerate() {
                c[r * nb + j] = v;
            }
        }
        let v = (0..nb).map(|j| (0..np).map(|r| self.g_beta[r * nb + j] * w[r]).sum()).collect();
        Some(Block { lambda, chol, w, c, v })
    }

    /// Converged-estimate prediction for the observation inputs `x`.
    pub fn estimate<T: Real>(&self, ctx: &CriterionContext, i: usize, x: &[T]) -> Result<Vec<T>> {
        let (np, nb, nt) = (self.np, self.beta_r.len(), self.theta_r.len());
        let y = ctx.targets(i, x);
        let theta: Vec<T> = self.theta_r.iter().map(|&v| T::cst(v)).collect();
        let (u, jo) = output_rows(&ctx.problem, &theta, x);
        let m = y.len();
        let r_o: Vec<T> = u.iter().zip(&y).map(|(&a, &b)| a - b).collect();
        let koo = gram_rows(&jo, m, nt);
        // K_po = G_θ,p J_oᵀ, n_p × m.
        let mut kpo = vec![T::zero(); np * m];
        for p in 0..np {
            let gp = &self.g_theta[p * nt..(p + 1) * nt];
            for o in 0..m {
                let jr = &jo[o * nt..(o + 1) * nt];
                let mut s = T::zero();
                for (&g, &j) in gp.iter().zip(jr) {
                    s += j * g;
                }
                kpo[p * m + o] = s;
            }
        }
        let mut lambda = self.base.lambda;
        for _ in 0..ESCALATIONS {
            let fresh;
            let block = if lambda == self.base.lambda {
                &self.base
            } else {
                match self.block(lambda) {
                    Some(b) => {
                        fresh = b;
                        &fresh
                    }
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                }
            };
            // Z = A⁻¹ K_po, column by column.
            let mut z = vec![T::zero(); np * m];
            for o in 0..m {
                let col: Vec<T> = (0..np).map(|p| kpo[p * m + o]).collect();
                for (p, v) in chol_solve_f64(&block.chol, np, &col).into_iter().enumerate() {
                    z[p * m + o] = v;
                }
            }
            let mut s = koo.clone();
            for a in 0..m {
                s[a * m + a] += T::cst(lambda);
                for b in 0..m {
                    let mut acc = T::zero();
                    for p in 0..np {
                        acc += kpo[p * m + a] * z[p * m + b];
                    }
                    s[a * m + b] -= acc;
                }
            }
            let Some(ls) = cholesky(&s, m) else {
                lambda *= 10.0;
                continue;
            };
            let rhs: Vec<T> = (0..m)
                .map(|o| {
                    let mut acc = r_o[o];
                    for p in 0..np {
                        acc -= kpo[p * m + o] * block.w[p];
                    }
                    acc
                })
                .collect();
            let alpha_o = chol_solve(&ls, m, &rhs);
            // β∞ = β_r − G_βᵀ A⁻¹ r_p + (A⁻¹G_β)ᵀ K_po α_o.
            let mut out: Vec<T> = (0..nb).map(|j| T::cst(self.beta_r[j] - block.v[j])).collect();
            for p in 0..np {
                let mut ka = T::zero();
                for o in 0..m {
                    ka += kpo[p * m + o] * alpha_o[o];
                }
                for j in 0..nb {
                    out[j] += ka * block.c[p * nb + j];
                }
            }
            return Ok(out);
        }
        Err(Error::IllConditioned { what: "MoTE kernel" })
    }

    pub fn score<T: Real>(&self, ctx: &CriterionContext, i: usize, x: &[T]) -> Result<T> {
        let est = self.estimate(ctx, i, x)?;
        if est.iter().any(|b| !b.is_finite()) {
            return Err(Error::CriterionDiverged("MoTE estimate not finite".into()));
        }
        Ok(-ctx.problem.beta_space.error(&est, &ctx.ensemble[i].beta))
    }

    /// Stacked residual and Jacobians at `x`, observation rows first. Used
    /// to check the blocked solve against [`kernel_estimate`].
    pub fn stacked(&self, ctx: &CriterionContext, i: usize, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nb = self.beta_r.len();
        let y = ctx.targets(i, x);
        let (u, jo) = output_rows(&ctx.problem, &self.theta_r, x);
        let mut r: Vec<f64> = u.iter().zip(&y).map(|(a, b)| a - b).collect();
        let mut gt = jo;
        let mut gb = vec![0.0; r.len() * nb];
        r.extend_from_slice(&self.r_p);
        gt.extend_from_slice(&self.g_theta);
        gb.extend_from_slice(&self.g_beta);
        (r, gt, gb)
    }
}

/// Plain gradient steps on the PDE loss from θ_SI and the prior centre.
fn warm_up(ctx: &CriterionContext, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut theta = ctx.theta_si.clone();
    let mut beta = ctx.problem.beta_space.initial_guess();
    for step in 0..steps {
        let lg = loss_and_grad(&ctx.problem, &theta, &beta, &ctx.colloc, None);
        if !lg.loss.total.is_finite() {
            return Err(Error::CriterionDiverged(format!("MoTE warm-up not finite at step {step}")));
        }
        for (t, g) in theta.iter_mut().zip(&lg.theta) {
            *t -= ctx.params.lr * g;
        }
        for (b, g) in beta.iter_mut().zip(&lg.beta) {
            *b -= ctx.params.lr * g;
        }
    }
    Ok((theta, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{CriterionParams, Member};
    use crate::design::DesignSpace;
    use crate::network::init_params;
    use crate::pde::{Problem, ProblemKind};

    fn ridge(g: &[f64], r: &[f64], rows: usize, n: usize, lambda: f64) -> Vec<f64> {
        // (GᵀG + λI) Δw = −Gᵀ r
        let mut a = crate::linalg::gram_cols(g, rows, n);
        for k in 0..n {
            a[k * n + k] += lambda;
        }
        let rhs: Vec<f64> = (0..n).map(|j| -(0..rows).map(|q| g[q * n + j] * r[q]).sum::<f64>()).collect();
        chol_solve(&cholesky(&a, n).unwrap(), n, &rhs)
    }

    #[test]
    fn dense_estimate_matches_ridge_step() {
        let (rows, nt, nb) = (7, 4, 2);
        let g: Vec<f64> = (0..rows * (nt + nb)).map(|k| ((k * 37 % 11) as f64 - 5.0) / 4.0).collect();
        let r: Vec<f64> = (0..rows).map(|k| 0.3 * k as f64 - 1.0).collect();
        let gt: Vec<f64> = (0..rows).flat_map(|q| g[q * (nt + nb)..q * (nt + nb) + nt].to_vec()).collect();
        let gb: Vec<f64> = (0..rows).flat_map(|q| g[q * (nt + nb) + nt..(q + 1) * (nt + nb)].to_vec()).collect();
        let beta_r = vec![0.5, -0.2];
        let est = kernel_estimate(&gt, &gb, &r, &beta_r, 1e-6).unwrap();
        let dw = ridge(&g, &r, rows, nt + nb, 1e-6);
        for j in 0..nb {
            assert!((est[j] - (beta_r[j] + dw[nt + j])).abs() < 1e-8);
        }
    }

    #[test]
    fn blocked_solve_matches_dense() {
        let p = Problem::oscillator();
        let ensemble: Vec<Member> = (0..2)
            .map(|k| Member { beta: vec![1.0 + k as f64, 2.0], theta: init_params(&p.net, k).values })
            .collect();
        let params = CriterionParams { n_interior: 30, perturb_var: 0.01, ..CriterionParams::defaults(p.kind) };
        let theta_si = init_params(&p.net, 7).values;
        let ctx = CriterionContext::new(
            p.clone(),
            DesignSpace::default_for(ProblemKind::Oscillator),
            ensemble,
            theta_si,
            params,
            5,
        )
        .unwrap();
        for i in 0..2 {
            let t = MoteThread::new(&ctx, i).unwrap();
            let x = [1.5, 7.0, 12.5];
            let blocked = t.estimate(&ctx, i, &x).unwrap();
            let (r, gt, gb) = t.stacked(&ctx, i, &x);
            let dense = kernel_estimate(&gt, &gb, &r, &t.beta_r, t.base.lambda).unwrap();
            for j in 0..2 {
                assert!((blocked[j] - dense[j]).abs() < 1e-7 * (1.0 + dense[j].abs()), "{blocked:?} {dense:?}");
            }
        }
    }
}
