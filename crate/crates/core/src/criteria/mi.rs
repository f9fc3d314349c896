//! Gaussian-process mutual information with the ensemble covariance as
//! kernel.

use super::CriterionContext;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, chol_logdet, chol_solve};
use crate::pinn::predict;

/// `½[log det(K_tt + λI) − log det(K_tt − K_tg (K_gg + σ²I)⁻¹ K_gt + λI)]`.
///
/// `k_tg` is `n_t × n_g` row-major; `noise` is σ².
pub fn mi_from_kernel(k_tt: &[f64], k_tg: &[f64], k_gg: &[f64], n_t: usize, noise: f64, lambda: f64) -> Result<f64> {
    let n_g = if n_t == 0 { 0 } else { k_tg.len() / n_t };
    if n_g == 0 || n_t == 0 {
        return Ok(0.0);
    }
    let mut a = k_gg.to_vec();
    for k in 0..n_g {
        a[k * n_g + k] += noise;
    }
    let la = cholesky_jittered(&a, n_g, lambda, "MI covariance")?;
    let mut cond = k_tt.to_vec();
    for t in 0..n_t {
        let col: Vec<f64> = (0..n_g).map(|g| k_tg[t * n_g + g]).collect();
        let z = chol_solve(&la, n_g, &col);
        for s in 0..=t {
            let v: f64 = (0..n_g).map(|g| k_tg[s * n_g + g] * z[g]).sum();
            cond[t * n_t + s] -= v;
            if s != t {
                cond[s * n_t + t] -= v;
            }
        }
    }
    let lt = cholesky_jittered(k_tt, n_t, lambda, "MI covariance")?;
    let lc = cholesky_jittered(&cond, n_t, lambda, "MI covariance")?;
    Ok(0.5 * (chol_logdet(&lt, n_t) - chol_logdet(&lc, n_t)))
}

/// Ensemble outputs on the fixed test set.
#[derive(Clone, Debug)]
pub struct MiCache {
    pub test: Vec<f64>,
    outputs: Vec<Vec<f64>>,
    means: Vec<f64>,
}

/// 41 evenly spaced points in 1-D, an 11 × 11 lattice in 2-D.
pub fn test_set(ctx: &CriterionContext) -> Vec<f64> {
    let d = &ctx.problem.domain;
    match d.dim() {
        1 => (0..41).map(|k| d.lo[0] + (d.hi[0] - d.lo[0]) * k as f64 / 40.0).collect(),
        _ => {
            let mut out = Vec::new();
            for j in 0..11 {
                for i in 0..11 {
                    out.push(d.lo[0] + (d.hi[0] - d.lo[0]) * i as f64 / 10.0);
                    out.push(d.lo[1] + (d.hi[1] - d.lo[1]) * j as f64 / 10.0);
                }
            }
            out
        }
    }
}

fn covariance(a: &[Vec<f64>], ma: &[f64], b: &[Vec<f64>], mb: &[f64]) -> Vec<f64> {
    let n = a.len();
    let (na, nb) = (ma.len(), mb.len());
    let mut k = vec![0.0; na * nb];
    for m in 0..n {
        for p in 0..na {
            let da = a[m][p] - ma[p];
            for q in 0..nb {
                k[p * nb + q] += da * (b[m][q] - mb[q]);
            }
        }
    }
    let inv = 1.0 / (n - 1) as f64;
    k.iter_mut().for_each(|v| *v *= inv);
    k
}

fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b / n;
        }
    }
    m
}

impl MiCache {
    pub fn new(ctx: &CriterionContext) -> Result<Self> {
        if ctx.threads() < 2 {
            return Err(Error::InvalidParameter("MI needs at least two ensemble members".into()));
        }
        let test = test_set(ctx);
        let outputs: Vec<Vec<f64>> = ctx.ensemble.iter().map(|m| predict(&ctx.problem, &m.theta, &test)).collect();
        let means = mean(&outputs);
        Ok(MiCache { test, outputs, means })
    }

    pub fn score(&self, ctx: &CriterionContext, x: &[f64]) -> Result<f64> {
        if x.is_empty() {
            return Ok(0.0);
        }
        let at_x: Vec<Vec<f64>> = ctx.ensemble.iter().map(|m| predict(&ctx.problem, &m.theta, x)).collect();
        let mx = mean(&at_x);
        let k_tt = covariance(&self.outputs, &self.means, &self.outputs, &self.means);
        let k_tg = covariance(&self.outputs, &self.means, &at_x, &mx);
        let k_gg = covariance(&at_x, &mx, &at_x, &mx);
        mi_from_kernel(&k_tt, &k_tg, &k_gg, self.means.len(), ctx.params.noise_var, ctx.params.jitter)
    }
}
