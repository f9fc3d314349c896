//! Few-step inverse solver training.

use rand_distr::{Distribution, Normal};

use super::CriterionContext;
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::pinn::{loss_and_grad, Adam, ObsRef};
use crate::seed;

/// Perturbed starting point of one thread. The draw is fixed per thread,
/// so every γ is scored from the same start.
#[derive(Clone, Debug)]
pub struct FistThread {
    pub theta0: Vec<f64>,
    pub beta0: Vec<f64>,
}

/// `(θ_i + ε_θ, β_i + ε_β)` with `ε_θ ~ 𝒩(0, var_theta)`, `ε_β ~ 𝒩(0, var_beta)`.
pub(super) fn perturb(theta: &[f64], beta: &[f64], var_theta: f64, var_beta: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seed::rng(seed);
    let mut add = |xs: &[f64], var: f64| -> Vec<f64> {
        if var == 0.0 {
            return xs.to_vec();
        }
        let n = Normal::new(0.0, var.sqrt()).expect("finite standard deviation");
        xs.iter().map(|&v| v + n.sample(&mut rng)).collect()
    };
    let t = add(theta, var_theta);
    let b = add(beta, var_beta);
    (t, b)
}

impl FistThread {
    pub fn new(ctx: &CriterionContext, i: usize) -> Result<Self> {
        let m = &ctx.ensemble[i];
        let var = ctx.params.perturb_var;
        let (theta0, beta0) = perturb(&m.theta, &m.beta, var, var, ctx.thread_seed(i, "fist-perturb"));
        Ok(FistThread { theta0, beta0 })
    }

    /// `−err(β̂^{(r)}, β_i)` after `r` Adam steps on the inverse loss. Plain
    /// gradient steps of the same size barely move β in `r` steps, which
    /// leaves the score flat in γ. With the usual tiny ε the normalized step
    /// flips sign over a sliver of γ wherever a gradient entry crosses zero,
    /// so the score is a staircase; `adam_eps` smooths those steps.
    pub fn score<T: Real>(&self, ctx: &CriterionContext, i: usize, x: &[T]) -> Result<T> {
        let y = ctx.targets(i, x);
        let mut theta: Vec<T> = self.theta0.iter().map(|&v| T::cst(v)).collect();
        let mut beta: Vec<T> = self.beta0.iter().map(|&v| T::cst(v)).collect();
        let eps = ctx.params.adam_eps;
        let mut opt_theta = Adam::<T>::new(theta.len(), ctx.params.lr).with_eps(eps);
        let mut opt_beta = Adam::<T>::new(beta.len(), ctx.params.lr).with_eps(eps);
        for step in 0..ctx.params.fist_steps {
            let lg = loss_and_grad(&ctx.problem, &theta, &beta, &ctx.colloc, Some(ObsRef { x, y: &y }));
            if !lg.loss.total.is_finite() {
                return Err(Error::CriterionDiverged(format!("FIST loss not finite at step {step}")));
            }
            opt_theta.step(&mut theta, &lg.theta);
            opt_beta.step(&mut beta, &lg.beta);
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::CriterionDiverged("FIST estimate not finite".into()));
        }
        Ok(-ctx.problem.beta_space.error(&beta, &ctx.ensemble[i].beta))
    }
}
