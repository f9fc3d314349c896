use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossParts, ObsRef};
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::network::ParamVector;
use crate::pde::{Collocation, Problem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Ratio of the final to the initial learning rate; the rate decays
    /// geometrically in between. 1 keeps it constant.
    pub lr_decay: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Collocation seed; always derived from the run seed, never configured.
    #[serde(skip)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidParameter(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.n_interior == 0 || self.n_boundary == 0 {
            return Err(Error::InvalidParameter("collocation counts must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if self.lr_decay == 1.0 || self.steps == 0 {
            self.lr
        } else {
            self.lr * self.lr_decay.powf(step as f64 / self.steps as f64)
        }
    }

    pub fn collocation(&self, problem: &Problem) -> Collocation {
        problem.sample_collocation(self.n_interior, self.n_boundary, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    /// Row-major inputs.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub noise_var: f64,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn as_ref(&self) -> ObsRef<'_, f64> {
        ObsRef { x: &self.x, y: &self.y }
    }
}

/// Adam with default moments (0.9, 0.999, 1e-8).
#[derive(Clone, Debug)]
pub struct Adam<T = f64> {
    pub lr: f64,
    /// Added to the root of the second moment.
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, eps: 1e-8, m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// One update. Generic so it can be unrolled under dual numbers; a
    /// moment that is exactly zero skips the square root, whose derivative
    /// is singular there.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.m[i] * Self::B1 + grad[i] * (1.0 - Self::B1);
            self.v[i] = self.v[i] * Self::B2 + grad[i] * grad[i] * (1.0 - Self::B2);
            let vhat = self.v[i] / c2;
            let denom = if vhat.value() > 0.0 { vhat.sqrt() + self.eps } else { T::cst(self.eps) };
            params[i] -= self.m[i] / c1 / denom * self.lr;
        }
    }
}

/// Loss terms at f64 with domain checks on the observations.
pub fn pinn_loss(
    problem: &Problem,
    theta: &[f64],
    beta: &[f64],
    obs: Option<&ObservationSet>,
    colloc: &Collocation,
) -> Result<LossParts<f64>> {
    if let Some(o) = obs {
        problem.domain.check_points(&o.x)?;
    }
    Ok(loss_and_grad(problem, theta, beta, colloc, obs.map(|o| o.as_ref())).loss)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamVector,
    /// `(step, total loss)` every 100 steps and at the end.
    pub trace: Vec<(usize, f64)>,
    pub final_loss: LossParts<f64>,
}

/// Adam on the PDE loss at fixed β.
pub fn train_forward(problem: &Problem, beta: &[f64], init: &ParamVector, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let colloc = cfg.collocation(problem);
    let mut theta = init.values.clone();
    let mut opt = Adam::new(theta.len(), cfg.lr);
    let mut trace = Vec::new();
    for step in 0..cfg.steps {
        let lg = loss_and_grad(problem, &theta, beta, &colloc, None);
        if !lg.loss.total.is_finite() || lg.theta.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step });
        }
        if step % 100 == 0 {
            trace.push((step, lg.loss.total));
        }
        opt.lr = cfg.lr_at(step);
        opt.step(&mut theta, &lg.theta);
    }
    let final_loss = loss_and_grad(problem, &theta, beta, &colloc, None).loss;
    if !final_loss.total.is_finite() {
        return Err(Error::TrainingDiverged { step: cfg.steps });
    }
    trace.push((cfg.steps, final_loss.total));
    Ok(TrainOutcome { params: ParamVector { arch: init.arch.clone(), values: theta }, trace, final_loss })
}

#[derive(Clone, Debug)]
pub struct InverseOutcome {
    pub theta: ParamVector,
    pub beta: Vec<f64>,
    pub final_loss: LossParts<f64>,
}

/// Joint Adam on (θ, β) against observations, clamping β to its bounds after every step.
pub fn train_inverse(
    problem: &Problem,
    obs: &ObservationSet,
    theta_init: &ParamVector,
    beta_init: &[f64],
    cfg: &TrainConfig,
) -> Result<InverseOutcome> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::InvalidParameter("inverse training needs observations".into()));
    }
    problem.domain.check_points(&obs.x)?;
    let colloc = cfg.collocation(problem);
    let nt = theta_init.values.len();
    let mut w: Vec<f64> = theta_init.values.iter().chain(beta_init).copied().collect();
    let mut opt = Adam::new(w.len(), cfg.lr);
    let mut g = vec![0.0; w.len()];
    for step in 0..cfg.steps {
        let (theta, beta) = w.split_at(nt);
        let lg = loss_and_grad(problem, theta, beta, &colloc, Some(obs.as_ref()));
        if !lg.loss.total.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        g[..nt].copy_from_slice(&lg.theta);
        g[nt..].copy_from_slice(&lg.beta);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { step });
        }
        opt.lr = cfg.lr_at(step);
        opt.step(&mut w, &g);
        problem.beta_space.project(&mut w[nt..]);
    }
    let (theta, beta) = w.split_at(nt);
    let final_loss = loss_and_grad(problem, theta, beta, &colloc, Some(obs.as_ref())).loss;
    Ok(InverseOutcome {
        theta: ParamVector { arch: theta_init.arch.clone(), values: theta.to_vec() },
        beta: beta.to_vec(),
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    fn small_cfg(steps: usize) -> TrainConfig {
        TrainConfig { steps, lr: 0.01, lr_decay: 1.0, n_interior: 40, n_boundary: 1, seed: 3 }
    }

    #[test]
    fn zero_steps_return_init() {
        let p = Problem::oscillator();
        let init = init_params(&p.net, 1);
        let out = train_forward(&p, &[1.0, 2.0], &init, &small_cfg(0)).unwrap();
        assert_eq!(out.params, init);
        let obs = ObservationSet { x: vec![1.0], y: vec![0.5], noise_var: 0.0 };
        let inv = train_inverse(&p, &obs, &init, &[2.0, 2.0], &small_cfg(0)).unwrap();
        assert_eq!(inv.theta, init);
        assert_eq!(inv.beta, vec![2.0, 2.0]);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let p = Problem::oscillator();
        let init = init_params(&p.net, 2);
        let a = train_forward(&p, &[1.0, 2.0], &init, &small_cfg(200)).unwrap();
        let b = train_forward(&p, &[1.0, 2.0], &init, &small_cfg(200)).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.final_loss.total < a.trace[0].1);
    }

    #[test]
    fn duplicated_rows_leave_loss_unchanged() {
        let p = Problem::oscillator();
        let c = p.sample_collocation(10, 1, 0);
        let theta = init_params(&p.net, 2).values;
        let once = ObservationSet { x: vec![1.0, 5.0], y: vec![0.2, -0.4], noise_var: 0.0 };
        let twice = ObservationSet { x: vec![1.0, 5.0, 1.0, 5.0], y: vec![0.2, -0.4, 0.2, -0.4], noise_var: 0.0 };
        let a = pinn_loss(&p, &theta, &[1.0, 1.0], Some(&once), &c).unwrap();
        let b = pinn_loss(&p, &theta, &[1.0, 1.0], Some(&twice), &c).unwrap();
        assert!((a.total - b.total).abs() < 1e-15);
    }

    #[test]
    fn observation_outside_domain_is_rejected() {
        let p = Problem::oscillator();
        let c = p.sample_collocation(10, 1, 0);
        let theta = init_params(&p.net, 2).values;
        let bad = ObservationSet { x: vec![25.0], y: vec![0.0], noise_var: 0.0 };
        assert!(matches!(pinn_loss(&p, &theta, &[1.0, 1.0], Some(&bad), &c), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_keeps_beta_in_bounds() {
        let p = Problem::oscillator();
        let init = init_params(&p.net, 2);
        let obs = ObservationSet { x: vec![1.0, 2.0], y: vec![5.0, -5.0], noise_var: 0.0 };
        let cfg = TrainConfig { lr: 0.5, ..small_cfg(30) };
        let inv = train_inverse(&p, &obs, &init, &[3.9, 0.1], &cfg).unwrap();
        assert!(p.beta_space.contains(&inv.beta));
    }
}
