//! Shared initialization over the β prior by first-order meta-learning.
//!
//! Each round draws `k` parameters from the prior, fine-tunes the current
//! shared parameters on each PDE loss and moves towards the average of the
//! fine-tuned copies. With interpolation 1 the shared vector is replaced by
//! that average.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{init_params, ParamVector};
use crate::pde::Problem;
use crate::pinn::{train_forward, TrainConfig};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub rounds: usize,
    pub tasks: usize,
    /// Step towards the task average; 1 replaces the shared vector by it.
    pub interpolation: f64,
    pub inner: TrainConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            rounds: 20,
            tasks: 4,
            interpolation: 1.0,
            inner: TrainConfig { steps: 500, lr: 0.01, lr_decay: 1.0, n_interior: 300, n_boundary: 1, seed: 0 },
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks == 0 {
            return Err(Error::InvalidParameter("meta-init needs at least one task per round".into()));
        }
        if !(self.interpolation > 0.0 && self.interpolation <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "interpolation must lie in (0, 1], got {}",
                self.interpolation
            )));
        }
        self.inner.validate()
    }
}

/// Runs the meta-learning rounds from a Glorot draw seeded by `seed`.
pub fn reptile(problem: &Problem, cfg: &MetaConfig, seed: u64) -> Result<ParamVector> {
    cfg.validate()?;
    let init = init_params(&problem.net, seed::stage(seed, "meta-init"));
    reptile_from(problem, cfg, seed, init)
}

/// As [`reptile`], starting from given parameters.
pub fn reptile_from(problem: &Problem, cfg: &MetaConfig, seed: u64, init: ParamVector) -> Result<ParamVector> {
    cfg.validate()?;
    let tasks_seed = seed::stage(seed, "meta-tasks");
    let mut shared = init;
    for round in 0..cfg.rounds {
        let tuned: Vec<Result<Vec<f64>>> = (0..cfg.tasks)
            .into_par_iter()
            .map(|j| {
                let task = seed::derive(tasks_seed, (round * cfg.tasks + j) as u64);
                let beta = problem.beta_space.sample(seed::derive(task, 0));
                let inner = TrainConfig { seed: seed::derive(task, 1), ..cfg.inner.clone() };
                train_forward(problem, &beta, &shared, &inner).map(|o| o.params.values).map_err(|e| e.in_thread(j))
            })
            .collect();
        let mut mean = vec![0.0; shared.values.len()];
        for t in tuned {
            for (m, v) in mean.iter_mut().zip(t?) {
                *m += v;
            }
        }
        let inv = 1.0 / cfg.tasks as f64;
        for (s, m) in shared.values.iter_mut().zip(&mean) {
            *s = if cfg.interpolation == 1.0 { m * inv } else { *s + cfg.interpolation * (m * inv - *s) };
        }
        if !shared.is_finite() {
            return Err(Error::TrainingDiverged { step: round });
        }
    }
    Ok(shared)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MetaConfig {
        MetaConfig {
            rounds: 2,
            tasks: 2,
            interpolation: 1.0,
            inner: TrainConfig { steps: 5, lr: 0.01, lr_decay: 1.0, n_interior: 20, n_boundary: 1, seed: 0 },
        }
    }

    #[test]
    fn zero_rounds_return_the_initialization() {
        let p = Problem::oscillator();
        let cfg = MetaConfig { rounds: 0, ..tiny() };
        let out = reptile(&p, &cfg, 9).unwrap();
        assert_eq!(out, init_params(&p.net, seed::stage(9, "meta-init")));
    }

    #[test]
    fn one_task_round_equals_the_fine_tuned_copy() {
        let p = Problem::oscillator();
        let cfg = MetaConfig { rounds: 1, tasks: 1, ..tiny() };
        let out = reptile(&p, &cfg, 4).unwrap();
        let task = seed::derive(seed::stage(4, "meta-tasks"), 0);
        let beta = p.beta_space.sample(seed::derive(task, 0));
        let inner = TrainConfig { seed: seed::derive(task, 1), ..cfg.inner.clone() };
        let direct = train_forward(&p, &beta, &init_params(&p.net, seed::stage(4, "meta-init")), &inner).unwrap();
        assert_eq!(out.values, direct.params.values);
    }

    #[test]
    fn deterministic_and_finite() {
        let p = Problem::oscillator();
        let a = reptile(&p, &tiny(), 1).unwrap();
        let b = reptile(&p, &tiny(), 1).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        assert_ne!(a, reptile(&p, &tiny(), 2).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let p = Problem::oscillator();
        assert!(reptile(&p, &MetaConfig { tasks: 0, ..tiny() }, 0).is_err());
        assert!(reptile(&p, &MetaConfig { interpolation: 0.0, ..tiny() }, 0).is_err());
    }
}
