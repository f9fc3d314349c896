//! Per-thread design criteria.
//!
//! Each thread `i` of the ensemble holds a reference parameter β_i and the
//! forward network θ_i trained for it. A criterion maps a design γ to a
//! score for that thread; higher is better. FIST, MoTE and TIP are written
//! against the generic scalar so dual numbers seeded on γ give exact
//! gradients. MI is a non-differentiable ensemble-level baseline.

mod fist;
mod mi;
mod mote;
mod tip;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::design::DesignSpace;
use crate::error::{Error, Result};
use crate::pde::{Collocation, Problem, ProblemKind};

pub use fist::FistThread;
pub use mi::{mi_from_kernel, MiCache};
pub use mote::{kernel_estimate, MoteThread};
pub use tip::{gauss_newton, newton_shift, TipThread};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Fist,
    Mote,
    Tip,
    Mi,
}

impl CriterionKind {
    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Fist => "fist",
            CriterionKind::Mote => "mote",
            CriterionKind::Tip => "tip",
            CriterionKind::Mi => "mi",
        }
    }

    pub fn differentiable(self) -> bool {
        !matches!(self, CriterionKind::Mi)
    }
}

impl FromStr for CriterionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fist" => Ok(CriterionKind::Fist),
            "mote" => Ok(CriterionKind::Mote),
            "tip" => Ok(CriterionKind::Tip),
            "mi" => Ok(CriterionKind::Mi),
            _ => Err(Error::InvalidParameter(format!("unknown criterion `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionParams {
    /// Variance of the Gaussian perturbation of (θ_i, β_i).
    pub perturb_var: f64,
    /// Unrolled gradient steps for FIST.
    pub fist_steps: usize,
    /// Step size of the unrolled Adam and the warm-up gradient descent.
    pub lr: f64,
    /// ε of the unrolled Adam.
    pub adam_eps: f64,
    /// MoTE warm-up steps from θ_SI; `None` reuses perturbed forward parameters.
    pub mote_steps: Option<usize>,
    /// Variance of the θ perturbation when MoTE reuses forward parameters;
    /// β is perturbed with `perturb_var`. Linearizing around a network
    /// whose weights moved this much is only meaningful when it is small.
    pub mote_theta_var: f64,
    /// Diagonal jitter of kernel, Hessian and covariance solves.
    pub jitter: f64,
    /// Noise variance of the simulated observations at design time.
    pub noise_var: f64,
    /// Collocation used inside the criteria.
    pub n_interior: usize,
    pub n_boundary: usize,
}

impl CriterionParams {
    /// Per-problem defaults.
    pub fn defaults(kind: ProblemKind) -> Self {
        let base = CriterionParams {
            perturb_var: 0.5,
            fist_steps: 50,
            lr: 0.01,
            adam_eps: 1e-4,
            mote_steps: None,
            mote_theta_var: 0.0,
            jitter: 1e-6,
            noise_var: 0.0,
            n_interior: 100,
            n_boundary: 1,
        };
        match kind {
            ProblemKind::Oscillator => base,
            ProblemKind::Wave => {
                CriterionParams { fist_steps: 200, mote_steps: Some(0), n_interior: 200, n_boundary: 60, ..base }
            }
            ProblemKind::Eikonal => CriterionParams {
                perturb_var: 0.01,
                fist_steps: 200,
                mote_steps: Some(0),
                n_interior: 200,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.perturb_var >= 0.0) {
            bad.push("perturb_var");
        }
        if !(self.mote_theta_var >= 0.0) {
            bad.push("mote_theta_var");
        }
        if !(self.lr > 0.0) {
            bad.push("lr");
        }
        if !(self.adam_eps > 0.0) {
            bad.push("adam_eps");
        }
        if !(self.jitter > 0.0) {
            bad.push("jitter");
        }
        if !(self.noise_var >= 0.0) {
            bad.push("noise_var");
        }
        if self.n_interior == 0 {
            bad.push("n_interior");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid criterion parameters: {}", bad.join(", "))))
        }
    }
}

/// One ED thread: a reference parameter and its trained forward network.
#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Everything a criterion reads. Immutable once built.
#[derive(Clone, Debug)]
pub struct CriterionContext {
    pub problem: Problem,
    pub space: DesignSpace,
    pub ensemble: Vec<Member>,
    pub theta_si: Vec<f64>,
    pub params: CriterionParams,
    pub colloc: Collocation,
    /// Seeds the perturbations and design-time noise.
    pub seed: u64,
}

impl CriterionContext {
    pub fn new(
        problem: Problem,
        space: DesignSpace,
        ensemble: Vec<Member>,
        theta_si: Vec<f64>,
        params: CriterionParams,
        seed: u64,
    ) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::InvalidParameter("criterion ensemble is empty".into()));
        }
        params.validate()?;
        space.validate()?;
        let colloc =
            problem.sample_collocation(params.n_interior, params.n_boundary, crate::seed::stage(seed, "ed-colloc"));
        Ok(CriterionContext { problem, space, ensemble, theta_si, params, colloc, seed })
    }

    pub fn threads(&self) -> usize {
        self.ensemble.len()
    }

    /// Stream of thread `i`, keyed by its reference parameter rather than
    /// its position so reordering the ensemble reorders the scores too.
    fn thread_seed(&self, i: usize, purpose: &str) -> u64 {
        let key = self.ensemble[i].beta.iter().fold(0u64, |h, b| crate::seed::mix(h ^ b.to_bits()));
        crate::seed::derive(crate::seed::stage(self.seed, purpose), key)
    }

    /// Observation targets of thread `i`: its forward network at `x`, plus
    /// design-time noise when enabled. The noise draw is fixed per thread so
    /// the score stays a deterministic function of γ.
    pub fn targets<T: Real>(&self, i: usize, x: &[T]) -> Vec<T> {
        let theta: Vec<T> = self.ensemble[i].theta.iter().map(|&v| T::cst(v)).collect();
        let mut y = crate::pinn::predict(&self.problem, &theta, x);
        if self.params.noise_var > 0.0 {
            let mut eps = vec![0.0; y.len()];
            crate::design::add_noise(&mut eps, self.params.noise_var, self.thread_seed(i, "ed-noise"));
            for (v, e) in y.iter_mut().zip(eps) {
                *v = *v + e;
            }
        }
        y
    }
}

enum Prepared {
    Fist(Vec<FistThread>),
    Mote(Vec<MoteThread>),
    Tip(Vec<TipThread>),
    Mi(MiCache),
}

/// A criterion with its γ-independent per-thread work done.
pub struct Scorer<'a> {
    ctx: &'a CriterionContext,
    kind: CriterionKind,
    prepared: Prepared,
}

fn per_thread<R: Send>(ctx: &CriterionContext, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    (0..ctx.threads()).into_par_iter().map(|i| f(i).map_err(|e| e.in_thread(i))).collect()
}

impl<'a> Scorer<'a> {
    pub fn new(ctx: &'a CriterionContext, kind: CriterionKind) -> Result<Self> {
        let prepared = match kind {
            CriterionKind::Fist => Prepared::Fist(per_thread(ctx, |i| FistThread::new(ctx, i))?),
            CriterionKind::Mote => Prepared::Mote(per_thread(ctx, |i| MoteThread::new(ctx, i))?),
            CriterionKind::Tip => Prepared::Tip(per_thread(ctx, |i| TipThread::new(ctx, i))?),
            CriterionKind::Mi => Prepared::Mi(MiCache::new(ctx)?),
        };
        Ok(Scorer { ctx, kind, prepared })
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn context(&self) -> &CriterionContext {
        self.ctx
    }

    /// Score of thread `i`. MI has no per-thread form and reports the
    /// ensemble score for every thread.
    pub fn thread_score<T: Real>(&self, i: usize, gamma: &[T]) -> Result<T> {
        let x = self.ctx.space.realize(gamma)?;
        match &self.prepared {
            Prepared::Fist(t) => t[i].score(self.ctx, i, &x),
            Prepared::Mote(t) => t[i].score(self.ctx, i, &x),
            Prepared::Tip(t) => t[i].score(self.ctx, i, &x),
            Prepared::Mi(c) => {
                let xv: Vec<f64> = x.iter().map(|v| v.value()).collect();
                Ok(T::cst(c.score(self.ctx, &xv)?))
            }
        }
    }

    pub fn tip_thread(&self, i: usize) -> Option<&TipThread> {
        match &self.prepared {
            Prepared::Tip(t) => t.get(i),
            _ => None,
        }
    }
}
