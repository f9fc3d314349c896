//! Inverse-problem evaluation of a fixed design.
//!
//! Each instance draws a true β from the prior, observes the numerical
//! oracle at the realized design with Gaussian noise, solves the inverse
//! problem from the shared initialization and the prior centre, and records
//! the estimation error. Reports carry the median and semi-interquartile
//! range of the errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{add_noise, DesignSpace};
use crate::error::{Error, Result};
use crate::network::ParamVector;
use crate::pde::Problem;
use crate::pinn::{train_inverse, ObservationSet, TrainConfig};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub instances: usize,
    /// Observation noise variance.
    pub noise_var: f64,
    /// Fraction dropped from each tail before the summary statistics.
    pub trim: f64,
    pub train: TrainConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            instances: 10,
            noise_var: 1e-3,
            trim: 0.0,
            train: TrainConfig { steps: 5000, lr: 0.01, lr_decay: 0.01, n_interior: 300, n_boundary: 1, seed: 0 },
        }
    }
}

/// One inverse problem: the true parameter, the noise level and the seed
/// of its noise draw and collocation.
#[derive(Clone, Debug, PartialEq)]
pub struct IpInstance {
    pub beta: Vec<f64>,
    pub noise_var: f64,
    pub seed: u64,
}

impl IpInstance {
    /// Draws the true parameter from the prior with a stream of `seed`.
    pub fn draw(problem: &Problem, noise_var: f64, seed: u64) -> Self {
        IpInstance { beta: problem.beta_space.sample(seed::derive(seed, 0)), noise_var, seed }
    }
}

/// Oracle observations at the realized design plus noise.
pub fn oracle_observations(
    problem: &Problem,
    space: &DesignSpace,
    gamma: &[f64],
    instance: &IpInstance,
) -> Result<ObservationSet> {
    if !space.contains(gamma) {
        return Err(Error::InfeasibleDesign(format!("{gamma:?} is outside the design space")));
    }
    if !(instance.noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be non-negative, got {}", instance.noise_var)));
    }
    let x = space.realize(gamma)?;
    let truth = problem.truth(&instance.beta)?;
    let mut y = problem.observe_truth(&truth, &x)?;
    add_noise(&mut y, instance.noise_var, seed::derive(instance.seed, 1));
    Ok(ObservationSet { x, y, noise_var: instance.noise_var })
}

/// Solves one inverse problem and returns its estimation error.
pub fn run_ip_instance(
    problem: &Problem,
    space: &DesignSpace,
    gamma: &[f64],
    instance: &IpInstance,
    theta_si: &ParamVector,
    cfg: &TrainConfig,
) -> Result<f64> {
    let obs = oracle_observations(problem, space, gamma, instance)?;
    let train = TrainConfig { seed: seed::derive(instance.seed, 2), ..cfg.clone() };
    let out = train_inverse(problem, &obs, theta_si, &problem.beta_space.initial_guess(), &train)?;
    let err = problem.beta_space.error(&out.beta, &instance.beta);
    if err.is_finite() {
        Ok(err)
    } else {
        Err(Error::NonFinite { primitive: "estimation error" })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub seed: u64,
    pub beta: Vec<f64>,
    /// `+∞` when the solve diverged.
    pub error: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub gamma: Vec<f64>,
    pub config_hash: String,
    pub instances: Vec<InstanceResult>,
    pub median: f64,
    pub siqr: f64,
    /// Errors that entered the summary after trimming.
    pub n: usize,
}

/// Quantile with linear interpolation between order statistics, the
/// default of most numerical libraries. `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if frac == 0.0 || a == b {
        a
    } else {
        a + frac * (b - a)
    }
}

/// Median and `(Q3 − Q1)/2` after dropping `trim` of the values from each
/// tail. Returns `(median, siqr, n_used)`.
pub fn summarize(errors: &[f64], trim: f64) -> (f64, f64, usize) {
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (trim.clamp(0.0, 0.5) * v.len() as f64).floor() as usize;
    let kept = if 2 * cut < v.len() { &v[cut..v.len() - cut] } else { &v[..] };
    let q1 = quantile(kept, 0.25);
    let q3 = quantile(kept, 0.75);
    let siqr = if q1 == q3 { 0.0 } else { 0.5 * (q3 - q1) };
    (quantile(kept, 0.5), siqr, kept.len())
}

/// Seed of instance `k` under a master seed.
pub fn instance_seed(master: u64, k: usize) -> u64 {
    seed::derive(seed::stage(master, "ip-instances"), k as u64)
}

fn diverged(e: &Error) -> bool {
    match e {
        Error::TrainingDiverged { .. } | Error::NonFinite { .. } => true,
        Error::Thread { source, .. } | Error::Stage { source, .. } => diverged(source),
        _ => false,
    }
}

/// Evaluates `gamma` on `cfg.instances` inverse problems. Instances are
/// the same for every design under one master seed.
pub fn evaluate_design(
    problem: &Problem,
    space: &DesignSpace,
    gamma: &[f64],
    method: &str,
    theta_si: &ParamVector,
    cfg: &HarnessConfig,
    master: u64,
) -> Result<RunReport> {
    if cfg.instances == 0 {
        return Err(Error::InvalidParameter("at least one instance is required".into()));
    }
    if !(0.0..0.5).contains(&cfg.trim) {
        return Err(Error::InvalidParameter(format!("trim must lie in [0, 0.5), got {}", cfg.trim)));
    }
    let instances: Vec<InstanceResult> = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let inst = IpInstance::draw(problem, cfg.noise_var, instance_seed(master, k));
            match run_ip_instance(problem, space, gamma, &inst, theta_si, &cfg.train) {
                Ok(error) => Ok(InstanceResult { seed: inst.seed, beta: inst.beta, error, diverged: false }),
                Err(e) if diverged(&e) => {
                    Ok(InstanceResult { seed: inst.seed, beta: inst.beta, error: f64::INFINITY, diverged: true })
                }
                Err(e) => Err(e.in_thread(k)),
            }
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = instances.iter().map(|r| r.error).collect();
    let (median, siqr, n) = summarize(&errors, cfg.trim);
    Ok(RunReport { method: method.to_string(), gamma: gamma.to_vec(), config_hash: String::new(), instances, median, siqr, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    #[test]
    fn quartile_examples() {
        assert_eq!(summarize(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0), (3.0, 1.0, 5));
        assert_eq!(summarize(&[7.5], 0.0), (7.5, 0.0, 1));
        // numpy: percentile([1, 2, 3, 4], [25, 50, 75]) = 1.75, 2.5, 3.25
        assert_eq!(summarize(&[4.0, 1.0, 3.0, 2.0], 0.0), (2.5, 0.75, 4));
    }

    #[test]
    fn trimming_drops_tails() {
        let v: Vec<f64> = (1..=10).map(f64::from).chain([1e9]).collect();
        let (_, _, n) = summarize(&v, 0.1);
        assert_eq!(n, 9);
        let (m, _, _) = summarize(&[1.0, 2.0, 3.0, 4.0, 1e9, f64::INFINITY], 0.0);
        assert_eq!(m, 3.5);
    }

    #[test]
    fn infinite_errors_keep_order() {
        let (m, s, _) = summarize(&[1.0, f64::INFINITY, f64::INFINITY], 0.0);
        assert_eq!(m, f64::INFINITY);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn exact_estimate_has_zero_error() {
        let p = Problem::oscillator();
        assert_eq!(p.beta_space.error(&[1.5, 2.5], &[1.5, 2.5]), 0.0);
    }

    #[test]
    fn observations_come_from_the_oracle() {
        let p = Problem::oscillator();
        let space = DesignSpace::default_for(p.kind);
        let inst = IpInstance { beta: vec![0.5, 2.0], noise_var: 0.0, seed: 3 };
        let obs = oracle_observations(&p, &space, &[1.0, 5.0, 10.0], &inst).unwrap();
        let truth = p.truth(&inst.beta).unwrap();
        for (x, y) in obs.x.iter().zip(&obs.y) {
            assert_eq!(*y, truth.eval(&[*x]).unwrap());
        }
        assert!(matches!(
            oracle_observations(&p, &space, &[1.0, 5.0, 30.0], &inst),
            Err(Error::InfeasibleDesign(_))
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let p = Problem::oscillator();
        let space = DesignSpace::default_for(p.kind);
        let theta = init_params(&p.net, 1);
        let cfg = HarnessConfig {
            instances: 3,
            train: TrainConfig { steps: 20, n_interior: 30, ..HarnessConfig::default().train },
            ..HarnessConfig::default()
        };
        let a = evaluate_design(&p, &space, &[2.0, 8.0, 15.0], "x", &theta, &cfg, 5).unwrap();
        let b = evaluate_design(&p, &space, &[2.0, 8.0, 15.0], "x", &theta, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.instances.iter().all(|r| r.error >= 0.0 && !r.diverged));
        let seeds: std::collections::HashSet<u64> = a.instances.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 3);
    }
}
