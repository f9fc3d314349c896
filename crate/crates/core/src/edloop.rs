//! Criterion aggregation, the multi-restart projected gradient ascent over
//! γ, and the random and grid baselines.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Real};
use crate::criteria::Scorer;
use crate::design::DesignSpace;
use crate::error::{Error, Result};
use crate::seed;

/// Mean of the per-thread scores, reduced in thread order.
pub fn aggregate<T: Real + Send>(scorer: &Scorer<'_>, gamma: &[T]) -> Result<T>
where
    T: Sync,
{
    let n = scorer.context().threads();
    if !scorer.kind().differentiable() {
        return scorer.thread_score(0, gamma);
    }
    let scores: Vec<T> =
        (0..n).into_par_iter().map(|i| scorer.thread_score(i, gamma).map_err(|e| e.in_thread(i))).collect::<Result<_>>()?;
    let mut s = T::zero();
    for v in scores {
        s += v;
    }
    Ok(s / n as f64)
}

/// Aggregate score and its γ-gradient, one forward-mode pass per coordinate.
pub fn value_and_grad(scorer: &Scorer<'_>, gamma: &[f64]) -> Result<(f64, Vec<f64>)> {
    if gamma.is_empty() {
        return Ok((aggregate(scorer, gamma)?, Vec::new()));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; gamma.len()];
    for k in 0..gamma.len() {
        let g: Vec<Dual<f64>> =
            gamma.iter().enumerate().map(|(j, &v)| Dual::new(v, if j == k { 1.0 } else { 0.0 })).collect();
        let a = aggregate(scorer, &g)?;
        value = a.re;
        grad[k] = a.eps;
    }
    Ok((value, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub restarts: usize,
    pub steps: usize,
    /// Step size as a fraction of the design-box diagonal.
    pub step_size: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig { restarts: 8, steps: 100, step_size: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub gammas: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    /// Set when the restart hit a criterion error and was abandoned.
    pub failed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdResult {
    pub gamma: Vec<f64>,
    pub score: f64,
    pub traces: Vec<RestartTrace>,
    pub seconds: f64,
}

/// Any objective the ascent can climb.
pub trait Objective: Sync {
    fn value(&self, gamma: &[f64]) -> Result<f64>;
    fn value_and_grad(&self, gamma: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn differentiable(&self) -> bool;
}

impl Objective for Scorer<'_> {
    fn value(&self, gamma: &[f64]) -> Result<f64> {
        aggregate(self, gamma)
    }
    fn value_and_grad(&self, gamma: &[f64]) -> Result<(f64, Vec<f64>)> {
        value_and_grad(self, gamma)
    }
    fn differentiable(&self) -> bool {
        self.kind().differentiable()
    }
}

fn climb<O: Objective + ?Sized>(obj: &O, space: &DesignSpace, start: Vec<f64>, cfg: &AscentConfig) -> RestartTrace {
    let eta = cfg.step_size * space.diagonal();
    let mut trace = RestartTrace { gammas: Vec::new(), scores: Vec::new(), failed: None };
    let mut gamma = start;
    let steps = if obj.differentiable() { cfg.steps } else { 0 };
    for step in 0..=steps {
        let res = if step < steps { obj.value_and_grad(&gamma).map(|(v, g)| (v, Some(g))) } else { obj.value(&gamma).map(|v| (v, None)) };
        let (v, g) = match res {
            Ok(r) => r,
            Err(e) => {
                trace.failed = Some(e.to_string());
                break;
            }
        };
        if !v.is_finite() {
            trace.failed = Some(format!("non-finite score at step {step}"));
            break;
        }
        trace.gammas.push(gamma.clone());
        trace.scores.push(v);
        if let Some(g) = g {
            if g.iter().any(|x| !x.is_finite()) {
                trace.failed = Some(format!("non-finite gradient at step {step}"));
                break;
            }
            for (x, d) in gamma.iter_mut().zip(&g) {
                *x += eta * d;
            }
            space.project(&mut gamma);
        }
    }
    trace
}

/// Multi-restart projected gradient ascent. Each restart keeps its best
/// iterate, so it never returns anything worse than its own start; the
/// overall winner is the best restart. Non-differentiable objectives get
/// `p = 0`, i.e. best of the random starts.
pub fn optimize_design<O: Objective + ?Sized>(
    obj: &O,
    space: &DesignSpace,
    cfg: &AscentConfig,
    seed: u64,
) -> Result<EdResult> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is required".into()));
    }
    let t0 = Instant::now();
    let starts: Vec<Vec<f64>> = (0..cfg.restarts).map(|k| space.sample(seed::derive(seed, k as u64))).collect();
    let traces: Vec<RestartTrace> = starts.into_par_iter().map(|s| climb(obj, space, s, cfg)).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for t in &traces {
        for (g, &s) in t.gammas.iter().zip(&t.scores) {
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, g.clone()));
            }
        }
    }
    let (score, gamma) = best.ok_or(Error::NoFeasibleDesign)?;
    Ok(EdResult { gamma, score, traces, seconds: t0.elapsed().as_secs_f64() })
}

/// Uniform draw from the design box.
pub fn baseline_random(space: &DesignSpace, seed: u64) -> Vec<f64> {
    space.sample(seed)
}

/// Even spacing with no optimization: an equally spaced set over a 1-D
/// interval, a near-square lattice for 2-D free placement, and the full
/// interval for the regular grid.
pub fn baseline_grid(space: &DesignSpace) -> Vec<f64> {
    let spaced = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        }
    };
    match space {
        DesignSpace::Free { points, lo, hi } if lo.len() == 1 => spaced(*points, lo[0], hi[0]),
        DesignSpace::Free { points, lo, hi } if lo.len() == 2 => {
            let cols = (*points as f64).sqrt().ceil() as usize;
            let rows = (*points + cols - 1) / cols;
            let xs = spaced(cols, lo[0], hi[0]);
            let ys = spaced(rows, lo[1], hi[1]);
            let mut out = Vec::with_capacity(points * 2);
            'outer: for y in &ys {
                for x in &xs {
                    if out.len() == points * 2 {
                        break 'outer;
                    }
                    out.push(*x);
                    out.push(*y);
                }
            }
            out
        }
        DesignSpace::Free { points, lo, hi } => {
            // Higher dimensions: points along the box diagonal.
            let t = spaced(*points, 0.0, 1.0);
            t.iter().flat_map(|&s| lo.iter().zip(hi).map(move |(l, h)| l + s * (h - l))).collect()
        }
        DesignSpace::TimeGrid { sensors, lo, hi, .. } => {
            let t = spaced(*sensors, 0.0, 1.0);
            t.iter().flat_map(|&s| lo.iter().zip(hi).map(move |(l, h)| l + s * (h - l))).collect()
        }
        DesignSpace::RegularGrid1d { lo, hi, .. } => vec![*lo, *hi],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Bowl {
        target: Vec<f64>,
    }

    impl Objective for Bowl {
        fn value(&self, g: &[f64]) -> Result<f64> {
            Ok(-g.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        }
        fn value_and_grad(&self, g: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.value(g)?, g.iter().zip(&self.target).map(|(a, b)| -2.0 * (a - b)).collect()))
        }
        fn differentiable(&self) -> bool {
            true
        }
    }

    #[test]
    fn ascent_finds_bowl_optimum() {
        let space = DesignSpace::Free { points: 2, lo: vec![0.0], hi: vec![1.0] };
        let obj = Bowl { target: vec![0.3, 0.8] };
        // step_size·diagonal = 0.1
        let cfg = AscentConfig { restarts: 1, steps: 500, step_size: 0.1 / space.diagonal() };
        let r = optimize_design(&obj, &space, &cfg, 3).unwrap();
        assert!((r.gamma[0] - 0.3).abs() < 1e-3 && (r.gamma[1] - 0.8).abs() < 1e-3);
    }

    #[test]
    fn zero_steps_pick_best_start() {
        let space = DesignSpace::Free { points: 1, lo: vec![0.0], hi: vec![10.0] };
        let obj = Bowl { target: vec![5.0] };
        let cfg = AscentConfig { restarts: 6, steps: 0, step_size: 0.05 };
        let r = optimize_design(&obj, &space, &cfg, 1).unwrap();
        let best = r.traces.iter().map(|t| t.scores[0]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.score, best);
        assert!(r.traces.iter().all(|t| t.gammas.len() == 1));
    }

    #[test]
    fn grid_baselines() {
        let s = DesignSpace::TimeGrid { sensors: 3, lo: vec![0.0], hi: vec![6.0], times: vec![0.0] };
        assert_eq!(baseline_grid(&s), vec![0.0, 3.0, 6.0]);
        let e = DesignSpace::Free { points: 30, lo: vec![0.0, 0.0], hi: vec![5.0, 5.0] };
        let g = baseline_grid(&e);
        assert_eq!(g.len(), 60);
        let mut xs: Vec<f64> = g.chunks(2).map(|p| p[0]).collect();
        let mut ys: Vec<f64> = g.chunks(2).map(|p| p[1]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        assert_eq!((xs.len(), ys.len()), (6, 5));
        assert!(e.contains(&g));
    }

    #[test]
    fn random_baseline_is_reproducible() {
        let s = DesignSpace::Free { points: 3, lo: vec![0.0], hi: vec![20.0] };
        assert_eq!(baseline_random(&s, 5), baseline_random(&s, 5));
        assert!(s.contains(&baseline_random(&s, 5)));
    }
}
