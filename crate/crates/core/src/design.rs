//! Design spaces: the box of design parameters γ and the map from γ to
//! observation inputs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::pde::{Problem, ProblemKind};
use crate::pinn::{predict, ObservationSet};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSpace {
    /// `points` inputs anywhere in the box; γ is their concatenation.
    Free { points: usize, lo: Vec<f64>, hi: Vec<f64> },
    /// Sensors at free spatial positions, each read at every listed time.
    /// Points are `(position..., time)`, sensor-major.
    TimeGrid { sensors: usize, lo: Vec<f64>, hi: Vec<f64>, times: Vec<f64> },
    /// `sensors` evenly spaced points from γ₁ to γ₂ in `[lo, hi]`.
    RegularGrid1d { sensors: usize, lo: f64, hi: f64 },
}

impl DesignSpace {
    /// Three observation times, a time grid of three wave sensors, or thirty
    /// free travel-time receivers.
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Oscillator => DesignSpace::Free { points: 3, lo: vec![0.0], hi: vec![20.0] },
            ProblemKind::Wave => DesignSpace::TimeGrid {
                sensors: 3,
                lo: vec![0.0],
                hi: vec![6.0],
                times: (0..=30).map(|k| 0.2 * k as f64).collect(),
            },
            ProblemKind::Eikonal => DesignSpace::Free { points: 30, lo: vec![0.0, 0.0], hi: vec![5.0, 5.0] },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignSpace::Free { points, lo, .. } => points * lo.len(),
            DesignSpace::TimeGrid { sensors, lo, .. } => sensors * lo.len(),
            DesignSpace::RegularGrid1d { .. } => 2,
        }
    }

    /// Dimension of each realized point.
    pub fn point_dim(&self) -> usize {
        match self {
            DesignSpace::Free { lo, .. } => lo.len(),
            DesignSpace::TimeGrid { lo, .. } => lo.len() + 1,
            DesignSpace::RegularGrid1d { .. } => 1,
        }
    }

    pub fn n_points(&self) -> usize {
        match self {
            DesignSpace::Free { points, .. } => *points,
            DesignSpace::TimeGrid { sensors, times, .. } => sensors * times.len(),
            DesignSpace::RegularGrid1d { sensors, .. } => *sensors,
        }
    }

    /// Componentwise bounds of γ.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DesignSpace::Free { points, lo, hi } => (lo.repeat(*points), hi.repeat(*points)),
            DesignSpace::TimeGrid { sensors, lo, hi, .. } => (lo.repeat(*sensors), hi.repeat(*sensors)),
            DesignSpace::RegularGrid1d { lo, hi, .. } => (vec![*lo; 2], vec![*hi; 2]),
        }
    }

    /// Length of the diagonal of the γ box.
    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if lo.is_empty() || lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidParameter("design bounds must be finite with lo <= hi".into()));
        }
        if let DesignSpace::TimeGrid { times, .. } = self {
            if times.is_empty() {
                return Err(Error::InvalidParameter("time grid needs at least one time".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, gamma: &[f64]) -> bool {
        let (lo, hi) = self.bounds();
        gamma.len() == lo.len() && gamma.iter().zip(lo.iter().zip(&hi)).all(|(&g, (&l, &h))| g >= l && g <= h)
    }

    /// Observation inputs, row-major.
    pub fn realize<T: Real>(&self, gamma: &[T]) -> Result<Vec<T>> {
        let vals: Vec<f64> = gamma.iter().map(|g| g.value()).collect();
        if !self.contains(&vals) {
            return Err(Error::InfeasibleDesign(format!("γ = {vals:?} outside the design box")));
        }
        Ok(match self {
            DesignSpace::Free { .. } => gamma.to_vec(),
            DesignSpace::TimeGrid { lo, times, .. } => {
                let d = lo.len();
                let mut out = Vec::with_capacity(self.n_points() * (d + 1));
                for pos in gamma.chunks(d) {
                    for &t in times {
                        out.extend_from_slice(pos);
                        out.push(T::cst(t));
                    }
                }
                out
            }
            DesignSpace::RegularGrid1d { sensors, .. } => {
                let (a, b) = (gamma[0], gamma[1]);
                if *sensors == 1 {
                    return Ok(vec![a]);
                }
                let s = (*sensors - 1) as f64;
                (0..*sensors).map(|j| a + (b - a) * (j as f64 / s)).collect()
            }
        })
    }

    /// Componentwise clamp onto the box.
    pub fn project<T: Real>(&self, gamma: &mut [T]) {
        let (lo, hi) = self.bounds();
        for ((g, &l), &h) in gamma.iter_mut().zip(&lo).zip(&hi) {
            let v = g.value();
            if v < l || v.is_nan() {
                *g = T::cst(l);
            } else if v > h {
                *g = T::cst(h);
            }
        }
    }

    /// Uniform draw from the box.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        let (lo, hi) = self.bounds();
        lo.iter().zip(&hi).map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l }).collect()
    }
}

/// Network outputs at `x` plus Gaussian noise of variance `noise_var`.
pub fn observe(problem: &Problem, theta: &[f64], x: &[f64], noise_var: f64, seed: u64) -> Result<ObservationSet> {
    problem.domain.check_points(x)?;
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be non-negative, got {noise_var}")));
    }
    let mut y = predict(problem, theta, x);
    add_noise(&mut y, noise_var, seed);
    Ok(ObservationSet { x: x.to_vec(), y, noise_var })
}

/// Adds `𝒩(0, var)` draws in place; a zero variance leaves values untouched.
pub fn add_noise(y: &mut [f64], var: f64, seed: u64) {
    if var > 0.0 {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, var.sqrt()).expect("finite standard deviation");
        for v in y {
            *v += normal.sample(&mut rng);
        }
    }
}
