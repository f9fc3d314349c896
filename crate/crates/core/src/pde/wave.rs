//! 1D wave equation `u_tt = c(x)² u_xx` on `[0, 6] × [0, 6]` with a
//! two-segment speed, solved by the explicit leapfrog scheme.

use crate::error::{Error, Result};

pub const LENGTH: f64 = 6.0;
pub const T_END: f64 = 6.0;
pub const INTERFACE: f64 = 4.0;

/// Initial displacement; the initial velocity is zero.
pub fn initial_profile(x: f64) -> f64 {
    (-4.0 * (x - 2.0).powi(2)).exp()
}

/// Speed for `0 < x < 6`.
pub fn speed(v1: f64, v2: f64, x: f64) -> f64 {
    if x < INTERFACE {
        v1
    } else {
        v2
    }
}

#[derive(Clone, Debug)]
pub struct WaveOracle {
    pub v1: f64,
    pub v2: f64,
    dx: f64,
    /// Time between stored rows.
    dt_store: f64,
    nx: usize,
    nt: usize,
    /// `grid[n * nx + i]` ≈ u(i·dx, n·dt_store).
    grid: Vec<f64>,
    energy: Vec<f64>,
}

impl WaveOracle {
    /// Default resolution: `dx = 0.005`, `dt = 0.0025`, every second step stored.
    pub fn new(v1: f64, v2: f64) -> Result<Self> {
        Self::with_resolution(v1, v2, 0.005, 0.0025, 2)
    }

    pub fn with_resolution(v1: f64, v2: f64, dx: f64, dt: f64, store_every: usize) -> Result<Self> {
        if !(v1 > 0.0 && v2 > 0.0) {
            return Err(Error::InvalidParameter(format!("wave speeds must be positive, got {v1}, {v2}")));
        }
        if v1.max(v2) * dt / dx > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("leapfrog step violates the CFL bound".into()));
        }
        let nx = (LENGTH / dx).round() as usize + 1;
        let steps = (T_END / dt).round() as usize;
        let nt = steps / store_every + 1;
        let c2: Vec<f64> = (0..nx)
            .map(|i| {
                let x = i as f64 * dx;
                if i == 0 || i == nx - 1 {
                    0.0
                } else {
                    let c = speed(v1, v2, x);
                    (c * dt / dx).powi(2)
                }
            })
            .collect();
        let inv_c2: Vec<f64> = (0..nx)
            .map(|i| {
                let c = speed(v1, v2, i as f64 * dx);
                1.0 / (c * c)
            })
            .collect();

        let mut prev: Vec<f64> = (0..nx).map(|i| initial_profile(i as f64 * dx)).collect();
        prev[0] = 0.0;
        prev[nx - 1] = 0.0;
        // Second-order start for zero initial velocity.
        let mut cur = vec![0.0; nx];
        for i in 1..nx - 1 {
            cur[i] = prev[i] + 0.5 * c2[i] * (prev[i + 1] - 2.0 * prev[i] + prev[i - 1]);
        }
        let mut grid = Vec::with_capacity(nt * nx);
        grid.extend_from_slice(&prev);
        let mut energy = Vec::with_capacity(steps);
        let mut next = vec![0.0; nx];
        for n in 1..=steps {
            if n % store_every == 0 {
                grid.extend_from_slice(&cur);
            }
            if n == steps {
                break;
            }
            for i in 1..nx - 1 {
                next[i] = 2.0 * cur[i] - prev[i] + c2[i] * (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]);
            }
            // Energy conserved by the scheme, staggered between levels n and n+1.
            let mut e = 0.0;
            for i in 1..nx - 1 {
                e += (next[i] - cur[i]).powi(2) / (dt * dt) * inv_c2[i];
            }
            for i in 0..nx - 1 {
                e += (next[i + 1] - next[i]) * (cur[i + 1] - cur[i]) / (dx * dx);
            }
            energy.push(0.5 * e * dx);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(WaveOracle { v1, v2, dx, dt_store: dt * store_every as f64, nx, nt, grid, energy })
    }

    /// Bilinear interpolation of the stored solution.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        let eps = 1e-12;
        if !(x >= -eps && x <= LENGTH + eps && t >= -eps && t <= T_END + eps) {
            return Err(Error::Domain(format!("wave query ({x}, {t}) outside [0,6]²")));
        }
        let fx = (x / self.dx).clamp(0.0, (self.nx - 1) as f64);
        let ft = (t / self.dt_store).clamp(0.0, (self.nt - 1) as f64);
        let i = (fx.floor() as usize).min(self.nx - 2);
        let n = (ft.floor() as usize).min(self.nt - 2);
        let (a, b) = (fx - i as f64, ft - n as f64);
        let g = |n: usize, i: usize| self.grid[n * self.nx + i];
        Ok((1.0 - b) * ((1.0 - a) * g(n, i) + a * g(n, i + 1)) + b * ((1.0 - a) * g(n + 1, i) + a * g(n + 1, i + 1)))
    }

    /// Discrete energy after each step.
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }
}

/// Point evaluation building a fresh oracle; prefer [`WaveOracle`] for many queries.
pub fn wave_oracle(v1: f64, v2: f64, x: f64, t: f64) -> Result<f64> {
    WaveOracle::new(v1, v2)?.eval(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_time_reproduces_profile() {
        let o = WaveOracle::new(1.3, 0.7).unwrap();
        for &x in &[0.5, 1.9, 2.0, 2.37, 3.1] {
            assert!((o.eval(x, 0.0).unwrap() - initial_profile(x)).abs() < 1e-4);
        }
        assert_eq!(o.eval(2.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn walls_stay_at_zero() {
        let o = WaveOracle::new(2.0, 0.5).unwrap();
        for k in 0..=12 {
            let t = 0.5 * k as f64;
            assert_eq!(o.eval(0.0, t).unwrap(), 0.0);
            assert_eq!(o.eval(6.0, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn homogeneous_case_matches_dalembert() {
        let o = WaveOracle::new(1.0, 1.0).unwrap();
        let exact = 0.5 * (initial_profile(2.0) + initial_profile(4.0));
        assert!((o.eval(3.0, 1.0).unwrap() - exact).abs() < 1e-3);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let o = WaveOracle::with_resolution(1.0, 1.0, 0.05, 0.025, 1).unwrap();
        assert!(matches!(o.eval(6.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(o.eval(1.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn cfl_violation_is_rejected() {
        assert!(WaveOracle::with_resolution(2.0, 2.0, 0.01, 0.01, 1).is_err());
    }
}
