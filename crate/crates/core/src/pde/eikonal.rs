//! Travel times for `v·|∇T| = 1`, `T(x₀) = 0` on `[0, 5]²` by Dijkstra
//! over an 8-neighbour grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub const SIDE: f64 = 5.0;

#[derive(Clone, Debug)]
pub struct EikonalOracle {
    pub step: f64,
    n: usize,
    times: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl EikonalOracle {
    /// Solves for a speed field `v(x, y)`, source at `source`, grid step `step`.
    pub fn new<F: Fn(f64, f64) -> f64>(speed: F, source: [f64; 2], step: f64) -> Result<Self> {
        let n = (SIDE / step).round() as usize + 1;
        let mut slowness = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let v = speed(i as f64 * step, j as f64 * step);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("speed must be positive, got {v}")));
                }
                slowness[j * n + i] = 1.0 / v;
            }
        }
        let si = (source[0] / step).round() as usize;
        let sj = (source[1] / step).round() as usize;
        if si >= n || sj >= n {
            return Err(Error::Domain(format!("source {source:?} outside [0,5]²")));
        }
        let mut times = vec![f64::INFINITY; n * n];
        let mut done = vec![false; n * n];
        let mut heap = BinaryHeap::new();
        let src = sj * n + si;
        times[src] = 0.0;
        heap.push(Entry { cost: 0.0, node: src });
        let diag = step * std::f64::consts::SQRT_2;
        while let Some(Entry { cost, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            let (i, j) = ((node % n) as isize, (node / n) as isize);
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= n as isize || nj >= n as isize {
                        continue;
                    }
                    let m = nj as usize * n + ni as usize;
                    if done[m] {
                        continue;
                    }
                    let len = if di != 0 && dj != 0 { diag } else { step };
                    let c = cost + 0.5 * (slowness[node] + slowness[m]) * len;
                    if c < times[m] {
                        times[m] = c;
                        heap.push(Entry { cost: c, node: m });
                    }
                }
            }
        }
        Ok(EikonalOracle { step, n, times })
    }

    /// Travel time at a grid node.
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.times[j * self.n + i]
    }

    pub fn nodes_per_side(&self) -> usize {
        self.n
    }

    /// Bilinear interpolation.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let eps = 1e-12;
        if !(x >= -eps && x <= SIDE + eps && y >= -eps && y <= SIDE + eps) {
            return Err(Error::Domain(format!("eikonal query ({x}, {y}) outside [0,5]²")));
        }
        let last = (self.n - 1) as f64;
        let fx = (x / self.step).clamp(0.0, last);
        let fy = (y / self.step).clamp(0.0, last);
        let i = (fx.floor() as usize).min(self.n - 2);
        let j = (fy.floor() as usize).min(self.n - 2);
        let (a, b) = (fx - i as f64, fy - j as f64);
        Ok((1.0 - b) * ((1.0 - a) * self.node(i, j) + a * self.node(i + 1, j))
            + b * ((1.0 - a) * self.node(i, j + 1) + a * self.node(i + 1, j + 1)))
    }

    /// `step`, side count, then the node times, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.times.len());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        for t in &self.times {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 16 {
            return None;
        }
        let step = f64::from_le_bytes(bytes[..8].try_into().ok()?);
        let n = u64::from_le_bytes(bytes[8..16].try_into().ok()?) as usize;
        if bytes.len() != 16 + 8 * n * n || n < 2 {
            return None;
        }
        let times = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Some(EikonalOracle { step, n, times })
    }

    /// Travel times at many query points (row-major pairs).
    pub fn eval_many(&self, points: &[f64]) -> Result<Vec<f64>> {
        points.chunks_exact(2).map(|p| self.eval(p[0], p[1])).collect()
    }
}

/// 8-neighbour grid metric from the origin: `h·(max + (√2−1)·min)` in steps.
pub fn octile_distance(dx: f64, dy: f64) -> f64 {
    let (a, b) = (dx.abs().max(dy.abs()), dx.abs().min(dy.abs()));
    a + (std::f64::consts::SQRT_2 - 1.0) * b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_time_is_zero() {
        let o = EikonalOracle::new(|x, y| 1.0 + 0.1 * x * y, [0.0, 0.0], 0.05).unwrap();
        assert_eq!(o.eval(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_speed_gives_octile_metric() {
        let h = 0.05;
        let o = EikonalOracle::new(|_, _| 1.0, [0.0, 0.0], h).unwrap();
        for &(i, j) in &[(10, 0), (7, 7), (100, 37), (3, 99)] {
            let expect = octile_distance(i as f64 * h, j as f64 * h);
            assert!((o.node(i, j) - expect).abs() < 1e-12 * (1.0 + expect));
            let euclid = ((i * i + j * j) as f64).sqrt() * h;
            assert!((o.node(i, j) - euclid).abs() <= 0.09 * euclid);
        }
    }

    #[test]
    fn doubled_speed_halves_times() {
        let a = EikonalOracle::new(|x, _| 1.0 + 0.2 * x, [0.0, 0.0], 0.05).unwrap();
        let b = EikonalOracle::new(|x, _| 2.0 * (1.0 + 0.2 * x), [0.0, 0.0], 0.05).unwrap();
        for &(x, y) in &[(1.0, 2.0), (4.3, 0.7), (5.0, 5.0)] {
            assert!((a.eval(x, y).unwrap() - 2.0 * b.eval(x, y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_changes_little() {
        let v = |x: f64, y: f64| 1.0 + 0.3 * (x * 0.8).sin() * (y * 0.5).cos();
        let coarse = EikonalOracle::new(v, [0.0, 0.0], 0.05).unwrap();
        let fine = EikonalOracle::new(v, [0.0, 0.0], 0.025).unwrap();
        for &(x, y) in &[(1.0, 2.0), (4.3, 0.7), (5.0, 5.0), (2.5, 4.0)] {
            let (c, f) = (coarse.eval(x, y).unwrap(), fine.eval(x, y).unwrap());
            assert!((c - f).abs() < 0.02 * f, "({x},{y}): {c} vs {f}");
        }
    }

    #[test]
    fn bad_speed_is_rejected() {
        assert!(EikonalOracle::new(|_, _| 0.0, [0.0, 0.0], 0.5).is_err());
        let o = EikonalOracle::new(|_, _| 1.0, [0.0, 0.0], 0.5).unwrap();
        assert!(matches!(o.eval(5.5, 1.0), Err(Error::Domain(_))));
    }
}
