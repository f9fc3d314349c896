//! PDE problems, their parameter spaces and ground-truth oracles.

mod eikonal;
mod oscillator;
mod wave;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::network::{forward, init_params, Activation, JetSpec, MlpArchitecture, OutputTransform};
use crate::seed;

pub use eikonal::{octile_distance, EikonalOracle};
pub use oscillator::oscillator_solution;
pub use wave::{initial_profile as wave_initial_profile, wave_oracle, WaveOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Self {
        DomainBox { lo: lo.to_vec(), hi: hi.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let tol = 1e-9;
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }

    /// Checks every point of a row-major list.
    pub fn check_points(&self, points: &[f64]) -> Result<()> {
        for p in points.chunks(self.dim()) {
            if !self.contains(p) {
                return Err(Error::Domain(format!("{p:?} not in {:?}–{:?}", self.lo, self.hi)));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| rng.gen_range(l..=h)).collect()
    }
}

/// The unknown-parameter space.
#[derive(Clone, Debug, PartialEq)]
pub enum BetaSpace {
    Finite {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// β is the parameter vector of a small network `v(x)`.
    Network {
        arch: MlpArchitecture,
        /// Row-major points where estimated and true functions are compared.
        test_grid: Vec<f64>,
        /// Seed of the fixed starting guess used by inverse solvers.
        guess_seed: u64,
    },
}

impl BetaSpace {
    pub fn dim(&self) -> usize {
        match self {
            BetaSpace::Finite { lo, .. } => lo.len(),
            BetaSpace::Network { arch, .. } => arch.param_count(),
        }
    }

    /// Prior draw: uniform over the box, or a freshly initialized network.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        match self {
            BetaSpace::Finite { lo, hi } => {
                let mut rng = seed::rng(seed);
                lo.iter().zip(hi).map(|(&l, &h)| rng.gen_range(l..=h)).collect()
            }
            BetaSpace::Network { arch, .. } => init_params(arch, seed).values,
        }
    }

    /// Starting point of inverse solves.
    pub fn initial_guess(&self) -> Vec<f64> {
        match self {
            BetaSpace::Finite { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            BetaSpace::Network { arch, guess_seed, .. } => init_params(arch, *guess_seed).values,
        }
    }

    pub fn contains(&self, beta: &[f64]) -> bool {
        match self {
            BetaSpace::Finite { lo, hi } => {
                beta.len() == lo.len() && beta.iter().zip(lo.iter().zip(hi)).all(|(&b, (&l, &h))| b >= l && b <= h)
            }
            BetaSpace::Network { arch, .. } => beta.len() == arch.param_count() && beta.iter().all(|b| b.is_finite()),
        }
    }

    /// Clamps finite parameters to their bounds.
    pub fn project<T: Real>(&self, beta: &mut [T]) {
        if let BetaSpace::Finite { lo, hi } = self {
            for ((b, &l), &h) in beta.iter_mut().zip(lo).zip(hi) {
                if b.value() < l {
                    *b = T::cst(l);
                } else if b.value() > h {
                    *b = T::cst(h);
                }
            }
        }
    }

    /// Estimation error: squared distance, or mean squared difference of
    /// the represented functions over the test grid.
    pub fn error<T: Real>(&self, est: &[T], truth: &[f64]) -> T {
        match self {
            BetaSpace::Finite { .. } => {
                let mut s = T::zero();
                for (&e, &t) in est.iter().zip(truth) {
                    s += (e - t).square();
                }
                s
            }
            BetaSpace::Network { arch, test_grid, .. } => {
                let d = arch.input_dim;
                let tr: Vec<T> = truth.iter().map(|&v| T::cst(v)).collect();
                let mut s = T::zero();
                let n = test_grid.len() / d;
                for p in test_grid.chunks(d) {
                    let x: Vec<T> = p.iter().map(|&v| T::cst(v)).collect();
                    let a = forward(arch, est, &x)[0];
                    let b = forward(arch, &tr, &x)[0];
                    s += (a - b).square();
                }
                s / n as f64
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Oscillator,
    Wave,
    Eikonal,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Oscillator => "oscillator",
            ProblemKind::Wave => "wave",
            ProblemKind::Eikonal => "eikonal",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oscillator" => Ok(ProblemKind::Oscillator),
            "wave" => Ok(ProblemKind::Wave),
            "eikonal" => Ok(ProblemKind::Eikonal),
            _ => Err(Error::Config { keys: vec![format!("problem = {s:?}")] }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// `t = 0`: displacement and velocity conditions.
    Initial,
    Left,
    Right,
    /// The travel-time source point.
    Source,
}

/// Interior and boundary collocation points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Collocation {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
    pub kinds: Vec<BoundaryKind>,
}

impl Collocation {
    pub fn n_interior(&self, dim: usize) -> usize {
        self.interior.len() / dim
    }
    pub fn n_boundary(&self) -> usize {
        self.kinds.len()
    }
}

/// A PDE with its unknown parameter, default network and ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub kind: ProblemKind,
    pub domain: DomainBox,
    pub beta_space: BetaSpace,
    /// Solution network.
    pub net: MlpArchitecture,
    /// Oscillator mass and initial state.
    pub mass: f64,
    pub x0: f64,
    pub v0: f64,
    /// Travel-time source.
    pub source: [f64; 2],
    /// Travel-time oracle grid step.
    pub oracle_step: f64,
}

impl Problem {
    pub fn new(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Oscillator => Self::oscillator(),
            ProblemKind::Wave => Self::wave(),
            ProblemKind::Eikonal => Self::eikonal(),
        }
    }

    /// `M x'' + μ x' + k x = 0` on `t ∈ [0, 20]`, `x(0) = 1`, `x'(0) = 0`, β = (μ, k) ∈ [0, 4]².
    pub fn oscillator() -> Self {
        let domain = DomainBox::new(&[0.0], &[20.0]);
        Problem {
            kind: ProblemKind::Oscillator,
            net: MlpArchitecture::new(1, 1, 6, 8, Activation::Tanh).with_input_box(&domain.lo, &domain.hi),
            domain,
            beta_space: BetaSpace::Finite { lo: vec![0.0, 0.0], hi: vec![4.0, 4.0] },
            mass: 1.0,
            x0: 1.0,
            v0: 0.0,
            source: [0.0, 0.0],
            oracle_step: 0.0,
        }
    }

    /// `u_tt = c(x)² u_xx` on `[0, 6]²` with β = (v₁, v₂) ∈ [0.5, 2]².
    pub fn wave() -> Self {
        let domain = DomainBox::new(&[0.0, 0.0], &[wave::LENGTH, wave::T_END]);
        Problem {
            kind: ProblemKind::Wave,
            net: MlpArchitecture::new(2, 1, 3, 16, Activation::Sin).with_input_box(&domain.lo, &domain.hi),
            domain,
            beta_space: BetaSpace::Finite { lo: vec![0.5, 0.5], hi: vec![2.0, 2.0] },
            mass: 0.0,
            x0: 0.0,
            v0: 0.0,
            source: [0.0, 0.0],
            oracle_step: 0.0,
        }
    }

    /// `v(x)²|∇T|² = 1` on `[0, 5]²`, `T(0, 0) = 0`, β the parameters of `v`.
    pub fn eikonal() -> Self {
        let domain = DomainBox::new(&[0.0, 0.0], &[eikonal::SIDE, eikonal::SIDE]);
        let source = [0.0, 0.0];
        let beta_arch = MlpArchitecture::new(2, 1, 1, 16, Activation::Sin)
            .with_transform(OutputTransform::AbsOffset { offset: 0.2 })
            .with_input_box(&domain.lo, &domain.hi);
        let mut test_grid = Vec::with_capacity(2 * 121);
        for j in 0..11 {
            for i in 0..11 {
                test_grid.push(0.5 * i as f64);
                test_grid.push(0.5 * j as f64);
            }
        }
        Problem {
            kind: ProblemKind::Eikonal,
            net: MlpArchitecture::new(2, 1, 6, 8, Activation::Tanh)
                .with_transform(OutputTransform::EikonalTime { anchor: source.to_vec() })
                .with_input_box(&domain.lo, &domain.hi),
            domain,
            beta_space: BetaSpace::Network { arch: beta_arch, test_grid, guess_seed: 0x5eed_0001 },
            mass: 0.0,
            x0: 0.0,
            v0: 0.0,
            source,
            oracle_step: 0.025,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.domain.dim()
    }

    /// Derivatives needed by the interior residual.
    pub fn interior_spec(&self) -> JetSpec {
        match self.kind {
            ProblemKind::Oscillator => JetSpec::second(&[0]),
            ProblemKind::Wave => JetSpec::second(&[0, 1]),
            ProblemKind::Eikonal => JetSpec::first(&[0, 1]),
        }
    }

    /// Derivatives needed by the boundary residuals.
    pub fn boundary_spec(&self) -> JetSpec {
        match self.kind {
            ProblemKind::Oscillator => JetSpec::first(&[0]),
            ProblemKind::Wave => JetSpec::first(&[1]),
            ProblemKind::Eikonal => JetSpec::value(),
        }
    }

    /// Interior residual `𝒟[u, β](x) − f(x)` from the local jets of `u`.
    pub fn residual<S: Real>(&self, beta: &[S], x: &[f64], u: S, d1: &[S], d2: &[S]) -> S {
        match self.kind {
            ProblemKind::Oscillator => d2[0] * self.mass + beta[0] * d1[0] + beta[1] * u,
            ProblemKind::Wave => {
                let c = if x[0] < wave::INTERFACE { beta[0] } else { beta[1] };
                d2[1] - c * c * d2[0]
            }
            ProblemKind::Eikonal => {
                let v = self.speed(beta, x);
                v * v * (d1[0] * d1[0] + d1[1] * d1[1]) - 1.0
            }
        }
    }

    /// Speed field of the travel-time problem at `x`.
    pub fn speed<S: Real>(&self, beta: &[S], x: &[f64]) -> S {
        match &self.beta_space {
            BetaSpace::Network { arch, .. } => {
                let xs: Vec<S> = x.iter().map(|&v| S::cst(v)).collect();
                forward(arch, beta, &xs)[0]
            }
            BetaSpace::Finite { .. } => S::one(),
        }
    }

    /// Boundary residuals `ℬ[u, β](x) − g(x)` at one boundary point.
    pub fn boundary_residuals<S: Real>(&self, kind: BoundaryKind, x: &[f64], u: S, d1: &[S]) -> Vec<S> {
        match (self.kind, kind) {
            (ProblemKind::Oscillator, _) => vec![u - self.x0, d1[0] - self.v0],
            (ProblemKind::Wave, BoundaryKind::Initial) => vec![u - wave::initial_profile(x[0]), d1[0]],
            (ProblemKind::Wave, _) => vec![u],
            (ProblemKind::Eikonal, _) => vec![u],
        }
    }

    pub fn sample_collocation(&self, n_interior: usize, n_boundary: usize, seed: u64) -> Collocation {
        let mut rng = seed::rng(seed);
        let interior: Vec<f64> = (0..n_interior).flat_map(|_| self.domain.sample(&mut rng)).collect();
        let mut boundary = Vec::new();
        let mut kinds = Vec::with_capacity(n_boundary);
        match self.kind {
            ProblemKind::Oscillator => {
                for _ in 0..n_boundary {
                    boundary.push(0.0);
                    kinds.push(BoundaryKind::Initial);
                }
            }
            ProblemKind::Wave => {
                let n_init = (n_boundary + 1) / 2;
                let n_left = (n_boundary - n_init) / 2;
                for k in 0..n_boundary {
                    let kind = if k < n_init {
                        BoundaryKind::Initial
                    } else if k < n_init + n_left {
                        BoundaryKind::Left
                    } else {
                        BoundaryKind::Right
                    };
                    let p = match kind {
                        BoundaryKind::Initial => [rng.gen_range(0.0..=wave::LENGTH), 0.0],
                        BoundaryKind::Left => [0.0, rng.gen_range(0.0..=wave::T_END)],
                        _ => [wave::LENGTH, rng.gen_range(0.0..=wave::T_END)],
                    };
                    boundary.extend_from_slice(&p);
                    kinds.push(kind);
                }
            }
            ProblemKind::Eikonal => {
                for _ in 0..n_boundary {
                    boundary.extend_from_slice(&self.source);
                    kinds.push(BoundaryKind::Source);
                }
            }
        }
        Collocation { interior, boundary, kinds }
    }

    /// Builds the ground-truth oracle for `beta`.
    pub fn truth(&self, beta: &[f64]) -> Result<Truth> {
        match self.kind {
            ProblemKind::Oscillator => {
                if self.mass <= 0.0 {
                    return Err(Error::InvalidParameter("mass must be positive".into()));
                }
                Ok(Truth::Oscillator { mu: beta[0], k: beta[1], mass: self.mass, x0: self.x0, v0: self.v0 })
            }
            ProblemKind::Wave => Ok(Truth::Wave(WaveOracle::new(beta[0], beta[1])?)),
            ProblemKind::Eikonal => {
                let oracle = EikonalOracle::new(|x, y| self.speed(beta, &[x, y]), self.source, self.oracle_step)?;
                Ok(Truth::Eikonal(oracle))
            }
        }
    }

    /// Decimal places kept in ground-truth observations.
    pub fn observation_decimals(&self) -> Option<i32> {
        match self.kind {
            ProblemKind::Oscillator => None,
            ProblemKind::Wave => Some(6),
            ProblemKind::Eikonal => Some(3),
        }
    }

    /// Oracle values at `points`, rounded as real measurements would be.
    pub fn observe_truth(&self, truth: &Truth, points: &[f64]) -> Result<Vec<f64>> {
        self.domain.check_points(points)?;
        let scale = self.observation_decimals().map(|d| 10f64.powi(d));
        points
            .chunks(self.input_dim())
            .map(|p| {
                let v = truth.eval(p)?;
                Ok(match scale {
                    Some(s) => (v * s).round() / s,
                    None => v,
                })
            })
            .collect()
    }
}

/// Ground-truth solution for one β.
#[derive(Clone, Debug)]
pub enum Truth {
    Oscillator { mu: f64, k: f64, mass: f64, x0: f64, v0: f64 },
    Wave(WaveOracle),
    Eikonal(EikonalOracle),
}

impl Truth {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Truth::Oscillator { mu, k, mass, x0, v0 } => {
                if !(0.0..=20.0 + 1e-9).contains(&x[0]) {
                    return Err(Error::Domain(format!("t = {} outside [0, 20]", x[0])));
                }
                oscillator_solution(*mu, *k, *mass, *x0, *v0, x[0])
            }
            Truth::Wave(o) => o.eval(x[0], x[1]),
            Truth::Eikonal(o) => o.eval(x[0], x[1]),
        }
    }
}

/// Sample the prior of a parameter space.
pub fn sample_beta(space: &BetaSpace, seed: u64) -> Vec<f64> {
    space.sample(seed)
}

/// Cache location for an oracle grid keyed by problem, β and grid step.
pub fn oracle_cache_path(dir: &Path, kind: ProblemKind, beta: &[f64], step: f64) -> PathBuf {
    let mut h = Sha256::new();
    h.update(kind.name().as_bytes());
    for b in beta {
        h.update(b.to_le_bytes());
    }
    h.update(step.to_le_bytes());
    dir.join(format!("{}-{}.grid", kind.name(), &hex::encode(h.finalize())[..16]))
}

/// Travel-time oracle loaded from `dir` if cached, else built and stored.
pub fn cached_eikonal(problem: &Problem, beta: &[f64], dir: &Path) -> Result<EikonalOracle> {
    let path = oracle_cache_path(dir, problem.kind, beta, problem.oracle_step);
    if let Ok(bytes) = std::fs::read(&path) {
        if let Some(o) = EikonalOracle::from_bytes(&bytes) {
            return Ok(o);
        }
    }
    let o = match problem.truth(beta)? {
        Truth::Eikonal(o) => o,
        _ => return Err(Error::InvalidParameter("not a travel-time problem".into())),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(&path, o.to_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;

    #[test]
    fn finite_samples_lie_in_bounds_and_repeat() {
        let p = Problem::oscillator();
        for s in 0..200 {
            let b = p.beta_space.sample(s);
            assert!(p.beta_space.contains(&b));
            assert!(b.iter().all(|&v| (0.0..=4.0).contains(&v)));
        }
        assert_eq!(p.beta_space.sample(5), p.beta_space.sample(5));
    }

    #[test]
    fn uniform_prior_mean() {
        let p = Problem::oscillator();
        let n = 10_000;
        let mean: f64 = (0..n).map(|s| p.beta_space.sample(s)[0]).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.05);
    }

    #[test]
    fn closed_form_zeroes_oscillator_residual() {
        let p = Problem::oscillator();
        for &(mu, k) in &[(0.5, 2.0), (3.0, 1.0), (2.0, 1.0), (0.0, 4.0)] {
            for j in 0..50 {
                let t = 0.4 * j as f64;
                let td = Dual::new(Dual::new(t, 1.0), Dual::new(1.0, 0.0));
                let x = oscillator_solution(mu, k, 1.0, 1.0, 0.0, td).unwrap();
                let r = p.residual(&[mu, k], &[t], x.re.re, &[x.re.eps], &[x.eps.eps]);
                assert!(r.abs() < 1e-8, "μ={mu} k={k} t={t}: {r}");
            }
        }
    }

    #[test]
    fn collocation_is_reproducible_and_inside() {
        for p in [Problem::oscillator(), Problem::wave(), Problem::eikonal()] {
            let c = p.sample_collocation(50, 9, 3);
            assert_eq!(c, p.sample_collocation(50, 9, 3));
            p.domain.check_points(&c.interior).unwrap();
            p.domain.check_points(&c.boundary).unwrap();
            assert_eq!(c.n_boundary(), 9);
        }
    }

    #[test]
    fn network_beta_error_is_zero_at_truth() {
        let p = Problem::eikonal();
        let b = p.beta_space.sample(4);
        assert_eq!(p.beta_space.error(&b, &b), 0.0);
        let c = p.beta_space.sample(5);
        assert!(p.beta_space.error(&c, &b) > 0.0);
        assert!(p.speed(&b, &[1.0, 2.0]) >= 0.2);
    }

    #[test]
    fn truth_observations_are_rounded() {
        let p = Problem::wave();
        let t = p.truth(&[1.2, 0.8]).unwrap();
        let y = p.observe_truth(&t, &[2.3, 0.7, 4.4, 1.9]).unwrap();
        for v in y {
            assert!(((v * 1e6).round() - v * 1e6).abs() < 1e-6);
        }
        assert!(p.observe_truth(&t, &[7.0, 0.0]).is_err());
    }

    #[test]
    fn eikonal_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Problem::eikonal();
        p.oracle_step = 0.1;
        let b = p.beta_space.sample(2);
        let a = cached_eikonal(&p, &b, dir.path()).unwrap();
        let c = cached_eikonal(&p, &b, dir.path()).unwrap();
        assert_eq!(a.eval(3.3, 1.2).unwrap(), c.eval(3.3, 1.2).unwrap());
        assert!(oracle_cache_path(dir.path(), p.kind, &b, 0.1).exists());
    }
}
