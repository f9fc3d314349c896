//! Damped harmonic oscillator `M x'' + μ x' + k x = 0`.

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Closed-form displacement for `x(0) = x0`, `x'(0) = v0`.
///
/// Branches on the damping ratio: under-damped uses `A e^{-γt} cos(ω_d t + φ)`
/// written as a cosine/sine pair, critical uses `(Bt + C) e^{-ω₀ t}` and
/// over-damped uses the two real exponentials `D e^{-λ₁ t} + F e^{-λ₂ t}`.
pub fn oscillator_solution<T: Real>(mu: f64, k: f64, mass: f64, x0: f64, v0: f64, t: T) -> Result<T> {
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    if mu < 0.0 || k < 0.0 {
        return Err(Error::InvalidParameter(format!("damping and stiffness must be non-negative, got μ={mu}, k={k}")));
    }
    let gamma = mu / (2.0 * mass);
    let w0sq = k / mass;
    let disc = gamma * gamma - w0sq;
    let tol = 1e-12 * (gamma * gamma).max(w0sq).max(1.0);
    let decay = (t * -gamma).exp();
    let b = v0 + gamma * x0;
    let x = if disc < -tol {
        let wd = (-disc).sqrt();
        let ph = t * wd;
        decay * (ph.cos() * x0 + ph.sin() * (b / wd))
    } else if disc > tol {
        let s = disc.sqrt();
        // D e^{-(γ+s)t} + F e^{-(γ-s)t}
        let d = 0.5 * (x0 - b / s);
        let f = 0.5 * (x0 + b / s);
        (t * -(gamma + s)).exp() * d + (t * (s - gamma)).exp() * f
    } else {
        decay * (t * b + x0)
    };
    Ok(x)
}
