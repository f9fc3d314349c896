//! Small automatic-differentiation engine.
//!
//! Reverse mode ([`Tape`], [`Var`]) handles parameter-space derivatives and
//! forward mode ([`Dual`]) handles input-space derivatives. Both implement
//! [`Real`], so numerical code is written once and instantiated per need.

mod dual;
mod ops;
mod real;
mod tape;

pub use dual::Dual;
pub use ops::{grad, hessian, input_derivative, jacobian, second_derivative, DifferentiableFunction, FnOf, GenericEval};
pub use real::{lift, values, Real};
pub use tape::{Tape, Var};

/// Second-order forward scalar over `T`.
pub type DD<T> = Dual<Dual<T>>;
