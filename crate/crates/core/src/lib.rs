//! Physics-informed experimental design for PDE inverse problems.
//!
//! The crate trains small physics-informed networks as forward simulators,
//! scores candidate observation designs with differentiable criteria, picks
//! designs by projected gradient ascent and evaluates them on inverse
//! problems solved against independent numerical oracles.

pub mod autodiff;
pub mod config;
pub mod criteria;
pub mod design;
pub mod edloop;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metainit;
pub mod network;
pub mod pde;
pub mod pipeline;
pub mod pinn;
pub mod seed;

pub use error::{Error, Result};
