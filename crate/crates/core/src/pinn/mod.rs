//! Physics-informed training: forward simulation and inverse solving.

mod loss;
mod train;

pub use loss::{loss_and_grad, output_rows, pde_rows, predict, LossGrad, LossParts, ObsRef, ResidualRows};
pub use train::{
    pinn_loss, train_forward, train_inverse, Adam, ObservationSet, TrainConfig, TrainOutcome, InverseOutcome,
};
