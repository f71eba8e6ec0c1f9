//! Minimal multilayer-perceptron stack: dense layers with optional batch-norm,
//! a fixed set of activations and heads, SGD/Adam, and a finite-difference
//! gradient checker.

mod arch;
mod gradcheck;
mod io;
mod network;
mod optim;

pub use arch::{Activation, ArchSpec, OutputHead, ParamVector, DEFAULT_LEAKY_SLOPE};
pub use gradcheck::{grad_check, random_case, random_suite};
pub use io::{read_param_vector, write_param_vector};
pub use network::{
    hconcat, head_loss, loss_and_grad, loss_grad_forward, loss_only, one_hot, softmax_rows,
    Forward, Gradients, Loss, Mode, Network, RunningStats, BN_EPS, BN_MOMENTUM,
};
pub use optim::{OptimizerKind, OptimizerState};
