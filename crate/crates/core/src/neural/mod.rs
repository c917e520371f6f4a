//! Minimal double-precision neural substrate: dense layers, masked LSTMs,
//! the loss primitives used by the trajectory models, Adam, and a
//! finite-difference gradient checker.

mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod param;
mod tensor;

pub use dense::{activate, activation_backward, dense_forward, Activation, Dense};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use loss::{
    bce_with_grad, l2_with_grad, loss_bce, loss_l2_spatial, loss_sce, sce_with_grad, LossWithGrad,
    PROB_CLAMP,
};
pub use lstm::{lstm_sequence, Lstm, LstmCache, LstmMode, LstmState};
pub use param::{adam_step, adam_update, AdamConfig, Parameter, Parameterized};
pub use tensor::{gemm, matmul, Op, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence {0} has no masked-in steps")]
    EmptySequence(usize),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
}
