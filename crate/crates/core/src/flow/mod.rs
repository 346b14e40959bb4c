//! Time-conditioned MLP velocity field trained by conditional flow matching.

mod adam;
mod checkpoint;
mod loss;
mod mlp;
mod train;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, FSCK_MAGIC, FSCK_VERSION};
pub use loss::{cfm_loss_and_grad, huber, huber_grad, LossMode, PairBatch};
pub use mlp::{interpolate, Activation, FlowModelParams, Layer, MlpArchitecture};
pub use train::{train, Checkpoint, LogEntry, TrainOutput, TrainingConfig};
