//! From-scratch numerical core: recurrent cells (Elman RNN, GRU, LSTM),
//! bidirectional composition, sigmoid head with dropout, binary
//! cross-entropy, backpropagation through time and Adam. All arithmetic is
//! 64-bit.

pub mod adam;
pub mod cell;
pub mod checkpoint;
pub mod classifier;
pub mod linalg;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cell::{bce_loss, gru_step, lstm_step, rnn_step, CellKind, CellParams};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use classifier::{
    backward, dropout_mask, forward, run_direction, BackwardResult, ClassifierParams,
};
