//! Dense `f64` tensors, a reverse-mode tape, parameter management, Adam and
//! the checkpoint container.

mod checkpoint;
mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{read_records, write_records, Checkpoint, Records};
pub use optim::{adam_step, clip_grad_norm, global_norm, AdamConfig, AdamState};
pub use params::{Bound, ParamId, ParameterSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
