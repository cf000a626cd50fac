//! Dense `f64` tensors, a reverse-mode tape, parameters, optimizers and the
//! layers the matcher and the generator are built from.

mod array;
mod container;
pub mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;

pub use array::{Tensor, MAX_RANK};
pub use container::{
    load_container, parse_container, read_container, save_container, write_container, CONTAINER_MAGIC,
    CONTAINER_VERSION,
};
pub use gradcheck::{check_gradients, GradcheckConfig, GradcheckReport};
pub use layers::{AdditiveAttention, BoundAttention, BoundGru, Dense, Gru, GruOutput};
pub use optim::{Algorithm, Optimizer, OptimizerConfig};
pub use params::{xavier_limit, ParamId, ParamSet, Parameter};
pub use tape::{pooled_len, Gradients, Tape, Var};
pub(crate) use tape::log_sum_exp;

#[cfg(test)]
mod tests;
