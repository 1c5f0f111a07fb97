//! Dense feed-forward approximator with explicit backpropagation, the Adam
//! optimizer, soft target tracking and a binary checkpoint container.

mod adam;
mod checkpoint;
pub(crate) mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_MAGIC};
pub use mlp::{sigmoid, soft_update, Activation, Gradients, Layer, Mlp, MlpSpec, Trace};
