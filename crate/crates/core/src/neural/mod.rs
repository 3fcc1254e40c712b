//! Neural text classifiers over pretrained word vectors.

pub mod gradcheck;
mod layers;
pub mod model;
pub mod spec;
pub mod tensor;
pub mod train;

pub use model::{attention_weights, backward, bce_loss, forward, init_params, predict_proba, ForwardCache, Mode};
pub use spec::{Architecture, ModelSpec, Optimizer, TrainConfig};
pub use tensor::{Params, Tensor};
pub use train::{train, EpochRecord, History};
