//! The embedding network, the triplet and dual-triplet hinge losses, the
//! adaptive margin, and a mini-batch SGD trainer with hand-derived gradients.

mod loss;
mod model;
mod train;

pub use loss::{
    adaptive_margin, dual_triplet_grad, dual_triplet_loss, squared_distance, triplet_loss,
    DualTripletGrad,
};
pub use model::{Checkpoint, EmbeddingModel, Gradients, Layer, CHECKPOINT_VERSION};
pub use train::{
    embed_all, objective_and_gradient, train, AnsweredTriplet, Embeddings, TrainConfig,
    TrainReport,
};
