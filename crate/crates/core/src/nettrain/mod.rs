//! Feed-forward softmax classifier trained with SGD.

mod checkpoint;
mod model;
mod schedule;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, store_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use model::{
    argmax, cross_entropy, evaluate_accuracy, init_model, input_gradient_norms,
    penultimate_features, predict_batch, predict_labels, softmax, Arch, Model, PredictionBatch,
};
pub use schedule::cosine_lr;
pub use train::{sgd_step, train, Checkpoints, TrainConfig, TrainOutcome};
