//! Prize models, feature extraction, the perturbed imitation loss and the
//! training loop.

pub mod features;
pub mod loss;
pub mod model;
pub mod train;

pub use features::{extract_features, raw_features, FeatureConfig, FeatureSet};
pub use loss::{
    build_prop1_prizes, loss_natural, perturbed_loss_and_grad, prize_scale, prop1_constant, CoProblem, Inner, LossError,
    PerturbationConfig, PerturbedLoss,
};
pub use model::{backprop, predict_prizes, ModelError, ModelKind, PrizeModel};
pub use train::{train, EpochLog, Optimizer, TrainConfig, TrainError, TrainingLog};
