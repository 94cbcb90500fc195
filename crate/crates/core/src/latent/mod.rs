//! Rank-reduction autoencoders, their baselines and the training loops.

pub mod checkpoint;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod network;
pub mod optim;
pub mod train;

pub use checkpoint::Checkpoint;
pub use layers::{Activation, LayerSpec};
pub use linalg::{truncate, LatentBasis, Truncation};
pub use loss::{argmax_rows, one_hot, relative_l2, RelativeL2};
pub use model::{
    Architecture, Bottleneck, EncDecArchitecture, EncDecModel, ExtendedModel, ExtendedWeights,
    LossWeights, Outputs, Prediction, RraeModel, TrainedModel,
};
pub use network::{Network, NetworkSpec};
pub use optim::{Optimizer, Schedule};
pub use train::{
    stratified_split, train_classical_ae, train_extended, train_rrae, train_supervised_encdec,
    History, Samples, TrainConfig,
};
