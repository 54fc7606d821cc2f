pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use network::{Network, NodeParams, Phase};
pub use tensor::Tensor4;
pub use train::{
    evaluate_accuracy, extract_semantics, train, EpochRecord, SemanticVector, Snapshot, TrainHyper,
    TrainOutcome, TrainedNetwork,
};
