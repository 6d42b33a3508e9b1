//! Toy object-detection surrogate: synthetic scenes, a small decoder
//! model with learnable content queries, and a training loop that can
//! attach the contrastive losses to chosen query states.

pub mod model;
pub mod scene;
pub mod train;

pub use model::{
    base_loss, BaseLoss, DecoderLayer, ForwardPass, LayerGrads, LayerPrediction, ParamGrads,
    PredictionAdjoint, SurrogateModel,
};
pub use scene::{Scene, SceneGenerator, SceneObject, SceneParams};
pub use train::{
    run_training, EpochRecord, ModelDims, OptimizerKind, TrainConfig, TrainOutcome,
};
