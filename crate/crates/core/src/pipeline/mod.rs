//! Data preparation, training, evaluation and persistence.

pub mod checkpoint;
pub mod dataset;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod norm;
pub mod sample;
pub mod split;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, AnyParams, Checkpoint};
pub use dataset::{read_dataset, write_dataset, Dataset, Manifest, Provenance};
pub use gradcheck::{gradcheck, GradcheckReport, GradcheckSetup, Tamper};
pub use loss::{l1_loss, total_loss, LossTerms};
pub use metrics::{r_squared, rel_l2, MetricsReport, SampleMetrics};
pub use norm::{normalize_fit, NormStats};
pub use sample::{synthesize, synthesize_all, PointCloudSample, Resolution, SynthesisConfig};
pub use split::{split_dataset, split_indices};
pub use train::{
    evaluate, train, train_on, OraclePredictor, Precision, Prediction, Predictor, SamplePredictor,
    TrainConfig, TrainLog, TrainOutcome,
};
