//! Mistake-aware intent recognition for a target-throwing task.
//!
//! The pipeline runs pose track to throw frame ([`detect`]), ball clip to
//! outcome features ([`balltrack`], [`pipeline`]), outcome and congruence
//! networks ([`models`] on top of [`nn`]) and a prior over intents given
//! the outcome of a mistake ([`intent`]). [`eval`] holds the
//! cross-validation protocol and [`synth`] generates labelled data.

pub mod balltrack;
pub mod data;
pub mod detect;
pub mod eval;
pub mod intent;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod seeding;
pub mod signal;
pub mod synth;

pub use data::{
    DataError, DatasetManifest, ModelWeights, OutcomeFeatures, PoseSequence, ReactionFeatures, ThrowRecord, View, Zone,
};
pub use detect::{detect_throw_frame, DetectConfig, Detection};
pub use eval::{EvalConfig, Report, Task};
pub use intent::{IntentPrediction, PriorMatrix};
pub use models::{CongruenceModel, OutcomeModel};
pub use pipeline::PipelineConfig;
