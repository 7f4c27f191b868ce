pub mod corpus;
pub mod eval;
pub mod genpipe;
pub mod neural;
pub mod service;
pub mod synthetic;
pub mod training;
pub mod words;

pub use corpus::{DatasetManifest, Label, LabeledText, Split};

pub use neural::{ClassifierModel, EncoderConfig, Vocabulary};

pub use eval::{ConfusionMatrix, EvalReport};
pub use training::{GrlSchedule, TrainReport, TrainingConfig};
