//! Trainable building blocks shared by the tagger and the parser.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod train;
pub mod vocab;

pub use checkpoint::Checkpoint;
pub use config::{EncoderConfig, TrainConfig};
pub use graph::{Graph, Var};
pub use layers::Noise;
pub use params::{Gradients, ParamId, ParamStore};
pub use train::{train, Control, EarlyStopping, Monitor, Objective, StepInfo};
pub use vocab::{IndexedSentence, UposSource, Vocab};
