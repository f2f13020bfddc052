//! Reverse-mode differentiation, the detector network and its optimizer.

mod adam;
pub mod checkpoint;
mod nn;
mod tape;

pub mod gradcheck;

pub use adam::AdamState;
pub use nn::{
    BatchNormParams, Classifier, ClassifierConfig, ClassifierParams, ConstantModel, ForwardPass, GraphInput, Mode,
    ScoreModel, BATCH_NORM_EPS,
};
pub use tape::{sigmoid, softplus, BatchStats, Gradients, Tape, Var};
