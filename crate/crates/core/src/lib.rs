//! Novel node category detection in attributed graphs under subpopulation
//! shift.
//!
//! The crate trains a GCN-based detector with a recall-constrained
//! primal-dual objective plus a selective link-prediction auxiliary loss
//! ([`reco_slip`]), provides positive-unlabeled baselines ([`baselines`]),
//! a synthetic shifted-graph generator ([`synth`]) and the evaluation
//! harness that compares them ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what training and reporting use.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod matrix;
pub mod objectives;
pub mod reco_slip;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = matrix::Matrix<f64>;
pub type CsrMatrix = matrix::CsrMatrix<f64>;
pub type AttributedGraph = graph::AttributedGraph<f64>;
pub type NormalizedAdjacency = graph::NormalizedAdjacency<f64>;
pub type Tape<'a> = autodiff::Tape<'a, f64>;
pub type Classifier = autodiff::Classifier<f64>;
pub type ClassifierParams = autodiff::ClassifierParams<f64>;
pub type GraphInput = autodiff::GraphInput<f64>;
pub type AdamState = autodiff::AdamState<f64>;
pub type CandidateModel = reco_slip::CandidateModel<f64>;
