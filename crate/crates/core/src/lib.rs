//! Layered mixture models for hospital episode records.
//!
//! An episode is a set of scalars (age, sex, death) and six event streams
//! (bed moves, admission and discharge diagnoses, labs, neuro observations and
//! medications). A top-level categorical state conditions every part; each
//! stream is in turn a mixture over its own sub-states.

pub mod distributions;
pub mod analysis;
pub mod error;
pub mod io;
pub mod math;
pub mod model;
pub mod rng;
pub mod selection;
pub mod submodels;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    bic, bic_value, param_count, DataRates, Episode, EpisodeModel, FitConfig, FitReport,
    Hyperparams, LatentTrace, MixingMatrix, ParamConvention, Responsibilities, ScalarMask, Stream,
    StreamMap, TopScalars, VocabSizes,
};
