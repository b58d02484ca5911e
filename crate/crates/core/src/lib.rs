//! Design-based anytime-valid inference for N-of-1 crossover trials.
//!
//! Treatment is randomized block by block; [`estimators`] turn each block
//! into an inverse-propensity-weighted effect estimate, and [`confseq`]
//! wraps the running average in a confidence sequence that stays valid
//! under continuous monitoring.

pub mod baselines;
pub mod confseq;
pub mod error;
pub mod estimators;
pub mod rng;
pub mod simulation;
pub mod trial;

pub use confseq::{cs_half_width, cs_interval, stopping_check, tune_eta, CsInterval};
pub use error::{Error, Result};
pub use estimators::{aice, AiceEstimate, IceEstimate, Method};
pub use trial::{
    Arm, Assignment, BlockRecord, Propensity, Scheme, SummaryFn, TrialConfig, TrialState,
};
