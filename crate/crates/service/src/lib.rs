//! Event-sourced runner for live N-of-1 trials.
//!
//! Every mutation is an event appended to `{data_dir}/{trial_id}.ndjson`
//! before it is applied in memory, so a trial can always be rebuilt from
//! its log with [`LiveTrial::replay`].

pub mod engine;
pub mod error;
pub mod events;
pub mod http;
pub mod service;
pub mod store;

pub use engine::{LiveTrial, OpenBlock, OutcomeAck};
pub use error::{Result, ServiceError};
pub use events::{EstimateSnapshot, EventKind, Recommendation, TrialEvent};
pub use service::{TrialService, TrialStatus};
pub use store::EventStore;
