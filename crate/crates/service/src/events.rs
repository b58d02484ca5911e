use nof1_core::confseq::CsInterval;
use nof1_core::estimators::Method;
use nof1_core::trial::{Arm, TrialConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Continue,
    EffectDetected,
    CompletedNoEffect,
}

/// Estimate and interval published after a block closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSnapshot {
    pub trial_id: String,
    /// Closed blocks covered by the estimate.
    pub k: usize,
    pub method: Method,
    pub point: f64,
    pub variance_proxy: f64,
    pub interval: CsInterval,
    pub stopped: bool,
    pub recommendation: Recommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        config: TrialConfig,
    },
    BlockAssigned {
        k: usize,
        assignment: Arm,
        propensity: f64,
        forced: bool,
    },
    OutcomeRecorded {
        k: usize,
        t: usize,
        y: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariates: Option<serde_json::Value>,
    },
    BlockClosed {
        k: usize,
    },
    SnapshotEmitted {
        snapshot: EstimateSnapshot,
    },
}

/// One line of a trial's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub trial_id: String,
    /// 1-based, gapless per trial.
    pub seq: u64,
    /// Milliseconds since the Unix epoch. Informational only.
    pub timestamp: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}
