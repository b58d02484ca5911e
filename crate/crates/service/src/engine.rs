//! Pure trial state machine. Operations validate a request against the
//! current state and return the events it produces; [`LiveTrial::apply`]
//! folds events into the state. The live path and replay share `apply`.

use std::collections::VecDeque;

use nof1_core::confseq::{cs_interval, CsInterval};
use nof1_core::estimators::{aice, ice_t, IceEstimate, Method};
use nof1_core::rng::block_rng;
use nof1_core::trial::{Assignment, BlockRecord, TrialConfig, TrialState};
use nof1_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::events::{EstimateSnapshot, EventKind, Recommendation, TrialEvent};

/// The block currently collecting outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenBlock {
    pub assignment: Assignment,
    pub outcomes: Vec<f64>,
    pub covariates: Vec<Option<serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveTrial {
    pub trial_id: String,
    pub state: TrialState,
    pub open: Option<OpenBlock>,
    pub snapshots: Vec<EstimateSnapshot>,
    /// Seq of the last applied event.
    pub last_seq: u64,
    /// Snapshots computed at the last close but not yet seen as events.
    #[serde(skip_serializing_if = "VecDeque::is_empty", default)]
    pub pending: VecDeque<EstimateSnapshot>,
}

/// Acknowledgment of a recorded outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeAck {
    pub k: usize,
    pub t: usize,
    pub remaining: usize,
    /// Interim IPTW estimate of the time-`t` effect, when defined.
    pub interim_ice: Option<IceEstimate>,
}

fn replay_err(seq: u64, message: impl Into<String>) -> ServiceError {
    ServiceError::Replay { seq, message: message.into() }
}

/// Advice attached to a snapshot at block `k` of `k_max`.
pub fn recommendation(interval: &CsInterval, k: usize, k_max: usize) -> Recommendation {
    if interval.excludes_null {
        Recommendation::EffectDetected
    } else if k >= k_max {
        Recommendation::CompletedNoEffect
    } else {
        Recommendation::Continue
    }
}

/// Snapshots for the state after its last closed block.
pub fn snapshots_for(trial_id: &str, state: &TrialState) -> Vec<EstimateSnapshot> {
    let config = &state.config;
    let k = state.closed_blocks();
    let mut out = Vec::new();
    for method in Method::for_scheme(config.scheme) {
        if method.is_pair() && k % 2 == 1 {
            continue;
        }
        let est = match aice(state, method) {
            Ok(est) => est,
            Err(CoreError::ArmNotYetObserved { .. }) | Err(CoreError::InsufficientData(_)) => continue,
            Err(e) => unreachable!("estimator failed on a valid state: {e}"),
        };
        let interval = cs_interval(&est, config.alpha, config.eta);
        out.push(EstimateSnapshot {
            trial_id: trial_id.to_string(),
            k,
            method,
            point: est.point,
            variance_proxy: est.variance_proxy,
            interval,
            stopped: interval.excludes_null,
            recommendation: recommendation(&interval, k, config.num_blocks),
        });
    }
    out
}

impl LiveTrial {
    /// State right after the `Created` event.
    pub fn created(trial_id: &str, config: TrialConfig) -> Result<Self> {
        Ok(LiveTrial {
            trial_id: trial_id.to_string(),
            state: TrialState::new(config)?,
            open: None,
            snapshots: Vec::new(),
            last_seq: 1,
            pending: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.state.config
    }

    /// Rebuilds a trial from its event log. Every event is checked against
    /// the design, and persisted snapshots must equal recomputed ones.
    pub fn replay(events: &[TrialEvent]) -> Result<Self> {
        let first = events.first().ok_or_else(|| replay_err(1, "log is empty"))?;
        let EventKind::Created { config } = &first.kind else {
            return Err(replay_err(first.seq, "first event must be `created`"));
        };
        if first.seq != 1 {
            return Err(replay_err(first.seq, "log must start at seq 1"));
        }
        let mut trial = LiveTrial::created(&first.trial_id, config.clone())
            .map_err(|e| replay_err(1, e.to_string()))?;
        for event in &events[1..] {
            trial.apply(event)?;
        }
        Ok(trial)
    }

    /// Applies one persisted event.
    pub fn apply(&mut self, event: &TrialEvent) -> Result<()> {
        let seq = event.seq;
        if seq != self.last_seq + 1 {
            return Err(replay_err(seq, format!("expected seq {}", self.last_seq + 1)));
        }
        if event.trial_id != self.trial_id {
            return Err(replay_err(seq, format!("event belongs to trial {}", event.trial_id)));
        }
        if !self.pending.is_empty() && !matches!(event.kind, EventKind::SnapshotEmitted { .. }) {
            return Err(replay_err(seq, "missing snapshot after block close"));
        }
        match &event.kind {
            EventKind::Created { .. } => return Err(replay_err(seq, "duplicate `created` event")),
            EventKind::BlockAssigned { k, assignment, propensity, forced } => {
                if self.open.is_some() {
                    return Err(replay_err(seq, "assignment while a block is open"));
                }
                let a = Assignment { k: *k, arm: *assignment, propensity: *propensity, forced: *forced };
                self.state.check_assignment(&a).map_err(|e| replay_err(seq, e.to_string()))?;
                self.open = Some(OpenBlock { assignment: a, outcomes: Vec::new(), covariates: Vec::new() });
            }
            EventKind::OutcomeRecorded { k, t, y, covariates } => {
                let open = self.open.as_mut().ok_or_else(|| replay_err(seq, "outcome without an open block"))?;
                if *k != open.assignment.k || *t != open.outcomes.len() + 1 || *t > self.state.config.block_len {
                    return Err(replay_err(seq, format!("unexpected outcome ({k}, {t})")));
                }
                if !y.is_finite() {
                    return Err(replay_err(seq, "non-finite outcome"));
                }
                open.outcomes.push(*y);
                open.covariates.push(covariates.clone());
            }
            EventKind::BlockClosed { k } => {
                let open = self.open.take().ok_or_else(|| replay_err(seq, "close without an open block"))?;
                if *k != open.assignment.k || open.outcomes.len() != self.state.config.block_len {
                    return Err(replay_err(seq, format!("block {k} closed early or out of order")));
                }
                let mut block = BlockRecord::new(open.assignment, open.outcomes, self.state.config.summary_fn)
                    .map_err(|e| replay_err(seq, e.to_string()))?;
                if open.covariates.iter().any(Option::is_some) {
                    let payloads =
                        open.covariates.into_iter().map(|c| c.unwrap_or(serde_json::Value::Null)).collect();
                    block = block.with_covariates(payloads);
                }
                self.state.push_block(block).map_err(|e| replay_err(seq, e.to_string()))?;
                self.pending = snapshots_for(&self.trial_id, &self.state).into();
            }
            EventKind::SnapshotEmitted { snapshot } => {
                let expected = self.pending.pop_front().ok_or_else(|| replay_err(seq, "unexpected snapshot"))?;
                if *snapshot != expected {
                    return Err(replay_err(seq, "snapshot differs from the recomputed one"));
                }
                self.snapshots.push(expected);
            }
        }
        self.last_seq = seq;
        Ok(())
    }

    fn event(&self, offset: u64, timestamp: u64, kind: EventKind) -> TrialEvent {
        TrialEvent { trial_id: self.trial_id.clone(), seq: self.last_seq + offset, timestamp, kind }
    }

    /// Snapshot events owed by an interrupted close.
    pub fn pending_events(&self, timestamp: u64) -> Vec<TrialEvent> {
        self.pending
            .iter()
            .enumerate()
            .map(|(i, s)| self.event(i as u64 + 1, timestamp, EventKind::SnapshotEmitted { snapshot: s.clone() }))
            .collect()
    }

    /// The next block's assignment. Repeating the request before any
    /// outcome returns the open assignment and produces no event.
    pub fn assign(&self, timestamp: u64) -> Result<(Assignment, Vec<TrialEvent>)> {
        if let Some(open) = &self.open {
            if open.outcomes.is_empty() {
                return Ok((open.assignment, Vec::new()));
            }
            return Err(ServiceError::Conflict(format!(
                "block {} is open with {} of {} outcomes",
                open.assignment.k,
                open.outcomes.len(),
                self.state.config.block_len
            )));
        }
        if self.state.is_complete() {
            return Err(ServiceError::TrialComplete { k_max: self.state.config.num_blocks });
        }
        let k = self.state.closed_blocks() + 1;
        let mut rng = block_rng(self.state.config.seed, k);
        let a = self.state.assign_next(&mut rng)?;
        let event = self.event(
            1,
            timestamp,
            EventKind::BlockAssigned { k: a.k, assignment: a.arm, propensity: a.propensity, forced: a.forced },
        );
        Ok((a, vec![event]))
    }

    pub fn record(
        &self,
        k: usize,
        t: usize,
        y: f64,
        covariates: Option<serde_json::Value>,
        timestamp: u64,
    ) -> Result<(OutcomeAck, Vec<TrialEvent>)> {
        if !y.is_finite() {
            return Err(ServiceError::validation("y", format!("outcome must be finite, got {y}")));
        }
        let open = match &self.open {
            Some(open) if open.assignment.k == k => open,
            Some(open) => {
                return Err(ServiceError::Sequence(format!("block {} is open, not block {k}", open.assignment.k)))
            }
            None if k >= 1 && k <= self.state.closed_blocks() => {
                return Err(ServiceError::Conflict(format!("block {k} is already closed")))
            }
            None => return Err(ServiceError::Sequence(format!("block {k} has not been assigned"))),
        };
        let t_max = self.state.config.block_len;
        let next = open.outcomes.len() + 1;
        if t == 0 || t > t_max {
            return Err(ServiceError::validation("t", format!("must lie in 1..={t_max}, got {t}")));
        }
        if t < next {
            return Err(ServiceError::Conflict(format!("outcome ({k}, {t}) is already recorded")));
        }
        if t > next {
            return Err(ServiceError::Sequence(format!("expected t = {next}, got {t}")));
        }
        if let Some(bound) = self.state.config.outcome_bound {
            if y.abs() > bound {
                return Err(ServiceError::BoundViolation { value: y, bound });
            }
        }
        let mut outcomes = open.outcomes.clone();
        outcomes.push(y);
        let interim_ice = ice_t(&open.assignment, &outcomes, t, self.state.config.summary_fn).ok();
        let ack = OutcomeAck { k, t, remaining: t_max - t, interim_ice };
        let event = self.event(1, timestamp, EventKind::OutcomeRecorded { k, t, y, covariates });
        Ok((ack, vec![event]))
    }

    /// Events closing block `k`: the close itself and its snapshots.
    pub fn close(&self, k: usize, timestamp: u64) -> Result<(Vec<EstimateSnapshot>, Vec<TrialEvent>)> {
        let open = match &self.open {
            Some(open) if open.assignment.k == k => open,
            Some(open) => {
                return Err(ServiceError::Sequence(format!("block {} is open, not block {k}", open.assignment.k)))
            }
            None if k >= 1 && k <= self.state.closed_blocks() => {
                return Err(ServiceError::Conflict(format!("block {k} is already closed")))
            }
            None => return Err(ServiceError::Sequence(format!("block {k} has not been assigned"))),
        };
        let t_max = self.state.config.block_len;
        if open.outcomes.len() < t_max {
            return Err(ServiceError::IncompleteBlock(format!(
                "block {k} has {} of {t_max} outcomes",
                open.outcomes.len()
            )));
        }
        let mut next = self.clone();
        let close = self.event(1, timestamp, EventKind::BlockClosed { k });
        next.apply(&close)?;
        let snapshots: Vec<EstimateSnapshot> = next.pending.iter().cloned().collect();
        let mut events = vec![close];
        events.extend(next.pending_events(timestamp));
        Ok((snapshots, events))
    }
}
