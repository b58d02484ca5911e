use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use nof1_core::trial::{Assignment, TrialConfig};
use serde::{Deserialize, Serialize};

use crate::engine::{LiveTrial, OpenBlock, OutcomeAck};
use crate::error::{Result, ServiceError};
use crate::events::{EstimateSnapshot, EventKind, Recommendation, TrialEvent};
use crate::store::{valid_trial_id, EventStore};

/// Read-only view of a trial for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStatus {
    pub trial_id: String,
    pub config: TrialConfig,
    pub closed_blocks: usize,
    pub complete: bool,
    pub open_block: Option<OpenBlock>,
    pub snapshots: Vec<EstimateSnapshot>,
    pub recommendation: Option<Recommendation>,
}

impl TrialStatus {
    fn of(trial: &LiveTrial) -> Self {
        TrialStatus {
            trial_id: trial.trial_id.clone(),
            config: trial.config().clone(),
            closed_blocks: trial.state.closed_blocks(),
            complete: trial.state.is_complete(),
            open_block: trial.open.clone(),
            snapshots: trial.snapshots.clone(),
            recommendation: trial.snapshots.last().map(|s| s.recommendation),
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Runs live trials on top of an [`EventStore`]. Mutations of one trial
/// are serialized by a per-trial lock; distinct trials proceed in parallel.
#[derive(Debug, Clone)]
pub struct TrialService {
    store: EventStore,
    trials: Arc<Mutex<HashMap<String, Arc<Mutex<LiveTrial>>>>>,
}

impl TrialService {
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(TrialService { store: EventStore::open(data_dir)?, trials: Arc::default() })
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    /// Loads a trial from its log on first use, completing any snapshot
    /// events an interrupted close left unwritten.
    fn handle(&self, trial_id: &str) -> Result<Arc<Mutex<LiveTrial>>> {
        if !valid_trial_id(trial_id) {
            return Err(ServiceError::NotFound(trial_id.to_string()));
        }
        let mut trials = self.trials.lock().expect("trial table lock");
        if let Some(t) = trials.get(trial_id) {
            return Ok(t.clone());
        }
        let events = self.store.load(trial_id)?;
        let mut trial = LiveTrial::replay(&events)?;
        let owed = trial.pending_events(now_ms());
        if !owed.is_empty() {
            self.store.append(trial_id, &owed, true)?;
            for e in &owed {
                trial.apply(e)?;
            }
        }
        let handle = Arc::new(Mutex::new(trial));
        trials.insert(trial_id.to_string(), handle.clone());
        Ok(handle)
    }

    fn commit(&self, trial: &mut LiveTrial, events: &[TrialEvent], sync: bool) -> Result<()> {
        self.store.append(&trial.trial_id, events, sync)?;
        for e in events {
            trial.apply(e)?;
        }
        Ok(())
    }

    pub fn create_trial(&self, config: TrialConfig) -> Result<String> {
        config.validate()?;
        let trial_id = uuid::Uuid::new_v4().to_string();
        let created = TrialEvent {
            trial_id: trial_id.clone(),
            seq: 1,
            timestamp: now_ms(),
            kind: EventKind::Created { config: config.clone() },
        };
        let trial = LiveTrial::created(&trial_id, config)?;
        self.store.append(&trial_id, &[created], true)?;
        self.trials.lock().expect("trial table lock").insert(trial_id.clone(), Arc::new(Mutex::new(trial)));
        Ok(trial_id)
    }

    pub fn assign_next_block(&self, trial_id: &str) -> Result<Assignment> {
        let handle = self.handle(trial_id)?;
        let mut trial = handle.lock().expect("trial lock");
        let (assignment, events) = trial.assign(now_ms())?;
        self.commit(&mut trial, &events, false)?;
        Ok(assignment)
    }

    pub fn record_outcome(
        &self,
        trial_id: &str,
        k: usize,
        t: usize,
        y: f64,
        covariates: Option<serde_json::Value>,
    ) -> Result<OutcomeAck> {
        let handle = self.handle(trial_id)?;
        let mut trial = handle.lock().expect("trial lock");
        let (ack, events) = trial.record(k, t, y, covariates, now_ms())?;
        self.commit(&mut trial, &events, false)?;
        Ok(ack)
    }

    pub fn close_block(&self, trial_id: &str, k: usize) -> Result<Vec<EstimateSnapshot>> {
        let handle = self.handle(trial_id)?;
        let mut trial = handle.lock().expect("trial lock");
        let (snapshots, events) = trial.close(k, now_ms())?;
        self.commit(&mut trial, &events, true)?;
        Ok(snapshots)
    }

    pub fn get_status(&self, trial_id: &str) -> Result<TrialStatus> {
        let handle = self.handle(trial_id)?;
        let trial = handle.lock().expect("trial lock");
        Ok(TrialStatus::of(&trial))
    }

    /// Current in-memory trial, for tests and diagnostics.
    pub fn snapshot_state(&self, trial_id: &str) -> Result<LiveTrial> {
        let handle = self.handle(trial_id)?;
        let trial = handle.lock().expect("trial lock");
        Ok(trial.clone())
    }
}
