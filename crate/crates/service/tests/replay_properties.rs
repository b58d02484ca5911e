use std::fs;
use std::io::Write;

use nof1_core::trial::{Scheme, TrialConfig};
use nof1_service::{LiveTrial, ServiceError, TrialService};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Assign,
    Record { t_shift: i8, y: f64 },
    Close { k_shift: i8 },
    Status,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => Just(Op::Assign),
        6 => (prop_oneof![8 => Just(0i8), 1 => Just(-1i8), 1 => Just(1i8)], -20.0f64..20.0)
            .prop_map(|(t_shift, y)| Op::Record { t_shift, y }),
        2 => prop_oneof![8 => Just(0i8), 1 => Just(1i8)].prop_map(|k_shift| Op::Close { k_shift }),
        1 => Just(Op::Status),
    ]
}

fn config() -> impl Strategy<Value = TrialConfig> {
    (1usize..7, 1usize..4, prop_oneof![Just(Scheme::Unrestricted), Just(Scheme::Restricted), Just(Scheme::Pairwise)], any::<u64>())
        .prop_map(|(k, t, scheme, seed)| TrialConfig::new(k, t).with_scheme(scheme).with_seed(seed))
}

fn json<T: serde::Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

/// Drives a random session. Invalid requests must fail without touching
/// the state, and earlier snapshots must never change.
fn run_session(svc: &TrialService, id: &str, ops: &[Op]) -> Result<(), TestCaseError> {
    for op in ops {
        let before = svc.snapshot_state(id).unwrap();
        let result = match op {
            Op::Assign => svc.assign_next_block(id).map(|_| ()),
            Op::Record { t_shift, y } => {
                let (k, next) = match &before.open {
                    Some(o) => (o.assignment.k, o.outcomes.len() as i64 + 1),
                    None => (before.state.closed_blocks() + 1, 1),
                };
                let t = (next + *t_shift as i64).max(0) as usize;
                svc.record_outcome(id, k, t, *y, None).map(|_| ())
            }
            Op::Close { k_shift } => {
                let k = before.open.as_ref().map(|o| o.assignment.k).unwrap_or(before.state.closed_blocks());
                svc.close_block(id, (k as i64 + *k_shift as i64) as usize).map(|_| ())
            }
            Op::Status => svc.get_status(id).map(|_| ()),
        };
        let after = svc.snapshot_state(id).unwrap();
        if result.is_err() {
            prop_assert_eq!(json(&before), json(&after));
        }
        prop_assert!(after.snapshots.len() >= before.snapshots.len());
        prop_assert_eq!(json(&before.snapshots), json(&after.snapshots[..before.snapshots.len()]));
        prop_assert_eq!(json(&before.state.blocks), json(&after.state.blocks[..before.state.blocks.len()]));
        let ks: Vec<usize> = after.snapshots.iter().map(|s| s.k).collect();
        prop_assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sessions_replay_exactly_and_truncations_replay_cleanly(
        cfg in config(),
        ops in prop::collection::vec(op(), 0..150),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let svc = TrialService::open(dir.path()).unwrap();
        let id = svc.create_trial(cfg).unwrap();
        run_session(&svc, &id, &ops)?;
        let live = svc.snapshot_state(&id).unwrap();

        let events = svc.store().load(&id).unwrap();
        let replayed = LiveTrial::replay(&events).unwrap();
        prop_assert_eq!(json(&replayed), json(&live));

        // Every event boundary is a possible crash point.
        let text = fs::read_to_string(svc.store().path(&id)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        prop_assert_eq!(lines.len(), events.len());
        for cut in 1..=lines.len() {
            let crash_dir = tempfile::tempdir().unwrap();
            let path = crash_dir.path().join(format!("{id}.ndjson"));
            let mut body = lines[..cut].join("\n");
            body.push('\n');
            fs::write(&path, body).unwrap();
            let prefix = LiveTrial::replay(&events[..cut]).unwrap();
            prop_assert_eq!(prefix.last_seq, cut as u64);
            prop_assert_eq!(json(&prefix.snapshots), json(&live.snapshots[..prefix.snapshots.len()]));

            // Reopening completes an interrupted close and keeps going.
            let recovered = TrialService::open(crash_dir.path()).unwrap();
            let state = recovered.snapshot_state(&id).unwrap();
            prop_assert!(state.pending.is_empty());
            prop_assert_eq!(json(&state.state), json(&prefix.state));
        }
    }
}

#[test]
fn torn_trailing_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let svc = TrialService::open(dir.path()).unwrap();
    let id = svc.create_trial(TrialConfig::new(3, 1).with_seed(2)).unwrap();
    let a = svc.assign_next_block(&id).unwrap();
    svc.record_outcome(&id, a.k, 1, 1.5, None).unwrap();
    let path = svc.store().path(&id);
    let mut f = fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(br#"{"trial_id":"#).unwrap();
    drop(f);

    let reopened = TrialService::open(dir.path()).unwrap();
    let state = reopened.snapshot_state(&id).unwrap();
    assert_eq!(state.last_seq, 3);
    reopened.close_block(&id, 1).unwrap();
    let again = TrialService::open(dir.path()).unwrap();
    assert_eq!(again.get_status(&id).unwrap().closed_blocks, 1);
}

#[test]
fn corrupt_middle_line_is_a_replay_error() {
    let dir = tempfile::tempdir().unwrap();
    let svc = TrialService::open(dir.path()).unwrap();
    let id = svc.create_trial(TrialConfig::new(3, 1)).unwrap();
    svc.assign_next_block(&id).unwrap();
    let path = svc.store().path(&id);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, format!("{}garbage\n{}", text.lines().next().unwrap().to_owned() + "\n", text.lines().nth(1).unwrap().to_owned() + "\n")).unwrap();
    let reopened = TrialService::open(dir.path()).unwrap();
    assert!(matches!(reopened.get_status(&id), Err(ServiceError::Replay { seq: 2, .. })));
}
