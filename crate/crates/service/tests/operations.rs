use nof1_core::confseq::CsInterval;
use nof1_core::estimators::Method;
use nof1_core::trial::{Arm, Scheme, TrialConfig};
use nof1_service::engine::recommendation;
use nof1_service::{EventKind, LiveTrial, Recommendation, ServiceError, TrialEvent, TrialService};

fn service() -> (tempfile::TempDir, TrialService) {
    let dir = tempfile::tempdir().unwrap();
    let svc = TrialService::open(dir.path()).unwrap();
    (dir, svc)
}

fn ev(seq: u64, kind: EventKind) -> TrialEvent {
    TrialEvent { trial_id: "t".into(), seq, timestamp: 0, kind }
}

fn fill_block(svc: &TrialService, id: &str, ys: &[f64]) -> Vec<nof1_service::EstimateSnapshot> {
    let a = svc.assign_next_block(id).unwrap();
    for (i, y) in ys.iter().enumerate() {
        svc.record_outcome(id, a.k, i + 1, *y, None).unwrap();
    }
    svc.close_block(id, a.k).unwrap()
}

#[test]
fn create_trial_examples() {
    let (_dir, svc) = service();
    let a = svc.create_trial(TrialConfig::new(4, 2)).unwrap();
    let b = svc.create_trial(TrialConfig::new(4, 2)).unwrap();
    assert_ne!(a, b);
    assert_eq!(svc.get_status(&a).unwrap().closed_blocks, 0);

    let bad = TrialConfig { alpha: 1.2, ..TrialConfig::new(4, 2) };
    match svc.create_trial(bad) {
        Err(e @ ServiceError::Validation { .. }) => {
            assert_eq!(e.field(), Some("alpha"));
            assert_eq!(e.status(), 422);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn assign_examples() {
    let (_dir, svc) = service();
    let id = svc.create_trial(TrialConfig::new(2, 1).with_seed(3)).unwrap();
    let first = svc.assign_next_block(&id).unwrap();
    assert_eq!((first.k, first.propensity, first.forced), (1, 0.5, false));
    assert_eq!(svc.assign_next_block(&id).unwrap(), first);

    svc.record_outcome(&id, 1, 1, 0.5, None).unwrap();
    assert!(matches!(svc.assign_next_block(&id), Err(ServiceError::Conflict(_))));
    svc.close_block(&id, 1).unwrap();
    fill_block_rest(&svc, &id);
    assert!(matches!(svc.assign_next_block(&id), Err(ServiceError::TrialComplete { k_max: 2 })));
}

fn fill_block_rest(svc: &TrialService, id: &str) {
    let a = svc.assign_next_block(id).unwrap();
    svc.record_outcome(id, a.k, 1, 1.0, None).unwrap();
    svc.close_block(id, a.k).unwrap();
}

#[test]
fn pairwise_closer_is_forced_complement() {
    let (_dir, svc) = service();
    let id = svc.create_trial(TrialConfig::new(4, 1).with_scheme(Scheme::Pairwise).with_seed(8)).unwrap();
    let opener = svc.assign_next_block(&id).unwrap();
    svc.record_outcome(&id, 1, 1, 2.0, None).unwrap();
    assert!(svc.close_block(&id, 1).unwrap().is_empty());
    let closer = svc.assign_next_block(&id).unwrap();
    assert!(closer.forced);
    assert_eq!(closer.arm, opener.arm.complement());
    svc.record_outcome(&id, 2, 1, 1.0, None).unwrap();
    let snaps = svc.close_block(&id, 2).unwrap();
    assert_eq!(snaps.iter().map(|s| s.method).collect::<Vec<_>>(), [Method::PairIptw, Method::PairHajek]);
    assert_eq!(snaps[0].k, 2);
}

#[test]
fn record_examples() {
    let (_dir, svc) = service();
    let cfg = TrialConfig { outcome_bound: Some(10.0), ..TrialConfig::new(3, 3) };
    let id = svc.create_trial(cfg).unwrap();
    assert!(matches!(svc.record_outcome(&id, 1, 1, 2.0, None), Err(ServiceError::Sequence(_))));
    svc.assign_next_block(&id).unwrap();

    let ack = svc.record_outcome(&id, 1, 1, 2.0, None).unwrap();
    assert_eq!((ack.k, ack.t, ack.remaining), (1, 1, 2));
    let interim = ack.interim_ice.unwrap();
    assert_eq!(interim.psi_hat.abs(), 4.0);

    let e = svc.record_outcome(&id, 1, 3, 1.0, None).unwrap_err();
    assert!(matches!(e, ServiceError::Sequence(_)));
    assert_eq!(e.status(), 409);
    assert!(matches!(svc.record_outcome(&id, 1, 1, 1.0, None), Err(ServiceError::Conflict(_))));
    let e = svc.record_outcome(&id, 1, 2, f64::INFINITY, None).unwrap_err();
    assert_eq!((e.status(), e.field()), (422, Some("y")));
    let e = svc.record_outcome(&id, 1, 2, 11.0, None).unwrap_err();
    assert!(matches!(e, ServiceError::BoundViolation { .. }));
    assert_eq!(e.status(), 422);
    svc.record_outcome(&id, 1, 2, -1.0, Some(serde_json::json!({"sleep": 7}))).unwrap();

    let e = svc.close_block(&id, 1).unwrap_err();
    assert!(matches!(e, ServiceError::IncompleteBlock(_)));
    assert_eq!(e.code(), "incomplete_block");
}

#[test]
fn close_example_from_hand_written_log() {
    let config = TrialConfig::new(5, 2);
    let mut trial = LiveTrial::replay(&[ev(1, EventKind::Created { config })]).unwrap();
    assert_eq!(trial.state.closed_blocks(), 0);
    for (seq, kind) in [
        (2, EventKind::BlockAssigned { k: 1, assignment: Arm::Treatment, propensity: 0.5, forced: false }),
        (3, EventKind::OutcomeRecorded { k: 1, t: 1, y: 1.0, covariates: None }),
        (4, EventKind::OutcomeRecorded { k: 1, t: 2, y: 3.0, covariates: None }),
    ] {
        trial.apply(&ev(seq, kind)).unwrap();
    }
    let (snaps, events) = trial.close(1, 0).unwrap();
    assert_eq!(snaps.len(), 1, "the stabilized estimate waits for both arms");
    let s = &snaps[0];
    assert_eq!((s.k, s.method, s.point), (1, Method::Iptw, 4.0));
    assert!((s.interval.half_width - 12.248245758058228).abs() < 1e-12);
    assert_eq!((s.stopped, s.recommendation), (false, Recommendation::Continue));
    assert_eq!(events.len(), 2);
}

#[test]
fn recommendation_examples() {
    let iv = CsInterval::new(3, 3, 2.7, 2.4);
    assert!((iv.lower - 0.3).abs() < 1e-12 && (iv.upper - 5.1).abs() < 1e-12);
    assert_eq!(recommendation(&iv, 3, 10), Recommendation::EffectDetected);
    let wide = CsInterval::new(10, 10, 1.0, 4.0);
    assert_eq!(recommendation(&wide, 9, 10), Recommendation::Continue);
    assert_eq!(recommendation(&wide, 10, 10), Recommendation::CompletedNoEffect);
}

#[test]
fn status_examples() {
    let (_dir, svc) = service();
    let id = svc.create_trial(TrialConfig::new(6, 1).with_seed(1)).unwrap();
    assert!(svc.get_status(&id).unwrap().snapshots.is_empty());
    fill_block(&svc, &id, &[1.0]);
    fill_block(&svc, &id, &[2.0]);
    let status = svc.get_status(&id).unwrap();
    let iptw: Vec<usize> = status.snapshots.iter().filter(|s| s.method == Method::Iptw).map(|s| s.k).collect();
    assert_eq!(iptw, [1, 2]);
    assert!(matches!(
        svc.get_status("00000000-0000-4000-8000-000000000000"),
        Err(ServiceError::NotFound(_))
    ));
    assert!(matches!(svc.get_status("../etc/passwd"), Err(ServiceError::NotFound(_))));
}

#[test]
fn replay_rejects_gaps() {
    let config = TrialConfig::new(2, 1);
    let events = [
        ev(1, EventKind::Created { config }),
        ev(3, EventKind::BlockAssigned { k: 1, assignment: Arm::Control, propensity: 0.5, forced: false }),
    ];
    match LiveTrial::replay(&events) {
        Err(ServiceError::Replay { seq: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn replay_rejects_off_design_assignments() {
    let config = TrialConfig::new(2, 1);
    let events = [
        ev(1, EventKind::Created { config }),
        ev(2, EventKind::BlockAssigned { k: 1, assignment: Arm::Control, propensity: 0.25, forced: false }),
    ];
    assert!(matches!(LiveTrial::replay(&events), Err(ServiceError::Replay { seq: 2, .. })));
}

#[test]
fn full_trial_replays_to_live_state() {
    let (dir, svc) = service();
    let id = svc.create_trial(TrialConfig::new(30, 2).with_scheme(Scheme::Restricted).with_seed(42)).unwrap();
    for k in 1..=30 {
        let ys = [k as f64 * 0.1, (k as f64).sin()];
        fill_block(&svc, &id, &ys);
    }
    let live = svc.snapshot_state(&id).unwrap();
    let status = svc.get_status(&id).unwrap();
    assert!(status.complete);
    assert_eq!(status.snapshots.last().unwrap().k, 30);

    let fresh = TrialService::open(dir.path()).unwrap();
    let replayed = fresh.snapshot_state(&id).unwrap();
    assert_eq!(serde_json::to_string(&replayed).unwrap(), serde_json::to_string(&live).unwrap());
}
