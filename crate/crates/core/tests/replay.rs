//! Durability: every acknowledged mutation must survive a restart, replay
//! must be deterministic, and snapshots must round-trip.

mod common;

use std::io::Write;

use common::*;
use vdc_core::*;

fn busy_journal(path: &std::path::Path) -> Service {
    let mut service = Service::open(path, PlannerConfig::default()).unwrap();
    service.register_recipe(site_recipe("alpha")).unwrap();
    service.mark_validated("site.alpha", "").unwrap();
    compose_chain(&mut service, 2);
    // drive part of the lifecycle so the journal has claims/completions
    let (d, _) = service.claim_next("ce0", "alpha", 5).unwrap().unwrap();
    service
        .complete_derivation(&d.output_id, "ce0", provenance("ce0", 9, &"d".repeat(64), 5))
        .unwrap();
    let (d2, _) = service.claim_next("ce1", "alpha", 6).unwrap().unwrap();
    service.fail_derivation(&d2.output_id, "ce1", "oom").unwrap();
    service
}

#[test]
fn restart_restores_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.journal");
    let service = busy_journal(&path);
    let snapshot = service.state().snapshot_json().unwrap();
    drop(service);

    let mut restored = Service::open(&path, PlannerConfig::default()).unwrap();
    assert_eq!(restored.state().snapshot_json().unwrap(), snapshot);
    // and the restored service keeps working
    let next = restored.claim_next("ce2", "alpha", 7).unwrap();
    assert!(next.is_some());
}

#[test]
fn torn_final_line_is_dropped_on_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.journal");
    let service = busy_journal(&path);
    let before_partial = service.state().snapshot_json().unwrap();
    drop(service);

    // simulate a crash mid-append: an unterminated, truncated record
    let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    file.write_all(b"{\"seq\":9999,\"ts\":12,\"event\":\"GcSw").unwrap();
    drop(file);

    let restored = Service::open(&path, PlannerConfig::default()).unwrap();
    assert_eq!(restored.state().snapshot_json().unwrap(), before_partial);
}

#[test]
fn interior_corruption_is_refused_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.journal");
    drop(busy_journal(&path));

    // clobber a record in the middle of the file
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 4);
    let middle = lines.len() / 2;
    lines[middle] = "{\"seq\": definitely not json";
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    match Service::open(&path, PlannerConfig::default()) {
        Err(VdcError::CorruptRecord { line, .. }) => assert!(line >= 1),
        Err(other) => panic!("expected CorruptRecord, got {other:?}"),
        Ok(_) => panic!("corrupt journal must not open"),
    }
}

#[test]
fn replay_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.journal");
    drop(busy_journal(&path));

    let a = Service::open(&path, PlannerConfig::default()).unwrap();
    let b = Service::open(&path, PlannerConfig::default()).unwrap();
    assert_eq!(
        a.state().snapshot_json().unwrap(),
        b.state().snapshot_json().unwrap()
    );
}

#[test]
fn snapshot_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.journal");
    let service = busy_journal(&path);
    let doc = service.state().snapshot_json().unwrap();
    let restored = CatalogState::from_snapshot_json(&doc).unwrap();
    assert_eq!(restored.snapshot_json().unwrap(), doc);
    assert_eq!(restored.state_counts(), service.state().state_counts());
}
