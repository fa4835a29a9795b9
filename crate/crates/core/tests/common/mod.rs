#![allow(dead_code)]

//! Shared fixtures for the integration tests: a four-step pipeline and a
//! helper that executes outstanding derivations with the deterministic
//! stand-in transformation.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use vdc_core::sim::simulated_transform;
use vdc_core::*;

pub fn step_tx(name: &str, step: &str, input_step: Option<&str>) -> Transformation {
    Transformation {
        name: name.to_string(),
        version: 1,
        step: step.to_string(),
        schema: ParamSchema {
            entries: vec![
                ParamSpec {
                    name: "events".into(),
                    domain: ParamDomain::Repro,
                    ptype: ParamType::Int,
                    required: true,
                    default: None,
                },
                ParamSpec {
                    name: "gen_tune".into(),
                    domain: ParamDomain::Repro,
                    ptype: ParamType::Str,
                    required: false,
                    default: Some(ParamValue::Str("A".into())),
                },
                ParamSpec {
                    name: "verbosity".into(),
                    domain: ParamDomain::App,
                    ptype: ParamType::Int,
                    required: false,
                    default: Some(ParamValue::Int(1)),
                },
                ParamSpec {
                    name: "workdir".into(),
                    domain: ParamDomain::Site,
                    ptype: ParamType::Str,
                    required: false,
                    default: Some(ParamValue::Str("/tmp".into())),
                },
            ],
        },
        template: format!(
            "run_{step} -seed ${{random_seed}} -events ${{events}} -dir ${{workdir}}"
        ),
        inputs: input_step
            .map(|s| {
                vec![TransformationInput {
                    slot: "signal".into(),
                    step: s.into(),
                }]
            })
            .unwrap_or_default(),
        consumed_internally: vec![],
        body_hash: String::new(),
    }
}

pub fn simple_dataset(name: &str, tx: &str, partitions: u32, base_seed: i64) -> Dataset {
    Dataset {
        name: name.to_string(),
        version: 1,
        transformation: TxRef {
            name: tx.to_string(),
            version: 1,
        },
        recipes: RecipeRefs::default(),
        overrides: BTreeMap::from([("events".to_string(), ParamValue::Int(3))]),
        inputs: vec![],
        partitions,
        base_seed,
        seed_stride: 1,
    }
}

pub fn chained_dataset(
    name: &str,
    tx: &str,
    upstream: &str,
    partitions: u32,
    base_seed: i64,
) -> Dataset {
    let mut ds = simple_dataset(name, tx, partitions, base_seed);
    ds.inputs = vec![DatasetInput {
        slot: "signal".into(),
        dataset: upstream.into(),
        version: 1,
    }];
    ds
}

pub fn site_recipe(site: &str) -> Recipe {
    Recipe {
        name: format!("site.{site}"),
        domain: ParamDomain::Site,
        bindings: BTreeMap::from([(
            "workdir".to_string(),
            ParamValue::Str(format!("/data/{site}")),
        )]),
        validated: false,
        note: String::new(),
    }
}

pub fn new_service() -> Service {
    let mut service = Service::in_memory(PlannerConfig::default()).unwrap();
    service.register_recipe(site_recipe("alpha")).unwrap();
    service.mark_validated("site.alpha", "").unwrap();
    service
}

/// Register the standard evgen→simul→pileup→digit pipeline.
pub fn register_pipeline(service: &mut Service) {
    let mut upstream = None;
    for step in ["evgen", "simul", "pileup", "digit"] {
        service
            .register_transformation(step_tx(step, step, upstream))
            .unwrap();
        upstream = Some(step);
    }
}

/// Compose the standard four-dataset chain; returns names in order.
pub fn compose_chain(service: &mut Service, partitions: u32) -> Vec<String> {
    register_pipeline(service);
    service
        .compose_dataset(simple_dataset("ds_evgen", "evgen", partitions, 7))
        .unwrap();
    for (step, upstream) in [
        ("simul", "ds_evgen"),
        ("pileup", "ds_simul"),
        ("digit", "ds_pileup"),
    ] {
        service
            .compose_dataset(chained_dataset(
                &format!("ds_{step}"),
                step,
                upstream,
                partitions,
                7,
            ))
            .unwrap();
    }
    ["ds_evgen", "ds_simul", "ds_pileup", "ds_digit"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn provenance(ce: &str, bytes: u64, digest: &str, now: i64) -> ProvenanceRecord {
    ProvenanceRecord {
        compute_element: ce.to_string(),
        network_domain: "alpha".to_string(),
        country: "xx".to_string(),
        started: Utc.timestamp_opt(now, 0).unwrap(),
        finished: Utc.timestamp_opt(now + 1, 0).unwrap(),
        exit_status: 0,
        output_bytes: bytes,
        output_digest: digest.to_string(),
    }
}

/// Deterministically recompute the payload of any already-completed
/// derivation by walking its input closure.
pub fn payload_of(
    service: &Service,
    id: &ObjectId,
    cache: &mut BTreeMap<ObjectId, Vec<u8>>,
) -> Vec<u8> {
    if let Some(p) = cache.get(id) {
        return p.clone();
    }
    let derivation = service.derivation(id).expect("known derivation").clone();
    let inputs: Vec<Vec<u8>> = derivation
        .input_ids
        .iter()
        .map(|i| payload_of(service, i, cache))
        .collect();
    let (payload, _) = simulated_transform(&derivation, &inputs).unwrap();
    cache.insert(*id, payload.clone());
    payload
}

/// Drain the queue: claim and complete everything with the deterministic
/// stand-in executor, keeping payloads so chained inputs resolve. Returns
/// output digests by object id.
pub fn run_everything(service: &mut Service) -> BTreeMap<ObjectId, String> {
    let mut blobs: BTreeMap<ObjectId, Vec<u8>> = BTreeMap::new();
    let mut digests = BTreeMap::new();
    let mut now = 0i64;
    while let Some((derivation, _text)) = service.claim_next("ce-test", "alpha", now).unwrap() {
        let inputs: Vec<Vec<u8>> = derivation
            .input_ids
            .iter()
            .map(|id| payload_of(service, id, &mut blobs))
            .collect();
        let (payload, digest) = simulated_transform(&derivation, &inputs).unwrap();
        service
            .complete_derivation(
                &derivation.output_id,
                "ce-test",
                provenance("ce-test", payload.len() as u64, &digest, now),
            )
            .unwrap();
        digests.insert(derivation.output_id, digest);
        blobs.insert(derivation.output_id, payload);
        now += 2;
    }
    digests
}
