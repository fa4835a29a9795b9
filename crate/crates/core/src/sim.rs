//! Desk-scale reproduction of a distributed production run: a simulated
//! grid of compute elements spread over network domains and countries,
//! executing deterministic stand-in transformations against the catalog
//! server, with injected worker crashes and server outage windows.
//!
//! Time is discrete ticks and every random choice comes from one seeded
//! generator, so two runs with the same config produce identical reports.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::identity::{sha256, ObjectId};
use crate::service::Service;
use crate::state::StateCounts;
use crate::types::*;

pub const PIPELINE_STEPS: [&str; 4] = ["evgen", "simul", "pileup", "digit"];

// ---- deterministic primitives -------------------------------------------------

/// splitmix64: tiny, portable, bit-exact PRNG used both for simulated
/// payloads and for the simulation's own random choices.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        // 53 high bits, uniform in [0, 1)
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn next_range(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

/// Payload of a simulated transformation: `events` events of 16 bytes,
/// two big-endian splitmix64 outputs each.
pub fn payload_from_seed(seed64: u64, events: u64) -> Vec<u8> {
    let mut rng = SplitMix64::new(seed64);
    let mut payload = Vec::with_capacity(events as usize * 16);
    for _ in 0..events {
        payload.extend_from_slice(&rng.next_u64().to_be_bytes());
        payload.extend_from_slice(&rng.next_u64().to_be_bytes());
    }
    payload
}

fn xor_fold(digest: &[u8; 32]) -> u64 {
    let mut folded = 0u64;
    for chunk in digest.chunks_exact(8) {
        folded ^= u64::from_be_bytes(chunk.try_into().unwrap());
    }
    folded
}

/// Deterministic stand-in for the physics applications. The seed is the
/// first 8 bytes of the derivation's output id (the SHA-256 of its
/// canonical identity encoding), XOR-folded with the SHA-256 of each input
/// payload, so re-executions anywhere always reproduce the same bytes.
pub fn simulated_transform(
    derivation: &Derivation,
    input_payloads: &[Vec<u8>],
) -> Result<(Vec<u8>, String), VdcError> {
    let events = derivation
        .bound
        .repro
        .get("events")
        .and_then(|v| v.as_int())
        .filter(|e| *e >= 0)
        .ok_or(VdcError::MissingEventsParam)?;
    let mut seed64 = u64::from_be_bytes(derivation.output_id.0[..8].try_into().unwrap());
    for payload in input_payloads {
        seed64 ^= xor_fold(&sha256(payload));
    }
    let payload = payload_from_seed(seed64, events as u64);
    let digest = hex::encode(sha256(&payload));
    Ok((payload, digest))
}

// ---- configuration and report ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageWindow {
    pub start: i64,
    pub duration: i64,
}

impl OutageWindow {
    fn contains(&self, tick: i64) -> bool {
        tick >= self.start && tick < self.start + self.duration
    }
}

fn default_planner() -> PlannerConfig {
    PlannerConfig {
        claim_timeout: 50,
        max_attempts: 10,
        gc_period: 25,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub compute_elements: u32,
    pub network_domains: u32,
    pub countries: u32,
    pub transformations: u32,
    pub invocations: u32,
    pub datasets: u32,
    #[serde(default)]
    pub ce_crash_probability: f64,
    #[serde(default)]
    pub server_outage_windows: Vec<OutageWindow>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_planner")]
    pub planner: PlannerConfig,
}

impl Default for SimConfig {
    /// Production-scale defaults: 100 transformations, 8000 invocations,
    /// 700 compute elements over 32 network domains in 8 countries, 200
    /// datasets.
    fn default() -> Self {
        SimConfig {
            compute_elements: 700,
            network_domains: 32,
            countries: 8,
            transformations: 100,
            invocations: 8000,
            datasets: 200,
            ce_crash_probability: 0.0,
            server_outage_windows: Vec::new(),
            rng_seed: 1,
            planner: default_planner(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), VdcError> {
        for (name, v) in [
            ("compute_elements", self.compute_elements),
            ("network_domains", self.network_domains),
            ("countries", self.countries),
            ("transformations", self.transformations),
            ("invocations", self.invocations),
            ("datasets", self.datasets),
        ] {
            if v == 0 {
                return Err(VdcError::InvalidSimConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.ce_crash_probability) {
            return Err(VdcError::InvalidSimConfig(
                "ce_crash_probability must be within [0, 1]".into(),
            ));
        }
        if self.invocations < self.datasets {
            return Err(VdcError::InvalidSimConfig(
                "need at least one invocation per dataset".into(),
            ));
        }
        self.planner.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetCompletion {
    pub total: u64,
    pub completed: u64,
    /// Labeled share accounting: datasets flagged as managed through the
    /// virtual-data path.
    pub vdc_managed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub completed: u64,
    pub failed: u64,
    pub requeued: u64,
    pub total_claims: u64,
    pub duplicate_reports: u64,
    pub lost_reports: u64,
    pub outage_deferred: u64,
    pub non_determinism_incidents: u64,
    pub permanent_failure_fraction: f64,
    pub per_dataset: BTreeMap<String, DatasetCompletion>,
    /// Fraction of datasets labeled VDC-managed (≈ one half).
    pub vdc_dataset_share: f64,
    /// Fraction of total volume (invocations) labeled VDC-managed (≈ one
    /// fifth).
    pub vdc_volume_share: f64,
    pub simulated_ticks: i64,
    /// Wall-clock duration; excluded from reproducibility comparisons.
    pub wall_clock_ms: u64,
}

// ---- scenario generation ------------------------------------------------------

struct DatasetSpec {
    dataset: Dataset,
    vdc_managed: bool,
}

fn step_schema() -> ParamSchema {
    ParamSchema {
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
    }
}

fn step_transformation(name: &str, step: &str, input_step: Option<&str>) -> Transformation {
    Transformation {
        name: name.to_string(),
        version: 1,
        step: step.to_string(),
        schema: step_schema(),
        template: format!(
            "run_{step} -seed ${{random_seed}} -events ${{events}} -tune ${{gen_tune}} \
             -v ${{verbosity}} -dir ${{workdir}}"
        ),
        inputs: input_step
            .map(|s| {
                vec![TransformationInput {
                    slot: "signal".to_string(),
                    step: s.to_string(),
                }]
            })
            .unwrap_or_default(),
        consumed_internally: vec![],
        body_hash: String::new(),
    }
}

/// Spread `total` units over `n` buckets, as evenly as possible, exactly.
fn distribute(total: u64, n: u64) -> Vec<u64> {
    let base = total / n;
    let extra = (total % n) as usize;
    (0..n as usize)
        .map(|i| base + u64::from(i < extra))
        .collect()
}

/// Plan the catalog for a run: which transformations to register and which
/// datasets to compose, honoring the exact invocation total and labeling
/// roughly half the datasets (a fifth of the volume) as VDC-managed.
fn build_scenario<B: SimBackend + ?Sized>(
    config: &SimConfig,
    service: &mut B,
) -> Result<Vec<DatasetSpec>, VdcError> {
    let chain_mode = config.datasets % 4 == 0
        && config.transformations >= 4
        && config.invocations % 4 == 0
        && config.invocations / 4 >= config.datasets / 4;

    // shared recipes, one per domain, plus one SITE recipe per domain/site
    service.register_recipe(Recipe {
        name: "repro.default".into(),
        domain: ParamDomain::Repro,
        bindings: BTreeMap::from([("gen_tune".to_string(), ParamValue::Str("prod".into()))]),
        validated: false,
        note: String::new(),
    })?;
    service.mark_validated("repro.default")?;
    service.register_recipe(Recipe {
        name: "app.default".into(),
        domain: ParamDomain::App,
        bindings: BTreeMap::from([("verbosity".to_string(), ParamValue::Int(2))]),
        validated: false,
        note: String::new(),
    })?;
    service.mark_validated("app.default")?;
    for domain in 0..config.network_domains {
        let site = format!("dom{domain}");
        service.register_recipe(Recipe {
            name: format!("site.{site}"),
            domain: ParamDomain::Site,
            bindings: BTreeMap::from([(
                "workdir".to_string(),
                ParamValue::Str(format!("/data/{site}")),
            )]),
            validated: false,
            note: String::new(),
        })?;
        service.mark_validated(&format!("site.{site}"))?;
    }

    let mut specs = Vec::new();

    if chain_mode {
        let ds_chains = (config.datasets / 4) as u64;
        let tx_chains = (config.transformations / 4).max(1) as u64;
        for chain in 0..tx_chains {
            let mut upstream: Option<&str> = None;
            for step in PIPELINE_STEPS {
                let tx = step_transformation(&format!("{step}_c{chain}"), step, upstream);
                service.register_transformation(tx)?;
                upstream = Some(step);
            }
        }
        // remainder transformations keep the registered count exact
        for spare in 0..(config.transformations as u64 - tx_chains * 4) {
            service.register_transformation(step_transformation(
                &format!("spare_{spare}"),
                "evgen",
                None,
            ))?;
        }

        // half the chains are VDC-labeled and carry one fifth of the
        // volume; the partition-unit pool is invocations/4 per chain slot
        let units = (config.invocations / 4) as u64;
        let vdc_chains = ds_chains / 2;
        let vdc_units = units / 5;
        let mut per_chain = Vec::with_capacity(ds_chains as usize);
        if vdc_chains > 0 && vdc_chains < ds_chains {
            per_chain.extend(distribute(vdc_units, vdc_chains));
            per_chain.extend(distribute(units - vdc_units, ds_chains - vdc_chains));
        } else {
            per_chain.extend(distribute(units, ds_chains));
        }
        if per_chain.iter().any(|p| *p == 0) {
            // too few invocations to keep every chain non-empty
            per_chain = distribute(units, ds_chains);
        }

        for (chain, partitions) in per_chain.iter().enumerate() {
            let template_chain = chain as u64 % tx_chains;
            let vdc_managed = (chain as u64) < vdc_chains;
            let mut upstream: Option<String> = None;
            for step in PIPELINE_STEPS {
                let name = format!("ds{chain}_{step}");
                let dataset = Dataset {
                    name: name.clone(),
                    version: 1,
                    transformation: TxRef {
                        name: format!("{step}_c{template_chain}"),
                        version: 1,
                    },
                    recipes: RecipeRefs {
                        repro: Some("repro.default".into()),
                        app: Some("app.default".into()),
                        site: None,
                    },
                    overrides: BTreeMap::from([(
                        "events".to_string(),
                        ParamValue::Int(1 + (chain as i64 % 4)),
                    )]),
                    inputs: upstream
                        .as_ref()
                        .map(|up| {
                            vec![DatasetInput {
                                slot: "signal".into(),
                                dataset: up.clone(),
                                version: 1,
                            }]
                        })
                        .unwrap_or_default(),
                    partitions: *partitions as u32,
                    base_seed: chain as i64 * 1_000_000,
                    seed_stride: 1,
                };
                specs.push(DatasetSpec { dataset, vdc_managed });
                upstream = Some(name);
            }
        }
    } else {
        // simple mode: independent single-step datasets
        for t in 0..config.transformations {
            service.register_transformation(step_transformation(
                &format!("evgen_{t}"),
                "evgen",
                None,
            ))?;
        }
        let n = config.datasets as u64;
        let vdc_count = n / 2;
        let total = config.invocations as u64;
        let vdc_total = total / 5;
        let mut per_dataset = Vec::with_capacity(n as usize);
        if vdc_count > 0 && vdc_count < n && vdc_total >= vdc_count && total - vdc_total >= n - vdc_count {
            per_dataset.extend(distribute(vdc_total, vdc_count));
            per_dataset.extend(distribute(total - vdc_total, n - vdc_count));
        } else {
            per_dataset.extend(distribute(total, n));
        }
        for (i, partitions) in per_dataset.iter().enumerate() {
            let dataset = Dataset {
                name: format!("ds{i}"),
                version: 1,
                transformation: TxRef {
                    name: format!("evgen_{}", i as u32 % config.transformations),
                    version: 1,
                },
                recipes: RecipeRefs {
                    repro: Some("repro.default".into()),
                    app: Some("app.default".into()),
                    site: None,
                },
                overrides: BTreeMap::from([(
                    "events".to_string(),
                    ParamValue::Int(1 + (i as i64 % 4)),
                )]),
                inputs: vec![],
                partitions: *partitions as u32,
                base_seed: i as i64 * 1_000_000,
                seed_stride: 1,
            };
            specs.push(DatasetSpec {
                dataset,
                vdc_managed: (i as u64) < vdc_count,
            });
        }
    }
    Ok(specs)
}

// ---- catalog backend abstraction -----------------------------------------------

/// Outcome of a completion report, flattened so remote backends don't need
/// to reconstruct error variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompleteStatus {
    Accepted,
    Duplicate { non_determinism: bool },
    /// The claim was already requeued and re-dispatched; the report was
    /// discarded.
    Stale,
}

/// The handful of catalog operations the simulation needs, so the same
/// loop can drive an in-process service or a remote server.
pub trait SimBackend {
    fn register_transformation(&mut self, tx: Transformation) -> Result<(), VdcError>;
    fn register_recipe(&mut self, recipe: Recipe) -> Result<(), VdcError>;
    fn mark_validated(&mut self, name: &str) -> Result<(), VdcError>;
    /// Returns (created, linked) counts.
    fn compose_dataset(&mut self, dataset: Dataset) -> Result<(u64, u64), VdcError>;
    fn claim_next(
        &mut self,
        ce_id: &str,
        site: &str,
        now: i64,
    ) -> Result<Option<Derivation>, VdcError>;
    fn complete(
        &mut self,
        id: &ObjectId,
        ce_id: &str,
        provenance: ProvenanceRecord,
    ) -> Result<CompleteStatus, VdcError>;
    /// Returns the number of requeued derivations.
    fn gc_sweep(&mut self, now: i64) -> Result<u64, VdcError>;
    fn counts(&mut self) -> Result<StateCounts, VdcError>;
    /// Returns (total, completed) for one dataset version.
    fn dataset_counts(&mut self, name: &str, version: u32) -> Result<(u64, u64), VdcError>;
    fn incident_count(&mut self) -> Result<u64, VdcError>;
}

impl SimBackend for Service {
    fn register_transformation(&mut self, tx: Transformation) -> Result<(), VdcError> {
        Service::register_transformation(self, tx).map(|_| ())
    }

    fn register_recipe(&mut self, recipe: Recipe) -> Result<(), VdcError> {
        Service::register_recipe(self, recipe).map(|_| ())
    }

    fn mark_validated(&mut self, name: &str) -> Result<(), VdcError> {
        Service::mark_validated(self, name, "")
    }

    fn compose_dataset(&mut self, dataset: Dataset) -> Result<(u64, u64), VdcError> {
        let outcome = Service::compose_dataset(self, dataset)?;
        Ok((outcome.created.len() as u64, outcome.linked.len() as u64))
    }

    fn claim_next(
        &mut self,
        ce_id: &str,
        site: &str,
        now: i64,
    ) -> Result<Option<Derivation>, VdcError> {
        Ok(Service::claim_next(self, ce_id, site, now)?.map(|(d, _text)| d))
    }

    fn complete(
        &mut self,
        id: &ObjectId,
        ce_id: &str,
        provenance: ProvenanceRecord,
    ) -> Result<CompleteStatus, VdcError> {
        match Service::complete_derivation(self, id, ce_id, provenance) {
            Ok(outcome) if outcome.accepted => Ok(CompleteStatus::Accepted),
            Ok(outcome) => Ok(CompleteStatus::Duplicate {
                non_determinism: outcome.non_determinism,
            }),
            Err(VdcError::CompleteWithoutClaim { .. }) => Ok(CompleteStatus::Stale),
            Err(e) => Err(e),
        }
    }

    fn gc_sweep(&mut self, now: i64) -> Result<u64, VdcError> {
        Ok(Service::gc_sweep(self, now)?.len() as u64)
    }

    fn counts(&mut self) -> Result<StateCounts, VdcError> {
        Ok(self.state().state_counts())
    }

    fn dataset_counts(&mut self, name: &str, version: u32) -> Result<(u64, u64), VdcError> {
        let derivations = self
            .derivations_of(name, version)
            .ok_or_else(|| VdcError::UnknownDataset(format!("{name} v{version}")))?;
        let completed = derivations
            .iter()
            .filter(|d| d.state == DerivationState::Completed)
            .count() as u64;
        Ok((derivations.len() as u64, completed))
    }

    fn incident_count(&mut self) -> Result<u64, VdcError> {
        Ok(self.status().non_determinism_incidents)
    }
}

// ---- the simulation loop ----------------------------------------------------------

struct ActiveJob {
    derivation: Derivation,
    payload: Vec<u8>,
    digest: String,
    claimed_tick: i64,
    finish_tick: i64,
    crashes: bool,
}

struct ComputeElement {
    id: String,
    site: String,
    domain: String,
    country: String,
    job: Option<ActiveJob>,
}

fn tick_time(tick: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(tick, 0).single().expect("tick in range")
}

/// Run a full production simulation against a fresh in-process service.
pub fn run_simulation(config: &SimConfig) -> Result<SimReport, VdcError> {
    let mut service = Service::in_memory(config.planner.clone())?;
    run_simulation_on(&mut service, config)
}

/// Run the simulation loop against any backend (in-process or remote). The
/// backend must start from an empty catalog.
pub fn run_simulation_on<B: SimBackend + ?Sized>(
    service: &mut B,
    config: &SimConfig,
) -> Result<SimReport, VdcError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let specs = build_scenario(config, service)?;

    let mut vdc_label: BTreeMap<String, bool> = BTreeMap::new();
    let mut composed_total = 0u64;
    let mut vdc_volume = 0u64;
    for spec in &specs {
        let (created, linked) = service.compose_dataset(spec.dataset.clone())?;
        let n = created + linked;
        composed_total += n;
        if spec.vdc_managed {
            vdc_volume += n;
        }
        vdc_label.insert(format!("{}@v{}", spec.dataset.name, spec.dataset.version), spec.vdc_managed);
    }
    if composed_total != config.invocations as u64 {
        return Err(VdcError::InvalidSimConfig(format!(
            "scenario produced {composed_total} derivations, expected {}",
            config.invocations
        )));
    }

    let mut rng = SplitMix64::new(config.rng_seed);
    let mut ces: Vec<ComputeElement> = (0..config.compute_elements)
        .map(|i| ComputeElement {
            id: format!("ce{i:03}"),
            site: format!("dom{}", i % config.network_domains),
            domain: format!("dom{}", i % config.network_domains),
            country: format!("country{}", i % config.countries),
            job: None,
        })
        .collect();

    let mut blobs: HashMap<ObjectId, Vec<u8>> = HashMap::new();
    let mut report = SimReport::default();
    let mut tick: i64 = 0;
    let tick_cap = 1_000_000i64;

    loop {
        let outage = config.server_outage_windows.iter().any(|w| w.contains(tick));

        if !outage && tick > 0 && tick % config.planner.gc_period == 0 {
            report.requeued += service.gc_sweep(tick)?;
        }

        for ce in ces.iter_mut() {
            // finish a running job first
            if let Some(job) = &ce.job {
                if job.finish_tick > tick {
                    continue;
                }
                if job.crashes {
                    // claimed-but-never-reported; the GC sweep recovers it
                    ce.job = None;
                } else if outage {
                    report.outage_deferred += 1;
                    continue; // retry the report next tick
                } else {
                    let job = ce.job.take().expect("job present");
                    let provenance = ProvenanceRecord {
                        compute_element: ce.id.clone(),
                        network_domain: ce.domain.clone(),
                        country: ce.country.clone(),
                        started: tick_time(job.claimed_tick),
                        finished: tick_time(tick),
                        exit_status: 0,
                        output_bytes: job.payload.len() as u64,
                        output_digest: job.digest.clone(),
                    };
                    match service.complete(&job.derivation.output_id, &ce.id, provenance)? {
                        CompleteStatus::Accepted => {
                            blobs.insert(job.derivation.output_id, job.payload);
                        }
                        CompleteStatus::Duplicate { non_determinism } => {
                            report.duplicate_reports += 1;
                            if non_determinism {
                                report.non_determinism_incidents += 1;
                            }
                        }
                        // requeued while we were off the air; someone else
                        // will redo the work
                        CompleteStatus::Stale => report.lost_reports += 1,
                    }
                }
            }
            if ce.job.is_some() || outage {
                continue;
            }
            if let Some(derivation) = service.claim_next(&ce.id, &ce.site, tick)? {
                report.total_claims += 1;
                let input_payloads: Vec<Vec<u8>> = derivation
                    .input_ids
                    .iter()
                    .map(|id| blobs.get(id).cloned().expect("claimable inputs are materialized"))
                    .collect();
                let (payload, digest) = simulated_transform(&derivation, &input_payloads)?;
                let crashes = rng.next_f64() < config.ce_crash_probability;
                let duration = 1 + rng.next_range(3) as i64;
                ce.job = Some(ActiveJob {
                    claimed_tick: tick,
                    finish_tick: tick + duration,
                    derivation,
                    payload,
                    digest,
                    crashes,
                });
            }
        }

        let counts = service.counts()?;
        if counts.outstanding() == 0 {
            report.completed = counts.completed;
            report.failed = counts.failed;
            break;
        }
        tick += 1;
        if tick > tick_cap {
            return Err(VdcError::InvalidSimConfig(format!(
                "simulation did not terminate within {tick_cap} ticks"
            )));
        }
    }

    report.simulated_ticks = tick;
    report.non_determinism_incidents = service.incident_count()?;
    report.permanent_failure_fraction = report.failed as f64 / config.invocations as f64;
    let mut vdc_datasets = 0u64;
    for spec in &specs {
        let key = format!("{}@v{}", spec.dataset.name, spec.dataset.version);
        let (total, completed) =
            service.dataset_counts(&spec.dataset.name, spec.dataset.version)?;
        if spec.vdc_managed {
            vdc_datasets += 1;
        }
        report.per_dataset.insert(
            key,
            DatasetCompletion {
                total,
                completed,
                vdc_managed: spec.vdc_managed,
            },
        );
    }
    report.vdc_dataset_share = vdc_datasets as f64 / specs.len() as f64;
    report.vdc_volume_share = vdc_volume as f64 / config.invocations as f64;
    report.wall_clock_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

impl SimReport {
    /// Copy with the wall-clock field cleared, for reproducibility
    /// comparisons.
    pub fn normalized(&self) -> SimReport {
        SimReport { wall_clock_ms: 0, ..self.clone() }
    }

    pub fn human_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "completed            {}\nfailed               {}\nrequeued             {}\n",
            self.completed, self.failed, self.requeued
        ));
        out.push_str(&format!(
            "total claims         {}\nduplicate reports    {}\nlost reports         {}\n",
            self.total_claims, self.duplicate_reports, self.lost_reports
        ));
        out.push_str(&format!(
            "outage deferrals     {}\nnon-determinism      {}\npermanent failures   {:.6}\n",
            self.outage_deferred, self.non_determinism_incidents, self.permanent_failure_fraction
        ));
        out.push_str(&format!(
            "VDC dataset share    {:.3}\nVDC volume share     {:.3}\n",
            self.vdc_dataset_share, self.vdc_volume_share
        ));
        out.push_str(&format!(
            "simulated ticks      {}\nwall clock           {} ms\ndatasets             {}\n",
            self.simulated_ticks,
            self.wall_clock_ms,
            self.per_dataset.len()
        ));
        out
    }
}
