//! Domain types shared by the catalogs, planner, server, and simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::identity::ObjectId;
use crate::template;

/// The three non-overlapping parameter domains. Every parameter in a
/// transformation's schema belongs to exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamDomain {
    /// Data reproducibility: these parameters determine output identity.
    #[serde(rename = "REPRO")]
    Repro,
    /// Application complexity: runtime behavior only (verbosity, memory
    /// hints); never part of output identity.
    #[serde(rename = "APP")]
    App,
    /// Grid location: site-local bindings, resolved at claim time.
    #[serde(rename = "SITE")]
    Site,
}

impl fmt::Display for ParamDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamDomain::Repro => "REPRO",
            ParamDomain::App => "APP",
            ParamDomain::Site => "SITE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamType {
    #[serde(rename = "int")]
    Int,
    #[serde(rename = "bool")]
    Bool,
    #[serde(rename = "string")]
    Str,
    /// Fixed-point values carried as decimal strings so identity hashing
    /// stays bit-exact. No raw floating point anywhere.
    #[serde(rename = "decimal")]
    Decimal,
}

/// A bound parameter value. Decimals are strings on the wire; the schema
/// decides whether a JSON string is a plain string or a decimal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Str(String),
    Decimal(String),
}

impl ParamValue {
    pub fn matches(&self, ty: ParamType) -> bool {
        matches!(
            (self, ty),
            (ParamValue::Int(_), ParamType::Int)
                | (ParamValue::Bool(_), ParamType::Bool)
                | (ParamValue::Str(_), ParamType::Str)
                | (ParamValue::Decimal(_), ParamType::Decimal)
                | (ParamValue::Str(_), ParamType::Decimal)
        )
    }

    /// Reinterpret a JSON string as a decimal when the schema asks for one.
    pub fn coerce(&self, ty: ParamType) -> ParamValue {
        match (self, ty) {
            (ParamValue::Str(s), ParamType::Decimal) => ParamValue::Decimal(s.clone()),
            _ => self.clone(),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            _ => None,
        }
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

/// Parameters every transformation receives implicitly, one pair per
/// partition: `partition_index` and `random_seed`. They are always in the
/// REPRO domain and cannot be bound by recipes or overrides.
pub const BUILTIN_REPRO: [&str; 2] = ["partition_index", "random_seed"];

pub fn is_builtin_repro(name: &str) -> bool {
    BUILTIN_REPRO.contains(&name)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub domain: ParamDomain,
    #[serde(rename = "type")]
    pub ptype: ParamType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSchema {
    pub entries: Vec<ParamSpec>,
}

impl ParamSchema {
    pub fn entry(&self, name: &str) -> Option<&ParamSpec> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn validate(&self) -> Result<(), VdcError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !is_identifier(&e.name) {
                return Err(VdcError::InvalidSchema(format!(
                    "parameter name {:?} is not an identifier",
                    e.name
                )));
            }
            if is_builtin_repro(&e.name) && e.domain != ParamDomain::Repro {
                return Err(VdcError::InvalidSchema(format!(
                    "builtin parameter {} must stay in the REPRO domain",
                    e.name
                )));
            }
            if !seen.insert(e.name.clone()) {
                return Err(VdcError::InvalidSchema(format!(
                    "duplicate parameter name {:?}",
                    e.name
                )));
            }
            match (&e.required, &e.default) {
                (true, Some(_)) => {
                    return Err(VdcError::InvalidSchema(format!(
                        "required parameter {} must not carry a default",
                        e.name
                    )))
                }
                (false, None) => {
                    return Err(VdcError::InvalidSchema(format!(
                        "optional parameter {} needs a default",
                        e.name
                    )))
                }
                (false, Some(d)) if !d.matches(e.ptype) => {
                    return Err(VdcError::InvalidSchema(format!(
                        "default for {} does not match its declared type",
                        e.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxRef {
    pub name: String,
    pub version: u32,
}

impl fmt::Display for TxRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} v{}", self.name, self.version)
    }
}

/// Input slot a transformation consumes: the slot name and the pipeline
/// step label the supplied object is expected to come from. Slot order is
/// positional and significant for identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformationInput {
    pub slot: String,
    pub step: String,
}

/// A versioned, templated recipe for one pipeline step. Versions are
/// append-only: any change is a new version, never an in-place edit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transformation {
    pub name: String,
    pub version: u32,
    pub step: String,
    pub schema: ParamSchema,
    pub template: String,
    #[serde(default)]
    pub inputs: Vec<TransformationInput>,
    /// Required parameters consumed by the application itself rather than
    /// appearing in the template text.
    #[serde(default)]
    pub consumed_internally: Vec<String>,
    /// Hex SHA-256 over the canonical encoding of (schema, template,
    /// inputs). Computed at registration; client-supplied values ignored.
    #[serde(default)]
    pub body_hash: String,
}

impl Transformation {
    pub fn tx_ref(&self) -> TxRef {
        TxRef {
            name: self.name.clone(),
            version: self.version,
        }
    }

    pub fn compute_body_hash(&self) -> Result<String, VdcError> {
        let schema_json = serde_json::to_value(&self.schema)
            .map_err(|e| VdcError::UnencodableValue(e.to_string()))?;
        let inputs_json = serde_json::to_value(&self.inputs)
            .map_err(|e| VdcError::UnencodableValue(e.to_string()))?;
        let root = serde_json::json!({
            "schema": schema_json,
            "template": self.template,
            "inputs": inputs_json,
        });
        let canon = crate::identity::CanonValue::from_json(&root)?;
        let bytes = crate::identity::canonical_encode(&canon);
        Ok(hex::encode(crate::identity::sha256(&bytes)))
    }

    /// Full structural validation run at registration time.
    pub fn validate(&self) -> Result<(), VdcError> {
        if self.version == 0 {
            return Err(VdcError::InvalidSchema("version must be positive".into()));
        }
        self.schema.validate()?;
        let parsed = template::parse_template(&self.template)?;
        for ph in &parsed.placeholders {
            if !is_builtin_repro(ph) && self.schema.entry(ph).is_none() {
                return Err(VdcError::SchemaTemplateMismatch(format!(
                    "template placeholder ${{{ph}}} is absent from the schema"
                )));
            }
        }
        for e in &self.schema.entries {
            if e.required
                && !parsed.placeholders.contains(&e.name)
                && !self.consumed_internally.contains(&e.name)
            {
                return Err(VdcError::SchemaTemplateMismatch(format!(
                    "required parameter {} is neither a placeholder nor consumed internally",
                    e.name
                )));
            }
        }
        let mut slots = BTreeSet::new();
        for input in &self.inputs {
            if !slots.insert(&input.slot) {
                return Err(VdcError::InvalidSchema(format!(
                    "duplicate input slot {:?}",
                    input.slot
                )));
            }
        }
        Ok(())
    }
}

/// A named, validated set of parameter bindings confined to one domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub domain: ParamDomain,
    pub bindings: BTreeMap<String, ParamValue>,
    #[serde(default)]
    pub validated: bool,
    #[serde(default)]
    pub note: String,
}

/// Recipe names a dataset pulls in, at most one per domain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeRefs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repro: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<String>,
}

impl RecipeRefs {
    pub fn get(&self, domain: ParamDomain) -> Option<&String> {
        match domain {
            ParamDomain::Repro => self.repro.as_ref(),
            ParamDomain::App => self.app.as_ref(),
            ParamDomain::Site => self.site.as_ref(),
        }
    }

    pub fn set(&mut self, domain: ParamDomain, name: String) {
        match domain {
            ParamDomain::Repro => self.repro = Some(name),
            ParamDomain::App => self.app = Some(name),
            ParamDomain::Site => self.site = Some(name),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamDomain, &String)> {
        [
            (ParamDomain::Repro, self.repro.as_ref()),
            (ParamDomain::App, self.app.as_ref()),
            (ParamDomain::Site, self.site.as_ref()),
        ]
        .into_iter()
        .filter_map(|(d, r)| r.map(|r| (d, r)))
    }
}

/// Upstream dataset feeding one input slot. Partition i of this dataset
/// consumes partition i of the upstream dataset, so partition counts must
/// match.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInput {
    pub slot: String,
    pub dataset: String,
    pub version: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub version: u32,
}

fn default_stride() -> i64 {
    1
}

/// A composition of recipes over a transformation plus a partition
/// specification; expands to one derivation per partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub version: u32,
    pub transformation: TxRef,
    #[serde(default)]
    pub recipes: RecipeRefs,
    #[serde(default)]
    pub overrides: BTreeMap<String, ParamValue>,
    #[serde(default)]
    pub inputs: Vec<DatasetInput>,
    pub partitions: u32,
    #[serde(default)]
    pub base_seed: i64,
    #[serde(default = "default_stride")]
    pub seed_stride: i64,
}

impl Dataset {
    pub fn ds_ref(&self) -> DatasetRef {
        DatasetRef {
            name: self.name.clone(),
            version: self.version,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivationState {
    #[serde(rename = "DEFINED")]
    Defined,
    #[serde(rename = "CLAIMED")]
    Claimed,
    #[serde(rename = "COMPLETED")]
    Completed,
    #[serde(rename = "FAILED")]
    Failed,
}

impl fmt::Display for DerivationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivationState::Defined => "DEFINED",
            DerivationState::Claimed => "CLAIMED",
            DerivationState::Completed => "COMPLETED",
            DerivationState::Failed => "FAILED",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimInfo {
    pub ce_id: String,
    pub site: String,
    /// Planner time units (milliseconds for the live server, ticks in the
    /// deterministic simulation).
    pub claimed_at: i64,
}

/// Bound parameters grouped by domain. Only `repro` reaches identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainBindings {
    pub repro: BTreeMap<String, ParamValue>,
    pub app: BTreeMap<String, ParamValue>,
    pub site: BTreeMap<String, ParamValue>,
}

impl DomainBindings {
    pub fn merged(&self) -> BTreeMap<String, ParamValue> {
        let mut all = self.repro.clone();
        all.extend(self.app.clone().into_iter());
        all.extend(self.site.clone().into_iter());
        all
    }
}

/// Information collected after a transformation completes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub compute_element: String,
    pub network_domain: String,
    pub country: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub exit_status: i32,
    pub output_bytes: u64,
    /// Hex SHA-256 of the produced payload.
    pub output_digest: String,
}

/// One concrete invocation: transformation, fully bound parameters, input
/// objects, lifecycle state, and (once completed) provenance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub id: ObjectId,
    pub dataset: DatasetRef,
    pub transformation: TxRef,
    pub bound: DomainBindings,
    pub input_ids: Vec<ObjectId>,
    pub output_id: ObjectId,
    pub state: DerivationState,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<ClaimInfo>,
    /// Every claim ever granted, in order. Late completion reports are
    /// accepted only from compute elements that appear here.
    #[serde(default)]
    pub claim_history: Vec<ClaimInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<ProvenanceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_reason: Option<String>,
    /// Monotone creation counter; claim order is FIFO over this, ties by
    /// ObjectId byte order.
    pub created_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replica {
    pub object_id: ObjectId,
    pub site: String,
    pub uri: String,
    pub registered_at: DateTime<Utc>,
}

/// Two completion reports for the same derivation disagreed on the output
/// digest. The first result is kept; the disagreement is recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonDeterminismIncident {
    pub derivation_id: ObjectId,
    pub ce_id: String,
    pub kept_digest: String,
    pub conflicting_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Claim older than this is re-queued by the garbage-collection sweep.
    pub claim_timeout: i64,
    pub max_attempts: u32,
    pub gc_period: i64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            claim_timeout: 60_000,
            max_attempts: 10,
            gc_period: 10_000,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), VdcError> {
        if self.claim_timeout < 1 {
            return Err(VdcError::InvalidSimConfig(
                "claim_timeout must be at least one time unit".into(),
            ));
        }
        if self.max_attempts == 0 {
            return Err(VdcError::InvalidSimConfig(
                "max_attempts must be positive".into(),
            ));
        }
        if self.gc_period > self.claim_timeout {
            return Err(VdcError::InvalidSimConfig(
                "gc_period must not exceed claim_timeout".into(),
            ));
        }
        Ok(())
    }
}

/// Plan for materializing one target object: stages in dependency order,
/// each stage's derivations mutually independent, plus everything already
/// satisfied by replicas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializationPlan {
    pub target: ObjectId,
    pub stages: Vec<Vec<ObjectId>>,
    pub pruned: Vec<ObjectId>,
}

#[doc(hidden)]
pub mod test_support {
    use super::*;

    /// Transformation with a fixed body hash, used by identity tests.
    pub fn minimal_tx(name: &str, version: u32, body_hash: &str) -> Transformation {
        Transformation {
            name: name.to_string(),
            version,
            step: "evgen".to_string(),
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
                        name: "verbosity".into(),
                        domain: ParamDomain::App,
                        ptype: ParamType::Int,
                        required: false,
                        default: Some(ParamValue::Int(1)),
                    },
                ],
            },
            template: "run -seed ${random_seed} -n ${events}".to_string(),
            inputs: vec![],
            consumed_internally: vec![],
            body_hash: body_hash.to_string(),
        }
    }
}
