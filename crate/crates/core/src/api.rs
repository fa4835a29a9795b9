//! Wire-level request/response bodies shared by the HTTP server and the
//! command-line client.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::identity::ObjectId;
use crate::state::StateCounts;
use crate::types::{Derivation, MaterializationPlan, NonDeterminismIncident, ProvenanceRecord};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub ce_id: String,
    pub site: String,
    /// Logical clock override (milliseconds or ticks, caller's choice);
    /// defaults to wall-clock milliseconds when absent.
    #[serde(default)]
    pub now: Option<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClaimResponse {
    pub derivation: Option<Derivation>,
    pub recipe_text: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub ce_id: String,
    pub provenance: ProvenanceRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub accepted: bool,
    pub non_determinism: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailRequest {
    pub ce_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailResponse {
    pub terminal: bool,
    pub attempts: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComposeResponse {
    pub name: String,
    pub version: u32,
    pub created: Vec<ObjectId>,
    pub linked: Vec<ObjectId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaterializeRequest {
    pub target: ObjectId,
}

pub type MaterializeResponse = MaterializationPlan;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReprocessRequest {
    pub recipe: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReprocessResponse {
    pub new_version: u32,
    pub invalidated: Vec<ObjectId>,
    pub reused: Vec<ObjectId>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GcRequest {
    #[serde(default)]
    pub now: Option<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GcResponse {
    pub requeued: Vec<ObjectId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub transformations: u64,
    pub datasets: u64,
    pub invocations: u64,
    pub compute_elements: u64,
    pub network_domains: u64,
    pub countries: u64,
    pub replicas: u64,
    pub non_determinism_incidents: u64,
    pub derivations: StateCounts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetStatusResponse {
    pub name: String,
    pub version: u32,
    pub counts: StateCounts,
    pub derivations: Vec<Derivation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IncidentsResponse {
    pub incidents: Vec<NonDeterminismIncident>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidateRecipeRequest {
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProvenanceResponse {
    /// Provenance chains keyed by object id, root first.
    pub chain: Vec<ProvenanceNode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProvenanceNode {
    pub output_id: ObjectId,
    pub transformation: String,
    pub version: u32,
    pub repro_params: BTreeMap<String, crate::types::ParamValue>,
    pub inputs: Vec<ObjectId>,
    pub provenance: Option<ProvenanceRecord>,
}

/// Uniform error body: `{"error": "<stable tag>", "message": "..."}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ErrorBody {
    pub fn from_error(err: &VdcError) -> Self {
        ErrorBody {
            error: err.tag().to_string(),
            message: err.to_string(),
        }
    }
}
