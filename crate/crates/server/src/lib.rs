//! HTTP catalog server. Every mutation is journaled before the response is
//! sent, so an acknowledged write always survives a crash; restart replays
//! the journal. All endpoints live under `/v1` and speak the JSON bodies
//! from `vdc_core::api`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use vdc_core::api::*;
use vdc_core::{
    Dataset, Derivation, ErrorKind, ObjectId, PlannerConfig, Recipe, Replica, Service,
    Transformation, TxRef, VdcError,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub journal_path: PathBuf,
    #[serde(default)]
    pub planner: PlannerConfig,
}

type Shared = Arc<RwLock<Service>>;

/// Wrapper so `?` in handlers maps straight onto the status-code contract:
/// validation → 400, not-found → 404, conflict → 409, internal → 500.
pub struct ApiError(pub VdcError);

impl From<VdcError> for ApiError {
    fn from(err: VdcError) -> Self {
        ApiError(err)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind() {
            ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody::from_error(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_id(raw: &str) -> Result<ObjectId, ApiError> {
    raw.parse::<ObjectId>().map_err(ApiError)
}

fn now_millis() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

// ---- handlers ---------------------------------------------------------------------

async fn post_transformation(
    State(shared): State<Shared>,
    Json(tx): Json<Transformation>,
) -> ApiResult<Json<TxRef>> {
    Ok(Json(shared.write().register_transformation(tx)?))
}

async fn get_transformation(
    State(shared): State<Shared>,
    Path((name, version)): Path<(String, u32)>,
) -> ApiResult<Json<Transformation>> {
    let service = shared.read();
    let tx = service
        .state()
        .transformation(&name, version)
        .ok_or_else(|| VdcError::UnknownReference(format!("transformation {name} v{version}")))?;
    Ok(Json(tx.clone()))
}

async fn post_recipe(
    State(shared): State<Shared>,
    Json(recipe): Json<Recipe>,
) -> ApiResult<Json<serde_json::Value>> {
    let name = shared.write().register_recipe(recipe)?;
    Ok(Json(serde_json::json!({ "name": name })))
}

async fn post_recipe_validate(
    State(shared): State<Shared>,
    Path(name): Path<String>,
    body: Option<Json<ValidateRecipeRequest>>,
) -> ApiResult<Json<serde_json::Value>> {
    let note = body.map(|Json(b)| b.note).unwrap_or_default();
    shared.write().mark_validated(&name, &note)?;
    Ok(Json(serde_json::json!({ "name": name, "validated": true })))
}

async fn post_dataset(
    State(shared): State<Shared>,
    Json(dataset): Json<Dataset>,
) -> ApiResult<Json<ComposeResponse>> {
    let outcome = shared.write().compose_dataset(dataset)?;
    Ok(Json(ComposeResponse {
        name: outcome.dataset.name,
        version: outcome.dataset.version,
        created: outcome.created,
        linked: outcome.linked,
    }))
}

async fn get_dataset_derivations(
    State(shared): State<Shared>,
    Path((name, version)): Path<(String, u32)>,
) -> ApiResult<Json<DatasetStatusResponse>> {
    let service = shared.read();
    let derivations = service
        .derivations_of(&name, version)
        .ok_or_else(|| VdcError::UnknownDataset(format!("{name} v{version}")))?;
    let mut counts = vdc_core::StateCounts::default();
    for d in &derivations {
        match d.state {
            vdc_core::DerivationState::Defined => counts.defined += 1,
            vdc_core::DerivationState::Claimed => counts.claimed += 1,
            vdc_core::DerivationState::Completed => counts.completed += 1,
            vdc_core::DerivationState::Failed => counts.failed += 1,
        }
    }
    Ok(Json(DatasetStatusResponse {
        name,
        version,
        counts,
        derivations: derivations.into_iter().cloned().collect(),
    }))
}

async fn post_claim(
    State(shared): State<Shared>,
    Json(req): Json<ClaimRequest>,
) -> ApiResult<Response> {
    let now = req.now.unwrap_or_else(now_millis);
    let claimed = shared.write().claim_next(&req.ce_id, &req.site, now)?;
    Ok(match claimed {
        None => StatusCode::NO_CONTENT.into_response(),
        Some((derivation, recipe_text)) => Json(ClaimResponse {
            derivation: Some(derivation),
            recipe_text: Some(recipe_text),
        })
        .into_response(),
    })
}

async fn post_complete(
    State(shared): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<CompleteRequest>,
) -> ApiResult<Json<CompleteResponse>> {
    let id = parse_id(&id)?;
    let outcome = shared
        .write()
        .complete_derivation(&id, &req.ce_id, req.provenance)?;
    Ok(Json(CompleteResponse {
        accepted: outcome.accepted,
        non_determinism: outcome.non_determinism,
    }))
}

async fn post_fail(
    State(shared): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<FailRequest>,
) -> ApiResult<Json<FailResponse>> {
    let id = parse_id(&id)?;
    let mut service = shared.write();
    let state = service.fail_derivation(&id, &req.ce_id, &req.reason)?;
    let attempts = service.derivation(&id).map(|d| d.attempts).unwrap_or(0);
    Ok(Json(FailResponse {
        terminal: state == vdc_core::DerivationState::Failed,
        attempts,
    }))
}

async fn post_retry(
    State(shared): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let id = parse_id(&id)?;
    shared.write().retry_derivation(&id)?;
    Ok(Json(serde_json::json!({ "retried": true })))
}

async fn get_derivation(
    State(shared): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<Derivation>> {
    let id = parse_id(&id)?;
    let service = shared.read();
    let derivation = service
        .derivation(&id)
        .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
    Ok(Json(derivation.clone()))
}

fn provenance_chain(service: &Service, id: &ObjectId) -> Result<Vec<ProvenanceNode>, VdcError> {
    // target first, then ancestors breadth-first, each object once
    let mut chain = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut queue = std::collections::VecDeque::from([*id]);
    while let Some(next) = queue.pop_front() {
        if !seen.insert(next) {
            continue;
        }
        let d = service
            .derivation(&next)
            .ok_or_else(|| VdcError::UnknownDerivation(next.to_string()))?;
        chain.push(ProvenanceNode {
            output_id: d.output_id,
            transformation: d.transformation.name.clone(),
            version: d.transformation.version,
            repro_params: d.bound.repro.clone(),
            inputs: d.input_ids.clone(),
            provenance: d.provenance.clone(),
        });
        queue.extend(d.input_ids.iter().copied());
    }
    Ok(chain)
}

async fn get_provenance(
    State(shared): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<ProvenanceResponse>> {
    let id = parse_id(&id)?;
    let service = shared.read();
    Ok(Json(ProvenanceResponse {
        chain: provenance_chain(&service, &id)?,
    }))
}

async fn post_materialize(
    State(shared): State<Shared>,
    Json(req): Json<MaterializeRequest>,
) -> ApiResult<Json<MaterializeResponse>> {
    Ok(Json(shared.read().plan_materialization(&req.target)?))
}

async fn post_reprocess(
    State(shared): State<Shared>,
    Path(name): Path<String>,
    Json(req): Json<ReprocessRequest>,
) -> ApiResult<Json<ReprocessResponse>> {
    let outcome = shared.write().reprocess(&name, &req.recipe)?;
    Ok(Json(ReprocessResponse {
        new_version: outcome.new_version,
        invalidated: outcome.invalidated,
        reused: outcome.reused,
    }))
}

async fn post_replica(
    State(shared): State<Shared>,
    Json(replica): Json<Replica>,
) -> ApiResult<Json<serde_json::Value>> {
    // a retried registration of the same copy is success, not conflict
    match shared.write().register_replica(replica) {
        Ok(()) => Ok(Json(serde_json::json!({ "registered": true }))),
        Err(VdcError::DuplicateReplica(_)) => {
            Ok(Json(serde_json::json!({ "registered": false })))
        }
        Err(e) => Err(ApiError(e)),
    }
}

async fn get_replicas(
    State(shared): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<Replica>>> {
    let id = parse_id(&id)?;
    Ok(Json(shared.read().find_replicas(&id)))
}

async fn delete_replicas(
    State(shared): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let id = parse_id(&id)?;
    let dropped = shared.write().drop_replicas(&id)?;
    Ok(Json(serde_json::json!({ "dropped": dropped })))
}

async fn post_gc(
    State(shared): State<Shared>,
    body: Option<Json<GcRequest>>,
) -> ApiResult<Json<GcResponse>> {
    let now = body
        .and_then(|Json(b)| b.now)
        .unwrap_or_else(now_millis);
    Ok(Json(GcResponse {
        requeued: shared.write().gc_sweep(now)?,
    }))
}

async fn get_status(State(shared): State<Shared>) -> Json<StatusResponse> {
    let status = shared.read().status();
    Json(StatusResponse {
        transformations: status.transformations,
        datasets: status.datasets,
        invocations: status.invocations,
        compute_elements: status.compute_elements,
        network_domains: status.network_domains,
        countries: status.countries,
        replicas: status.replicas,
        non_determinism_incidents: status.non_determinism_incidents,
        derivations: status.derivations,
    })
}

async fn get_incidents(State(shared): State<Shared>) -> Json<IncidentsResponse> {
    Json(IncidentsResponse {
        incidents: shared.read().state().incidents.clone(),
    })
}

// ---- assembly --------------------------------------------------------------------

pub fn build_router(shared: Shared) -> Router {
    Router::new()
        .route("/v1/transformations", post(post_transformation))
        .route("/v1/transformations/:name/:version", get(get_transformation))
        .route("/v1/recipes", post(post_recipe))
        .route("/v1/recipes/:name/validate", post(post_recipe_validate))
        .route("/v1/datasets", post(post_dataset))
        .route(
            "/v1/datasets/:name/:version/derivations",
            get(get_dataset_derivations),
        )
        .route("/v1/datasets/:name/reprocess", post(post_reprocess))
        .route("/v1/work/claim", post(post_claim))
        .route("/v1/derivations/:id/complete", post(post_complete))
        .route("/v1/derivations/:id/fail", post(post_fail))
        .route("/v1/derivations/:id/retry", post(post_retry))
        .route("/v1/derivations/:id/provenance", get(get_provenance))
        .route("/v1/derivations/:id", get(get_derivation))
        .route("/v1/materialize", post(post_materialize))
        .route("/v1/replicas", post(post_replica))
        .route("/v1/replicas/:id", get(get_replicas).delete(delete_replicas))
        .route("/v1/gc", post(post_gc))
        .route("/v1/status", get(get_status))
        .route("/v1/incidents", get(get_incidents))
        .with_state(shared)
}

/// Open the journal, bind, and serve until the process is killed. Prints
/// `listening on http://<addr>` once the socket is ready so wrappers can
/// discover an ephemeral port.
pub fn serve(config: ServerConfig) -> Result<(), VdcError> {
    let service = Service::open(&config.journal_path, config.planner.clone())?;
    let shared: Shared = Arc::new(RwLock::new(service));
    let router = build_router(shared);
    let runtime = tokio::runtime::Runtime::new().map_err(VdcError::Journal)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .map_err(VdcError::Journal)?;
        let addr = listener.local_addr().map_err(VdcError::Journal)?;
        println!("listening on http://{addr}");
        use std::io::Write;
        std::io::stdout().flush().ok();
        axum::serve(listener, router)
            .await
            .map_err(VdcError::Journal)
    })
}
