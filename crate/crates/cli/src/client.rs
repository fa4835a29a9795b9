//! Blocking HTTP client for the catalog server, including a [`SimBackend`]
//! implementation so the simulation can drive a remote server.

use serde::de::DeserializeOwned;
use serde::Serialize;
use vdc_core::api::*;
use vdc_core::sim::{CompleteStatus, SimBackend};
use vdc_core::*;

/// Distinguishes "the server said no" from "could not reach the server";
/// the process exit code depends on it.
#[derive(Debug)]
pub enum ClientError {
    /// The server answered with an error body.
    Api { status: u16, body: ErrorBody },
    /// The request never produced an HTTP response.
    Connect { url: String, detail: String },
    Decode(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::Api { status, body } => {
                write!(f, "{} ({}, HTTP {status})", body.message, body.error)
            }
            ClientError::Connect { url, detail } => {
                write!(f, "cannot reach server at {url}: {detail}")
            }
            ClientError::Decode(detail) => write!(f, "malformed server response: {detail}"),
        }
    }
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

pub enum Reply<T> {
    Body(T),
    NoContent,
}

impl Client {
    pub fn new(base: &str) -> Client {
        Client {
            base: base.trim_end_matches('/').to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn handle<T: DeserializeOwned>(
        &self,
        url: &str,
        result: reqwest::Result<reqwest::blocking::Response>,
    ) -> Result<Reply<T>, ClientError> {
        let resp = result.map_err(|e| ClientError::Connect {
            url: url.to_string(),
            detail: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status == 204 {
            return Ok(Reply::NoContent);
        }
        let text = resp.text().map_err(|e| ClientError::Decode(e.to_string()))?;
        if (200..300).contains(&status) {
            serde_json::from_str(&text)
                .map(Reply::Body)
                .map_err(|e| ClientError::Decode(format!("{e}: {text}")))
        } else {
            let body: ErrorBody = serde_json::from_str(&text).unwrap_or_else(|_| ErrorBody {
                error: "Unknown".to_string(),
                message: text.clone(),
            });
            Err(ClientError::Api { status, body })
        }
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        match self.handle(&url, self.http.get(&url).send())? {
            Reply::Body(t) => Ok(t),
            Reply::NoContent => Err(ClientError::Decode("unexpected 204".into())),
        }
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<Reply<T>, ClientError> {
        let url = format!("{}{path}", self.base);
        self.handle(&url, self.http.post(&url).json(body).send())
    }

    pub fn post_expect<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        match self.post(path, body)? {
            Reply::Body(t) => Ok(t),
            Reply::NoContent => Err(ClientError::Decode("unexpected 204".into())),
        }
    }

    pub fn delete<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        match self.handle(&url, self.http.delete(&url).send())? {
            Reply::Body(t) => Ok(t),
            Reply::NoContent => Err(ClientError::Decode("unexpected 204".into())),
        }
    }
}

fn remote(err: ClientError) -> VdcError {
    VdcError::Remote(err.to_string())
}

impl SimBackend for Client {
    fn register_transformation(&mut self, tx: Transformation) -> Result<(), VdcError> {
        self.post_expect::<_, TxRef>("/v1/transformations", &tx)
            .map(|_| ())
            .map_err(remote)
    }

    fn register_recipe(&mut self, recipe: Recipe) -> Result<(), VdcError> {
        self.post_expect::<_, serde_json::Value>("/v1/recipes", &recipe)
            .map(|_| ())
            .map_err(remote)
    }

    fn mark_validated(&mut self, name: &str) -> Result<(), VdcError> {
        self.post_expect::<_, serde_json::Value>(
            &format!("/v1/recipes/{name}/validate"),
            &ValidateRecipeRequest { note: String::new() },
        )
        .map(|_| ())
        .map_err(remote)
    }

    fn compose_dataset(&mut self, dataset: Dataset) -> Result<(u64, u64), VdcError> {
        let resp: ComposeResponse = self.post_expect("/v1/datasets", &dataset).map_err(remote)?;
        Ok((resp.created.len() as u64, resp.linked.len() as u64))
    }

    fn claim_next(
        &mut self,
        ce_id: &str,
        site: &str,
        now: i64,
    ) -> Result<Option<Derivation>, VdcError> {
        let req = ClaimRequest {
            ce_id: ce_id.to_string(),
            site: site.to_string(),
            now: Some(now),
        };
        match self.post::<_, ClaimResponse>("/v1/work/claim", &req).map_err(remote)? {
            Reply::NoContent => Ok(None),
            Reply::Body(resp) => Ok(resp.derivation),
        }
    }

    fn complete(
        &mut self,
        id: &ObjectId,
        ce_id: &str,
        provenance: ProvenanceRecord,
    ) -> Result<CompleteStatus, VdcError> {
        let req = CompleteRequest {
            ce_id: ce_id.to_string(),
            provenance,
        };
        match self.post_expect::<_, CompleteResponse>(&format!("/v1/derivations/{id}/complete"), &req)
        {
            Ok(resp) if resp.accepted => Ok(CompleteStatus::Accepted),
            Ok(resp) => Ok(CompleteStatus::Duplicate {
                non_determinism: resp.non_determinism,
            }),
            Err(ClientError::Api { body, .. }) if body.error == "CompleteWithoutClaim" => {
                Ok(CompleteStatus::Stale)
            }
            Err(e) => Err(remote(e)),
        }
    }

    fn gc_sweep(&mut self, now: i64) -> Result<u64, VdcError> {
        let resp: GcResponse = self
            .post_expect("/v1/gc", &GcRequest { now: Some(now) })
            .map_err(remote)?;
        Ok(resp.requeued.len() as u64)
    }

    fn counts(&mut self) -> Result<StateCounts, VdcError> {
        let status: StatusResponse = self.get("/v1/status").map_err(remote)?;
        Ok(status.derivations)
    }

    fn dataset_counts(&mut self, name: &str, version: u32) -> Result<(u64, u64), VdcError> {
        let resp: DatasetStatusResponse = self
            .get(&format!("/v1/datasets/{name}/{version}/derivations"))
            .map_err(remote)?;
        Ok((
            resp.derivations.len() as u64,
            resp.counts.completed,
        ))
    }

    fn incident_count(&mut self) -> Result<u64, VdcError> {
        let status: StatusResponse = self.get("/v1/status").map_err(remote)?;
        Ok(status.non_determinism_incidents)
    }
}
