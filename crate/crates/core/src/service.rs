//! The single-writer catalog service. Every mutation is validated against
//! the current state, journaled, and only then applied, so an acknowledged
//! mutation always survives a crash and restart.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::identity::ObjectId;
use crate::journal::{read_records, Event, Journal};
use crate::planner::{self, LifecycleEvent};
use crate::state::{ApplyEffect, CatalogState, ReprocessOutcome};
use crate::template;
use crate::types::*;

pub struct Service {
    state: CatalogState,
    journal: Journal,
    pub planner: PlannerConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComposeOutcome {
    pub dataset: DatasetRef,
    pub created: Vec<ObjectId>,
    pub linked: Vec<ObjectId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionOutcome {
    /// False when this report was a late duplicate and the stored result
    /// was kept.
    pub accepted: bool,
    pub non_determinism: bool,
}

impl Service {
    /// Replay the journal at `path` (created if absent) and open it for
    /// appending.
    pub fn open(path: &Path, planner: PlannerConfig) -> Result<Self, VdcError> {
        planner.validate()?;
        let mut state = CatalogState::default();
        for record in read_records(path)? {
            state.apply(&record.event)?;
            state.last_seq = record.seq;
        }
        let journal = Journal::open_file(path)?;
        Ok(Service { state, journal, planner })
    }

    /// Volatile service for tests and the deterministic simulation.
    pub fn in_memory(planner: PlannerConfig) -> Result<Self, VdcError> {
        planner.validate()?;
        Ok(Service {
            state: CatalogState::default(),
            journal: Journal::in_memory(),
            planner,
        })
    }

    pub fn state(&self) -> &CatalogState {
        &self.state
    }

    #[doc(hidden)]
    pub fn state_mut(&mut self) -> &mut CatalogState {
        &mut self.state
    }

    /// Write-ahead commit: journal first, then apply. Events are validated
    /// before they get here, so an apply failure is a bug, not user error.
    fn commit(&mut self, event: Event) -> Result<ApplyEffect, VdcError> {
        let seq = self.state.last_seq + 1;
        self.journal.append(seq, &event)?;
        let effect = self.state.apply(&event)?;
        self.state.last_seq = seq;
        Ok(effect)
    }

    // ---- catalog registration ----------------------------------------------

    /// Register a transformation version. Versions are append-only and
    /// contiguous; re-registering an identical payload is treated as
    /// success so client retries stay idempotent.
    pub fn register_transformation(
        &mut self,
        mut tx: Transformation,
    ) -> Result<TxRef, VdcError> {
        tx.validate()?;
        tx.body_hash = tx.compute_body_hash()?;
        if let Some(existing) = self.state.transformation(&tx.name, tx.version) {
            if existing.body_hash == tx.body_hash {
                return Ok(existing.tx_ref());
            }
            return Err(VdcError::DuplicateVersion(tx.name, tx.version));
        }
        let next = self.state.latest_tx_version(&tx.name).unwrap_or(0) + 1;
        if tx.version != next {
            return Err(VdcError::InvalidSchema(format!(
                "versions are append-only: expected v{next} for {}, got v{}",
                tx.name, tx.version
            )));
        }
        let tx_ref = tx.tx_ref();
        self.commit(Event::TransformationRegistered { transformation: tx })?;
        Ok(tx_ref)
    }

    pub fn register_recipe(&mut self, recipe: Recipe) -> Result<String, VdcError> {
        if recipe.bindings.is_empty() {
            return Err(VdcError::EmptyBindings);
        }
        if let Some(existing) = self.state.recipes.get(&recipe.name) {
            let mut retried = recipe.clone();
            retried.validated = existing.validated;
            retried.note = existing.note.clone();
            if *existing == retried {
                return Ok(recipe.name);
            }
            return Err(VdcError::DuplicateName(recipe.name));
        }
        let name = recipe.name.clone();
        let recipe = Recipe { validated: false, ..recipe };
        self.commit(Event::RecipeRegistered { recipe })?;
        Ok(name)
    }

    pub fn mark_validated(&mut self, name: &str, note: &str) -> Result<(), VdcError> {
        let recipe = self
            .state
            .recipes
            .get(name)
            .ok_or_else(|| VdcError::UnknownReference(format!("recipe {name}")))?;
        if recipe.validated && recipe.note == note {
            return Ok(());
        }
        self.commit(Event::RecipeValidated {
            name: name.to_string(),
            note: note.to_string(),
        })?;
        Ok(())
    }

    pub fn bind_site_recipe(&mut self, site: &str, recipe: &str) -> Result<(), VdcError> {
        let r = self
            .state
            .recipes
            .get(recipe)
            .ok_or_else(|| VdcError::UnknownReference(format!("recipe {recipe}")))?;
        if r.domain != ParamDomain::Site {
            return Err(VdcError::DomainViolation(format!(
                "recipe {recipe} is {} but a SITE recipe is required",
                r.domain
            )));
        }
        self.commit(Event::SiteRecipeBound {
            site: site.to_string(),
            recipe: recipe.to_string(),
        })?;
        Ok(())
    }

    pub fn register_replica(&mut self, replica: Replica) -> Result<(), VdcError> {
        if let Some(existing) = self.state.replicas.get(&replica.object_id) {
            if existing
                .iter()
                .any(|r| r.site == replica.site && r.uri == replica.uri)
            {
                return Err(VdcError::DuplicateReplica(format!(
                    "{} at {} ({})",
                    replica.object_id, replica.site, replica.uri
                )));
            }
        }
        self.commit(Event::ReplicaRegistered { replica })?;
        Ok(())
    }

    pub fn find_replicas(&self, object_id: &ObjectId) -> Vec<Replica> {
        self.state
            .replicas
            .get(object_id)
            .cloned()
            .unwrap_or_default()
    }

    /// Remove every replica of an object from the catalog.
    pub fn drop_replicas(&mut self, object_id: &ObjectId) -> Result<usize, VdcError> {
        let n = self.state.replicas.get(object_id).map_or(0, |v| v.len());
        if n > 0 {
            self.commit(Event::ReplicasDropped { object_id: *object_id })?;
        }
        Ok(n)
    }

    // ---- datasets ------------------------------------------------------------

    pub fn compose_dataset(&mut self, dataset: Dataset) -> Result<ComposeOutcome, VdcError> {
        self.state.expand_dataset(&dataset)?; // full validation before journaling
        let ds_ref = dataset.ds_ref();
        let effect = self.commit(Event::DatasetComposed { dataset })?;
        Ok(ComposeOutcome {
            dataset: ds_ref,
            created: effect.created,
            linked: effect.linked,
        })
    }

    pub fn reprocess(
        &mut self,
        dataset_name: &str,
        recipe_name: &str,
    ) -> Result<ReprocessOutcome, VdcError> {
        if self.state.latest_dataset_version(dataset_name).is_none() {
            return Err(VdcError::UnknownDataset(dataset_name.to_string()));
        }
        let recipe = self
            .state
            .recipes
            .get(recipe_name)
            .ok_or_else(|| VdcError::UnknownReference(format!("recipe {recipe_name}")))?;
        if !recipe.validated {
            return Err(VdcError::UnvalidatedRecipe(recipe_name.to_string()));
        }
        // dry-run on a copy so a mid-cascade validation error cannot leave
        // a half-applied journal event behind
        let mut probe = self.state.clone();
        probe.apply(&Event::DatasetReprocessed {
            dataset: dataset_name.to_string(),
            recipe: recipe_name.to_string(),
        })?;
        let effect = self.commit(Event::DatasetReprocessed {
            dataset: dataset_name.to_string(),
            recipe: recipe_name.to_string(),
        })?;
        Ok(effect.reprocess.expect("reprocess effect"))
    }

    // ---- planner operations ----------------------------------------------------

    /// Atomically hand the oldest ready derivation to a compute element and
    /// return it with its fully instantiated recipe text. SITE bindings are
    /// resolved against the claiming site's recipe, which is what keeps the
    /// derivation itself site-independent.
    pub fn claim_next(
        &mut self,
        ce_id: &str,
        site: &str,
        now: i64,
    ) -> Result<Option<(Derivation, String)>, VdcError> {
        if ce_id.is_empty() {
            return Err(VdcError::DomainViolation("empty compute element id".into()));
        }
        let site_recipe = self
            .state
            .site_recipe(site)
            .ok_or_else(|| VdcError::UnknownSite(site.to_string()))?
            .clone();
        let Some(&(_, id)) = self.state.ready.iter().next() else {
            return Ok(None);
        };
        let derivation = &self.state.derivations[&id];
        planner::transition(derivation.state, LifecycleEvent::Claim)?;
        let recipe_text = self.instantiate_for_site(derivation, &site_recipe)?;
        self.commit(Event::DerivationClaimed {
            id,
            claim: ClaimInfo {
                ce_id: ce_id.to_string(),
                site: site.to_string(),
                claimed_at: now,
            },
        })?;
        Ok(Some((self.state.derivations[&id].clone(), recipe_text)))
    }

    fn instantiate_for_site(
        &self,
        derivation: &Derivation,
        site_recipe: &Recipe,
    ) -> Result<String, VdcError> {
        let tx = self
            .state
            .transformation(&derivation.transformation.name, derivation.transformation.version)
            .ok_or_else(|| {
                VdcError::UnknownReference(format!("transformation {}", derivation.transformation))
            })?;
        let mut bindings = derivation.bound.merged();
        for (name, value) in &site_recipe.bindings {
            match tx.schema.entry(name) {
                Some(entry) if entry.domain == ParamDomain::Site => {
                    bindings.insert(name.clone(), value.coerce(entry.ptype));
                }
                // site recipes serve many transformations; names a schema
                // does not declare are simply not for this one
                Some(_) | None => {}
            }
        }
        let parsed = template::parse_template(&tx.template)?;
        template::instantiate(&parsed, &bindings)
    }

    /// Record a completion report. First result wins: late duplicates with
    /// the same digest are ignored, disagreeing ones are logged as
    /// non-determinism incidents. Reports are only accepted from compute
    /// elements that held a claim on the derivation.
    pub fn complete_derivation(
        &mut self,
        id: &ObjectId,
        ce_id: &str,
        provenance: ProvenanceRecord,
    ) -> Result<CompletionOutcome, VdcError> {
        let derivation = self
            .state
            .derivations
            .get(id)
            .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
        let claim_site = derivation
            .claim_history
            .iter()
            .rev()
            .find(|c| c.ce_id == ce_id)
            .map(|c| c.site.clone());

        match derivation.state {
            DerivationState::Completed => {
                let Some(site) = claim_site else {
                    return Err(VdcError::NotClaimant(ce_id.to_string(), id.to_string()));
                };
                let stored = derivation
                    .provenance
                    .as_ref()
                    .expect("completed derivation carries provenance")
                    .output_digest
                    .clone();
                if stored == provenance.output_digest {
                    // idempotent win-first: register the duplicate's replica,
                    // keep the stored provenance
                    let replica = self.replica_for(id, &site);
                    if !self
                        .state
                        .replicas
                        .get(id)
                        .map_or(false, |v| v.iter().any(|r| r.site == replica.site))
                    {
                        self.commit(Event::ReplicaRegistered { replica })?;
                    }
                    return Ok(CompletionOutcome { accepted: false, non_determinism: false });
                }
                let incident = NonDeterminismIncident {
                    derivation_id: *id,
                    ce_id: ce_id.to_string(),
                    kept_digest: stored,
                    conflicting_digest: provenance.output_digest,
                };
                self.commit(Event::NonDeterminismObserved { incident })?;
                return Ok(CompletionOutcome { accepted: false, non_determinism: true });
            }
            DerivationState::Claimed => {
                if claim_site.is_none() {
                    return Err(VdcError::NotClaimant(ce_id.to_string(), id.to_string()));
                }
            }
            state @ (DerivationState::Defined | DerivationState::Failed) => {
                return Err(VdcError::CompleteWithoutClaim {
                    id: id.to_string(),
                    state: state.to_string(),
                    ce_id: ce_id.to_string(),
                });
            }
        }
        if provenance.exit_status != 0 {
            return Err(VdcError::TypeMismatch(
                "completion reports must carry exit_status 0".into(),
            ));
        }
        if provenance.finished < provenance.started {
            return Err(VdcError::TypeMismatch(
                "provenance finished before it started".into(),
            ));
        }
        planner::transition(DerivationState::Claimed, LifecycleEvent::Complete)?;
        let site = claim_site.expect("checked above");
        let replica = self.replica_for(id, &site);
        self.commit(Event::DerivationCompleted { id: *id, provenance, replica })?;
        Ok(CompletionOutcome { accepted: true, non_determinism: false })
    }

    fn replica_for(&self, id: &ObjectId, site: &str) -> Replica {
        Replica {
            object_id: *id,
            site: site.to_string(),
            uri: format!("site://{site}/{id}"),
            registered_at: Utc::now(),
        }
    }

    pub fn fail_derivation(
        &mut self,
        id: &ObjectId,
        ce_id: &str,
        reason: &str,
    ) -> Result<DerivationState, VdcError> {
        let derivation = self
            .state
            .derivations
            .get(id)
            .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
        let is_claimant = derivation
            .claim
            .as_ref()
            .map_or(false, |c| c.ce_id == ce_id);
        if derivation.state != DerivationState::Claimed || !is_claimant {
            return Err(VdcError::NotClaimant(ce_id.to_string(), id.to_string()));
        }
        let exhausted = derivation.attempts >= self.planner.max_attempts;
        let next = planner::transition(
            derivation.state,
            LifecycleEvent::Fail { attempts_exhausted: exhausted },
        )?;
        self.commit(Event::DerivationFailed {
            id: *id,
            ce_id: ce_id.to_string(),
            reason: reason.to_string(),
            terminal: exhausted,
        })?;
        Ok(next)
    }

    pub fn retry_derivation(&mut self, id: &ObjectId) -> Result<(), VdcError> {
        let derivation = self
            .state
            .derivations
            .get(id)
            .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
        planner::transition(derivation.state, LifecycleEvent::Retry)?;
        self.commit(Event::DerivationRetried { id: *id })?;
        Ok(())
    }

    /// Timeout sweep: every claim older than `claim_timeout` is re-queued
    /// (attempts kept); derivations out of attempts fail permanently.
    /// Returns the re-queued ids.
    pub fn gc_sweep(&mut self, now: i64) -> Result<Vec<ObjectId>, VdcError> {
        let mut requeued = Vec::new();
        let mut failed = Vec::new();
        for id in self.state.claimed.iter() {
            let d = &self.state.derivations[id];
            let claim = d.claim.as_ref().expect("claimed derivation has a claim");
            if now - claim.claimed_at > self.planner.claim_timeout {
                if d.attempts >= self.planner.max_attempts {
                    failed.push(*id);
                } else {
                    requeued.push(*id);
                }
            }
        }
        if requeued.is_empty() && failed.is_empty() {
            return Ok(Vec::new());
        }
        self.commit(Event::GcSweep { now, requeued: requeued.clone(), failed })?;
        Ok(requeued)
    }

    pub fn plan_materialization(
        &self,
        target: &ObjectId,
    ) -> Result<MaterializationPlan, VdcError> {
        planner::plan_materialization(&self.state, target)
    }

    // ---- views -----------------------------------------------------------------

    pub fn derivation(&self, id: &ObjectId) -> Option<&Derivation> {
        self.state.derivations.get(id)
    }

    pub fn derivations_of(&self, dataset: &str, version: u32) -> Option<Vec<&Derivation>> {
        self.state.outputs_of(dataset, version).map(|ids| {
            ids.iter()
                .map(|id| &self.state.derivations[id])
                .collect()
        })
    }

    pub fn status(&self) -> Status {
        let s = &self.state;
        Status {
            transformations: s.transformations.values().map(|v| v.len() as u64).sum(),
            invocations: s.derivations.len() as u64,
            compute_elements: s.ces_seen.len() as u64,
            network_domains: s.domains_seen.len() as u64,
            countries: s.countries_seen.len() as u64,
            datasets: s.datasets.values().map(|v| v.len() as u64).sum(),
            replicas: s.replicas.values().map(|v| v.len() as u64).sum(),
            non_determinism_incidents: s.incidents.len() as u64,
            derivations: s.state_counts(),
        }
    }

    pub fn instantiate_bound(
        &self,
        derivation: &Derivation,
        site: &str,
    ) -> Result<String, VdcError> {
        let recipe = self
            .state
            .site_recipe(site)
            .ok_or_else(|| VdcError::UnknownSite(site.to_string()))?
            .clone();
        self.instantiate_for_site(derivation, &recipe)
    }

    /// Merged bindings a given dataset would produce, exposed for tooling.
    pub fn expand_preview(
        &self,
        dataset: &Dataset,
    ) -> Result<Vec<crate::state::PartitionExpansion>, VdcError> {
        self.state.expand_dataset(dataset)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub transformations: u64,
    pub invocations: u64,
    pub compute_elements: u64,
    pub network_domains: u64,
    pub countries: u64,
    pub datasets: u64,
    pub replicas: u64,
    pub non_determinism_incidents: u64,
    pub derivations: crate::state::StateCounts,
}

// Convenience re-export so callers can name merged bindings cheaply.
pub type Bindings = BTreeMap<String, ParamValue>;
