//! The in-memory catalog state and its event-application logic. All
//! mutation flows through [`CatalogState::apply`], which is deterministic:
//! replaying the same journal always reconstructs the same state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::identity::{derivation_output_id, ObjectId};
use crate::journal::Event;
use crate::types::*;

/// One partition of a dataset expansion: fully bound parameters, resolved
/// input objects, and the output identity they imply.
#[derive(Clone, Debug)]
pub struct PartitionExpansion {
    pub partition_index: u32,
    pub bound: DomainBindings,
    pub input_ids: Vec<ObjectId>,
    pub output_id: ObjectId,
}

/// What applying an event produced, where the caller needs more than Ok.
#[derive(Clone, Debug, Default)]
pub struct ApplyEffect {
    pub created: Vec<ObjectId>,
    pub linked: Vec<ObjectId>,
    pub requeued: Vec<ObjectId>,
    pub reprocess: Option<ReprocessOutcome>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReprocessOutcome {
    pub new_version: u32,
    pub invalidated: Vec<ObjectId>,
    pub reused: Vec<ObjectId>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CatalogState {
    pub transformations: BTreeMap<String, BTreeMap<u32, Transformation>>,
    pub recipes: BTreeMap<String, Recipe>,
    pub datasets: BTreeMap<String, BTreeMap<u32, Dataset>>,
    /// Per-partition output ids for every composed dataset version.
    pub dataset_outputs: BTreeMap<String, BTreeMap<u32, Vec<ObjectId>>>,
    pub derivations: BTreeMap<ObjectId, Derivation>,
    /// DEFINED derivations whose inputs are all satisfied, in claim order.
    pub ready: BTreeSet<(u64, ObjectId)>,
    /// DEFINED derivations still waiting on at least one input.
    pub waiting: BTreeSet<(u64, ObjectId)>,
    pub claimed: BTreeSet<ObjectId>,
    /// input object id -> derivations that consume it.
    pub dependents: BTreeMap<ObjectId, BTreeSet<ObjectId>>,
    pub replicas: BTreeMap<ObjectId, Vec<Replica>>,
    /// Explicit site -> SITE recipe bindings. A validated SITE recipe named
    /// `site.<site>` also serves as the binding for `<site>`.
    pub site_recipes: BTreeMap<String, String>,
    pub incidents: Vec<NonDeterminismIncident>,
    pub ces_seen: BTreeSet<String>,
    pub domains_seen: BTreeSet<String>,
    pub countries_seen: BTreeSet<String>,
    pub last_seq: u64,
    pub created_counter: u64,
}

impl CatalogState {
    pub fn latest_tx_version(&self, name: &str) -> Option<u32> {
        self.transformations
            .get(name)
            .and_then(|m| m.keys().next_back().copied())
    }

    pub fn transformation(&self, name: &str, version: u32) -> Option<&Transformation> {
        self.transformations.get(name).and_then(|m| m.get(&version))
    }

    pub fn latest_dataset_version(&self, name: &str) -> Option<u32> {
        self.datasets
            .get(name)
            .and_then(|m| m.keys().next_back().copied())
    }

    pub fn dataset(&self, name: &str, version: u32) -> Option<&Dataset> {
        self.datasets.get(name).and_then(|m| m.get(&version))
    }

    pub fn outputs_of(&self, name: &str, version: u32) -> Option<&Vec<ObjectId>> {
        self.dataset_outputs.get(name).and_then(|m| m.get(&version))
    }

    /// An object is satisfied when at least one replica exists for it.
    /// Completion always registers a replica, so completed derivations with
    /// intact outputs are covered; a completed derivation whose replicas
    /// were all lost must be re-executed.
    pub fn is_satisfied(&self, id: &ObjectId) -> bool {
        self.replicas.get(id).map_or(false, |v| !v.is_empty())
    }

    fn inputs_satisfied(&self, d: &Derivation) -> bool {
        d.input_ids.iter().all(|id| self.is_satisfied(id))
    }

    /// Resolve the SITE recipe for a site: explicit binding first, then the
    /// `site.<name>` naming convention.
    pub fn site_recipe(&self, site: &str) -> Option<&Recipe> {
        let name = self
            .site_recipes
            .get(site)
            .cloned()
            .unwrap_or_else(|| format!("site.{site}"));
        self.recipes
            .get(&name)
            .filter(|r| r.domain == ParamDomain::Site && r.validated)
    }

    // ---- dataset expansion -------------------------------------------------

    /// Validate a dataset against the catalogs and expand it into one
    /// partition plan per partition. Read-only; both the pre-commit check
    /// and event application go through this.
    pub fn expand_dataset(&self, ds: &Dataset) -> Result<Vec<PartitionExpansion>, VdcError> {
        if ds.partitions == 0 {
            return Err(VdcError::ZeroPartitions);
        }
        if ds.version == 0 {
            return Err(VdcError::InvalidSchema("dataset version must be positive".into()));
        }
        let tx = self
            .transformation(&ds.transformation.name, ds.transformation.version)
            .ok_or_else(|| VdcError::UnknownReference(format!("transformation {}", ds.transformation)))?;

        if let Some(existing) = self.dataset(&ds.name, ds.version) {
            if existing != ds {
                return Err(VdcError::DatasetConflict(ds.name.clone(), ds.version));
            }
        }

        // defaults <- recipes <- overrides
        let mut merged: BTreeMap<String, ParamValue> = BTreeMap::new();
        for entry in &tx.schema.entries {
            if let Some(default) = &entry.default {
                merged.insert(entry.name.clone(), default.coerce(entry.ptype));
            }
        }
        for (slot_domain, recipe_name) in ds.recipes.iter() {
            let recipe = self
                .recipes
                .get(recipe_name)
                .ok_or_else(|| VdcError::UnknownReference(format!("recipe {recipe_name}")))?;
            if !recipe.validated {
                return Err(VdcError::UnvalidatedRecipe(recipe_name.clone()));
            }
            if recipe.domain != slot_domain {
                return Err(VdcError::DomainViolation(format!(
                    "recipe {recipe_name} has domain {} but fills the {} slot",
                    recipe.domain, slot_domain
                )));
            }
            for (name, value) in &recipe.bindings {
                if is_builtin_repro(name) {
                    return Err(VdcError::DomainViolation(format!(
                        "recipe {recipe_name} binds builtin parameter {name}"
                    )));
                }
                let entry = tx.schema.entry(name).ok_or_else(|| {
                    VdcError::DomainViolation(format!(
                        "recipe {recipe_name} binds {name}, which is not in the schema of {}",
                        tx.tx_ref()
                    ))
                })?;
                if entry.domain != recipe.domain {
                    return Err(VdcError::DomainViolation(format!(
                        "recipe {recipe_name} ({}) binds {name}, a {} parameter",
                        recipe.domain, entry.domain
                    )));
                }
                if !value.matches(entry.ptype) {
                    return Err(VdcError::TypeMismatch(format!(
                        "recipe {recipe_name} binds {name} with the wrong type"
                    )));
                }
                merged.insert(name.clone(), value.coerce(entry.ptype));
            }
        }
        for (name, value) in &ds.overrides {
            if is_builtin_repro(name) {
                return Err(VdcError::DomainViolation(format!(
                    "override binds builtin parameter {name}"
                )));
            }
            let entry = tx.schema.entry(name).ok_or_else(|| {
                VdcError::UnknownReference(format!("override parameter {name} not in schema"))
            })?;
            if !value.matches(entry.ptype) {
                return Err(VdcError::TypeMismatch(format!(
                    "override for {name} has the wrong type"
                )));
            }
            merged.insert(name.clone(), value.coerce(entry.ptype));
        }

        let missing: Vec<String> = tx
            .schema
            .entries
            .iter()
            .filter(|e| e.required && !merged.contains_key(&e.name))
            .map(|e| e.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(VdcError::IncompleteBindings(missing));
        }

        // resolve input slots positionally, in the order the
        // transformation declares them
        let mut inputs_per_partition: Vec<Vec<ObjectId>> =
            vec![Vec::with_capacity(tx.inputs.len()); ds.partitions as usize];
        for slot in &tx.inputs {
            let bound = ds
                .inputs
                .iter()
                .find(|i| i.slot == slot.slot)
                .ok_or_else(|| {
                    VdcError::IncompleteBindings(vec![format!("input slot {}", slot.slot)])
                })?;
            let upstream_ds = self.dataset(&bound.dataset, bound.version).ok_or_else(|| {
                VdcError::UnknownReference(format!("dataset {} v{}", bound.dataset, bound.version))
            })?;
            let upstream_tx = self
                .transformation(&upstream_ds.transformation.name, upstream_ds.transformation.version)
                .ok_or_else(|| {
                    VdcError::UnknownReference(format!(
                        "transformation {}",
                        upstream_ds.transformation
                    ))
                })?;
            if upstream_tx.step != slot.step {
                return Err(VdcError::StepMismatch(format!(
                    "slot {} expects step {:?} but dataset {} produces {:?}",
                    slot.slot, slot.step, bound.dataset, upstream_tx.step
                )));
            }
            let outputs = self.outputs_of(&bound.dataset, bound.version).ok_or_else(|| {
                VdcError::UnknownReference(format!(
                    "dataset {} v{} has not been composed",
                    bound.dataset, bound.version
                ))
            })?;
            if outputs.len() != ds.partitions as usize {
                return Err(VdcError::PartitionMismatch(format!(
                    "dataset {} has {} partitions but upstream {} has {}",
                    ds.name,
                    ds.partitions,
                    bound.dataset,
                    outputs.len()
                )));
            }
            for (i, output) in outputs.iter().enumerate() {
                inputs_per_partition[i].push(*output);
            }
        }
        for extra in &ds.inputs {
            if !tx.inputs.iter().any(|s| s.slot == extra.slot) {
                return Err(VdcError::UnknownReference(format!(
                    "input slot {} is not declared by {}",
                    extra.slot,
                    tx.tx_ref()
                )));
            }
        }

        let mut expansions = Vec::with_capacity(ds.partitions as usize);
        for i in 0..ds.partitions {
            let seed = ds
                .base_seed
                .checked_add(
                    (i as i64)
                        .checked_mul(ds.seed_stride)
                        .ok_or(VdcError::SeedOverflow)?,
                )
                .ok_or(VdcError::SeedOverflow)?;
            let mut bound = DomainBindings::default();
            for entry in &tx.schema.entries {
                if let Some(v) = merged.get(&entry.name) {
                    let target = match entry.domain {
                        ParamDomain::Repro => &mut bound.repro,
                        ParamDomain::App => &mut bound.app,
                        ParamDomain::Site => &mut bound.site,
                    };
                    target.insert(entry.name.clone(), v.clone());
                }
            }
            bound
                .repro
                .insert("partition_index".to_string(), ParamValue::Int(i as i64));
            bound
                .repro
                .insert("random_seed".to_string(), ParamValue::Int(seed));
            let input_ids = inputs_per_partition[i as usize].clone();
            let output_id = derivation_output_id(tx, &bound.repro, &input_ids)?;
            expansions.push(PartitionExpansion {
                partition_index: i,
                bound,
                input_ids,
                output_id,
            });
        }
        Ok(expansions)
    }

    // ---- event application -------------------------------------------------

    pub fn apply(&mut self, event: &Event) -> Result<ApplyEffect, VdcError> {
        let mut effect = ApplyEffect::default();
        match event {
            Event::TransformationRegistered { transformation } => {
                self.transformations
                    .entry(transformation.name.clone())
                    .or_default()
                    .insert(transformation.version, transformation.clone());
            }
            Event::RecipeRegistered { recipe } => {
                self.recipes.insert(recipe.name.clone(), recipe.clone());
            }
            Event::RecipeValidated { name, note } => {
                if let Some(r) = self.recipes.get_mut(name) {
                    r.validated = true;
                    if !note.is_empty() {
                        r.note = note.clone();
                    }
                }
            }
            Event::SiteRecipeBound { site, recipe } => {
                self.site_recipes.insert(site.clone(), recipe.clone());
            }
            Event::DatasetComposed { dataset } => {
                let (created, linked) = self.compose_into(dataset)?;
                effect.created = created;
                effect.linked = linked;
            }
            Event::ReplicaRegistered { replica } => {
                self.insert_replica(replica.clone());
            }
            Event::ReplicasDropped { object_id } => {
                self.drop_replicas(object_id);
            }
            Event::DerivationClaimed { id, claim } => {
                self.ces_seen.insert(claim.ce_id.clone());
                let d = self
                    .derivations
                    .get_mut(id)
                    .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
                self.ready.remove(&(d.created_seq, *id));
                self.waiting.remove(&(d.created_seq, *id));
                self.claimed.insert(*id);
                d.state = DerivationState::Claimed;
                d.attempts += 1;
                d.claim = Some(claim.clone());
                d.claim_history.push(claim.clone());
            }
            Event::DerivationCompleted { id, provenance, replica } => {
                let d = self
                    .derivations
                    .get_mut(id)
                    .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
                d.state = DerivationState::Completed;
                d.provenance = Some(provenance.clone());
                d.claim = None;
                self.claimed.remove(id);
                self.domains_seen.insert(provenance.network_domain.clone());
                self.countries_seen.insert(provenance.country.clone());
                self.insert_replica(replica.clone());
            }
            Event::DerivationFailed { id, reason, terminal, .. } => {
                let d = self
                    .derivations
                    .get_mut(id)
                    .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
                d.claim = None;
                self.claimed.remove(id);
                if *terminal {
                    d.state = DerivationState::Failed;
                    d.fail_reason = Some(reason.clone());
                } else {
                    d.state = DerivationState::Defined;
                    self.requeue(*id);
                }
            }
            Event::DerivationRetried { id } => {
                let d = self
                    .derivations
                    .get_mut(id)
                    .ok_or_else(|| VdcError::UnknownDerivation(id.to_string()))?;
                d.state = DerivationState::Defined;
                d.fail_reason = None;
                d.attempts = 0;
                self.requeue(*id);
            }
            Event::GcSweep { requeued, failed, .. } => {
                for id in requeued {
                    if let Some(d) = self.derivations.get_mut(id) {
                        d.state = DerivationState::Defined;
                        d.claim = None;
                        self.claimed.remove(id);
                        self.requeue(*id);
                        effect.requeued.push(*id);
                    }
                }
                for id in failed {
                    if let Some(d) = self.derivations.get_mut(id) {
                        d.state = DerivationState::Failed;
                        d.claim = None;
                        d.fail_reason = Some("claim timeout with attempts exhausted".into());
                        self.claimed.remove(id);
                    }
                }
            }
            Event::DatasetReprocessed { dataset, recipe } => {
                effect.reprocess = Some(self.reprocess_into(dataset, recipe)?);
            }
            Event::NonDeterminismObserved { incident } => {
                self.incidents.push(incident.clone());
            }
        }
        Ok(effect)
    }

    fn requeue(&mut self, id: ObjectId) {
        let (seq, satisfied) = {
            let d = &self.derivations[&id];
            (d.created_seq, self.inputs_satisfied(d))
        };
        if satisfied {
            self.ready.insert((seq, id));
        } else {
            self.waiting.insert((seq, id));
        }
    }

    fn insert_replica(&mut self, replica: Replica) {
        let object_id = replica.object_id;
        let list = self.replicas.entry(object_id).or_default();
        let newly_satisfied = list.is_empty();
        if !list
            .iter()
            .any(|r| r.site == replica.site && r.uri == replica.uri)
        {
            list.push(replica);
        }
        if newly_satisfied {
            self.promote_dependents(&object_id);
        }
    }

    fn promote_dependents(&mut self, object_id: &ObjectId) {
        let deps: Vec<ObjectId> = self
            .dependents
            .get(object_id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        for dep in deps {
            let (seq, promote) = {
                let d = &self.derivations[&dep];
                (
                    d.created_seq,
                    d.state == DerivationState::Defined && self.inputs_satisfied(d),
                )
            };
            if promote && self.waiting.remove(&(seq, dep)) {
                self.ready.insert((seq, dep));
            }
        }
    }

    /// Drop every replica of an object. Dependents that were ready only
    /// because of those replicas go back to waiting.
    pub fn drop_replicas(&mut self, object_id: &ObjectId) -> usize {
        let dropped = self.replicas.remove(object_id).map_or(0, |v| v.len());
        if dropped > 0 {
            let deps: Vec<ObjectId> = self
                .dependents
                .get(object_id)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            for dep in deps {
                let seq = self.derivations[&dep].created_seq;
                if self.ready.remove(&(seq, dep)) {
                    self.waiting.insert((seq, dep));
                }
            }
        }
        dropped
    }

    fn compose_into(&mut self, ds: &Dataset) -> Result<(Vec<ObjectId>, Vec<ObjectId>), VdcError> {
        let expansions = self.expand_dataset(ds)?;
        let mut created = Vec::new();
        let mut linked = Vec::new();
        let mut outputs = Vec::with_capacity(expansions.len());
        for exp in expansions {
            outputs.push(exp.output_id);
            if self.derivations.contains_key(&exp.output_id) {
                // virtual-data memoization: this object already has a
                // producing derivation, link instead of recreating
                linked.push(exp.output_id);
                continue;
            }
            let seq = self.created_counter;
            self.created_counter += 1;
            let derivation = Derivation {
                id: exp.output_id,
                dataset: ds.ds_ref(),
                transformation: ds.transformation.clone(),
                bound: exp.bound,
                input_ids: exp.input_ids.clone(),
                output_id: exp.output_id,
                state: DerivationState::Defined,
                attempts: 0,
                claim: None,
                claim_history: Vec::new(),
                provenance: None,
                fail_reason: None,
                created_seq: seq,
            };
            for input in &exp.input_ids {
                self.dependents
                    .entry(*input)
                    .or_default()
                    .insert(exp.output_id);
            }
            let satisfied = exp.input_ids.iter().all(|id| self.is_satisfied(id));
            if satisfied {
                self.ready.insert((seq, exp.output_id));
            } else {
                self.waiting.insert((seq, exp.output_id));
            }
            self.derivations.insert(exp.output_id, derivation);
            created.push(exp.output_id);
        }
        self.datasets
            .entry(ds.name.clone())
            .or_default()
            .insert(ds.version, ds.clone());
        self.dataset_outputs
            .entry(ds.name.clone())
            .or_default()
            .insert(ds.version, outputs);
        Ok((created, linked))
    }

    /// Reprocessing: substitute a recipe in a dataset, recompute output
    /// identities, and transitively recreate downstream datasets whose
    /// consumed objects were invalidated.
    fn reprocess_into(
        &mut self,
        dataset_name: &str,
        recipe_name: &str,
    ) -> Result<ReprocessOutcome, VdcError> {
        let recipe_domain = self
            .recipes
            .get(recipe_name)
            .ok_or_else(|| VdcError::UnknownReference(format!("recipe {recipe_name}")))?
            .domain;

        let root_old = self
            .latest_dataset_version(dataset_name)
            .ok_or_else(|| VdcError::UnknownDataset(dataset_name.to_string()))?;
        let new_version = root_old + 1;

        let mut total_invalidated: BTreeSet<ObjectId> = BTreeSet::new();
        let mut total_reused: BTreeSet<ObjectId> = BTreeSet::new();
        // Work items: a dataset whose latest version must be superseded,
        // with the edit to perform. The new dataset is built at pop time so
        // a diamond (two invalidated parents feeding one consumer) simply
        // produces two successive bumps.
        enum Edit {
            SwapRecipe(ParamDomain, String),
            BumpInput { parent: String, old: u32, new: u32 },
        }
        let mut queue: VecDeque<(String, Edit)> = VecDeque::new();
        queue.push_back((
            dataset_name.to_string(),
            Edit::SwapRecipe(recipe_domain, recipe_name.to_string()),
        ));

        while let Some((name, edit)) = queue.pop_front() {
            let old_version = self
                .latest_dataset_version(&name)
                .ok_or_else(|| VdcError::UnknownDataset(name.clone()))?;
            let mut ds = self.dataset(&name, old_version).unwrap().clone();
            ds.version = old_version + 1;
            match &edit {
                Edit::SwapRecipe(domain, recipe) => ds.recipes.set(*domain, recipe.clone()),
                Edit::BumpInput { parent, old, new } => {
                    for input in &mut ds.inputs {
                        if &input.dataset == parent && input.version == *old {
                            input.version = *new;
                        }
                    }
                }
            }
            let old_outputs: BTreeSet<ObjectId> = self
                .outputs_of(&name, old_version)
                .map(|v| v.iter().copied().collect())
                .unwrap_or_default();
            self.compose_into(&ds)?;
            let new_outputs: BTreeSet<ObjectId> = self
                .outputs_of(&ds.name, ds.version)
                .map(|v| v.iter().copied().collect())
                .unwrap_or_default();
            let invalidated = old_outputs.difference(&new_outputs).count();
            total_invalidated.extend(old_outputs.difference(&new_outputs).copied());
            total_reused.extend(old_outputs.intersection(&new_outputs).copied());
            if invalidated == 0 {
                continue;
            }
            // every latest-version dataset consuming the superseded version
            // must follow it to the new version
            let consumers: Vec<String> = self
                .datasets
                .iter()
                .filter_map(|(consumer_name, versions)| {
                    let (_, ds_latest) = versions.iter().next_back()?;
                    ds_latest
                        .inputs
                        .iter()
                        .any(|i| i.dataset == name && i.version == old_version)
                        .then(|| consumer_name.clone())
                })
                .collect();
            for consumer in consumers {
                queue.push_back((
                    consumer,
                    Edit::BumpInput {
                        parent: name.clone(),
                        old: old_version,
                        new: ds.version,
                    },
                ));
            }
        }

        Ok(ReprocessOutcome {
            new_version,
            invalidated: total_invalidated.into_iter().collect(),
            reused: total_reused.into_iter().collect(),
        })
    }

    // ---- snapshots ----------------------------------------------------------

    /// Serialize the full state as a single JSON document. `through_seq`
    /// marks the last journal record reflected in it.
    pub fn snapshot_json(&self) -> Result<String, VdcError> {
        let doc = serde_json::json!({
            "through_seq": self.last_seq,
            "state": self,
        });
        serde_json::to_string(&doc).map_err(|e| VdcError::UnencodableValue(e.to_string()))
    }

    pub fn from_snapshot_json(doc: &str) -> Result<CatalogState, VdcError> {
        let value: serde_json::Value = serde_json::from_str(doc)
            .map_err(|e| VdcError::CorruptRecord { line: 1, detail: e.to_string() })?;
        let state = value
            .get("state")
            .ok_or_else(|| VdcError::CorruptRecord {
                line: 1,
                detail: "snapshot missing state".into(),
            })?;
        serde_json::from_value(state.clone())
            .map_err(|e| VdcError::CorruptRecord { line: 1, detail: e.to_string() })
    }

    // ---- derived views -------------------------------------------------------

    pub fn state_counts(&self) -> StateCounts {
        let mut counts = StateCounts::default();
        for d in self.derivations.values() {
            match d.state {
                DerivationState::Defined => counts.defined += 1,
                DerivationState::Claimed => counts.claimed += 1,
                DerivationState::Completed => counts.completed += 1,
                DerivationState::Failed => counts.failed += 1,
            }
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub defined: u64,
    pub claimed: u64,
    pub completed: u64,
    pub failed: u64,
}

impl StateCounts {
    pub fn outstanding(&self) -> u64 {
        self.defined + self.claimed
    }
}
