//! Derivation lifecycle transitions and replica-aware materialization
//! planning.
//!
//! The whole lifecycle lives in [`transition`]; the service never mutates a
//! derivation's state except through it, which is what makes the state
//! machine model-checkable by exhaustive enumeration.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::VdcError;
use crate::identity::ObjectId;
use crate::state::CatalogState;
use crate::types::{DerivationState, MaterializationPlan};

/// Everything that can happen to a derivation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LifecycleEvent {
    Claim,
    Complete,
    /// Explicit failure report; re-queued until the attempt cap is hit.
    Fail { attempts_exhausted: bool },
    /// Claim outlived the timeout and was swept.
    Timeout { attempts_exhausted: bool },
    /// Operator retry of a permanently failed derivation.
    Retry,
}

/// The declared transition table. `Err` means the (state, event) pair is
/// not a legal transition and the triggering operation must be rejected.
pub fn transition(
    state: DerivationState,
    event: LifecycleEvent,
) -> Result<DerivationState, VdcError> {
    use DerivationState::*;
    use LifecycleEvent::*;
    match (state, event) {
        (Defined, Claim) => Ok(Claimed),
        (Claimed, Complete) => Ok(Completed),
        (Claimed, Fail { attempts_exhausted: false }) => Ok(Defined),
        (Claimed, Fail { attempts_exhausted: true }) => Ok(Failed),
        (Claimed, Timeout { attempts_exhausted: false }) => Ok(Defined),
        (Claimed, Timeout { attempts_exhausted: true }) => Ok(Failed),
        (Failed, Retry) => Ok(Defined),
        (state, event) => Err(VdcError::DomainViolation(format!(
            "illegal transition: {state} on {event:?}"
        ))),
    }
}

/// Build a materialization plan for `target`.
///
/// A node is satisfied when a replica of it exists; resolution stops
/// there. Unsatisfied nodes need their producing derivation, recursively.
/// Stages group derivations by longest-path depth so each stage only
/// depends on earlier stages and on pruned objects; within a stage,
/// ordering is by ObjectId bytes. `pruned` lists every ancestor of the
/// target that does not need to run.
pub fn plan_materialization(
    state: &CatalogState,
    target: &ObjectId,
) -> Result<MaterializationPlan, VdcError> {
    if !state.derivations.contains_key(target) && !state.is_satisfied(target) {
        return Err(VdcError::UnknownObject(target.to_string()));
    }

    // depth of each derivation that must run; None while on the DFS stack
    let mut depth: BTreeMap<ObjectId, Option<u32>> = BTreeMap::new();
    // satisfied nodes where resolution stopped
    let mut frontier: BTreeSet<ObjectId> = BTreeSet::new();

    fn visit(
        state: &CatalogState,
        id: &ObjectId,
        depth: &mut BTreeMap<ObjectId, Option<u32>>,
        frontier: &mut BTreeSet<ObjectId>,
    ) -> Result<Option<u32>, VdcError> {
        if state.is_satisfied(id) {
            frontier.insert(*id);
            return Ok(None);
        }
        if let Some(entry) = depth.get(id) {
            return match entry {
                Some(d) => Ok(Some(*d)),
                None => Err(VdcError::CycleDetected(id.to_string())),
            };
        }
        let derivation = state
            .derivations
            .get(id)
            .ok_or_else(|| VdcError::UnknownObject(id.to_string()))?;
        depth.insert(*id, None);
        let mut level = 0u32;
        for input in derivation.input_ids.clone() {
            if let Some(d) = visit(state, &input, depth, frontier)? {
                level = level.max(d + 1);
            }
        }
        depth.insert(*id, Some(level));
        Ok(Some(level))
    }

    visit(state, target, &mut depth, &mut frontier)?;

    // a satisfied node cuts off everything above it; those ancestors are
    // reported as pruned rather than silently omitted — unless another,
    // unsatisfied path made them part of the plan
    let mut pruned: BTreeSet<ObjectId> = BTreeSet::new();
    let mut stack: Vec<ObjectId> = frontier.into_iter().collect();
    while let Some(id) = stack.pop() {
        if depth.contains_key(&id) || !pruned.insert(id) {
            continue;
        }
        if let Some(derivation) = state.derivations.get(&id) {
            stack.extend(derivation.input_ids.iter().copied());
        }
    }

    let mut stages: Vec<Vec<ObjectId>> = Vec::new();
    for (id, level) in &depth {
        let level = level.expect("dfs completed") as usize;
        while stages.len() <= level {
            stages.push(Vec::new());
        }
        stages[level].push(*id);
    }
    // BTreeMap iteration already yields ObjectId byte order within a stage
    Ok(MaterializationPlan {
        target: *target,
        stages,
        pruned: pruned.into_iter().collect(),
    })
}
