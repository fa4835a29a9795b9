//! Core library for a virtual-data production system: content-addressed
//! derivation identities, recipe templating, a journaled catalog, the
//! derivation lifecycle planner, and a deterministic grid simulation.

pub mod api;
pub mod error;
pub mod identity;
pub mod journal;
pub mod planner;
pub mod service;
pub mod sim;
pub mod state;
pub mod template;
pub mod types;

pub use error::{ErrorKind, VdcError};
pub use identity::{canonical_encode, derivation_output_id, sha256, CanonValue, ObjectId};
pub use journal::{Event, Journal, Record};
pub use planner::{plan_materialization, transition, LifecycleEvent};
pub use service::{CompletionOutcome, ComposeOutcome, Service, Status};
pub use sim::{run_simulation, run_simulation_on, CompleteStatus, SimBackend, SimConfig, SimReport};
pub use state::{CatalogState, ReprocessOutcome, StateCounts};
pub use template::{instantiate, parse_template, RecipeTemplate};
pub use types::*;
