use thiserror::Error;

/// Every error the catalogs, planner, and server surface. The HTTP layer
/// maps these onto status codes via [`VdcError::kind`].
#[derive(Debug, Error)]
pub enum VdcError {
    // schema / template validation
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema and template disagree: {0}")]
    SchemaTemplateMismatch(String),
    #[error("bad placeholder at byte {position}: {detail}")]
    BadPlaceholder { position: usize, detail: String },
    #[error("unterminated placeholder starting at byte {0}")]
    UnterminatedPlaceholder(usize),
    #[error("unbound placeholders: {0:?}")]
    UnboundPlaceholder(Vec<String>),

    // catalog registration
    #[error("transformation {0} v{1} already registered")]
    DuplicateVersion(String, u32),
    #[error("recipe {0} already registered")]
    DuplicateName(String),
    #[error("recipe has no bindings")]
    EmptyBindings,
    #[error("replica already registered: {0}")]
    DuplicateReplica(String),

    // dataset composition
    #[error("unknown reference: {0}")]
    UnknownReference(String),
    #[error("recipe {0} is not validated")]
    UnvalidatedRecipe(String),
    #[error("required parameters unbound: {0:?}")]
    IncompleteBindings(Vec<String>),
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("dataset must have at least one partition")]
    ZeroPartitions,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("pipeline step mismatch: {0}")]
    StepMismatch(String),
    #[error("partition count mismatch: {0}")]
    PartitionMismatch(String),
    #[error("dataset {0} v{1} already composed with different content")]
    DatasetConflict(String, u32),
    #[error("partition seed overflows signed 64-bit range")]
    SeedOverflow,

    // identity
    #[error("value cannot be canonically encoded: {0}")]
    UnencodableValue(String),
    #[error("parameter {0} is not in the REPRO domain")]
    NonReproParam(String),
    #[error("malformed object id: {0}")]
    BadObjectId(String),

    // planner
    #[error("no SITE recipe registered for site {0}")]
    UnknownSite(String),
    #[error("unknown derivation: {0}")]
    UnknownDerivation(String),
    #[error("completion without a claim: derivation {id} is {state}, reporter {ce_id}")]
    CompleteWithoutClaim {
        id: String,
        state: String,
        ce_id: String,
    },
    #[error("compute element {0} is not a claimant of derivation {1}")]
    NotClaimant(String, String),
    #[error("unknown object: {0}")]
    UnknownObject(String),
    #[error("dependency cycle detected at {0}")]
    CycleDetected(String),
    #[error("unknown dataset: {0}")]
    UnknownDataset(String),

    // journal / persistence
    #[error("corrupt journal record at line {line}: {detail}")]
    CorruptRecord { line: usize, detail: String },
    #[error("journal i/o: {0}")]
    Journal(#[from] std::io::Error),

    // remote operation (clients driving a server over the wire)
    #[error("remote call failed: {0}")]
    Remote(String),

    // simulation
    #[error("derivation has no integer `events` parameter")]
    MissingEventsParam,
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
}

/// Coarse classification used by the HTTP layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Internal,
}

impl VdcError {
    pub fn kind(&self) -> ErrorKind {
        use VdcError::*;
        match self {
            UnknownReference(_) | UnknownDerivation(_) | UnknownObject(_) | UnknownDataset(_)
            | UnknownSite(_) => ErrorKind::NotFound,
            DuplicateVersion(_, _) | DuplicateName(_) | DuplicateReplica(_)
            | DatasetConflict(_, _) | CompleteWithoutClaim { .. } | NotClaimant(_, _) => {
                ErrorKind::Conflict
            }
            CorruptRecord { .. } | Journal(_) | Remote(_) => ErrorKind::Internal,
            _ => ErrorKind::Validation,
        }
    }

    /// Stable machine-readable tag for wire error bodies.
    pub fn tag(&self) -> &'static str {
        use VdcError::*;
        match self {
            InvalidSchema(_) => "InvalidSchema",
            SchemaTemplateMismatch(_) => "SchemaTemplateMismatch",
            BadPlaceholder { .. } => "BadPlaceholder",
            UnterminatedPlaceholder(_) => "UnterminatedPlaceholder",
            UnboundPlaceholder(_) => "UnboundPlaceholder",
            DuplicateVersion(_, _) => "DuplicateVersion",
            DuplicateName(_) => "DuplicateName",
            EmptyBindings => "EmptyBindings",
            DuplicateReplica(_) => "DuplicateReplica",
            UnknownReference(_) => "UnknownReference",
            UnvalidatedRecipe(_) => "UnvalidatedRecipe",
            IncompleteBindings(_) => "IncompleteBindings",
            DomainViolation(_) => "DomainViolation",
            ZeroPartitions => "ZeroPartitions",
            TypeMismatch(_) => "TypeMismatch",
            StepMismatch(_) => "StepMismatch",
            PartitionMismatch(_) => "PartitionMismatch",
            DatasetConflict(_, _) => "DatasetConflict",
            SeedOverflow => "SeedOverflow",
            UnencodableValue(_) => "UnencodableValue",
            NonReproParam(_) => "NonReproParam",
            BadObjectId(_) => "BadObjectId",
            UnknownSite(_) => "UnknownSite",
            UnknownDerivation(_) => "UnknownDerivation",
            CompleteWithoutClaim { .. } => "CompleteWithoutClaim",
            NotClaimant(_, _) => "NotClaimant",
            UnknownObject(_) => "UnknownObject",
            CycleDetected(_) => "CycleDetected",
            UnknownDataset(_) => "UnknownDataset",
            CorruptRecord { .. } => "CorruptRecord",
            Journal(_) => "Journal",
            Remote(_) => "Remote",
            MissingEventsParam => "MissingEventsParam",
            InvalidSimConfig(_) => "InvalidSimConfig",
        }
    }
}
