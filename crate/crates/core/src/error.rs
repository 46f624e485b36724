use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid machine: {0}")]
    InvalidMachine(String),
    #[error("fleet must contain at least one machine")]
    EmptyFleet,
    #[error("slot duration must be > 0 hours, got {0}")]
    InvalidSlotHours(f64),
    #[error("demand profile must cover at least one slot")]
    EmptyDemand,
    #[error("demand at t={t} must be finite and >= 0, got {value}")]
    NegativeDemand { t: usize, value: f64 },
    #[error("power of machine {machine} at t={t} must be finite and >= 0, got {value}")]
    NegativePower { machine: usize, t: usize, value: f64 },
    #[error("schedule rows must be non-empty and of equal length")]
    RaggedSchedule,
    #[error("dimension mismatch: expected {expected:?} (machines, slots), found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("fmax of machine {machine} rises at t={t}")]
    IncreasingFmax { machine: usize, t: usize },
    #[error("fmax recurrence needs non-negative inputs, got fmax={prev_fmax}, f={prev_f}")]
    NegativeInput { prev_fmax: f64, prev_f: f64 },
    #[error("fmax parameters must lie in [0, 1], got mu={mu}, upsilon={upsilon}")]
    InvalidFmaxParams { mu: f64, upsilon: f64 },
    #[error("demand level must be > 0, got {0}")]
    NonPositiveDemand(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("non-finite gradient at machine {machine}, t={t} (iteration {iteration})")]
    NonFiniteGradient {
        machine: usize,
        t: usize,
        iteration: usize,
    },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("oracle supports at most {max_machines} machines and {max_levels} levels, got m={machines}, levels={levels}")]
    Unsupported {
        machines: usize,
        levels: usize,
        max_machines: usize,
        max_levels: usize,
    },
    #[error("search space too large: about {estimate:.3e} states (limit {limit:.0e})")]
    SearchSpaceTooLarge { estimate: f64, limit: f64 },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
}
