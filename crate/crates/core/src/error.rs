use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("zero coincidence probability for setting {setting:?}")]
    DegeneratePostselection { setting: Vec<usize> },

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("unknown inequality `{0}`")]
    UnknownInequality(String),

    #[error("inequality `{name}` is not defined for {parties} parties")]
    InvalidPartyCount { name: String, parties: usize },

    #[error("invalid functional: {0}")]
    InvalidFunctional(String),

    #[error("search space of {cardinality} strategies exceeds the enumeration limit")]
    SearchSpaceTooLarge { cardinality: u128 },

    #[error("no threshold: {0}")]
    NoThreshold(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("{count} particles at detector {party} have no configured response")]
    UnsupportedMultiplicity { party: usize, count: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("graph has {nodes} nodes after latent expansion, limit is {limit}")]
    GraphTooLarge { nodes: usize, limit: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal a well-formed request without a solution
    /// (as opposed to malformed input).
    pub fn is_no_solution(&self) -> bool {
        matches!(self, Error::NoThreshold(_) | Error::NoSolution(_))
    }
}
