use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node index {node} out of range for {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("hyperedge {0} is empty")]
    EmptyHyperedge(usize),
    #[error("hyperedge {0} contains a repeated node")]
    RepeatedNode(usize),
    #[error("hyperedges {0} and {1} are identical")]
    DuplicateHyperedge(usize, usize),
    #[error("edge ({left}, {right}) out of range")]
    EdgeOutOfRange { left: usize, right: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("budget of left node {0} must be at least 1")]
    ZeroBudget(usize),
    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("node {0} appears in more than one part")]
    OverlappingParts(usize),
    #[error("part {0} does not induce a connected subgraph")]
    DisconnectedPart(usize),
    #[error("expansion factor {factor} at index {index} outside [1, {max}]")]
    InvalidExpansion { index: usize, factor: usize, max: usize },
    #[error("budget {budget} cannot be split across {children} children")]
    BudgetTooSmall { budget: usize, children: usize },
    #[error("split fractions of group {group} sum to {sum}")]
    SplitNotNormalized { group: usize, sum: f64 },
    #[error("sibling group of size {0} exceeds the supported size")]
    GroupTooLarge(usize),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("time {0} too close to 1 for the velocity parameterization")]
    TerminalTime(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown graph id {0}")]
    UnknownGraph(usize),
    #[error("unknown {what}: {name}")]
    UnknownKind { what: &'static str, name: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable snake_case identifier of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NodeOutOfRange { .. } => "node_out_of_range",
            Error::EmptyHyperedge(_) => "empty_hyperedge",
            Error::RepeatedNode(_) => "repeated_node",
            Error::DuplicateHyperedge(..) => "duplicate_hyperedge",
            Error::EdgeOutOfRange { .. } => "edge_out_of_range",
            Error::DuplicateEdge(..) => "duplicate_edge",
            Error::ZeroBudget(_) => "zero_budget",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotAdjacent(..) => "not_adjacent",
            Error::OverlappingParts(_) => "overlapping_parts",
            Error::DisconnectedPart(_) => "disconnected_part",
            Error::InvalidExpansion { .. } => "invalid_expansion",
            Error::BudgetTooSmall { .. } => "budget_too_small",
            Error::SplitNotNormalized { .. } => "split_not_normalized",
            Error::GroupTooLarge(_) => "group_too_large",
            Error::InvalidProbability(_) => "invalid_probability",
            Error::TerminalTime(_) => "terminal_time",
            Error::Empty(_) => "empty",
            Error::NonFinite(_) => "non_finite",
            Error::UnknownGraph(_) => "unknown_graph",
            Error::UnknownKind { .. } => "unknown_kind",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
