use thiserror::Error;

use crate::graph::Vertex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyEdgeList,

    #[error("line {line}: self-loop at vertex `{vertex}`")]
    SelfLoop { line: usize, vertex: String },

    #[error("line {line}: expected two vertex tokens, found {found}")]
    MalformedEdge { line: usize, found: usize },

    #[error("graph is disconnected: `{vertex}` is unreachable from the base vertex")]
    Disconnected { vertex: String },

    #[error("invalid graph family: {0}")]
    InvalidFamily(String),

    #[error("vertex `{0}` does not belong to the graph")]
    UnknownVertex(String),

    #[error("ball radius must be at least 1, got {0}")]
    InvalidRadius(usize),

    #[error("vertex set must be nonempty")]
    EmptySet,

    #[error("`{0}` is unreachable within the exploration budget")]
    Unreachable(String),

    #[error("exponent must be a finite real greater than 1, got {0}")]
    InvalidExponent(f64),

    #[error("field undefined at vertex {0}")]
    Undefined(Vertex),

    #[error("field value at {vertex} is not finite")]
    NonFinite { vertex: Vertex },

    #[error("base vertex {0} is not valued by the field")]
    BaseUnvalued(Vertex),

    #[error("Dirichlet problem needs boundary")]
    NoBoundary,

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("solver did not converge: residual {residual:.3e} after {sweeps} sweeps")]
    NotConverged { residual: f64, sweeps: usize },

    #[error("set {0} is not contained in the interior of the ball")]
    OutsideBall(Vertex),

    #[error("capacity sequence is not monotone: {0}")]
    NotMonotone(String),

    #[error("field value {value} at {vertex} lies outside the declared bound [{lo}, {hi}]")]
    OutOfBounds { vertex: Vertex, value: f64, lo: f64, hi: f64 },

    #[error("window must lie inside the smallest ball: {0}")]
    WindowTooLarge(String),

    #[error("set is finite or misses the sphere of radius {0}")]
    FiniteSet(usize),

    #[error("end partition failed at vertex {0}")]
    Partition(Vertex),

    #[error("{0}")]
    Config(String),
}
