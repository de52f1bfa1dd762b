use thiserror::Error;

/// Errors raised while building pools or evaluating metrics.
///
/// Server and class identifiers carried by the variants are the 1-based ids
/// used in model documents.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("server {server}: service rate must be a finite positive number, got {mu}")]
    NonPositiveServiceRate { server: usize, mu: f64 },

    #[error("class {class}: arrival rate must be a finite nonnegative number, got {lambda}")]
    NegativeArrivalRate { class: usize, lambda: f64 },

    #[error("class {class}: empty server set")]
    EmptyServerSet { class: usize },

    #[error("class {class}: references undeclared server {server}")]
    UnknownServerReference { class: usize, server: usize },

    #[error("ids must be unique and contiguous from 1: {0}")]
    InvalidIds(String),

    #[error("unknown server {0}")]
    UnknownServer(usize),

    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("{servers} servers exceed the subset-enumeration cap of {cap}")]
    TooManyServers { servers: usize, cap: usize },

    #[error("unstable model: servers {witness:?} cannot absorb the traffic confined to them")]
    UnstableModel { witness: Vec<usize> },

    #[error("overloaded: {0}")]
    Overloaded(String),

    #[error("expansion needs {classes} classes, above the limit of {limit}")]
    ExpansionTooLarge { classes: f64, limit: usize },

    #[error("group table needs {entries} entries, above the limit of {limit}")]
    TooManyGroups { entries: f64, limit: usize },

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("level ratio {ratio} is not below 1; raise the truncation level")]
    TailNotGeometric { ratio: f64 },

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
