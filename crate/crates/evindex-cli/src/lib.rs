//! Benchmark harness around the evindex toolkit: synthetic dataset
//! generation, canned selection scenarios over the three access paths
//! (sequential, event directory, tag database), and report rendering.

pub mod cpu;
pub mod dataset;
pub mod report;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("unknown report format {0:?} (expected table, csv, or plotdata)")]
    UnknownFormat(String),
    #[error("nothing to report")]
    EmptyReport,
    #[error(transparent)]
    Store(#[from] evindex::store::StoreError),
    #[error(transparent)]
    Directory(#[from] evindex::directory::DirectoryError),
    #[error(transparent)]
    Fetch(#[from] evindex::directory::FetchError),
    #[error(transparent)]
    TagFetch(#[from] evindex::tagdb::TagFetchError),
    #[error(transparent)]
    TagDb(#[from] evindex::tagdb::TagDbError),
    #[error(transparent)]
    Query(#[from] evindex::query::QueryError),
    #[error(transparent)]
    Filestore(#[from] evindex::filestore::FilestoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
