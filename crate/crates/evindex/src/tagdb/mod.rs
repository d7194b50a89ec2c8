//! The tag database: per-event records of 200+ physics variables plus all
//! trigger/selection bit groups, queryable by value without touching the
//! bulk event store.
//!
//! All tag records of one run live in one *container*; containers are
//! appended to size-capped database files; a text *catalog* maps runs to
//! containers and lists the database files and the schema. The catalog
//! plus its database files form a *federation* ([`Federation`]).
//!
//! Read handles are cheap and safely shareable across threads; ingest and
//! partial updates require an exclusive writable handle, and every
//! catalog change is a write-new-then-rename swap so a crash mid-ingest
//! leaves the previous catalog readable.

mod catalog;
mod derive;
mod federation;
mod record;
mod schema;

pub use derive::derive_tag;
pub use federation::{
    open_federation, ContainerRef, DbFileMeta, ExportTable, ExportValue, Federation, TagFetchError,
    TagHit,
};
pub use record::{TagRecord, TagRecordView, TagSource, TagValue};
pub use schema::{TagSchema, VarDescriptor, VarKind};

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Default cap on a database file's size: 200 MB.
pub const DEFAULT_SIZE_CAP: u64 = 200_000_000;

#[derive(Debug, Error)]
pub enum TagDbError {
    #[error("duplicate variable name {0:?}")]
    DuplicateVariable(String),
    #[error("invalid variable {name:?}: {msg}")]
    BadDescriptor { name: String, msg: String },
    #[error("bitgroup widths must be {expected:?} in order, got {got:?}")]
    BitgroupSizes { expected: Vec<u32>, got: Vec<u32> },
    #[error("schema needs more than 200 scalar slots, got {0}")]
    TooFewScalars(u32),
    #[error("run {0} already has a container")]
    DuplicateRun(u32),
    #[error("run {0} not present in the federation")]
    UnknownRun(u32),
    #[error("tag records must be sorted by event with matching run: {0}")]
    UnsortedTags(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("variable {0:?} is not a scalar")]
    NotScalar(String),
    #[error("value for variable {name:?} has the wrong kind (expected {expected})")]
    ValueKind {
        name: String,
        expected: &'static str,
    },
    #[error("updater returned {got} values for {want} variables")]
    UpdaterArity { got: usize, want: usize },
    #[error("federation opened read-only")]
    ReadOnly,
    #[error("federation already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("catalog {path} line {line}: {msg}")]
    Catalog {
        path: PathBuf,
        line: u32,
        msg: String,
    },
    #[error("database file missing: {0}")]
    MissingDbFile(String),
    #[error("schema hash mismatch in {file}: catalog {catalog:016x}, file {found:016x}")]
    SchemaHashMismatch {
        file: String,
        catalog: u64,
        found: u64,
    },
    #[error("corrupt container in {file} at offset {offset}: {msg}")]
    CorruptContainer {
        file: String,
        offset: u64,
        msg: String,
    },
    #[error("event payload does not decode as a physics summary: {0}")]
    BadPayload(#[from] crate::summary::SummaryDecodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}
