//! Storage and indexing toolkit for large samples of collision-event data.
//!
//! The crate provides three access paths over a bulk sequential event store,
//! plus the plumbing they share:
//!
//! * [`store`] — append-only record files holding full events, with both
//!   sequential iteration and direct offset reads.
//! * [`directory`] — event directories: a per-event index of 128 packed
//!   selection flags plus the event's byte offset, serialized in a human
//!   readable text format. Selections are boolean combinations of flags and
//!   never touch the bulk store.
//! * [`tagdb`] — the tag database: a compact per-event record of 200+
//!   physics variables and trigger/selection bit groups, grouped into
//!   per-run containers inside size-capped database files under a
//!   federation catalog. Queryable by value, partially updatable in place,
//!   and usable standalone as a compact data sample.
//! * [`query`] — a small predicate language over tag variables and flag
//!   bits, parsed against a schema and evaluated per record.
//! * [`filestore`] — a two-tier staging namespace: datasets live on a slow
//!   tier and are copied on demand into a size-capped fast pool with
//!   pinning and age-based eviction.
//! * [`summary`] — the synthetic per-event physics summary embedded in
//!   store payloads, from which flags and tag variables are derived.

pub mod directory;
pub mod filestore;
pub mod query;
pub mod store;
pub mod summary;
pub mod tagdb;
