//! Event directories: per-event index rows with 128 packed selection
//! flags and store offsets.
//!
//! A directory holds one row per event record of a store file, carrying
//! the row id, record type tag, run and event numbers, four 32-bit flag
//! words and the record's byte offset. Selections are boolean
//! combinations of flags ([`FlagExpr`]) evaluated against the index
//! alone; the bulk store is only touched when the selected events are
//! fetched.
//!
//! Directories are serialized in a human readable text format of three
//! tables (file references, non-event metadata, index rows); see
//! [`serialize_directory`] and [`parse_directory`]. Selections normally
//! run over the parsed in-memory directory (about 40 bytes per entry);
//! for directory files too large to hold resident, [`select_file`]
//! scans the text with bounded memory instead.
//!
//! A directory is immutable once built or parsed, so shared references
//! can be selected against concurrently.

mod expr;
mod stream;
mod text;

pub use expr::FlagExpr;
pub use stream::{select_file, select_stream};
pub use text::{parse_directory, serialize_directory};

use std::io;

use thiserror::Error;

use crate::store::{EventRecord, RecordKind, StoreError, StoreReader, TypeTag};

/// Number of logical flags in a directory entry.
pub const FLAG_COUNT: usize = 128;

#[derive(Debug, Error)]
pub enum DirectoryError {
    #[error("flag index {0} out of range (valid: 0..=127)")]
    FlagIndex(u32),
    #[error("expected exactly {FLAG_COUNT} flags, got {0}")]
    WrongFlagCount(usize),
    #[error("line {line}: {msg}")]
    Parse { line: u32, msg: String },
    #[error("line {line}: unknown table id {id}")]
    UnknownTable { line: u32, id: u64 },
    #[error("line {line}: out-of-order seq id {id} after {prev}")]
    OutOfOrderSeq { line: u32, id: u32, prev: u32 },
    #[error("missing END TABLE for table {0}")]
    UnterminatedTable(&'static str),
    #[error("expression syntax error at byte {pos}: {msg}")]
    ExprSyntax { pos: usize, msg: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-entry error from [`fetch`]; iteration continues past it.
#[derive(Debug, Error)]
pub enum FetchError {
    #[error("stale offset {offset} for entry {seq_id} (run {run} event {event}): found {found}")]
    Stale {
        seq_id: u32,
        run: u32,
        event: u32,
        offset: u64,
        found: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The 128 event flags packed into four 32-bit words.
///
/// Flag `i` lives in bit `i % 32` of word `i / 32`, bit 0 being the least
/// significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FlagWords(pub [u32; 4]);

impl FlagWords {
    /// Value of flag `i`; panics if `i >= 128`.
    pub fn bit(&self, i: u32) -> bool {
        assert!((i as usize) < FLAG_COUNT, "flag index {i} out of range");
        self.0[(i / 32) as usize] >> (i % 32) & 1 == 1
    }
}

/// Packs 128 booleans into flag words; errors unless exactly 128 are given.
pub fn encode_flags(bits: &[bool]) -> Result<FlagWords, DirectoryError> {
    if bits.len() != FLAG_COUNT {
        return Err(DirectoryError::WrongFlagCount(bits.len()));
    }
    let mut words = [0u32; 4];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 32] |= 1 << (i % 32);
        }
    }
    Ok(FlagWords(words))
}

/// Unpacks flag words into 128 booleans; inverse of [`encode_flags`].
pub fn decode_flags(words: &FlagWords) -> [bool; FLAG_COUNT] {
    let mut bits = [false; FLAG_COUNT];
    for (i, bit) in bits.iter_mut().enumerate() {
        *bit = words.0[i / 32] >> (i % 32) & 1 == 1;
    }
    bits
}

/// One index row: row id, record type, run/event numbers, flags and the
/// record's byte offset in the store file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirEntry {
    /// 1-based row id, monotone across the directory.
    pub seq_id: u32,
    pub type_tag: TypeTag,
    pub run: u32,
    pub event: u32,
    pub flags: FlagWords,
    pub offset: u64,
}

/// Reference to a store file the directory indexes into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRef {
    pub id: u32,
    pub name: String,
    /// Opaque options text, carried through serialization unchanged.
    pub options: String,
}

/// Offset of a non-event record, kept for bookkeeping only; never used
/// in selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaRef {
    pub id: u32,
    pub name: String,
    pub offset: u64,
}

/// A complete event directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventDirectory {
    pub file_refs: Vec<FileRef>,
    pub meta_refs: Vec<MetaRef>,
    pub entries: Vec<DirEntry>,
}

impl EventDirectory {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Scans a store sequentially and builds its directory.
///
/// Every event record yields one entry, in file order, flagged by
/// `flag_fn`; non-event records are recorded as [`MetaRef`]s. The
/// reader's sequential cursor is consumed from its current position,
/// normally the start.
pub fn build_directory<F>(
    reader: &mut StoreReader,
    mut flag_fn: F,
) -> Result<EventDirectory, DirectoryError>
where
    F: FnMut(&EventRecord) -> [bool; FLAG_COUNT],
{
    let mut dir = EventDirectory {
        file_refs: vec![FileRef {
            id: 1,
            name: reader.file_id().to_string(),
            options: String::new(),
        }],
        meta_refs: Vec::new(),
        entries: Vec::new(),
    };
    let mut next_seq = 1u32;
    let mut next_meta = 1u32;
    while let Some((record, location)) = reader.next_record_located()? {
        match record.kind {
            RecordKind::Event => {
                let flags = encode_flags(&flag_fn(&record))?;
                dir.entries.push(DirEntry {
                    seq_id: next_seq,
                    type_tag: record.type_tag,
                    run: record.run,
                    event: record.event,
                    flags,
                    offset: location.offset,
                });
                next_seq += 1;
            }
            RecordKind::NonEvent => {
                dir.meta_refs.push(MetaRef {
                    id: next_meta,
                    name: record.type_tag.as_str().to_string(),
                    offset: location.offset,
                });
                next_meta += 1;
            }
        }
    }
    Ok(dir)
}

/// Returns the entries whose flags satisfy `expr`, in directory order.
///
/// Evaluation touches only the in-memory index; no store file is read.
pub fn select(dir: &EventDirectory, expr: &FlagExpr) -> Vec<DirEntry> {
    dir.entries
        .iter()
        .filter(|e| expr.matches(&e.flags))
        .copied()
        .collect()
}

/// Fetches the full event record for each selected entry via direct
/// offset reads, preserving order.
///
/// Errors are per entry: a bad offset or a record that no longer matches
/// the entry yields an `Err` item and iteration continues.
pub fn fetch<'a>(
    selection: &'a [DirEntry],
    store: &'a StoreReader,
) -> impl Iterator<Item = Result<EventRecord, FetchError>> + 'a {
    selection.iter().map(move |entry| {
        let record = store.read_at_offset(entry.offset)?;
        if record.kind != RecordKind::Event
            || record.run != entry.run
            || record.event != entry.event
        {
            return Err(FetchError::Stale {
                seq_id: entry.seq_id,
                run: entry.run,
                event: entry.event,
                offset: entry.offset,
                found: format!(
                    "{:?} {} run {} event {}",
                    record.kind, record.type_tag, record.run, record.event
                ),
            });
        }
        Ok(record)
    })
}
