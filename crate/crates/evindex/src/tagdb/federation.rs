//! The federation: size-capped database files of per-run containers under
//! a text catalog.
//!
//! Database file layout (little-endian):
//!
//! ```text
//! file header: "TAGF" | version u32 | schema hash u64
//! container:   "TAGC" | run u32 | records u32 | record_len u32
//!              | name count u16 | (name len u16 | name bytes)*
//!              | records * record_len slab
//!              | footer: event u32 per record | "TAGE"
//! ```
//!
//! The footer's event list lets a reader locate one event without
//! touching the slab; events within a container are strictly increasing.
//! Partial column updates patch value slots in place and never touch the
//! catalog or any other byte of the container.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::query::{count_variables, evaluate, QueryAst, QueryStats};
use crate::store::{EventRecord, RecordKind, RecordLocation, StoreSet};

use super::catalog::{self, CatalogData};
use super::record::{encode_record, TagRecord, TagRecordView, TagSource, TagValue};
use super::schema::{TagSchema, VarKind};
use super::TagDbError;

const DB_FILE_MAGIC: [u8; 4] = *b"TAGF";
const DB_FILE_VERSION: u32 = 1;
const DB_FILE_HEADER_LEN: u64 = 16;
const CONTAINER_MAGIC: [u8; 4] = *b"TAGC";
const CONTAINER_END: [u8; 4] = *b"TAGE";

/// One database file of the federation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbFileMeta {
    pub id: u32,
    pub name: String,
    pub bytes: u64,
}

/// Catalog entry locating one run's container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerRef {
    pub run: u32,
    pub file_id: u32,
    pub offset: u64,
    pub byte_len: u64,
    pub records: u32,
}

/// One query match: the event's identity and its store location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagHit {
    pub run: u32,
    pub event: u32,
    pub location: RecordLocation,
}

/// Per-hit error from [`Federation::fetch_events`].
#[derive(Debug, thiserror::Error)]
pub enum TagFetchError {
    #[error("no store registered for {0:?}")]
    UnknownStore(Arc<str>),
    #[error("stale location for run {run} event {event} at {file}:{offset}: found {found}")]
    Stale {
        run: u32,
        event: u32,
        file: Arc<str>,
        offset: u64,
        found: String,
    },
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

/// Missing-aware cell of an exported table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExportValue {
    Int(i64),
    Float(f32),
    Missing,
}

impl std::fmt::Display for ExportValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExportValue::Int(v) => write!(f, "{v}"),
            ExportValue::Float(v) => write!(f, "{v}"),
            ExportValue::Missing => f.write_str("NA"),
        }
    }
}

/// Standalone tabular extract of tag variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<ExportValue>>,
}

impl ExportTable {
    /// Writes the table as delimiter-separated text with a header row and
    /// `NA` for missing values.
    pub fn write_delimited<W: Write>(&self, w: &mut W, delim: char) -> std::io::Result<()> {
        writeln!(w, "{}", self.columns.join(&delim.to_string()))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(delim);
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// A handle on one federation directory.
#[derive(Debug)]
pub struct Federation {
    root: PathBuf,
    schema: TagSchema,
    size_cap: u64,
    files: Vec<DbFileMeta>,
    /// Containers in ascending run order.
    containers: Vec<ContainerRef>,
    by_run: HashMap<u32, usize>,
    writable: bool,
}

/// Opens a federation read-only, checking catalog consistency: every
/// referenced database file must exist and carry the catalog's schema
/// hash.
pub fn open_federation(path: &Path) -> Result<Federation, TagDbError> {
    Federation::open_with(path, false)
}

impl Federation {
    /// Creates an empty federation directory with a fresh catalog.
    pub fn create(path: &Path, schema: TagSchema, size_cap: u64) -> Result<Federation, TagDbError> {
        std::fs::create_dir_all(path)?;
        if path.join(catalog::CATALOG_FILE).exists() {
            return Err(TagDbError::AlreadyExists(path.to_path_buf()));
        }
        let fed = Federation {
            root: path.to_path_buf(),
            schema,
            size_cap,
            files: Vec::new(),
            containers: Vec::new(),
            by_run: HashMap::new(),
            writable: true,
        };
        fed.write_catalog()?;
        Ok(fed)
    }

    /// Opens a federation for ingest and update.
    pub fn open_writable(path: &Path) -> Result<Federation, TagDbError> {
        Federation::open_with(path, true)
    }

    fn open_with(path: &Path, writable: bool) -> Result<Federation, TagDbError> {
        let CatalogData {
            schema,
            size_cap,
            files,
            mut containers,
        } = catalog::load(path)?;

        for f in &files {
            let fp = path.join(&f.name);
            if !fp.exists() {
                return Err(TagDbError::MissingDbFile(f.name.clone()));
            }
            let mut file = File::open(&fp)?;
            let mut header = [0u8; DB_FILE_HEADER_LEN as usize];
            file.read_exact(&mut header)
                .map_err(|_| TagDbError::CorruptContainer {
                    file: f.name.clone(),
                    offset: 0,
                    msg: "file shorter than its header".into(),
                })?;
            if header[0..4] != DB_FILE_MAGIC {
                return Err(TagDbError::CorruptContainer {
                    file: f.name.clone(),
                    offset: 0,
                    msg: "bad database file magic".into(),
                });
            }
            let found = u64::from_le_bytes(header[8..16].try_into().unwrap());
            if found != schema.hash() {
                return Err(TagDbError::SchemaHashMismatch {
                    file: f.name.clone(),
                    catalog: schema.hash(),
                    found,
                });
            }
        }

        containers.sort_by_key(|c| c.run);
        let by_run = containers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.run, i))
            .collect();
        Ok(Federation {
            root: path.to_path_buf(),
            schema,
            size_cap,
            files,
            containers,
            by_run,
            writable,
        })
    }

    pub fn schema(&self) -> &TagSchema {
        &self.schema
    }

    pub fn size_cap(&self) -> u64 {
        self.size_cap
    }

    pub fn files(&self) -> &[DbFileMeta] {
        &self.files
    }

    /// Runs present, in ascending order.
    pub fn runs(&self) -> impl Iterator<Item = u32> + '_ {
        self.containers.iter().map(|c| c.run)
    }

    pub fn container_count(&self) -> usize {
        self.containers.len()
    }

    pub fn record_count(&self) -> u64 {
        self.containers.iter().map(|c| c.records as u64).sum()
    }

    /// O(1) catalog lookup of a run's container.
    pub fn lookup(&self, run: u32) -> Option<&ContainerRef> {
        self.by_run.get(&run).map(|&i| &self.containers[i])
    }

    fn write_catalog(&self) -> Result<(), TagDbError> {
        catalog::write_atomic(
            &self.root,
            &CatalogData {
                schema: self.schema.clone(),
                size_cap: self.size_cap,
                files: self.files.clone(),
                containers: self.containers.clone(),
            },
        )
    }

    /// Ingests one run's tag records as a new container.
    ///
    /// The container goes into the current open database file if that
    /// file stays within the size cap, otherwise into a fresh file (a
    /// single container larger than the cap gets a file of its own). The
    /// database file is extended and synced before the catalog is
    /// swapped, so a crash mid-ingest leaves the previous catalog
    /// consistent.
    pub fn ingest_run(&mut self, run: u32, tags: &[TagRecord]) -> Result<ContainerRef, TagDbError> {
        if !self.writable {
            return Err(TagDbError::ReadOnly);
        }
        if self.by_run.contains_key(&run) {
            return Err(TagDbError::DuplicateRun(run));
        }
        let mut prev_event = 0u32;
        for t in tags {
            if t.run != run {
                return Err(TagDbError::UnsortedTags(format!(
                    "record for run {} in container of run {run}",
                    t.run
                )));
            }
            if t.event <= prev_event {
                return Err(TagDbError::UnsortedTags(format!(
                    "event {} after {prev_event}",
                    t.event
                )));
            }
            prev_event = t.event;
        }

        let bytes = encode_container(&self.schema, run, tags);
        let container_len = bytes.len() as u64;

        // Pick the target file: the last one if the container fits under
        // the cap, else a new file.
        let target = match self.files.last() {
            Some(last) if last.bytes + container_len <= self.size_cap => self.files.len() - 1,
            _ => {
                let id = self.files.len() as u32 + 1;
                let name = format!("db_{id:05}.tagdb");
                let mut f = File::create(self.root.join(&name))?;
                f.write_all(&DB_FILE_MAGIC)?;
                f.write_all(&DB_FILE_VERSION.to_le_bytes())?;
                f.write_all(&self.schema.hash().to_le_bytes())?;
                f.sync_all()?;
                self.files.push(DbFileMeta {
                    id,
                    name,
                    bytes: DB_FILE_HEADER_LEN,
                });
                self.files.len() - 1
            }
        };

        let meta = &mut self.files[target];
        let mut f = OpenOptions::new()
            .append(true)
            .open(self.root.join(&meta.name))?;
        let offset = f.seek(SeekFrom::End(0))?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        meta.bytes = offset + container_len;

        let cref = ContainerRef {
            run,
            file_id: meta.id,
            offset,
            byte_len: container_len,
            records: tags.len() as u32,
        };
        let at = self.containers.partition_point(|c| c.run < run);
        self.containers.insert(at, cref);
        self.by_run = self
            .containers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.run, i))
            .collect();
        self.write_catalog()?;
        Ok(cref)
    }

    fn file_meta(&self, file_id: u32) -> &DbFileMeta {
        self.files
            .iter()
            .find(|f| f.id == file_id)
            .expect("catalog references a listed file")
    }

    /// Reads one container into `scratch` (reused across calls to keep
    /// scans allocation-free) and parses its header.
    fn read_container(
        &self,
        cref: &ContainerRef,
        scratch: &mut Vec<u8>,
    ) -> Result<ContainerData, TagDbError> {
        let meta = self.file_meta(cref.file_id);
        let path = self.root.join(&meta.name);
        let mut f = File::open(&path)?;
        f.seek(SeekFrom::Start(cref.offset))?;
        scratch.clear();
        scratch.resize(cref.byte_len as usize, 0);
        f.read_exact(scratch)
            .map_err(|_| TagDbError::CorruptContainer {
                file: meta.name.clone(),
                offset: cref.offset,
                msg: "container extends past end of file".into(),
            })?;
        decode_container(&self.schema, &meta.name, cref, scratch)
    }

    /// Evaluates `ast` over every record (optionally restricted to an
    /// inclusive run range) and returns the hits in (run, event) order.
    ///
    /// Only tag database files are read; the event store is never
    /// touched. Comparisons on missing variables are false.
    pub fn query(
        &self,
        ast: &QueryAst,
        run_range: Option<(u32, u32)>,
    ) -> Result<Vec<TagHit>, TagDbError> {
        Ok(self.query_stats(ast, run_range)?.0)
    }

    /// Like [`Self::query`], also returning scan counters.
    pub fn query_stats(
        &self,
        ast: &QueryAst,
        run_range: Option<(u32, u32)>,
    ) -> Result<(Vec<TagHit>, QueryStats), TagDbError> {
        let mut hits = Vec::new();
        let mut stats = QueryStats {
            scanned: 0,
            matched: 0,
            variables: count_variables(ast),
        };
        let mut scratch = Vec::new();
        for cref in &self.containers {
            if let Some((lo, hi)) = run_range {
                if cref.run < lo || cref.run > hi {
                    continue;
                }
            }
            let data = self.read_container(cref, &mut scratch)?;
            for view in data.views(&self.schema, &scratch) {
                stats.scanned += 1;
                if evaluate(ast, &view) {
                    stats.matched += 1;
                    hits.push(TagHit {
                        run: view.run(),
                        event: view.event(),
                        location: view.location(),
                    });
                }
            }
        }
        Ok((hits, stats))
    }

    /// Reads the full event record behind each hit, preserving order;
    /// errors are per hit and do not stop the iteration.
    pub fn fetch_events<'a>(
        hits: &'a [TagHit],
        stores: &'a StoreSet,
    ) -> impl Iterator<Item = Result<EventRecord, TagFetchError>> + 'a {
        hits.iter().map(move |hit| {
            let reader = stores
                .get(&hit.location.file_id)
                .ok_or_else(|| TagFetchError::UnknownStore(hit.location.file_id.clone()))?;
            let record = reader.read_at(&hit.location)?;
            if record.kind != RecordKind::Event
                || record.run != hit.run
                || record.event != hit.event
            {
                return Err(TagFetchError::Stale {
                    run: hit.run,
                    event: hit.event,
                    file: hit.location.file_id.clone(),
                    offset: hit.location.offset,
                    found: format!(
                        "{:?} run {} event {}",
                        record.kind, record.run, record.event
                    ),
                });
            }
            Ok(record)
        })
    }

    /// Rewrites the named scalar variables for every record of the given
    /// runs, in place.
    ///
    /// `updater` is called per record and must return one value per named
    /// variable, each matching the variable's kind. Variables that are
    /// missing in a record stay missing (the returned value is ignored),
    /// so only value slots of present variables change on disk; presence
    /// bits, every other variable and the catalog are untouched. Returns
    /// the number of records that had at least one slot rewritten.
    pub fn update_columns<F>(
        &mut self,
        runs: &[u32],
        variables: &[&str],
        mut updater: F,
    ) -> Result<u64, TagDbError>
    where
        F: FnMut(&TagRecordView<'_>) -> Vec<TagValue>,
    {
        if !self.writable {
            return Err(TagDbError::ReadOnly);
        }
        let mut var_ids = Vec::with_capacity(variables.len());
        for name in variables {
            let idx = self
                .schema
                .index_of(name)
                .ok_or_else(|| TagDbError::UnknownVariable(name.to_string()))?;
            if self.schema.var(idx).kind == VarKind::BitGroup {
                return Err(TagDbError::NotScalar(name.to_string()));
            }
            var_ids.push(idx);
        }

        let mut updated = 0u64;
        let mut scratch = Vec::new();
        for &run in runs {
            let cref = *self.lookup(run).ok_or(TagDbError::UnknownRun(run))?;
            let data = self.read_container(&cref, &mut scratch)?;
            let meta = self.file_meta(cref.file_id);
            let file = OpenOptions::new()
                .write(true)
                .open(self.root.join(&meta.name))?;
            let record_len = self.schema.record_len() as u64;

            for (i, view) in data.views(&self.schema, &scratch).enumerate() {
                let values = updater(&view);
                if values.len() != var_ids.len() {
                    return Err(TagDbError::UpdaterArity {
                        got: values.len(),
                        want: var_ids.len(),
                    });
                }
                let mut touched = false;
                for (&var, value) in var_ids.iter().zip(&values) {
                    if !view.present(var) {
                        continue;
                    }
                    let d = self.schema.var(var);
                    let bytes: [u8; 4] = match (d.kind, value) {
                        (VarKind::Float32, TagValue::Float(v)) => v.to_le_bytes(),
                        (VarKind::Int32, TagValue::Int(v)) => v.to_le_bytes(),
                        _ => {
                            return Err(TagDbError::ValueKind {
                                name: d.name.clone(),
                                expected: d.kind.as_str(),
                            })
                        }
                    };
                    let at = data.slab_file_offset
                        + i as u64 * record_len
                        + super::schema::RECORD_HEADER_LEN as u64
                        + self.schema.slot(var).start as u64;
                    write_at(&file, &bytes, at)?;
                    touched = true;
                }
                if touched {
                    updated += 1;
                }
            }
            file.sync_all()?;
        }
        Ok(updated)
    }

    /// The absolute byte ranges (in the container's database file) of one
    /// scalar variable's slots across a run's records, for verifying that
    /// partial updates touch nothing else. Returns the database file name
    /// and one 4-byte range per record.
    pub fn variable_byte_ranges(
        &self,
        run: u32,
        variable: &str,
    ) -> Result<(String, Vec<std::ops::Range<u64>>), TagDbError> {
        let idx = self
            .schema
            .index_of(variable)
            .ok_or_else(|| TagDbError::UnknownVariable(variable.to_string()))?;
        if self.schema.var(idx).kind == VarKind::BitGroup {
            return Err(TagDbError::NotScalar(variable.to_string()));
        }
        let cref = *self.lookup(run).ok_or(TagDbError::UnknownRun(run))?;
        let mut scratch = Vec::new();
        let data = self.read_container(&cref, &mut scratch)?;
        let record_len = self.schema.record_len() as u64;
        let slot = super::schema::RECORD_HEADER_LEN as u64 + self.schema.slot(idx).start as u64;
        let ranges = (0..cref.records as u64)
            .map(|i| {
                let at = data.slab_file_offset + i * record_len + slot;
                at..at + 4
            })
            .collect();
        Ok((self.file_meta(cref.file_id).name.clone(), ranges))
    }

    /// Extracts the requested variables for every record matching `ast`
    /// into a standalone table. Output columns are RUN, EVENT, then the
    /// requested variables (RUN/EVENT are not repeated); missing values
    /// become [`ExportValue::Missing`]. No event-store file is read.
    pub fn export_columns(
        &self,
        variables: &[&str],
        ast: &QueryAst,
    ) -> Result<ExportTable, TagDbError> {
        let mut var_ids = Vec::new();
        let mut columns = vec!["RUN".to_string(), "EVENT".to_string()];
        for name in variables {
            let idx = self
                .schema
                .index_of(name)
                .ok_or_else(|| TagDbError::UnknownVariable(name.to_string()))?;
            let d = self.schema.var(idx);
            if d.kind == VarKind::BitGroup {
                return Err(TagDbError::NotScalar(name.to_string()));
            }
            if d.name == "RUN" || d.name == "EVENT" {
                continue;
            }
            columns.push(d.name.clone());
            var_ids.push((idx, d.kind));
        }

        let mut rows = Vec::new();
        let mut scratch = Vec::new();
        for cref in &self.containers {
            let data = self.read_container(cref, &mut scratch)?;
            for view in data.views(&self.schema, &scratch) {
                if !evaluate(ast, &view) {
                    continue;
                }
                let mut row = Vec::with_capacity(2 + var_ids.len());
                row.push(ExportValue::Int(view.run() as i64));
                row.push(ExportValue::Int(view.event() as i64));
                for &(idx, kind) in &var_ids {
                    row.push(match view.scalar(idx) {
                        None => ExportValue::Missing,
                        Some(v) => match kind {
                            VarKind::Int32 => ExportValue::Int(v as i64),
                            _ => ExportValue::Float(v as f32),
                        },
                    });
                }
                rows.push(row);
            }
        }
        Ok(ExportTable { columns, rows })
    }
}

fn write_at(file: &File, bytes: &[u8], offset: u64) -> std::io::Result<()> {
    #[cfg(unix)]
    {
        use std::os::unix::fs::FileExt;
        file.write_all_at(bytes, offset)
    }
    #[cfg(not(unix))]
    {
        let mut f = file;
        f.seek(SeekFrom::Start(offset))?;
        f.write_all(bytes)
    }
}

/// Parsed container header; the record slab stays in the caller's
/// scratch buffer.
struct ContainerData {
    names: Vec<Arc<str>>,
    /// Slab byte range within the container bytes.
    slab: std::ops::Range<usize>,
    /// Absolute file offset of the first slab byte.
    slab_file_offset: u64,
}

impl ContainerData {
    fn views<'a>(
        &'a self,
        schema: &'a TagSchema,
        container_bytes: &'a [u8],
    ) -> impl Iterator<Item = TagRecordView<'a>> {
        container_bytes[self.slab.clone()]
            .chunks_exact(schema.record_len())
            .map(move |chunk| TagRecordView::new(schema, chunk, &self.names))
    }
}

fn encode_container(schema: &TagSchema, run: u32, tags: &[TagRecord]) -> Vec<u8> {
    // Name table: store file ids in first-appearance order.
    let mut names: Vec<Arc<str>> = Vec::new();
    let mut name_idx: HashMap<Arc<str>, u32> = HashMap::new();
    for t in tags {
        let id = &t.location.file_id;
        if !name_idx.contains_key(id) {
            name_idx.insert(id.clone(), names.len() as u32);
            names.push(id.clone());
        }
    }

    let mut out = Vec::with_capacity(64 + tags.len() * (schema.record_len() + 4));
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&run.to_le_bytes());
    out.extend_from_slice(&(tags.len() as u32).to_le_bytes());
    out.extend_from_slice(&(schema.record_len() as u32).to_le_bytes());
    out.extend_from_slice(&(names.len() as u16).to_le_bytes());
    for name in &names {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for t in tags {
        let file_idx = name_idx[&t.location.file_id];
        encode_record(t, file_idx, &mut out);
    }
    for t in tags {
        out.extend_from_slice(&t.event.to_le_bytes());
    }
    out.extend_from_slice(&CONTAINER_END);
    out
}

fn decode_container(
    schema: &TagSchema,
    file_name: &str,
    cref: &ContainerRef,
    bytes: &[u8],
) -> Result<ContainerData, TagDbError> {
    let corrupt = |msg: &str| TagDbError::CorruptContainer {
        file: file_name.to_string(),
        offset: cref.offset,
        msg: msg.to_string(),
    };
    if bytes.len() < 18 || bytes[0..4] != CONTAINER_MAGIC {
        return Err(corrupt("bad container magic"));
    }
    let run = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let records = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let record_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if run != cref.run || records != cref.records {
        return Err(corrupt("container header disagrees with the catalog"));
    }
    if record_len as usize != schema.record_len() {
        return Err(corrupt("record length does not match the schema"));
    }
    let name_count = u16::from_le_bytes(bytes[16..18].try_into().unwrap());
    let mut at = 18usize;
    let mut names = Vec::with_capacity(name_count as usize);
    for _ in 0..name_count {
        if at + 2 > bytes.len() {
            return Err(corrupt("truncated name table"));
        }
        let len = u16::from_le_bytes(bytes[at..at + 2].try_into().unwrap()) as usize;
        at += 2;
        if at + len > bytes.len() {
            return Err(corrupt("truncated name table"));
        }
        names.push(
            std::str::from_utf8(&bytes[at..at + len])
                .map_err(|_| corrupt("name table is not UTF-8"))?
                .into(),
        );
        at += len;
    }
    let slab_len = records as usize * record_len as usize;
    let footer_len = records as usize * 4 + 4;
    if at + slab_len + footer_len != bytes.len() {
        return Err(corrupt("container length mismatch"));
    }
    if bytes[bytes.len() - 4..] != CONTAINER_END {
        return Err(corrupt("missing container end marker"));
    }
    Ok(ContainerData {
        names,
        slab: at..at + slab_len,
        slab_file_offset: cref.offset + at as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use tempfile::tempdir;

    fn schema() -> TagSchema {
        TagSchema::default_schema()
    }

    fn tag(s: &TagSchema, run: u32, event: u32, et: Option<f32>) -> TagRecord {
        let mut r = TagRecord::new(
            s,
            run,
            event,
            RecordLocation {
                file_id: "events.evt".into(),
                offset: 12 + event as u64 * 100,
            },
        );
        r.set_int(s, s.index_of("RUN").unwrap(), run as i32)
            .unwrap();
        r.set_int(s, s.index_of("EVENT").unwrap(), event as i32)
            .unwrap();
        if let Some(v) = et {
            r.set_float(s, s.index_of("ET_TOTAL").unwrap(), v).unwrap();
        }
        r
    }

    #[test]
    fn create_open_empty_federation() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        Federation::create(&path, schema(), 1000).unwrap();
        let fed = open_federation(&path).unwrap();
        assert_eq!(fed.container_count(), 0);
        assert_eq!(fed.files().len(), 0);
        assert_eq!(fed.record_count(), 0);
    }

    #[test]
    fn create_refuses_existing() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        Federation::create(&path, schema(), 1000).unwrap();
        assert!(matches!(
            Federation::create(&path, schema(), 1000),
            Err(TagDbError::AlreadyExists(_))
        ));
    }

    #[test]
    fn ingest_and_lookup() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        let tags: Vec<TagRecord> = (1..=4).map(|e| tag(&s, 35762, e, Some(e as f32))).collect();
        fed.ingest_run(35762, &tags).unwrap();
        let tags2: Vec<TagRecord> = (1..=2).map(|e| tag(&s, 35763, e, None)).collect();
        fed.ingest_run(35763, &tags2).unwrap();

        let fed = open_federation(&path).unwrap();
        let c = fed.lookup(35762).unwrap();
        assert_eq!(c.records, 4);
        assert!(fed.lookup(99999).is_none());
        assert_eq!(fed.record_count(), 6);
    }

    #[test]
    fn duplicate_run_is_rejected_and_federation_unchanged() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        fed.ingest_run(1, &[tag(&s, 1, 1, None)]).unwrap();
        let before = std::fs::read_to_string(path.join("catalog.txt")).unwrap();
        assert!(matches!(
            fed.ingest_run(1, &[tag(&s, 1, 2, None)]),
            Err(TagDbError::DuplicateRun(1))
        ));
        let after = std::fs::read_to_string(path.join("catalog.txt")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn unsorted_tags_are_rejected() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        let tags = vec![tag(&s, 1, 2, None), tag(&s, 1, 1, None)];
        assert!(matches!(
            fed.ingest_run(1, &tags),
            Err(TagDbError::UnsortedTags(_))
        ));
        let tags = vec![tag(&s, 2, 1, None)];
        assert!(matches!(
            fed.ingest_run(1, &tags),
            Err(TagDbError::UnsortedTags(_))
        ));
    }

    #[test]
    fn size_cap_rolls_database_files() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        // Cap fits roughly three 2-record containers.
        let container_len = {
            let tags = vec![tag(&s, 1, 1, None), tag(&s, 1, 2, None)];
            encode_container(&s, 1, &tags).len() as u64
        };
        let cap = DB_FILE_HEADER_LEN + 3 * container_len;
        let mut fed = Federation::create(&path, s.clone(), cap).unwrap();
        for run in 1..=7 {
            let tags = vec![tag(&s, run, 1, None), tag(&s, run, 2, None)];
            fed.ingest_run(run, &tags).unwrap();
        }
        // 7 containers, 3 per file -> 3 files.
        assert_eq!(fed.files().len(), 3);
        for f in fed.files() {
            assert!(f.bytes <= cap, "{} exceeds cap", f.name);
        }
        // Reopen and check consistency survives.
        let fed = open_federation(&path).unwrap();
        assert_eq!(fed.container_count(), 7);
    }

    #[test]
    fn oversized_container_gets_its_own_file() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let cap = 2 * s.record_len() as u64; // smaller than one 3-record container
        let mut fed = Federation::create(&path, s.clone(), cap).unwrap();
        let tags: Vec<TagRecord> = (1..=3).map(|e| tag(&s, 1, e, None)).collect();
        fed.ingest_run(1, &tags).unwrap();
        fed.ingest_run(2, &[tag(&s, 2, 1, None)]).unwrap();
        assert_eq!(fed.files().len(), 2);
    }

    #[test]
    fn missing_db_file_is_a_named_consistency_error() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        fed.ingest_run(1, &[tag(&s, 1, 1, None)]).unwrap();
        std::fs::remove_file(path.join("db_00001.tagdb")).unwrap();
        match open_federation(&path) {
            Err(TagDbError::MissingDbFile(name)) => assert_eq!(name, "db_00001.tagdb"),
            other => panic!("expected MissingDbFile, got {other:?}"),
        }
    }

    #[test]
    fn schema_hash_mismatch_is_detected() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        fed.ingest_run(1, &[tag(&s, 1, 1, None)]).unwrap();
        // Corrupt the stored schema hash in the db file header.
        let db = path.join("db_00001.tagdb");
        let mut bytes = std::fs::read(&db).unwrap();
        bytes[8] ^= 0xFF;
        std::fs::write(&db, &bytes).unwrap();
        assert!(matches!(
            open_federation(&path),
            Err(TagDbError::SchemaHashMismatch { .. })
        ));
    }

    #[test]
    fn query_matches_brute_force_and_reads_no_store() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        let mut all: Vec<(u32, u32, Option<f32>)> = Vec::new();
        for run in [10u32, 11, 12] {
            let mut tags = Vec::new();
            for e in 1..=30u32 {
                let et = if e % 7 == 0 {
                    None
                } else {
                    Some((e * run % 60) as f32)
                };
                all.push((run, e, et));
                tags.push(tag(&s, run, e, et));
            }
            fed.ingest_run(run, &tags).unwrap();
        }

        let fed = open_federation(&path).unwrap();
        let ast = parse_query("ET_TOTAL > 30.0", &s).unwrap();
        let (hits, stats) = fed.query_stats(&ast, None).unwrap();
        let want: Vec<(u32, u32)> = all
            .iter()
            .filter(|(_, _, et)| matches!(et, Some(v) if *v > 30.0))
            .map(|(r, e, _)| (*r, *e))
            .collect();
        let got: Vec<(u32, u32)> = hits.iter().map(|h| (h.run, h.event)).collect();
        assert_eq!(got, want);
        assert_eq!(stats.scanned, 90);
        assert_eq!(stats.matched as usize, want.len());
        assert_eq!(stats.variables, 1);

        // Run-range restriction.
        let (hits, _) = fed.query_stats(&ast, Some((11, 11))).unwrap();
        assert!(hits.iter().all(|h| h.run == 11));

        // Hit locations carry the store file name.
        assert!(fed
            .query(&QueryAst::True, None)
            .unwrap()
            .iter()
            .all(|h| &*h.location.file_id == "events.evt"));
    }

    #[test]
    fn update_columns_rewrites_only_named_slots() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        let tags: Vec<TagRecord> = (1..=5)
            .map(|e| tag(&s, 1, e, if e == 3 { None } else { Some(10.0 * e as f32) }))
            .collect();
        fed.ingest_run(1, &tags).unwrap();
        fed.ingest_run(2, &[tag(&s, 2, 1, Some(7.0))]).unwrap();

        let db = path.join("db_00001.tagdb");
        let before = std::fs::read(&db).unwrap();
        let catalog_before = std::fs::read_to_string(path.join("catalog.txt")).unwrap();

        let et = s.index_of("ET_TOTAL").unwrap();
        let updated = fed
            .update_columns(&[1], &["ET_TOTAL"], |view| {
                vec![TagValue::Float(
                    (view.scalar(et).unwrap_or(0.0) * 1.02) as f32,
                )]
            })
            .unwrap();
        assert_eq!(updated, 4); // event 3 had ET_TOTAL missing

        let after = std::fs::read(&db).unwrap();
        assert_eq!(before.len(), after.len());
        // Diff confined to the ET_TOTAL slot of run 1's records.
        let slot = s.slot(et).start as usize;
        let rec_len = s.record_len();
        let cref = *fed.lookup(1).unwrap();
        let mut scratch = Vec::new();
        let data = fed.read_container(&cref, &mut scratch).unwrap();
        let slab_at = data.slab_file_offset as usize;
        let allowed: Vec<std::ops::Range<usize>> = (0..5)
            .map(|i| {
                let base = slab_at + i * rec_len + super::super::schema::RECORD_HEADER_LEN + slot;
                base..base + 4
            })
            .collect();
        for (at, (a, b)) in before.iter().zip(after.iter()).enumerate() {
            if a != b {
                assert!(
                    allowed.iter().any(|r| r.contains(&at)),
                    "unexpected change at byte {at}"
                );
            }
        }
        // Catalog untouched.
        let catalog_after = std::fs::read_to_string(path.join("catalog.txt")).unwrap();
        assert_eq!(catalog_before, catalog_after);

        // Values really changed; the other run did not.
        let ast = parse_query("ET_TOTAL > 40.5", &s).unwrap();
        let hits = fed.query(&ast, None).unwrap();
        let got: Vec<(u32, u32)> = hits.iter().map(|h| (h.run, h.event)).collect();
        assert_eq!(got, vec![(1, 4), (1, 5)]); // 40.8, 51.0 after scaling
    }

    #[test]
    fn update_rejects_unknown_variable_and_read_only() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        fed.ingest_run(1, &[tag(&s, 1, 1, Some(1.0))]).unwrap();
        assert!(matches!(
            fed.update_columns(&[1], &["XYZZY"], |_| vec![]),
            Err(TagDbError::UnknownVariable(_))
        ));
        let mut ro = open_federation(&path).unwrap();
        assert!(matches!(
            ro.update_columns(&[1], &["ET_TOTAL"], |_| vec![TagValue::Float(0.0)]),
            Err(TagDbError::ReadOnly)
        ));
        // Zero runs: no work, files byte-identical.
        let before = std::fs::read(path.join("db_00001.tagdb")).unwrap();
        let n = fed
            .update_columns(&[], &["ET_TOTAL"], |_| vec![TagValue::Float(0.0)])
            .unwrap();
        assert_eq!(n, 0);
        assert_eq!(before, std::fs::read(path.join("db_00001.tagdb")).unwrap());
    }

    #[test]
    fn export_has_header_and_respects_predicate() {
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("fed");
        let s = schema();
        let mut fed = Federation::create(&path, s.clone(), 100_000_000).unwrap();
        let tags: Vec<TagRecord> = (1..=6)
            .map(|e| tag(&s, 1, e, if e == 2 { None } else { Some(10.0 * e as f32) }))
            .collect();
        fed.ingest_run(1, &tags).unwrap();

        let ast = parse_query("ET_TOTAL > 30", &s).unwrap();
        let table = fed.export_columns(&["ET_TOTAL"], &ast).unwrap();
        assert_eq!(table.columns, vec!["RUN", "EVENT", "ET_TOTAL"]);
        assert_eq!(table.rows.len(), 3); // events 4, 5, 6
        for row in &table.rows {
            match row[2] {
                ExportValue::Float(v) => assert!(v > 30.0),
                other => panic!("expected float, got {other:?}"),
            }
        }

        // RUN/EVENT requested explicitly are not duplicated.
        let table = fed
            .export_columns(&["RUN", "EVENT"], &QueryAst::True)
            .unwrap();
        assert_eq!(table.columns, vec!["RUN", "EVENT"]);
        assert_eq!(table.rows.len(), 6);

        // Missing values render as NA.
        let table = fed.export_columns(&["ET_TOTAL"], &QueryAst::True).unwrap();
        let mut text = Vec::new();
        table.write_delimited(&mut text, ',').unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",NA"));

        // Empty federation: header-only table.
        let empty = Federation::create(&tmp.path().join("fed2"), s.clone(), 1000).unwrap();
        let table = empty
            .export_columns(&["ET_TOTAL"], &QueryAst::True)
            .unwrap();
        assert_eq!(table.columns.len(), 3);
        assert!(table.rows.is_empty());
    }
}
