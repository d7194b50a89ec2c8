//! Append-only sequential record store.
//!
//! A store file is a fixed 12-byte file header followed by back-to-back
//! records. Every record starts with a fixed-size header, so a reader can
//! skip a record by reading the header alone, and any byte offset can be
//! validated as a record boundary before the payload is decoded.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! file header:   magic "EVST" | version u32 | flags u32
//! record header: total_len u32 | kind u8 | type_tag [u8;4] | run u32
//!                | event u32 | payload_len u32 | [payload crc32 u32]
//! record body:   payload_len bytes
//! ```
//!
//! `total_len` counts the whole record including its header, so the next
//! record starts at `offset + total_len`. The payload CRC field is present
//! when bit 0 of the file-header flags is set (the default); a CRC mismatch
//! on read is reported separately from a truncated file so that a bad
//! offset can be told apart from a torn tail.
//!
//! Concurrency: one writer per store file, any number of readers. Each
//! reader keeps its own cursor and all reads are positioned, so direct
//! reads never disturb a sequential scan. Readers may run alongside the
//! writer for offsets below the last flushed record boundary.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

/// Store file magic bytes.
pub const STORE_MAGIC: [u8; 4] = *b"EVST";
/// Current store format version.
pub const STORE_VERSION: u32 = 1;
/// Size of the file header in bytes.
pub const FILE_HEADER_LEN: u64 = 12;
/// Record header size without the CRC field.
pub const RECORD_HEADER_LEN: u64 = 21;
/// Record header size with the CRC field.
pub const RECORD_HEADER_LEN_CRC: u64 = 25;
/// Default payload cap (1 MiB).
pub const DEFAULT_MAX_PAYLOAD: u32 = 1 << 20;

const FLAG_PAYLOAD_CRC: u32 = 1;

/// Errors from store creation, reading and writing.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unwritable path: {path}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("store already exists (truncate flag not set): {0}")]
    AlreadyExists(PathBuf),
    #[error("not a store file: bad magic")]
    BadMagic,
    #[error("unsupported store version {0}")]
    BadVersion(u32),
    #[error("payload of {len} bytes exceeds configured cap of {cap}")]
    PayloadTooLarge { len: usize, cap: u32 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("offset {0} is not a record boundary")]
    NotARecordBoundary(u64),
    #[error("payload checksum mismatch at offset {0}")]
    ChecksumMismatch(u64),
    #[error("truncated record at offset {0}")]
    Truncated(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Whether a record holds a collision event or bookkeeping data
/// (calibration dumps, file headers and the like).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Event,
    NonEvent,
}

impl RecordKind {
    fn to_byte(self) -> u8 {
        match self {
            RecordKind::Event => 1,
            RecordKind::NonEvent => 0,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(RecordKind::Event),
            0 => Some(RecordKind::NonEvent),
            _ => None,
        }
    }
}

/// Four-character record type tag, e.g. `EVTF`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeTag(pub [u8; 4]);

impl TypeTag {
    /// Builds a tag from up to four ASCII characters, padding with spaces.
    pub fn new(s: &str) -> Result<Self, StoreError> {
        let bytes = s.as_bytes();
        if bytes.len() > 4 || !bytes.iter().all(|b| b.is_ascii_graphic() || *b == b' ') {
            return Err(StoreError::InvalidRecord(format!(
                "type tag must be at most 4 printable ASCII characters, got {s:?}"
            )));
        }
        let mut tag = [b' '; 4];
        tag[..bytes.len()].copy_from_slice(bytes);
        Ok(TypeTag(tag))
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).unwrap_or("????").trim_end()
    }
}

impl std::fmt::Display for TypeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One stored record: an event or a non-event bookkeeping block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub kind: RecordKind,
    pub type_tag: TypeTag,
    pub run: u32,
    pub event: u32,
    pub payload: Vec<u8>,
}

impl EventRecord {
    /// An event record; `run` and `event` must both be at least 1.
    pub fn event(type_tag: TypeTag, run: u32, event: u32, payload: Vec<u8>) -> Self {
        EventRecord {
            kind: RecordKind::Event,
            type_tag,
            run,
            event,
            payload,
        }
    }

    /// A non-event record; carries run = 0, event = 0.
    pub fn non_event(type_tag: TypeTag, payload: Vec<u8>) -> Self {
        EventRecord {
            kind: RecordKind::NonEvent,
            type_tag,
            run: 0,
            event: 0,
            payload,
        }
    }

    fn validate(&self, max_payload: u32) -> Result<(), StoreError> {
        match self.kind {
            RecordKind::Event => {
                if self.run == 0 || self.event == 0 {
                    return Err(StoreError::InvalidRecord(format!(
                        "event records need run >= 1 and event >= 1, got run={} event={}",
                        self.run, self.event
                    )));
                }
            }
            RecordKind::NonEvent => {
                if self.run != 0 || self.event != 0 {
                    return Err(StoreError::InvalidRecord(format!(
                        "non-event records carry run = 0 and event = 0, got run={} event={}",
                        self.run, self.event
                    )));
                }
            }
        }
        if self.payload.len() > max_payload as usize {
            return Err(StoreError::PayloadTooLarge {
                len: self.payload.len(),
                cap: max_payload,
            });
        }
        Ok(())
    }
}

/// Address of one record: a store file name plus the byte offset of its
/// record header.
///
/// The file name is reference-counted so locations stay cheap to clone
/// in bulk (query hit lists carry one per event).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordLocation {
    pub file_id: Arc<str>,
    pub offset: u64,
}

/// Store creation options.
#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Maximum payload length accepted by `append`.
    pub max_payload: u32,
    /// Write a CRC32 of each payload into the record header.
    pub payload_crc: bool,
    /// Replace an existing file instead of refusing to.
    pub truncate: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            max_payload: DEFAULT_MAX_PAYLOAD,
            payload_crc: true,
            truncate: false,
        }
    }
}

/// Decoded record header, as returned by [`StoreReader::skip_record`].
#[derive(Debug, Clone, Copy)]
pub struct RecordHeader {
    pub kind: RecordKind,
    pub type_tag: TypeTag,
    pub run: u32,
    pub event: u32,
    pub payload_len: u32,
    /// Offset of the record header in the file.
    pub offset: u64,
}

/// Single writer for one store file.
#[derive(Debug)]
pub struct StoreWriter {
    out: BufWriter<File>,
    file_id: Arc<str>,
    len: u64,
    max_payload: u32,
    payload_crc: bool,
    record_count: u64,
}

/// Creates a new store file at `path` and returns a writer positioned at
/// its end. Refuses to replace an existing file unless the config sets
/// the truncate flag.
pub fn create_store(path: &Path, config: StoreConfig) -> Result<StoreWriter, StoreError> {
    if path.exists() && !config.truncate {
        return Err(StoreError::AlreadyExists(path.to_path_buf()));
    }
    let file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)
        .map_err(|source| StoreError::Unwritable {
            path: path.to_path_buf(),
            source,
        })?;
    let mut out = BufWriter::with_capacity(1 << 18, file);
    let flags: u32 = if config.payload_crc {
        FLAG_PAYLOAD_CRC
    } else {
        0
    };
    out.write_all(&STORE_MAGIC)?;
    out.write_all(&STORE_VERSION.to_le_bytes())?;
    out.write_all(&flags.to_le_bytes())?;
    Ok(StoreWriter {
        out,
        file_id: file_id_of(path),
        len: FILE_HEADER_LEN,
        max_payload: config.max_payload,
        payload_crc: config.payload_crc,
        record_count: 0,
    })
}

fn file_id_of(path: &Path) -> Arc<str> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
        .into()
}

impl StoreWriter {
    /// Serializes `record` at the end of the file and returns its location.
    pub fn append(&mut self, record: &EventRecord) -> Result<RecordLocation, StoreError> {
        record.validate(self.max_payload)?;
        let header_len = if self.payload_crc {
            RECORD_HEADER_LEN_CRC
        } else {
            RECORD_HEADER_LEN
        };
        let total_len = header_len + record.payload.len() as u64;
        let offset = self.len;

        self.out.write_all(&(total_len as u32).to_le_bytes())?;
        self.out.write_all(&[record.kind.to_byte()])?;
        self.out.write_all(&record.type_tag.0)?;
        self.out.write_all(&record.run.to_le_bytes())?;
        self.out.write_all(&record.event.to_le_bytes())?;
        self.out
            .write_all(&(record.payload.len() as u32).to_le_bytes())?;
        if self.payload_crc {
            let crc = crc32fast::hash(&record.payload);
            self.out.write_all(&crc.to_le_bytes())?;
        }
        self.out.write_all(&record.payload)?;

        self.len = offset + total_len;
        self.record_count += 1;
        Ok(RecordLocation {
            file_id: self.file_id.clone(),
            offset,
        })
    }

    /// Flushes buffered records so concurrent readers can see them.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.out.flush()?;
        Ok(())
    }

    /// Flushes and closes the writer.
    pub fn finish(mut self) -> Result<(), StoreError> {
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok(())
    }

    pub fn max_payload(&self) -> u32 {
        self.max_payload
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    /// Current file length; also the offset the next append will return.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.record_count == 0
    }
}

/// Reader over one store file.
///
/// The sequential cursor (`next_record` / `skip_record`) and direct reads
/// (`read_at`) are independent; all I/O is positioned. Every byte read
/// from the file is counted, which the index layers use to prove they
/// never touch the store.
#[derive(Debug)]
pub struct StoreReader {
    file: File,
    file_id: Arc<str>,
    file_len: u64,
    header_len: u64,
    pos: u64,
    check_crc: bool,
    bytes_read: AtomicU64,
}

/// Opens an existing store file, validating its header.
pub fn open_store(path: &Path) -> Result<StoreReader, StoreError> {
    let mut file = File::open(path)?;
    let mut header = [0u8; FILE_HEADER_LEN as usize];
    file.read_exact(&mut header).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            StoreError::BadMagic
        } else {
            StoreError::Io(e)
        }
    })?;
    if header[0..4] != STORE_MAGIC {
        return Err(StoreError::BadMagic);
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != STORE_VERSION {
        return Err(StoreError::BadVersion(version));
    }
    let flags = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let check_crc = flags & FLAG_PAYLOAD_CRC != 0;
    let file_len = file.metadata()?.len();
    Ok(StoreReader {
        file,
        file_id: file_id_of(path),
        file_len,
        header_len: if check_crc {
            RECORD_HEADER_LEN_CRC
        } else {
            RECORD_HEADER_LEN
        },
        pos: FILE_HEADER_LEN,
        check_crc,
        bytes_read: AtomicU64::new(0),
    })
}

struct RawHeader {
    total_len: u64,
    kind: RecordKind,
    type_tag: TypeTag,
    run: u32,
    event: u32,
    payload_len: u32,
    payload_crc: u32,
}

impl StoreReader {
    /// The file name this reader was opened under.
    pub fn file_id(&self) -> &str {
        &self.file_id
    }

    /// Total bytes read from the file so far, across all cursors.
    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.load(Ordering::Relaxed)
    }

    /// Rewinds the sequential cursor to the first record.
    pub fn rewind(&mut self) {
        self.pos = FILE_HEADER_LEN;
    }

    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> Result<(), StoreError> {
        #[cfg(unix)]
        {
            use std::os::unix::fs::FileExt;
            self.file.read_exact_at(buf, offset)?;
        }
        #[cfg(not(unix))]
        {
            use std::io::{Seek, SeekFrom};
            let mut f = &self.file;
            f.seek(SeekFrom::Start(offset))?;
            f.read_exact(buf)?;
        }
        self.bytes_read
            .fetch_add(buf.len() as u64, Ordering::Relaxed);
        Ok(())
    }

    /// Reads and validates the record header at `offset`.
    fn header_at(&self, offset: u64) -> Result<RawHeader, StoreError> {
        if offset < FILE_HEADER_LEN || offset >= self.file_len {
            return Err(StoreError::NotARecordBoundary(offset));
        }
        if self.file_len - offset < self.header_len {
            return Err(StoreError::Truncated(offset));
        }
        let mut buf = [0u8; RECORD_HEADER_LEN_CRC as usize];
        let hdr = &mut buf[..self.header_len as usize];
        self.read_exact_at(hdr, offset)?;

        let total_len = u32::from_le_bytes(hdr[0..4].try_into().unwrap()) as u64;
        let kind_byte = hdr[4];
        let payload_len = u32::from_le_bytes(hdr[17..21].try_into().unwrap());
        let kind =
            RecordKind::from_byte(kind_byte).ok_or(StoreError::NotARecordBoundary(offset))?;
        // A genuine header satisfies the length identity exactly; random
        // payload bytes essentially never do.
        if total_len != self.header_len + payload_len as u64 {
            return Err(StoreError::NotARecordBoundary(offset));
        }
        if offset + total_len > self.file_len {
            return Err(StoreError::Truncated(offset));
        }
        let mut tag = [0u8; 4];
        tag.copy_from_slice(&hdr[5..9]);
        Ok(RawHeader {
            total_len,
            kind,
            type_tag: TypeTag(tag),
            run: u32::from_le_bytes(hdr[9..13].try_into().unwrap()),
            event: u32::from_le_bytes(hdr[13..17].try_into().unwrap()),
            payload_len,
            payload_crc: if self.check_crc {
                u32::from_le_bytes(hdr[21..25].try_into().unwrap())
            } else {
                0
            },
        })
    }

    fn record_at(&self, offset: u64) -> Result<(EventRecord, u64), StoreError> {
        let raw = self.header_at(offset)?;
        let mut payload = vec![0u8; raw.payload_len as usize];
        self.read_exact_at(&mut payload, offset + self.header_len)?;
        if self.check_crc && crc32fast::hash(&payload) != raw.payload_crc {
            return Err(StoreError::ChecksumMismatch(offset));
        }
        Ok((
            EventRecord {
                kind: raw.kind,
                type_tag: raw.type_tag,
                run: raw.run,
                event: raw.event,
                payload,
            },
            raw.total_len,
        ))
    }

    /// Returns the next record in file order, or `None` at end of store.
    pub fn next_record(&mut self) -> Result<Option<EventRecord>, StoreError> {
        Ok(self.next_record_located()?.map(|(record, _)| record))
    }

    /// Like [`Self::next_record`], also returning the record's location.
    pub fn next_record_located(
        &mut self,
    ) -> Result<Option<(EventRecord, RecordLocation)>, StoreError> {
        if self.pos >= self.file_len {
            return Ok(None);
        }
        let offset = self.pos;
        let (record, total_len) = self.record_at(offset)?;
        self.pos += total_len;
        Ok(Some((
            record,
            RecordLocation {
                file_id: self.file_id.clone(),
                offset,
            },
        )))
    }

    /// Advances past the next record without reading its payload.
    ///
    /// Costs exactly one header read regardless of payload size.
    pub fn skip_record(&mut self) -> Result<Option<RecordHeader>, StoreError> {
        if self.pos >= self.file_len {
            return Ok(None);
        }
        let offset = self.pos;
        let raw = self.header_at(offset)?;
        self.pos += raw.total_len;
        Ok(Some(RecordHeader {
            kind: raw.kind,
            type_tag: raw.type_tag,
            run: raw.run,
            event: raw.event,
            payload_len: raw.payload_len,
            offset,
        }))
    }

    /// Reads the record at `location` without moving the sequential cursor.
    pub fn read_at(&self, location: &RecordLocation) -> Result<EventRecord, StoreError> {
        self.read_at_offset(location.offset)
    }

    /// Reads the record whose header starts at `offset`.
    pub fn read_at_offset(&self, offset: u64) -> Result<EventRecord, StoreError> {
        let (record, _) = self.record_at(offset)?;
        Ok(record)
    }

    /// Byte length of the underlying file, header included.
    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    /// Re-reads the file length, picking up records flushed by a writer
    /// since the reader was opened.
    pub fn refresh_len(&mut self) -> Result<(), StoreError> {
        self.file_len = self.file.metadata()?.len();
        Ok(())
    }
}

/// A set of open store readers keyed by file id, for resolving record
/// locations that may point into several store files.
#[derive(Default)]
pub struct StoreSet {
    readers: std::collections::HashMap<String, StoreReader>,
}

impl StoreSet {
    pub fn new() -> StoreSet {
        StoreSet::default()
    }

    /// Adds a reader under its own file id.
    pub fn insert(&mut self, reader: StoreReader) {
        self.readers.insert(reader.file_id().to_string(), reader);
    }

    /// Opens `path` and registers the reader.
    pub fn open(&mut self, path: &Path) -> Result<(), StoreError> {
        self.insert(open_store(path)?);
        Ok(())
    }

    pub fn get(&self, file_id: &str) -> Option<&StoreReader> {
        self.readers.get(file_id)
    }

    /// Total bytes read across all registered readers.
    pub fn bytes_read(&self) -> u64 {
        self.readers.values().map(|r| r.bytes_read()).sum()
    }
}
