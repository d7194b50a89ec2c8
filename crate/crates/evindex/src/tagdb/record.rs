//! Tag records: fixed-layout per-event variable slabs.
//!
//! A record body holds every scalar slot (4 bytes each, little-endian),
//! then the packed bitgroups, then one presence bit per variable. Absent
//! variables keep presence bit 0 and read back as missing. The on-disk
//! record prepends a 20-byte header: run, event, store-file index (into
//! the container's name table) and store offset.

use crate::store::RecordLocation;

use super::schema::{TagSchema, VarKind, RECORD_HEADER_LEN};
use super::TagDbError;

/// A scalar value matching a variable's kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TagValue {
    Float(f32),
    Int(i32),
}

/// Read access to one record's variables, presence included.
///
/// Comparisons on missing variables are the caller's concern; `scalar`
/// returns `None` for them.
pub trait TagSource {
    /// Slot 0 of a scalar variable, widened to f64; `None` when missing.
    fn scalar(&self, var: usize) -> Option<f64>;
    /// Bit `index` of a bitgroup variable.
    fn bit(&self, var: usize, index: u32) -> bool;
    /// Presence bit of a variable.
    fn present(&self, var: usize) -> bool;
}

fn read_scalar(schema: &TagSchema, body: &[u8], var: usize) -> Option<f64> {
    let d = schema.var(var);
    let start = schema.slot(var).start as usize;
    match d.kind {
        VarKind::Float32 => {
            let v = f32::from_le_bytes(body[start..start + 4].try_into().unwrap());
            Some(v as f64)
        }
        VarKind::Int32 => {
            let v = i32::from_le_bytes(body[start..start + 4].try_into().unwrap());
            Some(v as f64)
        }
        VarKind::BitGroup => None,
    }
}

fn read_bit(schema: &TagSchema, body: &[u8], var: usize, index: u32) -> bool {
    let d = schema.var(var);
    if d.kind != VarKind::BitGroup || index >= d.width {
        return false;
    }
    let abs_bit = schema.slot(var).start + index;
    let byte = schema.bits_base() + (abs_bit / 8) as usize;
    body[byte] >> (abs_bit % 8) & 1 == 1
}

fn read_present(schema: &TagSchema, body: &[u8], var: usize) -> bool {
    let byte = schema.presence_base() + var / 8;
    body[byte] >> (var % 8) & 1 == 1
}

/// An owned, mutable tag record, used when deriving tags before ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct TagRecord {
    pub run: u32,
    pub event: u32,
    pub location: RecordLocation,
    body: Vec<u8>,
}

impl TagRecord {
    /// A record with every variable missing and all bits clear.
    pub fn new(schema: &TagSchema, run: u32, event: u32, location: RecordLocation) -> TagRecord {
        TagRecord {
            run,
            event,
            location,
            body: vec![0u8; schema.body_len()],
        }
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    pub(crate) fn from_body(
        run: u32,
        event: u32,
        location: RecordLocation,
        body: Vec<u8>,
    ) -> TagRecord {
        TagRecord {
            run,
            event,
            location,
            body,
        }
    }

    fn mark_present(&mut self, schema: &TagSchema, var: usize) {
        let byte = schema.presence_base() + var / 8;
        self.body[byte] |= 1 << (var % 8);
    }

    /// Writes slot `slot` of a float variable and marks it present.
    pub fn set_float_slot(
        &mut self,
        schema: &TagSchema,
        var: usize,
        slot: u32,
        value: f32,
    ) -> Result<(), TagDbError> {
        let d = schema.var(var);
        if d.kind != VarKind::Float32 {
            return Err(TagDbError::ValueKind {
                name: d.name.clone(),
                expected: d.kind.as_str(),
            });
        }
        assert!(slot < d.width, "slot {slot} out of width {}", d.width);
        let start = (schema.slot(var).start + slot * 4) as usize;
        self.body[start..start + 4].copy_from_slice(&value.to_le_bytes());
        self.mark_present(schema, var);
        Ok(())
    }

    pub fn set_float(
        &mut self,
        schema: &TagSchema,
        var: usize,
        value: f32,
    ) -> Result<(), TagDbError> {
        self.set_float_slot(schema, var, 0, value)
    }

    pub fn set_int(
        &mut self,
        schema: &TagSchema,
        var: usize,
        value: i32,
    ) -> Result<(), TagDbError> {
        let d = schema.var(var);
        if d.kind != VarKind::Int32 {
            return Err(TagDbError::ValueKind {
                name: d.name.clone(),
                expected: d.kind.as_str(),
            });
        }
        let start = schema.slot(var).start as usize;
        self.body[start..start + 4].copy_from_slice(&value.to_le_bytes());
        self.mark_present(schema, var);
        Ok(())
    }

    /// Fills a whole bitgroup from packed 32-bit words and marks it
    /// present. `words` must cover the group's width exactly.
    pub fn set_bitgroup(
        &mut self,
        schema: &TagSchema,
        var: usize,
        words: &[u32],
    ) -> Result<(), TagDbError> {
        let d = schema.var(var);
        if d.kind != VarKind::BitGroup {
            return Err(TagDbError::ValueKind {
                name: d.name.clone(),
                expected: d.kind.as_str(),
            });
        }
        let want_words = d.width.div_ceil(32) as usize;
        assert_eq!(words.len(), want_words, "bitgroup {} word count", d.name);
        let base = schema.bits_base() + (schema.slot(var).start / 8) as usize;
        for (w, word) in words.iter().enumerate() {
            let at = base + w * 4;
            self.body[at..at + 4].copy_from_slice(&word.to_le_bytes());
        }
        self.mark_present(schema, var);
        Ok(())
    }
}

impl TagSource for (&TagSchema, &TagRecord) {
    fn scalar(&self, var: usize) -> Option<f64> {
        if !read_present(self.0, &self.1.body, var) {
            return None;
        }
        read_scalar(self.0, &self.1.body, var)
    }

    fn bit(&self, var: usize, index: u32) -> bool {
        read_bit(self.0, &self.1.body, var, index)
    }

    fn present(&self, var: usize) -> bool {
        read_present(self.0, &self.1.body, var)
    }
}

/// Zero-copy view over one on-disk record inside a container slab.
#[derive(Clone, Copy)]
pub struct TagRecordView<'a> {
    schema: &'a TagSchema,
    /// Full record bytes, header included.
    bytes: &'a [u8],
    /// Container's store-file name table.
    names: &'a [std::sync::Arc<str>],
}

impl<'a> TagRecordView<'a> {
    pub(crate) fn new(
        schema: &'a TagSchema,
        bytes: &'a [u8],
        names: &'a [std::sync::Arc<str>],
    ) -> Self {
        debug_assert_eq!(bytes.len(), schema.record_len());
        TagRecordView {
            schema,
            bytes,
            names,
        }
    }

    pub fn run(&self) -> u32 {
        u32::from_le_bytes(self.bytes[0..4].try_into().unwrap())
    }

    pub fn event(&self) -> u32 {
        u32::from_le_bytes(self.bytes[4..8].try_into().unwrap())
    }

    pub fn location(&self) -> RecordLocation {
        let file_idx = u32::from_le_bytes(self.bytes[8..12].try_into().unwrap()) as usize;
        let offset = u64::from_le_bytes(self.bytes[12..20].try_into().unwrap());
        RecordLocation {
            file_id: self
                .names
                .get(file_idx)
                .cloned()
                .unwrap_or_else(|| "".into()),
            offset,
        }
    }

    pub fn schema(&self) -> &TagSchema {
        self.schema
    }

    fn body(&self) -> &[u8] {
        &self.bytes[RECORD_HEADER_LEN..]
    }

    /// Copies the view into an owned record.
    pub fn to_owned_record(&self) -> TagRecord {
        TagRecord::from_body(
            self.run(),
            self.event(),
            self.location(),
            self.body().to_vec(),
        )
    }
}

impl TagSource for TagRecordView<'_> {
    fn scalar(&self, var: usize) -> Option<f64> {
        if !read_present(self.schema, self.body(), var) {
            return None;
        }
        read_scalar(self.schema, self.body(), var)
    }

    fn bit(&self, var: usize, index: u32) -> bool {
        read_bit(self.schema, self.body(), var, index)
    }

    fn present(&self, var: usize) -> bool {
        read_present(self.schema, self.body(), var)
    }
}

/// Serializes a record's on-disk form: 20-byte header plus body.
pub(crate) fn encode_record(record: &TagRecord, file_idx: u32, out: &mut Vec<u8>) {
    out.extend_from_slice(&record.run.to_le_bytes());
    out.extend_from_slice(&record.event.to_le_bytes());
    out.extend_from_slice(&file_idx.to_le_bytes());
    out.extend_from_slice(&record.location.offset.to_le_bytes());
    out.extend_from_slice(&record.body);
}
