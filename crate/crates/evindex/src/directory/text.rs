//! Text serialization of event directories.
//!
//! A directory file holds three tables, each terminated by `END TABLE`:
//!
//! * `TABLE 10` (`ZEDFILEX`) — store file references: row id, four name
//!   chunks (concatenated on parse; the name goes into the first chunk on
//!   write) and an opaque options string.
//! * `TABLE 11` (`ZEDMETAX`) — non-event records: row id, name, offset.
//! * `TABLE 12` (`ZEDIRX`) — index rows: row id, type tag, run, event,
//!   four flag words as `X'hex'`, offset.
//!
//! Rows are comma-separated fields ending in `;` and may span lines.
//! `/* ... */` comments and arbitrary whitespace are skipped. Hex fields
//! accept 1–8 digits and are left-padded to 32 bits; the writer always
//! emits 8 digits. Row ids in `TABLE 12` must be strictly increasing.

use std::fmt::Write as _;

use super::{DirEntry, DirectoryError, EventDirectory, FileRef, FlagWords, MetaRef};
use crate::store::TypeTag;

/// Renders a directory in the canonical text format.
pub fn serialize_directory(dir: &EventDirectory) -> String {
    let mut out = String::new();
    out.push_str("TABLE 10\n /* ZEDFILEX (ID, Name(4), Options) */\n");
    for f in &dir.file_refs {
        let _ = writeln!(out, " {}, '{}', '' , '' , '' , ", f.id, f.name);
        let _ = writeln!(out, "    '{}';", f.options);
    }
    out.push_str(" END TABLE\n\nTABLE 11\n /* ZEDMETAX (ID, Name, OFF) */\n");
    for m in &dir.meta_refs {
        let quoted = format!("'{}'", m.name);
        let _ = writeln!(out, " {}, {:<13}, {:>6};", m.id, quoted, m.offset);
    }
    out.push_str(
        " END TABLE\n\nTABLE 12\n /* ZEDIRX (ID, GAFTyp, Nr1, Nr2, TStam11, TStam12, TStam21, TStam22, OFF) */\n",
    );
    for e in &dir.entries {
        let w = e.flags.0;
        let _ = writeln!(
            out,
            "{:>5}, '{}', {:>5}, {:>4}, X'{:08X}', X'{:08X}', X'{:08X}', X'{:08X}', {:>5};",
            e.seq_id, e.type_tag, e.run, e.event, w[0], w[1], w[2], w[3], e.offset
        );
    }
    out.push_str(" END TABLE\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(u64),
    Str(String),
    Hex(u32),
    Word(String),
    Comma,
    Semi,
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            bytes: text.as_bytes(),
            pos: 0,
            line: 1,
        }
    }

    fn err(&self, msg: impl Into<String>) -> DirectoryError {
        DirectoryError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> u8 {
        let b = self.bytes[self.pos];
        if b == b'\n' {
            self.line += 1;
        }
        self.pos += 1;
        b
    }

    fn skip_ws_and_comments(&mut self) -> Result<(), DirectoryError> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.bump();
            }
            if self.pos + 1 < self.bytes.len()
                && self.bytes[self.pos] == b'/'
                && self.bytes[self.pos + 1] == b'*'
            {
                let start_line = self.line;
                self.bump();
                self.bump();
                loop {
                    if self.pos + 1 >= self.bytes.len() {
                        return Err(DirectoryError::Parse {
                            line: start_line,
                            msg: "unterminated comment".into(),
                        });
                    }
                    if self.bytes[self.pos] == b'*' && self.bytes[self.pos + 1] == b'/' {
                        self.bump();
                        self.bump();
                        break;
                    }
                    self.bump();
                }
                continue;
            }
            return Ok(());
        }
    }

    /// Returns the next token, or `None` at end of input.
    fn next(&mut self) -> Result<Option<(Token, u32)>, DirectoryError> {
        self.skip_ws_and_comments()?;
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let line = self.line;
        let b = self.bytes[self.pos];
        let token = match b {
            b',' => {
                self.bump();
                Token::Comma
            }
            b';' => {
                self.bump();
                Token::Semi
            }
            b'\'' => {
                self.bump();
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\'' {
                    if self.bytes[self.pos] == b'\n' {
                        return Err(self.err("unterminated string"));
                    }
                    self.bump();
                }
                if self.pos >= self.bytes.len() {
                    return Err(self.err("unterminated string"));
                }
                let s = std::str::from_utf8(&self.bytes[start..self.pos])
                    .map_err(|_| self.err("string is not valid UTF-8"))?
                    .to_string();
                self.bump(); // closing quote
                Token::Str(s)
            }
            b'0'..=b'9' => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                let value = text
                    .parse()
                    .map_err(|_| self.err(format!("integer out of range: {text}")))?;
                Token::Int(value)
            }
            b'X' | b'x' if self.pos + 1 < self.bytes.len() && self.bytes[self.pos + 1] == b'\'' => {
                self.bump();
                self.bump();
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\'' {
                    self.bump();
                }
                if self.pos >= self.bytes.len() {
                    return Err(self.err("unterminated hex field"));
                }
                let digits = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                self.bump(); // closing quote
                if digits.is_empty() || digits.len() > 8 {
                    return Err(
                        self.err(format!("hex field must have 1-8 digits, got {:?}", digits))
                    );
                }
                let value = u32::from_str_radix(digits, 16)
                    .map_err(|_| self.err(format!("bad hex field {digits:?}")))?;
                Token::Hex(value)
            }
            _ if b.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric()
                        || self.bytes[self.pos] == b'_')
                {
                    self.bump();
                }
                Token::Word(
                    std::str::from_utf8(&self.bytes[start..self.pos])
                        .unwrap()
                        .to_string(),
                )
            }
            other => return Err(self.err(format!("unexpected character {:?}", other as char))),
        };
        Ok(Some((token, line)))
    }
}

fn table_name(id: u64) -> &'static str {
    match id {
        10 => "ZEDFILEX",
        11 => "ZEDMETAX",
        12 => "ZEDIRX",
        _ => "?",
    }
}

/// Parses directory text into its structured form.
pub fn parse_directory(text: &str) -> Result<EventDirectory, DirectoryError> {
    let mut lex = Lexer::new(text);
    let mut dir = EventDirectory::default();
    let mut last_seq: u32 = 0;

    while let Some((tok, line)) = lex.next()? {
        match tok {
            Token::Word(w) if w == "TABLE" => {}
            _ => {
                return Err(DirectoryError::Parse {
                    line,
                    msg: "expected TABLE <id>".into(),
                })
            }
        }
        let id = match lex.next()? {
            Some((Token::Int(id), _)) => id,
            other => {
                return Err(DirectoryError::Parse {
                    line: lex.line,
                    msg: format!("expected table id, got {other:?}"),
                })
            }
        };
        if !(10..=12).contains(&id) {
            return Err(DirectoryError::UnknownTable { line: lex.line, id });
        }

        // Rows until END TABLE.
        loop {
            let Some((tok, line)) = lex.next()? else {
                return Err(DirectoryError::UnterminatedTable(table_name(id)));
            };
            match tok {
                Token::Word(w) if w == "END" => {
                    match lex.next()? {
                        Some((Token::Word(w2), _)) if w2 == "TABLE" => {}
                        _ => {
                            return Err(DirectoryError::Parse {
                                line: lex.line,
                                msg: "expected TABLE after END".into(),
                            })
                        }
                    }
                    break;
                }
                first => {
                    let fields = read_row_fields(&mut lex, first, id)?;
                    match id {
                        10 => dir.file_refs.push(file_ref_from(fields, line)?),
                        11 => dir.meta_refs.push(meta_ref_from(fields, line)?),
                        12 => {
                            let entry = dir_entry_from(fields, line)?;
                            if entry.seq_id <= last_seq {
                                return Err(DirectoryError::OutOfOrderSeq {
                                    line,
                                    id: entry.seq_id,
                                    prev: last_seq,
                                });
                            }
                            last_seq = entry.seq_id;
                            dir.entries.push(entry);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    Ok(dir)
}

/// Incremental parse state for statement-at-a-time scans of a directory
/// file (see [`super::select_stream`]).
#[derive(Default)]
pub(super) struct Statement {
    current_table: Option<u64>,
    last_seq: u32,
}

impl Statement {
    /// End-of-input check: every table must have seen its END TABLE.
    pub(super) fn finish(&self) -> Result<(), DirectoryError> {
        if let Some(id) = self.current_table {
            return Err(DirectoryError::UnterminatedTable(table_name(id)));
        }
        Ok(())
    }
}

/// Processes one statement — section markers plus at most one row — and
/// returns the row when it is an index entry. Rows of the other tables
/// are validated and dropped.
pub(super) fn entry_from_statement(
    state: &mut Statement,
    text: &str,
    start_line: u32,
) -> Result<Option<DirEntry>, DirectoryError> {
    let mut lex = Lexer::new(text);
    lex.line = start_line;
    while let Some((tok, line)) = lex.next()? {
        match tok {
            Token::Word(w) if w == "END" => {
                match lex.next()? {
                    Some((Token::Word(w2), _)) if w2 == "TABLE" => {}
                    _ => {
                        return Err(DirectoryError::Parse {
                            line: lex.line,
                            msg: "expected TABLE after END".into(),
                        })
                    }
                }
                if state.current_table.take().is_none() {
                    return Err(DirectoryError::Parse {
                        line,
                        msg: "END TABLE outside any table".into(),
                    });
                }
            }
            Token::Word(w) if w == "TABLE" => {
                let id = match lex.next()? {
                    Some((Token::Int(id), _)) => id,
                    other => {
                        return Err(DirectoryError::Parse {
                            line: lex.line,
                            msg: format!("expected table id, got {other:?}"),
                        })
                    }
                };
                if !(10..=12).contains(&id) {
                    return Err(DirectoryError::UnknownTable { line: lex.line, id });
                }
                state.current_table = Some(id);
            }
            first => {
                let Some(table) = state.current_table else {
                    return Err(DirectoryError::Parse {
                        line,
                        msg: "row outside any table".into(),
                    });
                };
                let fields = read_row_fields(&mut lex, first, table)?;
                return match table {
                    10 => {
                        file_ref_from(fields, line)?;
                        Ok(None)
                    }
                    11 => {
                        meta_ref_from(fields, line)?;
                        Ok(None)
                    }
                    12 => {
                        let entry = dir_entry_from(fields, line)?;
                        if entry.seq_id <= state.last_seq {
                            return Err(DirectoryError::OutOfOrderSeq {
                                line,
                                id: entry.seq_id,
                                prev: state.last_seq,
                            });
                        }
                        state.last_seq = entry.seq_id;
                        Ok(Some(entry))
                    }
                    _ => unreachable!(),
                };
            }
        }
    }
    Ok(None)
}

/// Collects one row's fields (already holding the first token) up to the
/// terminating semicolon.
fn read_row_fields(
    lex: &mut Lexer<'_>,
    first: Token,
    table_id: u64,
) -> Result<Vec<Token>, DirectoryError> {
    let mut fields = vec![first];
    loop {
        match lex.next()? {
            None => return Err(DirectoryError::UnterminatedTable(table_name(table_id))),
            Some((Token::Semi, _)) => return Ok(fields),
            Some((Token::Comma, _)) => {}
            Some((tok @ (Token::Int(_) | Token::Str(_) | Token::Hex(_)), _)) => fields.push(tok),
            Some((other, line)) => {
                return Err(DirectoryError::Parse {
                    line,
                    msg: format!("unexpected token in row: {other:?}"),
                })
            }
        }
    }
}

fn want_int(tok: Option<&Token>, what: &str, line: u32) -> Result<u64, DirectoryError> {
    match tok {
        Some(Token::Int(v)) => Ok(*v),
        other => Err(DirectoryError::Parse {
            line,
            msg: format!("expected integer {what}, got {other:?}"),
        }),
    }
}

fn want_str<'t>(tok: Option<&'t Token>, what: &str, line: u32) -> Result<&'t str, DirectoryError> {
    match tok {
        Some(Token::Str(s)) => Ok(s),
        other => Err(DirectoryError::Parse {
            line,
            msg: format!("expected string {what}, got {other:?}"),
        }),
    }
}

fn want_hex(tok: Option<&Token>, what: &str, line: u32) -> Result<u32, DirectoryError> {
    match tok {
        Some(Token::Hex(v)) => Ok(*v),
        other => Err(DirectoryError::Parse {
            line,
            msg: format!("expected X'hex' {what}, got {other:?}"),
        }),
    }
}

fn file_ref_from(fields: Vec<Token>, line: u32) -> Result<FileRef, DirectoryError> {
    if fields.len() != 6 {
        return Err(DirectoryError::Parse {
            line,
            msg: format!("file row needs 6 fields, got {}", fields.len()),
        });
    }
    let id = want_int(fields.first(), "row id", line)? as u32;
    let mut name = String::new();
    for chunk in &fields[1..5] {
        name.push_str(want_str(Some(chunk), "name chunk", line)?);
    }
    let options = want_str(fields.get(5), "options", line)?.to_string();
    Ok(FileRef { id, name, options })
}

fn meta_ref_from(fields: Vec<Token>, line: u32) -> Result<MetaRef, DirectoryError> {
    if fields.len() != 3 {
        return Err(DirectoryError::Parse {
            line,
            msg: format!("meta row needs 3 fields, got {}", fields.len()),
        });
    }
    Ok(MetaRef {
        id: want_int(fields.first(), "row id", line)? as u32,
        name: want_str(fields.get(1), "name", line)?.to_string(),
        offset: want_int(fields.get(2), "offset", line)?,
    })
}

fn dir_entry_from(fields: Vec<Token>, line: u32) -> Result<DirEntry, DirectoryError> {
    if fields.len() != 9 {
        return Err(DirectoryError::Parse {
            line,
            msg: format!("index row needs 9 fields, got {}", fields.len()),
        });
    }
    let seq_id = want_int(fields.first(), "row id", line)? as u32;
    let tag = want_str(fields.get(1), "type tag", line)?;
    let type_tag = TypeTag::new(tag).map_err(|e| DirectoryError::Parse {
        line,
        msg: e.to_string(),
    })?;
    let run = want_int(fields.get(2), "run", line)? as u32;
    let event = want_int(fields.get(3), "event", line)? as u32;
    let words = [
        want_hex(fields.get(4), "flag word 0", line)?,
        want_hex(fields.get(5), "flag word 1", line)?,
        want_hex(fields.get(6), "flag word 2", line)?,
        want_hex(fields.get(7), "flag word 3", line)?,
    ];
    let offset = want_int(fields.get(8), "offset", line)?;
    Ok(DirEntry {
        seq_id,
        type_tag,
        run,
        event,
        flags: FlagWords(words),
        offset,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::golden_rows;
    use super::*;

    const GOLDEN: &str = include_str!("../../tests/data/golden_directory.zed");

    #[test]
    fn golden_file_parses_to_golden_rows() {
        let dir = parse_directory(GOLDEN).unwrap();
        assert_eq!(dir, golden_rows());
        assert_eq!(dir.entries.len(), 6);
        let third = &dir.entries[2];
        assert_eq!((third.run, third.event, third.offset), (35762, 20, 102480));
        let events: Vec<u32> = dir.entries.iter().map(|e| e.event).collect();
        assert_eq!(events, vec![16, 17, 20, 21, 22, 23]);
    }

    #[test]
    fn short_hex_fields_are_left_padded() {
        let text =
            "TABLE 12\n 1, 'EVTF', 1, 1, X'0000060', X'60', X'0', X'00000000', 12;\n END TABLE\n";
        let dir = parse_directory(text).unwrap();
        assert_eq!(dir.entries[0].flags, FlagWords([0x60, 0x60, 0, 0]));
    }

    #[test]
    fn serialize_row_matches_golden_layout() {
        let dir = golden_rows();
        let text = serialize_directory(&dir);
        // Identical to the golden file's first row apart from the canonical
        // 8-digit hex width.
        assert!(
            text.contains(
                "    1, 'EVTF', 35762,   16, X'00000468', X'00000060', X'00000000', X'00000000', 62751;"
            ),
            "row not found in:\n{text}"
        );
    }

    #[test]
    fn parse_serialize_round_trip_on_golden() {
        let dir = parse_directory(GOLDEN).unwrap();
        let text = serialize_directory(&dir);
        let back = parse_directory(&text).unwrap();
        assert_eq!(back, dir);
    }

    #[test]
    fn empty_directory_serializes_to_three_empty_tables() {
        let text = serialize_directory(&EventDirectory::default());
        let dir = parse_directory(&text).unwrap();
        assert!(dir.file_refs.is_empty());
        assert!(dir.meta_refs.is_empty());
        assert!(dir.entries.is_empty());
        assert_eq!(text.matches("END TABLE").count(), 3);
    }

    #[test]
    fn missing_end_table_names_the_table() {
        let text = "TABLE 12\n 1, 'EVTF', 1, 1, X'0', X'0', X'0', X'0', 12;\n";
        match parse_directory(text) {
            Err(DirectoryError::UnterminatedTable("ZEDIRX")) => {}
            other => panic!("expected UnterminatedTable(ZEDIRX), got {other:?}"),
        }
    }

    #[test]
    fn unknown_table_id_is_reported() {
        match parse_directory("TABLE 13\n END TABLE\n") {
            Err(DirectoryError::UnknownTable { id: 13, .. }) => {}
            other => panic!("expected UnknownTable, got {other:?}"),
        }
    }

    #[test]
    fn out_of_order_seq_reports_line() {
        let text = "TABLE 12\n 2, 'EVTF', 1, 1, X'0', X'0', X'0', X'0', 12;\n 1, 'EVTF', 1, 2, X'0', X'0', X'0', X'0', 40;\n END TABLE\n";
        match parse_directory(text) {
            Err(DirectoryError::OutOfOrderSeq {
                line: 3,
                id: 1,
                prev: 2,
            }) => {}
            other => panic!("expected OutOfOrderSeq at line 3, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "TABLE 11\n 1, 'HSYOUT', 137;\n 2, 'HEAD';\n END TABLE\n";
        match parse_directory(text) {
            Err(DirectoryError::Parse { line: 3, .. }) => {}
            other => panic!("expected Parse error at line 3, got {other:?}"),
        }
    }

    #[test]
    fn hex_wider_than_32_bits_is_rejected() {
        let text = "TABLE 12\n 1, 'EVTF', 1, 1, X'123456789', X'0', X'0', X'0', 12;\n END TABLE\n";
        assert!(matches!(
            parse_directory(text),
            Err(DirectoryError::Parse { .. })
        ));
    }
}
