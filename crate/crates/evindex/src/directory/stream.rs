//! Bounded-memory selection over directory files.
//!
//! A parsed [`EventDirectory`](super::EventDirectory) costs about 40
//! bytes per entry, which is fine into the tens of millions of rows.
//! Past that, [`select_file`] scans the text statement by statement and
//! keeps only the matching entries resident, so memory stays bounded by
//! the longest single row regardless of directory size.
//!
//! The statement reader honors the same lexical rules as the full
//! parser (quoted strings, `/* ... */` comments, rows terminated by
//! `;`) and applies the same row validation.

use std::io::{BufReader, Read};
use std::path::Path;

use super::text::{entry_from_statement, Statement};
use super::{DirEntry, DirectoryError, FlagExpr};

/// Streams one directory file and returns the entries matching `expr`,
/// in file order, without materializing the directory.
pub fn select_file(path: &Path, expr: &FlagExpr) -> Result<Vec<DirEntry>, DirectoryError> {
    select_stream(BufReader::new(std::fs::File::open(path)?), expr)
}

/// [`select_file`] over any buffered reader.
pub fn select_stream<R: Read>(
    reader: BufReader<R>,
    expr: &FlagExpr,
) -> Result<Vec<DirEntry>, DirectoryError> {
    let mut splitter = StatementSplitter::new(reader);
    let mut state = Statement::default();
    let mut hits = Vec::new();
    while let Some((bytes, line)) = splitter.next_statement()? {
        let text = std::str::from_utf8(&bytes).map_err(|_| DirectoryError::Parse {
            line,
            msg: "directory text is not valid UTF-8".into(),
        })?;
        if let Some(entry) = entry_from_statement(&mut state, text, line)? {
            if expr.matches(&entry.flags) {
                hits.push(entry);
            }
        }
    }
    state.finish()?;
    Ok(hits)
}

/// Splits the byte stream into statements: everything up to a row
/// terminator `;` (or the trailing bytes at end of input). Semicolons
/// inside quoted strings or comments do not terminate a statement.
struct StatementSplitter<R: Read> {
    input: BufReader<R>,
    line: u32,
    done: bool,
}

impl<R: Read> StatementSplitter<R> {
    fn new(input: BufReader<R>) -> Self {
        StatementSplitter {
            input,
            line: 1,
            done: false,
        }
    }

    fn next_statement(&mut self) -> Result<Option<(Vec<u8>, u32)>, DirectoryError> {
        if self.done {
            return Ok(None);
        }
        let mut stmt: Vec<u8> = Vec::new();
        let start_line = self.line;
        let mut in_string = false;
        let mut in_comment = false;
        let mut prev: u8 = 0;
        loop {
            let mut byte = [0u8; 1];
            match self.input.read(&mut byte)? {
                0 => {
                    self.done = true;
                    // Trailing whitespace-only bytes are not a statement.
                    if stmt.iter().all(|b| b.is_ascii_whitespace()) {
                        return Ok(None);
                    }
                    return Ok(Some((stmt, start_line)));
                }
                _ => {
                    let b = byte[0];
                    if b == b'\n' {
                        self.line += 1;
                    }
                    stmt.push(b);
                    if in_comment {
                        if prev == b'*' && b == b'/' {
                            in_comment = false;
                        }
                    } else if in_string {
                        if b == b'\'' {
                            in_string = false;
                        }
                    } else {
                        match b {
                            b'\'' => in_string = true,
                            b'*' if prev == b'/' => in_comment = true,
                            b';' => return Ok(Some((stmt, start_line))),
                            _ => {}
                        }
                    }
                    prev = b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_directory, select, serialize_directory};
    use super::*;
    use std::io::BufReader;

    const GOLDEN: &str = include_str!("../../tests/data/golden_directory.zed");

    fn stream(text: &str, expr: &FlagExpr) -> Result<Vec<DirEntry>, DirectoryError> {
        select_stream(BufReader::new(text.as_bytes()), expr)
    }

    #[test]
    fn streamed_selection_equals_in_memory_selection() {
        let dir = parse_directory(GOLDEN).unwrap();
        for text in [
            "true",
            "flag(3) and not flag(0)",
            "flag(61)",
            "not flag(2) or flag(10)",
        ] {
            let expr = FlagExpr::parse(text).unwrap();
            let want = select(&dir, &expr);
            let got = stream(GOLDEN, &expr).unwrap();
            assert_eq!(got, want, "expr {text}");
        }
    }

    #[test]
    fn streamed_selection_on_canonical_output() {
        let dir = parse_directory(GOLDEN).unwrap();
        let canonical = serialize_directory(&dir);
        let expr = FlagExpr::parse("flag(3)").unwrap();
        assert_eq!(stream(&canonical, &expr).unwrap(), select(&dir, &expr));
    }

    #[test]
    fn streamed_selection_validates_like_the_parser() {
        let expr = FlagExpr::True;
        // Unterminated table.
        let text = "TABLE 12\n 1, 'EVTF', 1, 1, X'0', X'0', X'0', X'0', 12;\n";
        assert!(matches!(
            stream(text, &expr),
            Err(DirectoryError::UnterminatedTable("ZEDIRX"))
        ));
        // Out-of-order row ids.
        let text = "TABLE 12\n 2, 'EVTF', 1, 1, X'0', X'0', X'0', X'0', 12;\n 1, 'EVTF', 1, 2, X'0', X'0', X'0', X'0', 40;\n END TABLE\n";
        assert!(matches!(
            stream(text, &expr),
            Err(DirectoryError::OutOfOrderSeq { id: 1, .. })
        ));
        // Unknown table id.
        assert!(matches!(
            stream("TABLE 9\n END TABLE\n", &expr),
            Err(DirectoryError::UnknownTable { id: 9, .. })
        ));
        // A row outside any table.
        assert!(matches!(
            stream(" 1, 'EVTF', 1, 1, X'0', X'0', X'0', X'0', 12;", &expr),
            Err(DirectoryError::Parse { .. })
        ));
    }

    #[test]
    fn semicolons_inside_strings_and_comments_do_not_split() {
        let text = "TABLE 10\n /* options; with a semicolon */\n 1, 'a;b', '' , '' , '' , 'X=1;Y=2';\n END TABLE\nTABLE 11\n END TABLE\nTABLE 12\n END TABLE\n";
        assert!(stream(text, &FlagExpr::True).unwrap().is_empty());
        // The in-memory parser agrees the text is well-formed.
        let dir = parse_directory(text).unwrap();
        assert_eq!(dir.file_refs[0].name, "a;b");
        assert_eq!(dir.file_refs[0].options, "X=1;Y=2");
    }
}
