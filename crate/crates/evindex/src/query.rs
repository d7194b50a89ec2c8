//! Predicate language over tag variables and flag bits.
//!
//! Grammar (keywords case-insensitive, names schema-checked at parse
//! time):
//!
//! ```text
//! expr    := or
//! or      := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | atom
//! atom    := "(" expr ")" | "true" | "false"
//!          | "flag" "(" GROUP "," INT ")"
//!          | NAME OP NUMBER            OP in { < <= > >= == != }
//! ```
//!
//! Numeric literals are 64-bit floats; stored 32-bit values are widened
//! before comparing. Any comparison involving a missing value is false;
//! `not` then applies ordinary boolean negation on top, so
//! `not (X > 5)` is true for a record where `X` is missing.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::tagdb::{TagSchema, TagSource, VarKind};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable {name:?} at byte {pos}")]
    UnknownName { name: String, pos: usize },
    #[error("{name:?} is not a scalar variable (at byte {pos})")]
    NotScalar { name: String, pos: usize },
    #[error("{name:?} is not a bitgroup (at byte {pos})")]
    NotBitgroup { name: String, pos: usize },
    #[error("bit {index} out of range for {group:?} ({width} bits)")]
    BitRange {
        group: String,
        index: u32,
        width: u32,
    },
}

/// Comparison operator of a value predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn apply(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

/// A schema-resolved variable reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarRef {
    pub name: String,
    /// Index into the schema's descriptor list.
    pub index: usize,
}

/// Parsed, schema-validated predicate tree.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryAst {
    True,
    False,
    Compare {
        var: VarRef,
        op: CmpOp,
        literal: f64,
    },
    FlagTest {
        group: VarRef,
        bit: u32,
    },
    Not(Box<QueryAst>),
    And(Box<QueryAst>, Box<QueryAst>),
    Or(Box<QueryAst>, Box<QueryAst>),
}

/// Counters from one query scan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub scanned: u64,
    pub matched: u64,
    /// Distinct variables referenced by the query.
    pub variables: usize,
}

/// Evaluates a predicate against one record. Total: never fails on a
/// record of the schema the query was parsed against.
pub fn evaluate<S: TagSource>(ast: &QueryAst, record: &S) -> bool {
    match ast {
        QueryAst::True => true,
        QueryAst::False => false,
        QueryAst::Compare { var, op, literal } => match record.scalar(var.index) {
            Some(v) => op.apply(v, *literal),
            None => false,
        },
        QueryAst::FlagTest { group, bit } => record.bit(group.index, *bit),
        QueryAst::Not(e) => !evaluate(e, record),
        QueryAst::And(a, b) => evaluate(a, record) && evaluate(b, record),
        QueryAst::Or(a, b) => evaluate(a, record) || evaluate(b, record),
    }
}

/// Number of distinct variable names referenced; flag tests count their
/// group once.
pub fn count_variables(ast: &QueryAst) -> usize {
    fn walk<'a>(ast: &'a QueryAst, names: &mut BTreeSet<&'a str>) {
        match ast {
            QueryAst::True | QueryAst::False => {}
            QueryAst::Compare { var, .. } => {
                names.insert(&var.name);
            }
            QueryAst::FlagTest { group, .. } => {
                names.insert(&group.name);
            }
            QueryAst::Not(e) => walk(e, names),
            QueryAst::And(a, b) | QueryAst::Or(a, b) => {
                walk(a, names);
                walk(b, names);
            }
        }
    }
    let mut names = BTreeSet::new();
    walk(ast, &mut names);
    names.len()
}

/// Parses a query against a schema.
pub fn parse_query(text: &str, schema: &TagSchema) -> Result<QueryAst, QueryError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        schema,
    };
    let ast = p.parse_or()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(QueryError::Syntax {
            pos: p.pos,
            msg: "trailing input after expression".into(),
        });
    }
    Ok(ast)
}

/// Parses a query file: one query per line, blank lines and `#` comments
/// skipped. Returns the queries with their 1-based line numbers.
pub fn parse_query_file(
    text: &str,
    schema: &TagSchema,
) -> Result<Vec<(u32, QueryAst)>, (u32, QueryError)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u32 + 1;
        let stripped = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        if stripped.trim().is_empty() {
            continue;
        }
        let ast = parse_query(stripped, schema).map_err(|e| (line, e))?;
        out.push((line, ast));
    }
    Ok(out)
}

// Precedence for printing with minimal parentheses.
fn level(e: &QueryAst) -> u8 {
    match e {
        QueryAst::Or(..) => 0,
        QueryAst::And(..) => 1,
        QueryAst::Not(..) => 2,
        _ => 3,
    }
}

fn fmt_prec(e: &QueryAst, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let parens = level(e) < min;
    if parens {
        f.write_str("(")?;
    }
    match e {
        QueryAst::True => f.write_str("true")?,
        QueryAst::False => f.write_str("false")?,
        QueryAst::Compare { var, op, literal } => {
            write!(f, "{} {} {}", var.name, op.as_str(), literal)?
        }
        QueryAst::FlagTest { group, bit } => write!(f, "flag({}, {bit})", group.name)?,
        QueryAst::Not(inner) => {
            f.write_str("not ")?;
            fmt_prec(inner, 2, f)?;
        }
        QueryAst::And(a, b) => {
            fmt_prec(a, 1, f)?;
            f.write_str(" and ")?;
            fmt_prec(b, 2, f)?;
        }
        QueryAst::Or(a, b) => {
            fmt_prec(a, 0, f)?;
            f.write_str(" or ")?;
            fmt_prec(b, 1, f)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    schema: &'a TagSchema,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> QueryError {
        QueryError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn word_at(&self, pos: usize) -> Option<&'a str> {
        let bytes = self.bytes;
        if pos >= bytes.len() || !(bytes[pos].is_ascii_alphabetic() || bytes[pos] == b'_') {
            return None;
        }
        let mut end = pos;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        Some(std::str::from_utf8(&bytes[pos..end]).unwrap())
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if let Some(word) = self.word_at(self.pos) {
            if word.eq_ignore_ascii_case(kw) {
                self.pos += word.len();
                return true;
            }
        }
        false
    }

    fn eat_char(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<QueryAst, QueryError> {
        let mut lhs = self.parse_and()?;
        while self.eat_keyword("or") {
            let rhs = self.parse_and()?;
            lhs = QueryAst::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<QueryAst, QueryError> {
        let mut lhs = self.parse_unary()?;
        while self.eat_keyword("and") {
            let rhs = self.parse_unary()?;
            lhs = QueryAst::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<QueryAst, QueryError> {
        if self.eat_keyword("not") {
            return Ok(QueryAst::Not(Box::new(self.parse_unary()?)));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<QueryAst, QueryError> {
        if self.eat_char(b'(') {
            let inner = self.parse_or()?;
            if !self.eat_char(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(inner);
        }
        if self.eat_keyword("true") {
            return Ok(QueryAst::True);
        }
        if self.eat_keyword("false") {
            return Ok(QueryAst::False);
        }
        self.skip_ws();
        let word_pos = self.pos;
        let Some(word) = self.word_at(self.pos) else {
            return Err(self.err("expected a predicate, flag test, or '('"));
        };

        if word.eq_ignore_ascii_case("flag") {
            self.pos += word.len();
            return self.parse_flag_test();
        }

        // Comparison: NAME OP NUMBER.
        self.pos += word.len();
        let index = self
            .schema
            .index_of(word)
            .ok_or_else(|| QueryError::UnknownName {
                name: word.to_string(),
                pos: word_pos,
            })?;
        if self.schema.var(index).kind == VarKind::BitGroup {
            return Err(QueryError::NotScalar {
                name: word.to_string(),
                pos: word_pos,
            });
        }
        let op = self.parse_op()?;
        let literal = self.parse_number()?;
        Ok(QueryAst::Compare {
            var: VarRef {
                name: word.to_string(),
                index,
            },
            op,
            literal,
        })
    }

    fn parse_flag_test(&mut self) -> Result<QueryAst, QueryError> {
        if !self.eat_char(b'(') {
            return Err(self.err("expected '(' after flag"));
        }
        self.skip_ws();
        let group_pos = self.pos;
        let Some(group) = self.word_at(self.pos) else {
            return Err(self.err("expected bitgroup name"));
        };
        self.pos += group.len();
        let index = self
            .schema
            .index_of(group)
            .ok_or_else(|| QueryError::UnknownName {
                name: group.to_string(),
                pos: group_pos,
            })?;
        let d = self.schema.var(index);
        if d.kind != VarKind::BitGroup {
            return Err(QueryError::NotBitgroup {
                name: group.to_string(),
                pos: group_pos,
            });
        }
        if !self.eat_char(b',') {
            return Err(self.err("expected ',' in flag test"));
        }
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected bit index"));
        }
        let bit: u32 = std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("bit index too large"))?;
        if !self.eat_char(b')') {
            return Err(self.err("expected ')' after flag test"));
        }
        if bit >= d.width {
            return Err(QueryError::BitRange {
                group: group.to_string(),
                index: bit,
                width: d.width,
            });
        }
        Ok(QueryAst::FlagTest {
            group: VarRef {
                name: group.to_string(),
                index,
            },
            bit,
        })
    }

    fn parse_op(&mut self) -> Result<CmpOp, QueryError> {
        self.skip_ws();
        let rest = &self.bytes[self.pos..];
        let (op, len) = if rest.starts_with(b"<=") {
            (CmpOp::Le, 2)
        } else if rest.starts_with(b">=") {
            (CmpOp::Ge, 2)
        } else if rest.starts_with(b"==") {
            (CmpOp::Eq, 2)
        } else if rest.starts_with(b"!=") {
            (CmpOp::Ne, 2)
        } else if rest.starts_with(b"<") {
            (CmpOp::Lt, 1)
        } else if rest.starts_with(b">") {
            (CmpOp::Gt, 1)
        } else {
            return Err(self.err("expected comparison operator"));
        };
        self.pos += len;
        Ok(op)
    }

    fn parse_number(&mut self) -> Result<f64, QueryError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') || self.peek() == Some(b'+') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.peek().map(|b| b.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            self.pos = start;
            return Err(self.err("expected a numeric literal"));
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while self.peek().map(|b| b.is_ascii_digit()).unwrap_or(false) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'-') | Some(b'+')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            while self.peek().map(|b| b.is_ascii_digit()).unwrap_or(false) {
                self.pos += 1;
            }
            if self.pos == exp_start {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse().map_err(|_| QueryError::Syntax {
            pos: start,
            msg: format!("bad numeric literal {text:?}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::RecordLocation;
    use crate::tagdb::{TagRecord, TagSchema};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn schema() -> TagSchema {
        TagSchema::default_schema()
    }

    fn record_with(schema: &TagSchema, values: &[(&str, f32)]) -> TagRecord {
        let loc = RecordLocation {
            file_id: "f".into(),
            offset: 0,
        };
        let mut r = TagRecord::new(schema, 1, 1, loc);
        for (name, v) in values {
            let idx = schema.index_of(name).unwrap();
            r.set_float(schema, idx, *v).unwrap();
        }
        r
    }

    #[test]
    fn parse_simple_compare() {
        let s = schema();
        let ast = parse_query("ET_TOTAL > 30.0", &s).unwrap();
        match &ast {
            QueryAst::Compare { var, op, literal } => {
                assert_eq!(var.name, "ET_TOTAL");
                assert_eq!(*op, CmpOp::Gt);
                assert_eq!(*literal, 30.0);
            }
            other => panic!("expected Compare, got {other:?}"),
        }
    }

    #[test]
    fn parse_true_matches_everything() {
        let s = schema();
        assert_eq!(parse_query("true", &s).unwrap(), QueryAst::True);
        assert_eq!(parse_query("TRUE", &s).unwrap(), QueryAst::True);
    }

    #[test]
    fn flag_bit_range_is_checked() {
        let s = schema();
        match parse_query("flag(OFFLINE, 128)", &s) {
            Err(QueryError::BitRange {
                group,
                index: 128,
                width: 128,
            }) => assert_eq!(group, "OFFLINE"),
            other => panic!("expected BitRange, got {other:?}"),
        }
        assert!(parse_query("flag(OFFLINE, 127)", &s).is_ok());
        assert!(parse_query("flag(TLT, 351)", &s).is_ok());
    }

    #[test]
    fn unknown_name_and_kind_errors() {
        let s = schema();
        assert!(matches!(
            parse_query("XYZZY > 1", &s),
            Err(QueryError::UnknownName { .. })
        ));
        assert!(matches!(
            parse_query("OFFLINE > 1", &s),
            Err(QueryError::NotScalar { .. })
        ));
        assert!(matches!(
            parse_query("flag(ET_TOTAL, 1)", &s),
            Err(QueryError::NotBitgroup { .. })
        ));
        assert!(matches!(
            parse_query("ET_TOTAL >", &s),
            Err(QueryError::Syntax { .. })
        ));
    }

    #[test]
    fn evaluate_compare_and_missing_semantics() {
        let s = schema();
        let present = record_with(&s, &[("ET_TOTAL", 45.0)]);
        let ast = parse_query("ET_TOTAL > 30", &s).unwrap();
        assert!(evaluate(&ast, &(&s, &present)));

        // ELEC_A1_E missing: comparison false, not(comparison) true.
        let cmp = parse_query("ELEC_A1_E > 5", &s).unwrap();
        assert!(!evaluate(&cmp, &(&s, &present)));
        let neg = parse_query("not (ELEC_A1_E > 5)", &s).unwrap();
        assert!(evaluate(&neg, &(&s, &present)));
    }

    #[test]
    fn count_variables_is_distinct() {
        let s = schema();
        assert_eq!(count_variables(&parse_query("true", &s).unwrap()), 0);
        let ast = parse_query("ET_TOTAL > 30 and ET_TOTAL < 100", &s).unwrap();
        assert_eq!(count_variables(&ast), 1);
        let six = "ET_TOTAL > 1 and ET_MISS < 5 and E_TOTAL > 0 and EMPZ > 10 and VTX_Z < 40 and NTRK_PRIM > 2";
        assert_eq!(count_variables(&parse_query(six, &s).unwrap()), 6);
        // Flag groups count once.
        let ast = parse_query("flag(OFFLINE, 1) or flag(OFFLINE, 2)", &s).unwrap();
        assert_eq!(count_variables(&ast), 1);
    }

    #[test]
    fn display_round_trips() {
        let s = schema();
        let texts = [
            "true",
            "ET_TOTAL > 30",
            "ET_TOTAL >= 30.25 and not flag(OFFLINE, 3)",
            "not (ET_TOTAL == 1 or ET_MISS != 2)",
            "VTX_Z < -30 or (VTX_Z > 30 and flag(FLT, 63))",
            "ET_TOTAL < 1e3",
            "(ET_TOTAL > 1 and ET_MISS > 2) and E_TOTAL > 3",
            "ET_TOTAL > 1 and (ET_MISS > 2 and E_TOTAL > 3)",
        ];
        for text in texts {
            let ast = parse_query(text, &s).unwrap();
            let printed = ast.to_string();
            let reparsed = parse_query(&printed, &s).unwrap();
            assert_eq!(reparsed, ast, "printed {printed:?} from {text:?}");
        }
    }

    #[test]
    fn parse_query_file_skips_comments() {
        let s = schema();
        let text = "# header comment\n\nET_TOTAL > 30 # inline\n  flag(OFFLINE, 3)\n";
        let list = parse_query_file(text, &s).unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].0, 3);
        assert_eq!(list[1].0, 4);
        let bad = "true\nNOPE > 1\n";
        assert_eq!(parse_query_file(bad, &s).unwrap_err().0, 2);
    }

    /// Independently coded recursive evaluator (the oracle).
    fn oracle<S: TagSource>(ast: &QueryAst, rec: &S) -> bool {
        match ast {
            QueryAst::True => true,
            QueryAst::False => false,
            QueryAst::Compare { var, op, literal } => {
                let Some(v) = rec.scalar(var.index) else {
                    return false;
                };
                match op {
                    CmpOp::Lt => v < *literal,
                    CmpOp::Le => v <= *literal,
                    CmpOp::Gt => v > *literal,
                    CmpOp::Ge => v >= *literal,
                    CmpOp::Eq => v == *literal,
                    CmpOp::Ne => v != *literal,
                }
            }
            QueryAst::FlagTest { group, bit } => rec.bit(group.index, *bit),
            QueryAst::Not(e) => !oracle(e, rec),
            QueryAst::And(a, b) => {
                // Evaluate both sides before combining.
                let (x, y) = (oracle(a, rec), oracle(b, rec));
                x && y
            }
            QueryAst::Or(a, b) => {
                let (x, y) = (oracle(a, rec), oracle(b, rec));
                x || y
            }
        }
    }

    fn random_record(s: &TagSchema, rng: &mut StdRng) -> TagRecord {
        let loc = RecordLocation {
            file_id: "f".into(),
            offset: 0,
        };
        let mut r = TagRecord::new(s, 1, 1, loc);
        for (i, d) in s.vars().iter().enumerate() {
            match d.kind {
                VarKind::Float32 => {
                    if rng.random::<f64>() < 0.7 {
                        r.set_float(s, i, rng.random_range(-50.0..150.0)).unwrap();
                    }
                }
                VarKind::Int32 => {
                    r.set_int(s, i, rng.random_range(0..100000)).unwrap();
                }
                VarKind::BitGroup => {
                    let words: Vec<u32> = (0..d.width.div_ceil(32)).map(|_| rng.random()).collect();
                    r.set_bitgroup(s, i, &words).unwrap();
                }
            }
        }
        r
    }

    fn random_ast(s: &TagSchema, rng: &mut StdRng, depth: u32) -> QueryAst {
        if depth == 0 || rng.random_range(0..10) < 4 {
            return match rng.random_range(0..8) {
                0 => QueryAst::True,
                1 => QueryAst::False,
                2 | 3 => {
                    let groups: Vec<usize> = s
                        .vars()
                        .iter()
                        .enumerate()
                        .filter(|(_, d)| d.kind == VarKind::BitGroup)
                        .map(|(i, _)| i)
                        .collect();
                    let gi = groups[rng.random_range(0..groups.len())];
                    QueryAst::FlagTest {
                        group: VarRef {
                            name: s.var(gi).name.clone(),
                            index: gi,
                        },
                        bit: rng.random_range(0..s.var(gi).width),
                    }
                }
                _ => {
                    let scalars: Vec<usize> = s
                        .vars()
                        .iter()
                        .enumerate()
                        .filter(|(_, d)| d.kind != VarKind::BitGroup)
                        .map(|(i, _)| i)
                        .collect();
                    let vi = scalars[rng.random_range(0..scalars.len())];
                    let op = [
                        CmpOp::Lt,
                        CmpOp::Le,
                        CmpOp::Gt,
                        CmpOp::Ge,
                        CmpOp::Eq,
                        CmpOp::Ne,
                    ][rng.random_range(0..6)];
                    QueryAst::Compare {
                        var: VarRef {
                            name: s.var(vi).name.clone(),
                            index: vi,
                        },
                        op,
                        literal: (rng.random_range(-500..1500) as f64) / 10.0,
                    }
                }
            };
        }
        match rng.random_range(0..3) {
            0 => QueryAst::Not(Box::new(random_ast(s, rng, depth - 1))),
            1 => QueryAst::And(
                Box::new(random_ast(s, rng, depth - 1)),
                Box::new(random_ast(s, rng, depth - 1)),
            ),
            _ => QueryAst::Or(
                Box::new(random_ast(s, rng, depth - 1)),
                Box::new(random_ast(s, rng, depth - 1)),
            ),
        }
    }

    #[test]
    fn evaluator_agrees_with_independent_oracle() {
        let s = schema();
        let mut rng = StdRng::seed_from_u64(99);
        let asts: Vec<QueryAst> = (0..20).map(|_| random_ast(&s, &mut rng, 4)).collect();
        for _ in 0..500 {
            let rec = random_record(&s, &mut rng);
            let src = (&s, &rec);
            for ast in &asts {
                assert_eq!(evaluate(ast, &src), oracle(ast, &src), "ast: {ast}");
            }
        }
    }

    #[test]
    fn de_morgan_holds_on_random_records() {
        let s = schema();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_ast(&s, &mut rng, 3);
            let b = random_ast(&s, &mut rng, 3);
            let rec = random_record(&s, &mut rng);
            let src = (&s, &rec);
            let not_and = QueryAst::Not(Box::new(QueryAst::And(
                Box::new(a.clone()),
                Box::new(b.clone()),
            )));
            let or_nots = QueryAst::Or(
                Box::new(QueryAst::Not(Box::new(a.clone()))),
                Box::new(QueryAst::Not(Box::new(b.clone()))),
            );
            assert_eq!(evaluate(&not_and, &src), evaluate(&or_nots, &src));
            // Operand order does not change outcomes (pure predicates).
            let ab = QueryAst::And(Box::new(a.clone()), Box::new(b.clone()));
            let ba = QueryAst::And(Box::new(b), Box::new(a));
            assert_eq!(evaluate(&ab, &src), evaluate(&ba, &src));
        }
    }

    #[test]
    fn print_parse_round_trip_random_asts() {
        let s = schema();
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..300 {
            let ast = random_ast(&s, &mut rng, 5);
            let printed = ast.to_string();
            let reparsed = parse_query(&printed, &s)
                .unwrap_or_else(|e| panic!("reparse of {printed:?} failed: {e}"));
            assert_eq!(reparsed, ast, "printed {printed:?}");
        }
    }
}
