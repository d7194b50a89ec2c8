//! Boolean flag expressions for directory selections.

use std::fmt;

use super::{DirectoryError, FlagWords, FLAG_COUNT};

/// A boolean combination of event flags.
///
/// Atoms are single flags `flag(i)` with `0 <= i < 128` plus the
/// constants; combinators are `and`, `or`, `not`. Build expressions with
/// the checked constructors or parse them from text:
///
/// ```
/// use evindex::directory::FlagExpr;
/// let e = FlagExpr::parse("flag(3) and not flag(0)").unwrap();
/// assert_eq!(e.to_string(), "flag(3) and not flag(0)");
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlagExpr {
    True,
    False,
    Flag(u32),
    Not(Box<FlagExpr>),
    And(Box<FlagExpr>, Box<FlagExpr>),
    Or(Box<FlagExpr>, Box<FlagExpr>),
}

impl FlagExpr {
    /// Atom testing flag `i`; errors if `i >= 128`.
    pub fn flag(i: u32) -> Result<FlagExpr, DirectoryError> {
        if (i as usize) < FLAG_COUNT {
            Ok(FlagExpr::Flag(i))
        } else {
            Err(DirectoryError::FlagIndex(i))
        }
    }

    pub fn and(self, rhs: FlagExpr) -> FlagExpr {
        FlagExpr::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: FlagExpr) -> FlagExpr {
        FlagExpr::Or(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> FlagExpr {
        FlagExpr::Not(Box::new(self))
    }

    /// Checks that every flag index is in range.
    pub fn validate(&self) -> Result<(), DirectoryError> {
        match self {
            FlagExpr::True | FlagExpr::False => Ok(()),
            FlagExpr::Flag(i) => {
                if (*i as usize) < FLAG_COUNT {
                    Ok(())
                } else {
                    Err(DirectoryError::FlagIndex(*i))
                }
            }
            FlagExpr::Not(e) => e.validate(),
            FlagExpr::And(a, b) | FlagExpr::Or(a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    /// Evaluates the expression against one entry's flag words.
    pub fn matches(&self, flags: &FlagWords) -> bool {
        match self {
            FlagExpr::True => true,
            FlagExpr::False => false,
            FlagExpr::Flag(i) => (*i as usize) < FLAG_COUNT && flags.bit(*i),
            FlagExpr::Not(e) => !e.matches(flags),
            FlagExpr::And(a, b) => a.matches(flags) && b.matches(flags),
            FlagExpr::Or(a, b) => a.matches(flags) || b.matches(flags),
        }
    }

    /// Parses an expression. Grammar, keywords case-insensitive:
    ///
    /// ```text
    /// expr := or ; or := and ("or" and)* ; and := unary ("and" unary)*
    /// unary := "not" unary | atom
    /// atom := "(" expr ")" | "true" | "false" | "flag" "(" INT ")"
    /// ```
    pub fn parse(text: &str) -> Result<FlagExpr, DirectoryError> {
        let mut p = Parser {
            bytes: text.as_bytes(),
            pos: 0,
        };
        let expr = p.parse_or()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(DirectoryError::ExprSyntax {
                pos: p.pos,
                msg: "trailing input after expression".into(),
            });
        }
        Ok(expr)
    }
}

// Precedence levels for printing with minimal parentheses.
fn level(e: &FlagExpr) -> u8 {
    match e {
        FlagExpr::Or(..) => 0,
        FlagExpr::And(..) => 1,
        FlagExpr::Not(..) => 2,
        _ => 3,
    }
}

fn fmt_prec(e: &FlagExpr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let parens = level(e) < min;
    if parens {
        f.write_str("(")?;
    }
    match e {
        FlagExpr::True => f.write_str("true")?,
        FlagExpr::False => f.write_str("false")?,
        FlagExpr::Flag(i) => write!(f, "flag({i})")?,
        FlagExpr::Not(inner) => {
            f.write_str("not ")?;
            fmt_prec(inner, 2, f)?;
        }
        FlagExpr::And(a, b) => {
            fmt_prec(a, 1, f)?;
            f.write_str(" and ")?;
            fmt_prec(b, 2, f)?;
        }
        FlagExpr::Or(a, b) => {
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

impl fmt::Display for FlagExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> DirectoryError {
        DirectoryError::ExprSyntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek_word(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        let mut end = start;
        while end < self.bytes.len()
            && (self.bytes[end].is_ascii_alphanumeric() || self.bytes[end] == b'_')
        {
            end += 1;
        }
        if end == start {
            None
        } else {
            Some(
                std::str::from_utf8(&self.bytes[start..end])
                    .unwrap()
                    .to_ascii_lowercase(),
            )
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.peek_word().as_deref() == Some(word) {
            self.skip_ws();
            self.pos += word.len();
            true
        } else {
            false
        }
    }

    fn eat_char(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.pos < self.bytes.len() && self.bytes[self.pos] == c {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<FlagExpr, DirectoryError> {
        let mut lhs = self.parse_and()?;
        while self.eat_word("or") {
            let rhs = self.parse_and()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<FlagExpr, DirectoryError> {
        let mut lhs = self.parse_unary()?;
        while self.eat_word("and") {
            let rhs = self.parse_unary()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<FlagExpr, DirectoryError> {
        if self.eat_word("not") {
            return Ok(self.parse_unary()?.not());
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<FlagExpr, DirectoryError> {
        if self.eat_char(b'(') {
            let inner = self.parse_or()?;
            if !self.eat_char(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(inner);
        }
        if self.eat_word("true") {
            return Ok(FlagExpr::True);
        }
        if self.eat_word("false") {
            return Ok(FlagExpr::False);
        }
        if self.eat_word("flag") {
            if !self.eat_char(b'(') {
                return Err(self.err("expected '(' after flag"));
            }
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == start {
                return Err(self.err("expected flag index"));
            }
            let index: u32 = std::str::from_utf8(&self.bytes[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("flag index too large"))?;
            if !self.eat_char(b')') {
                return Err(self.err("expected ')' after flag index"));
            }
            return FlagExpr::flag(index);
        }
        Err(self.err("expected flag(N), true, false, not, or '('"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval_basic() {
        let e = FlagExpr::parse("flag(3) AND NOT flag(0)").unwrap();
        let hit = FlagWords([0b1000, 0, 0, 0]);
        let miss = FlagWords([0b1001, 0, 0, 0]);
        assert!(e.matches(&hit));
        assert!(!e.matches(&miss));
    }

    #[test]
    fn parse_rejects_out_of_range_flag() {
        assert!(matches!(
            FlagExpr::parse("flag(128)"),
            Err(DirectoryError::FlagIndex(128))
        ));
    }

    #[test]
    fn parse_rejects_trailing_garbage() {
        assert!(matches!(
            FlagExpr::parse("flag(1) flag(2)"),
            Err(DirectoryError::ExprSyntax { .. })
        ));
    }

    #[test]
    fn precedence_not_binds_tighter_than_and_than_or() {
        let e = FlagExpr::parse("flag(0) or not flag(1) and flag(2)").unwrap();
        // Parses as flag(0) or ((not flag(1)) and flag(2)).
        let want = FlagExpr::flag(0).unwrap().or(FlagExpr::flag(1)
            .unwrap()
            .not()
            .and(FlagExpr::flag(2).unwrap()));
        assert_eq!(e, want);
    }

    #[test]
    fn display_round_trips() {
        let exprs = [
            "true",
            "flag(127)",
            "not (flag(1) and flag(2))",
            "flag(0) and (flag(1) or flag(2)) and not flag(3)",
            "flag(0) or (flag(1) or flag(2))",
            "(flag(1) and flag(2)) and flag(3)",
        ];
        for text in exprs {
            let e = FlagExpr::parse(text).unwrap();
            let printed = e.to_string();
            let reparsed = FlagExpr::parse(&printed).unwrap();
            assert_eq!(reparsed, e, "print {printed:?} of {text:?}");
        }
    }
}
