//! Text grammar for expressions:
//!
//! ```text
//! expr    := factor ('*' factor)*
//! factor  := term | '(' expr ')' | 'sum' '{' symbol (',' symbol)* '}' expr
//! term    := regime '(' slot (',' slot)* ['|' slot (',' slot)*] ')'
//! regime  := 'q' INT | 'q{' [INT (',' INT)*] '}'
//! slot    := VAR ['=' (INT | symbol)]
//! ```
//!
//! A sum extends as far right as possible; the printer parenthesizes sums that
//! appear as product factors, so printing and parsing round-trip exactly.

use std::fmt;

use thiserror::Error;

use super::{ProbExpr, Slot, Term, ValueRef, VarRef};
use crate::lex::{tokenize, Cursor, LexError, Pos, Tok};
use crate::model::{Regime, Swig, MAX_TARGETS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError {
            pos: e.pos,
            message: e.message,
        }
    }
}

/// Parses an expression, resolving variable names against `swig`.
pub fn parse_expr(text: &str, swig: &Swig) -> Result<ProbExpr, ParseError> {
    parse_expr_with(text, |name| swig.id(name).map(|id| swig.variable(id).time))
}

/// Parses an expression; `time_of` maps a variable name to its time index and
/// returns `None` for unknown variables.
pub fn parse_expr_with(
    text: &str,
    time_of: impl Fn(&str) -> Option<u32>,
) -> Result<ProbExpr, ParseError> {
    let mut p = Parser {
        cur: Cursor::new(tokenize(text)?, text),
        time_of: &time_of,
    };
    let e = p.expr()?;
    if !p.cur.is_done() {
        return Err(p.cur.unexpected("`*` or end of input").into());
    }
    e.validate().map_err(|err| ParseError {
        pos: Pos { line: 1, col: 1 },
        message: err.to_string(),
    })?;
    Ok(e)
}

struct Parser<'a> {
    cur: Cursor,
    time_of: &'a dyn Fn(&str) -> Option<u32>,
}

impl Parser<'_> {
    fn expr(&mut self) -> Result<ProbExpr, ParseError> {
        let mut factors = vec![self.factor()?];
        while self.cur.eat_punct("*") {
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            ProbExpr::Product { factors }
        })
    }

    fn factor(&mut self) -> Result<ProbExpr, ParseError> {
        if self.cur.eat_punct("(") {
            let e = self.expr()?;
            self.cur.expect_punct(")")?;
            return Ok(e);
        }
        if self.cur.is_ident("sum") && matches!(self.cur.peek2(), Some(Tok::Punct("{"))) {
            self.cur.bump();
            self.cur.bump();
            let mut binders = vec![self.cur.expect_ident("binder symbol")?];
            while self.cur.eat_punct(",") {
                binders.push(self.cur.expect_ident("binder symbol")?);
            }
            self.cur.expect_punct("}")?;
            let body = self.expr()?;
            return Ok(ProbExpr::Sum {
                binders,
                body: Box::new(body),
            });
        }
        Ok(ProbExpr::Term(self.term()?))
    }

    fn regime(&mut self) -> Result<Regime, ParseError> {
        let pos = self.cur.pos();
        let word = self.cur.expect_ident("a regime such as `q0` or `q{1,3}`")?;
        if word == "q" {
            self.cur.expect_punct("{")?;
            let mut r = Regime::OBSERVED;
            if !self.cur.is_punct("}") {
                loop {
                    let ipos = self.cur.pos();
                    let i = self.cur.expect_int("intervention index")? as usize;
                    if !(1..=MAX_TARGETS).contains(&i) {
                        return Err(self
                            .cur
                            .error(ipos, format!("intervention index {i} out of range"))
                            .into());
                    }
                    r = r.with(i);
                    if !self.cur.eat_punct(",") {
                        break;
                    }
                }
            }
            self.cur.expect_punct("}")?;
            return Ok(r);
        }
        match word.strip_prefix('q').and_then(|d| d.parse::<usize>().ok()) {
            Some(t) if t <= MAX_TARGETS && !word.contains('\'') => Ok(Regime::prefix(t)),
            _ => Err(self
                .cur
                .error(
                    pos,
                    format!("expected a regime such as `q0` or `q{{1,3}}`, found `{word}`"),
                )
                .into()),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let regime = self.regime()?;
        self.cur.expect_punct("(")?;
        let dependents = self.slots()?;
        let conditioners = if self.cur.eat_punct("|") {
            self.slots()?
        } else {
            Vec::new()
        };
        self.cur.expect_punct(")")?;
        Ok(Term::new(regime, dependents, conditioners))
    }

    fn slots(&mut self) -> Result<Vec<Slot>, ParseError> {
        let mut out = vec![self.slot()?];
        while self.cur.eat_punct(",") {
            out.push(self.slot()?);
        }
        Ok(out)
    }

    fn slot(&mut self) -> Result<Slot, ParseError> {
        let pos = self.cur.pos();
        let name = self.cur.expect_ident("variable name")?;
        let time = (self.time_of)(&name)
            .ok_or_else(|| self.cur.error(pos, format!("unknown variable `{name}`")))?;
        let value = if self.cur.eat_punct("=") {
            Some(match self.cur.bump() {
                Some(Tok::Int(i)) => ValueRef::Level(i as usize),
                Some(Tok::Ident(s)) => ValueRef::Sym(s),
                _ => {
                    return Err(self
                        .cur
                        .error(pos, "expected a level or a symbol after `=`")
                        .into())
                }
            })
        } else {
            None
        };
        Ok(Slot::new(VarRef::new(name, time), value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(name: &str) -> Option<u32> {
        match name {
            "L" => Some(0),
            "D1" | "Do1" | "M1" | "Y1" => Some(1),
            _ => None,
        }
    }

    #[test]
    fn front_door_text_round_trips() {
        let src = "sum{d1',m1} q0(Y1 | D1=d1', M1=m1) * q0(D1=d1') * q0(M1=m1 | D1=d1)";
        let e = parse_expr_with(src, times).unwrap();
        assert_eq!(e.to_string(), src);
        assert_eq!(parse_expr_with(&e.to_string(), times).unwrap(), e);
    }

    #[test]
    fn sums_inside_products_are_parenthesized() {
        let src = "(sum{l} q0(L=l)) * q1(Y1 | Do1=0)";
        let e = parse_expr_with(src, times).unwrap();
        assert!(matches!(&e, ProbExpr::Product { factors } if factors.len() == 2));
        assert_eq!(e.to_string(), src);
    }

    #[test]
    fn subset_regimes() {
        let e = parse_expr_with("q{1,3}(Y1)", times).unwrap();
        assert_eq!(e.as_term().unwrap().regime, Regime::from_indices([1, 3]));
        assert_eq!(e.to_string(), "q{1,3}(Y1)");
        assert_eq!(
            parse_expr_with("q{}(Y1)", times).unwrap().to_string(),
            "q0(Y1)"
        );
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_expr_with("q0(Y1 | Z=1)", times).unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 9 });
        assert!(err.message.contains("unknown variable `Z`"));
        assert!(parse_expr_with("q0(Y1", times).is_err());
        assert!(parse_expr_with("p0(Y1)", times).is_err());
        assert!(parse_expr_with("sum{x} q0(Y1)", times).is_err());
    }
}
