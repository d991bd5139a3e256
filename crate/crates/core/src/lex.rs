//! Tokenizer shared by the graph, query and expression grammars.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// Identifier, possibly followed by primes (`d1'`).
    Ident(String),
    Int(u64),
    Punct(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spanned {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

// Longest first.
const PUNCT: &[&str] = &[
    "_||_", "->", "(", ")", "{", "}", "[", "]", ",", "|", "=", ";", "@", "*", ":",
];

/// Splits `text` into tokens; `#` starts a comment running to end of line.
pub fn tokenize(text: &str) -> Result<Vec<Spanned>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if let Some(p) = PUNCT.iter().find(|p| {
            let pc: Vec<char> = p.chars().collect();
            chars[i..].starts_with(&pc)
        }) {
            out.push(Spanned {
                tok: Tok::Punct(p),
                pos,
            });
            let n = p.chars().count();
            i += n;
            col += n;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let value = s.parse::<u64>().map_err(|_| LexError {
                pos,
                message: format!("integer `{s}` out of range"),
            })?;
            out.push(Spanned {
                tok: Tok::Int(value),
                pos,
            });
            col += i - start;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            while i < chars.len() && chars[i] == '\'' {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned {
                tok: Tok::Ident(s),
                pos,
            });
            continue;
        }
        return Err(LexError {
            pos,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

/// Cursor over a token stream with position-aware errors.
pub struct Cursor {
    toks: Vec<Spanned>,
    at: usize,
    end: Pos,
}

impl Cursor {
    pub fn new(toks: Vec<Spanned>, text: &str) -> Self {
        let line = text.lines().count().max(1);
        let col = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
        Cursor {
            toks,
            at: 0,
            end: Pos { line, col },
        }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|s| &s.tok)
    }

    pub fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.at + 1).map(|s| &s.tok)
    }

    pub fn pos(&self) -> Pos {
        self.toks.get(self.at).map_or(self.end, |s| s.pos)
    }

    pub fn is_done(&self) -> bool {
        self.at >= self.toks.len()
    }

    pub fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|s| s.tok.clone());
        self.at += 1;
        t
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    pub fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == word)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), LexError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    pub fn expect_ident(&mut self, what: &str) -> Result<String, LexError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    pub fn expect_int(&mut self, what: &str) -> Result<u64, LexError> {
        match self.peek() {
            Some(Tok::Int(i)) => {
                let i = *i;
                self.at += 1;
                Ok(i)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    pub fn unexpected(&self, expected: &str) -> LexError {
        let found = match self.peek() {
            Some(t) => t.to_string(),
            None => "end of input".to_string(),
        };
        LexError {
            pos: self.pos(),
            message: format!("expected {expected}, found {found}"),
        }
    }

    pub fn error(&self, pos: Pos, message: impl Into<String>) -> LexError {
        LexError {
            pos,
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes_comments_and_positions() {
        let toks = tokenize("sum{d1'} # c\n  q0(D1=d1')").unwrap();
        let kinds: Vec<Tok> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(kinds[0], Tok::Ident("sum".into()));
        assert_eq!(kinds[2], Tok::Ident("d1'".into()));
        let q0 = toks
            .iter()
            .find(|t| t.tok == Tok::Ident("q0".into()))
            .unwrap();
        assert_eq!(q0.pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn independence_symbol_is_one_token() {
        let toks = tokenize("X _||_ Y").unwrap();
        assert_eq!(toks[1].tok, Tok::Punct("_||_"));
        assert!(tokenize("a $ b").is_err());
    }
}
