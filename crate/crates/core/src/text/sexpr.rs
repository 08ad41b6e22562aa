//! Tokenizer and s-expression reader.

use super::{ParseError, SourceSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum AtomKind {
    /// Keywords, numbers and anything else without a `$` or quote.
    Word(String),
    /// `$name`, stored without the sigil.
    Id(String),
    Str(String),
}

#[derive(Clone, Debug)]
pub(crate) struct Atom {
    pub kind: AtomKind,
    pub span: SourceSpan,
}

#[derive(Clone, Debug)]
pub(crate) enum SExpr {
    Atom(Atom),
    List(Vec<SExpr>, SourceSpan),
}

impl SExpr {
    pub fn span(&self) -> SourceSpan {
        match self {
            SExpr::Atom(a) => a.span,
            SExpr::List(_, s) => *s,
        }
    }

    pub fn word(&self) -> Option<&str> {
        match self {
            SExpr::Atom(Atom {
                kind: AtomKind::Word(w),
                ..
            }) => Some(w),
            _ => None,
        }
    }

    pub fn id(&self) -> Option<&str> {
        match self {
            SExpr::Atom(Atom {
                kind: AtomKind::Id(w), ..
            }) => Some(w),
            _ => None,
        }
    }

    pub fn string(&self) -> Option<&str> {
        match self {
            SExpr::Atom(Atom {
                kind: AtomKind::Str(s), ..
            }) => Some(s),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Atom(_) => None,
        }
    }

    /// The items of a list whose head is the keyword `head`.
    pub fn headed(&self, head: &str) -> Option<&[SExpr]> {
        match self.list() {
            Some([first, rest @ ..]) if first.word() == Some(head) => Some(rest),
            _ => None,
        }
    }

    pub fn head_word(&self) -> Option<&str> {
        self.list().and_then(|items| items.first()).and_then(SExpr::word)
    }
}

struct Reader<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn here(&self) -> SourceSpan {
        SourceSpan {
            start: self.pos,
            end: self.pos,
            line: self.line,
            column: self.col,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.bytes.get(self.pos + 1).copied()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += 1;
            if c == b'\n' {
                self.line += 1;
                self.col = 1;
            } else if c & 0xC0 != 0x80 {
                self.col += 1;
            }
        }
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match (self.peek(), self.peek2()) {
                (Some(c), _) if c.is_ascii_whitespace() => self.bump(),
                (Some(b';'), Some(b';')) => {
                    while !matches!(self.peek(), None | Some(b'\n')) {
                        self.bump();
                    }
                }
                (Some(b'('), Some(b';')) => self.block_comment()?,
                _ => return Ok(()),
            }
        }
    }

    fn block_comment(&mut self) -> Result<(), ParseError> {
        let start = self.here();
        self.bump();
        self.bump();
        let mut depth = 1;
        while depth > 0 {
            match (self.peek(), self.peek2()) {
                (None, _) => return Err(ParseError::new(start, "unterminated block comment")),
                (Some(b'('), Some(b';')) => {
                    self.bump();
                    self.bump();
                    depth += 1;
                }
                (Some(b';'), Some(b')')) => {
                    self.bump();
                    self.bump();
                    depth -= 1;
                }
                _ => self.bump(),
            }
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let mut span = self.here();
        if self.peek() == Some(b'"') {
            self.bump();
            let mut out = String::new();
            loop {
                match self.peek() {
                    None => return Err(ParseError::new(span, "unterminated string")),
                    Some(b'"') => {
                        self.bump();
                        break;
                    }
                    Some(b'\\') => {
                        self.bump();
                        match self.peek() {
                            Some(b'n') => out.push('\n'),
                            Some(b't') => out.push('\t'),
                            Some(b'\\') => out.push('\\'),
                            Some(b'"') => out.push('"'),
                            _ => return Err(ParseError::new(self.here(), "unsupported escape")),
                        }
                        self.bump();
                    }
                    Some(_) => {
                        let start = self.pos;
                        self.bump();
                        while self.pos < self.bytes.len() && self.bytes[self.pos] & 0xC0 == 0x80 {
                            self.bump();
                        }
                        out.push_str(&self.src[start..self.pos]);
                    }
                }
            }
            span.end = self.pos;
            return Ok(Atom {
                kind: AtomKind::Str(out),
                span,
            });
        }
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b'"' || c == b';' {
                break;
            }
            self.bump();
        }
        span.end = self.pos;
        let text = &self.src[start..self.pos];
        let kind = match text.strip_prefix('$') {
            Some("") => return Err(ParseError::new(span, "empty identifier")),
            Some(name) => AtomKind::Id(name.to_string()),
            None => AtomKind::Word(text.to_string()),
        };
        Ok(Atom { kind, span })
    }

    fn expr(&mut self) -> Result<SExpr, ParseError> {
        self.skip_trivia()?;
        match self.peek() {
            Some(b'(') => {
                let mut span = self.here();
                self.bump();
                let mut items = vec![];
                loop {
                    self.skip_trivia()?;
                    match self.peek() {
                        None => return Err(ParseError::new(span, "unbalanced parentheses: missing `)`")),
                        Some(b')') => {
                            self.bump();
                            break;
                        }
                        _ => items.push(self.expr()?),
                    }
                }
                span.end = self.pos;
                Ok(SExpr::List(items, span))
            }
            Some(b')') => Err(ParseError::new(self.here(), "unbalanced parentheses: unexpected `)`")),
            Some(_) => Ok(SExpr::Atom(self.atom()?)),
            None => Err(ParseError::new(self.here(), "unexpected end of input")),
        }
    }
}

/// Reads every top-level s-expression in `src`.
pub(crate) fn read_all(src: &str) -> Result<Vec<SExpr>, ParseError> {
    let mut r = Reader::new(src);
    let mut out = vec![];
    loop {
        r.skip_trivia()?;
        if r.peek().is_none() {
            return Ok(out);
        }
        out.push(r.expr()?);
    }
}
