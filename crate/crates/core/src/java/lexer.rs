//! Streaming tokenizer for Java source.
//!
//! Only as much of the lexical grammar as the declaration splitter needs:
//! identifiers, literals (so braces inside them are inert), comments (kept,
//! since doc comments travel with the member they precede) and punctuation.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    TextBlock,
    Char,
    Punct,
    LineComment,
    BlockComment,
}

impl TokenKind {
    pub fn is_comment(self) -> bool {
        matches!(self, TokenKind::LineComment | TokenKind::BlockComment)
    }
}

/// A token as a byte range into the source it was lexed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl Position {
    pub fn of(src: &str, offset: usize) -> Self {
        let before = &src[..offset.min(src.len())];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
        Position {
            line,
            column: before[line_start..].chars().count() + 1,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{position}: {message}")]
pub struct SyntaxError {
    pub position: Position,
    pub message: String,
}

impl SyntaxError {
    pub fn at(src: &str, offset: usize, message: impl Into<String>) -> Self {
        SyntaxError {
            position: Position::of(src, offset),
            message: message.into(),
        }
    }
}

pub struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    /// Starts lexing at `offset`, which must be a char boundary.
    pub fn starting_at(src: &'a str, offset: usize) -> Self {
        Lexer { src, pos: offset }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn err(&self, offset: usize, message: &str) -> SyntaxError {
        SyntaxError::at(self.src, offset, message)
    }

    fn string(&mut self, start: usize) -> Result<TokenKind, SyntaxError> {
        if self.rest().starts_with("\"\"\"") {
            self.pos += 3;
            loop {
                if self.rest().starts_with("\"\"\"") {
                    self.pos += 3;
                    return Ok(TokenKind::TextBlock);
                }
                match self.bump() {
                    Some('\\') => {
                        self.bump();
                    }
                    Some(_) => {}
                    None => return Err(self.err(start, "unterminated text block")),
                }
            }
        }
        self.pos += 1;
        loop {
            match self.bump() {
                Some('"') => return Ok(TokenKind::Str),
                Some('\\') => {
                    self.bump();
                }
                Some('\n') | None => return Err(self.err(start, "unterminated string literal")),
                Some(_) => {}
            }
        }
    }

    fn char_literal(&mut self, start: usize) -> Result<TokenKind, SyntaxError> {
        self.pos += 1;
        loop {
            match self.bump() {
                Some('\'') => return Ok(TokenKind::Char),
                Some('\\') => {
                    self.bump();
                }
                Some('\n') | None => return Err(self.err(start, "unterminated character literal")),
                Some(_) => {}
            }
        }
    }

    fn number(&mut self) {
        let hex = self.rest().starts_with("0x") || self.rest().starts_with("0X");
        let mut prev = '\0';
        while let Some(c) = self.peek() {
            let exponent_sign = (c == '+' || c == '-')
                && (matches!(prev, 'p' | 'P') || (!hex && matches!(prev, 'e' | 'E')));
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exponent_sign {
                prev = c;
                self.bump();
            } else {
                break;
            }
        }
    }
}

impl<'a> Iterator for Lexer<'a> {
    type Item = Result<Token, SyntaxError>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
        let start = self.pos;
        let c = self.peek()?;
        let kind = if self.rest().starts_with("//") {
            let len = self.rest().find('\n').unwrap_or(self.rest().len());
            self.pos += len;
            Ok(TokenKind::LineComment)
        } else if self.rest().starts_with("/*") {
            match self.rest()[2..].find("*/") {
                Some(i) => {
                    self.pos += i + 4;
                    Ok(TokenKind::BlockComment)
                }
                None => {
                    self.pos = self.src.len();
                    Err(self.err(start, "unterminated block comment"))
                }
            }
        } else if c == '"' {
            self.string(start)
        } else if c == '\'' {
            self.char_literal(start)
        } else if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            self.number();
            Ok(TokenKind::Number)
        } else if c.is_alphabetic() || c == '_' || c == '$' {
            while self
                .peek()
                .is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '$')
            {
                self.bump();
            }
            Ok(TokenKind::Ident)
        } else {
            let multi = ["...", "->", "::"]
                .into_iter()
                .find(|p| self.rest().starts_with(p));
            match multi {
                Some(p) => self.pos += p.len(),
                None => {
                    self.bump();
                }
            }
            Ok(TokenKind::Punct)
        };
        Some(kind.map(|kind| Token {
            kind,
            start,
            end: self.pos,
        }))
    }
}

/// Lexes the whole input, splitting code tokens from comments.
pub fn tokenize(src: &str) -> Result<(Vec<Token>, Vec<Token>), SyntaxError> {
    let mut code = Vec::new();
    let mut comments = Vec::new();
    for tok in Lexer::new(src) {
        let tok = tok?;
        if tok.kind.is_comment() {
            comments.push(tok);
        } else {
            code.push(tok);
        }
    }
    Ok((code, comments))
}
