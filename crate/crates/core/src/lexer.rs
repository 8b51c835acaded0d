//! Tokenizer for the supported declaration subset.
//!
//! Comments are dropped. Preprocessor lines are skipped except for the
//! `#pragma omit ...` and `#pragma single_obj_ptr ...` directives, which each
//! become a single [`TokenKind::Pragma`] token.

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Punct,
    IntLiteral,
    /// String, character and floating literals. Only skipped over by the parser.
    Literal,
    Pragma,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub column: u32,
    /// Byte offset of the first byte of the lexeme in the source.
    pub offset: usize,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punct, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }

    /// Byte offset one past the end of the lexeme.
    pub fn end(&self) -> usize {
        self.offset + self.text.len()
    }
}

pub const KEYWORDS: &[&str] = &[
    "bool", "char", "class", "const", "double", "enum", "explicit", "extern", "float", "friend",
    "inline", "int", "long", "mutable", "namespace", "operator", "private", "protected", "public",
    "short", "signed", "static", "struct", "template", "typedef", "typename", "union", "unsigned",
    "using", "virtual", "void", "volatile",
];

const PRAGMAS: &[&str] = &["omit", "single_obj_ptr"];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    column: u32,
    at_line_start: bool,
    tokens: Vec<Token>,
    diags: Vec<Diagnostic>,
}

/// Splits `source` into tokens. The returned sequence always ends with a
/// single [`TokenKind::Eof`] token.
pub fn tokenize(source: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut lx = Lexer {
        src: source,
        bytes: source.as_bytes(),
        pos: 0,
        line: 1,
        column: 1,
        at_line_start: true,
        tokens: Vec::new(),
        diags: Vec::new(),
    };
    lx.run();
    (lx.tokens, lx.diags)
}

impl<'a> Lexer<'a> {
    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) {
        let Some(ch) = self.src[self.pos..].chars().next() else { return };
        self.pos += ch.len_utf8();
        if ch == '\n' {
            self.line += 1;
            self.column = 1;
            self.at_line_start = true;
        } else {
            self.column += 1;
        }
    }

    fn skip_rest_of_line(&mut self) {
        while let Some(b) = self.peek(0) {
            self.bump();
            if b == b'\n' {
                break;
            }
        }
    }

    fn push(&mut self, kind: TokenKind, start: usize, line: u32, column: u32) {
        self.tokens.push(Token { kind, text: self.src[start..self.pos].to_string(), line, column, offset: start });
    }

    fn run(&mut self) {
        while let Some(b) = self.peek(0) {
            let (start, line, column) = (self.pos, self.line, self.column);
            match b {
                b'\n' => self.bump(),
                b' ' | b'\t' | b'\r' | 0x0b | 0x0c => {
                    self.bump();
                }
                b'/' if self.peek(1) == Some(b'/') => {
                    while !matches!(self.peek(0), None | Some(b'\n')) {
                        self.bump();
                    }
                }
                b'/' if self.peek(1) == Some(b'*') => self.block_comment(),
                b'#' if self.at_line_start => self.directive(),
                b'"' | b'\'' => {
                    self.at_line_start = false;
                    self.quoted(b);
                }
                b'0'..=b'9' => {
                    self.at_line_start = false;
                    self.number(start, line, column);
                }
                b'.' if matches!(self.peek(1), Some(b'0'..=b'9')) => {
                    self.at_line_start = false;
                    self.number(start, line, column);
                }
                b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                    self.at_line_start = false;
                    while matches!(self.peek(0), Some(b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_')) {
                        self.bump();
                    }
                    let kind =
                        if is_keyword(&self.src[start..self.pos]) { TokenKind::Keyword } else { TokenKind::Identifier };
                    self.push(kind, start, line, column);
                }
                _ => {
                    self.at_line_start = false;
                    let rest = &self.bytes[self.pos..];
                    let width = if rest.starts_with(b"...") {
                        3
                    } else if rest.starts_with(b"::") || rest.starts_with(b"->") || rest.starts_with(b"##") {
                        2
                    } else {
                        1
                    };
                    for _ in 0..width {
                        self.bump();
                    }
                    self.push(TokenKind::Punct, start, line, column);
                }
            }
        }
        self.tokens.push(Token {
            kind: TokenKind::Eof,
            text: String::new(),
            line: self.line,
            column: self.column,
            offset: self.src.len(),
        });
    }

    fn block_comment(&mut self) {
        let (line, column) = (self.line, self.column);
        let was_line_start = self.at_line_start;
        let next_line = self.src[self.pos..].find('\n').map(|i| self.pos + i + 1);
        self.bump();
        self.bump();
        loop {
            match self.peek(0) {
                None => {
                    self.diags.push(Diagnostic::error(line, column, "unterminated block comment"));
                    if let Some(resume) = next_line {
                        self.pos = resume;
                        self.line = line + 1;
                        self.column = 1;
                        self.at_line_start = true;
                    }
                    return;
                }
                Some(b'*') if self.peek(1) == Some(b'/') => {
                    self.bump();
                    self.bump();
                    break;
                }
                Some(_) => self.bump(),
            }
        }
        // A comment does not end the "start of line" state for directives.
        if was_line_start && self.line == line {
            self.at_line_start = true;
        }
    }

    fn directive(&mut self) {
        let (start, line, column) = (self.pos, self.line, self.column);
        let mut text = String::new();
        loop {
            match self.peek(0) {
                None => break,
                Some(b'\\') if self.peek(1) == Some(b'\n') => {
                    self.bump();
                    self.bump();
                    text.push(' ');
                }
                Some(b'\\') if self.peek(1) == Some(b'\r') && self.peek(2) == Some(b'\n') => {
                    self.bump();
                    self.bump();
                    self.bump();
                    text.push(' ');
                }
                Some(b'\n') => break,
                Some(_) => {
                    let ch = self.src[self.pos..].chars().next().unwrap_or(' ');
                    text.push(ch);
                    self.bump();
                }
            }
        }
        let body = text.trim_start_matches('#');
        let body = match body.find("//") {
            Some(i) => &body[..i],
            None => body,
        };
        let words: Vec<&str> = body.split_whitespace().collect();
        if words.len() >= 2 && words[0] == "pragma" && PRAGMAS.contains(&words[1]) {
            self.tokens.push(Token {
                kind: TokenKind::Pragma,
                text: words[1..].join(" "),
                line,
                column,
                offset: start,
            });
        }
    }

    fn quoted(&mut self, quote: u8) {
        let (start, line, column) = (self.pos, self.line, self.column);
        self.bump();
        loop {
            match self.peek(0) {
                None | Some(b'\n') => {
                    let what = if quote == b'"' { "string" } else { "character" };
                    self.diags.push(Diagnostic::error(line, column, format!("unterminated {what} literal")));
                    self.skip_rest_of_line();
                    return;
                }
                Some(b'\\') => {
                    self.bump();
                    if self.peek(0).is_some_and(|b| b != b'\n') {
                        self.bump();
                    }
                }
                Some(b) if b == quote => {
                    self.bump();
                    break;
                }
                Some(_) => self.bump(),
            }
        }
        self.push(TokenKind::Literal, start, line, column);
    }

    fn number(&mut self, start: usize, line: u32, column: u32) {
        let mut prev = 0u8;
        while let Some(b) = self.peek(0) {
            let exponent_sign = matches!(b, b'+' | b'-') && matches!(prev, b'e' | b'E' | b'p' | b'P');
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'\'' || exponent_sign {
                prev = b;
                self.bump();
            } else {
                break;
            }
        }
        let text = &self.src[start..self.pos];
        let kind = if parse_int_literal(text).is_some() { TokenKind::IntLiteral } else { TokenKind::Literal };
        self.push(kind, start, line, column);
    }
}

/// Parses a C integer literal (decimal, hex, octal or binary, optional
/// `u`/`l` suffixes and `'` digit separators).
pub fn parse_int_literal(text: &str) -> Option<u64> {
    let cleaned: String = text.chars().filter(|&c| c != '\'').collect();
    let digits = cleaned.trim_end_matches(['u', 'U', 'l', 'L']);
    if digits.is_empty() {
        return None;
    }
    let lower = digits.to_ascii_lowercase();
    if let Some(hex) = lower.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = lower.strip_prefix("0b") {
        u64::from_str_radix(bin, 2).ok()
    } else if lower.len() > 1 && lower.starts_with('0') {
        u64::from_str_radix(&lower[1..], 8).ok()
    } else {
        lower.parse().ok()
    }
}
