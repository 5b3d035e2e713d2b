//! A lexer for Python source that keeps byte spans, enough to drop comments
//! and docstrings without disturbing the rest of the text.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("no tokenizer for language {0:?}")]
    UnsupportedLanguage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Language {
    Python,
}

impl Language {
    pub fn from_id(language_id: &str) -> Result<Self, TokenizeError> {
        match language_id.trim().to_ascii_lowercase().as_str() {
            "python" | "python3" | "py" | "py3" | "pypy" | "pypy3" | "cpython" => Ok(Language::Python),
            other => Err(TokenizeError::UnsupportedLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Number,
    Str,
    Op,
    Comment,
    /// End of a logical line.
    Newline,
    /// Line break that does not end a statement (blank line or inside brackets).
    Nl,
}

impl TokenKind {
    pub fn is_significant(self) -> bool {
        matches!(
            self,
            TokenKind::Name | TokenKind::Number | TokenKind::Str | TokenKind::Op
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// Zero-based physical line of `start`.
    pub line: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", ")", "[", "]",
    "{", "}", ",", ":", ".", ";", "=",
];

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    brackets: Vec<u8>,
    tokens: Vec<Token>,
    line_has_tokens: bool,
}

impl<'a> Lexer<'a> {
    fn err(&self, message: impl Into<String>) -> TokenizeError {
        TokenizeError::Malformed {
            line: self.line + 1,
            message: message.into(),
        }
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize, line: usize) {
        if kind.is_significant() {
            self.line_has_tokens = true;
        }
        self.tokens.push(Token {
            kind,
            start,
            end: self.pos,
            line,
        });
    }

    /// Length of a line break at the cursor, if any.
    fn newline_len(&self) -> Option<usize> {
        match (self.peek(0), self.peek(1)) {
            (Some(b'\r'), Some(b'\n')) => Some(2),
            (Some(b'\n'), _) | (Some(b'\r'), _) => Some(1),
            _ => None,
        }
    }

    fn run(mut self) -> Result<Vec<Token>, TokenizeError> {
        while let Some(c) = self.peek(0) {
            let start = self.pos;
            let line = self.line;
            if let Some(n) = self.newline_len() {
                self.pos += n;
                let kind = if self.brackets.is_empty() && self.line_has_tokens {
                    TokenKind::Newline
                } else {
                    TokenKind::Nl
                };
                self.push(kind, start, line);
                self.line += 1;
                if kind == TokenKind::Newline {
                    self.line_has_tokens = false;
                }
                continue;
            }
            match c {
                b' ' | b'\t' | b'\x0c' => self.pos += 1,
                b'#' => {
                    while self.peek(0).is_some() && self.newline_len().is_none() {
                        self.pos += 1;
                    }
                    self.push(TokenKind::Comment, start, line);
                }
                b'\\' => {
                    self.pos += 1;
                    match self.newline_len() {
                        Some(n) => {
                            self.pos += n;
                            self.line += 1;
                        }
                        None => return Err(self.err("stray backslash")),
                    }
                }
                b'"' | b'\'' => self.string(start)?,
                b'0'..=b'9' => self.number(start),
                b'.' if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => self.number(start),
                _ if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => self.name_or_prefixed_string(start)?,
                _ => self.operator(start)?,
            }
        }
        if let Some(&open) = self.brackets.last() {
            return Err(self.err(format!("unclosed '{}'", open as char)));
        }
        if self.line_has_tokens {
            let end = self.pos;
            self.tokens.push(Token {
                kind: TokenKind::Newline,
                start: end,
                end,
                line: self.line,
            });
        }
        Ok(self.tokens)
    }

    fn name_or_prefixed_string(&mut self, start: usize) -> Result<(), TokenizeError> {
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(_, ch)| !(ch == '_' || ch.is_alphanumeric()))
            .map_or(rest.len(), |(i, _)| i);
        let word = &rest[..len];
        let next = rest.as_bytes().get(len).copied();
        let is_prefix = len <= 2
            && word
                .chars()
                .all(|ch| matches!(ch.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
            && matches!(next, Some(b'"') | Some(b'\''));
        self.pos += len;
        if is_prefix {
            self.string(start)
        } else {
            self.push(TokenKind::Name, start, self.line);
            Ok(())
        }
    }

    fn number(&mut self, start: usize) {
        while let Some(c) = self.peek(0) {
            let exp_sign = matches!(c, b'+' | b'-')
                && matches!(self.bytes[self.pos - 1], b'e' | b'E')
                && !self.src[start..self.pos].starts_with("0x")
                && !self.src[start..self.pos].starts_with("0X");
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.push(TokenKind::Number, start, self.line);
    }

    /// Cursor is on the opening quote; `start` may precede it by a prefix.
    fn string(&mut self, start: usize) -> Result<(), TokenizeError> {
        let line = self.line;
        let quote = self.bytes[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek(0) else {
                return Err(TokenizeError::Malformed {
                    line: line + 1,
                    message: "unterminated string literal".into(),
                });
            };
            if c == b'\\' {
                self.pos += 1;
                if let Some(n) = self.newline_len() {
                    self.pos += n;
                    self.line += 1;
                } else if self.peek(0).is_some() {
                    self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
                }
                continue;
            }
            if let Some(n) = self.newline_len() {
                if !triple {
                    return Err(self.err("end of line inside string literal"));
                }
                self.pos += n;
                self.line += 1;
                continue;
            }
            if c == quote {
                if !triple {
                    self.pos += 1;
                    break;
                }
                if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                    self.pos += 3;
                    break;
                }
            }
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
        self.push(TokenKind::Str, start, line);
        Ok(())
    }

    fn operator(&mut self, start: usize) -> Result<(), TokenizeError> {
        let rest = &self.src[self.pos..];
        let op = OPERATORS
            .iter()
            .find(|op| rest.starts_with(**op))
            .ok_or_else(|| self.err(format!("unexpected character {:?}", rest.chars().next().unwrap_or('?'))))?;
        match op.as_bytes()[0] {
            open @ (b'(' | b'[' | b'{') => self.brackets.push(open),
            close @ (b')' | b']' | b'}') => {
                let expected = match close {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                if self.brackets.pop() != Some(expected) {
                    return Err(self.err(format!("unbalanced '{}'", close as char)));
                }
            }
            _ => {}
        }
        self.pos += op.len();
        self.push(TokenKind::Op, start, self.line);
        Ok(())
    }
}

pub fn tokenize(src: &str, language: Language) -> Result<Vec<Token>, TokenizeError> {
    match language {
        Language::Python => Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 0,
            brackets: Vec::new(),
            tokens: Vec::new(),
            line_has_tokens: false,
        }
        .run(),
    }
}

/// Text of the significant tokens (names, numbers, strings, operators).
pub fn significant_tokens<'a>(src: &'a str, tokens: &[Token]) -> Vec<&'a str> {
    tokens
        .iter()
        .filter(|t| t.kind.is_significant())
        .map(|t| t.text(src))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src, Language::Python)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text(src).to_string()))
            .collect()
    }

    #[test]
    fn comment_inside_string_is_string() {
        let toks = kinds("s = '# not a comment'\n");
        assert!(toks.iter().all(|(k, _)| *k != TokenKind::Comment));
        assert!(toks.contains(&(TokenKind::Str, "'# not a comment'".into())));
    }

    #[test]
    fn prefixed_and_triple_strings() {
        let src = "x = rb'\\d' + f\"{a}\" + '''multi\nline # x\n'''\n";
        let toks = kinds(src);
        let strs: Vec<_> = toks
            .iter()
            .filter(|(k, _)| *k == TokenKind::Str)
            .map(|(_, s)| s.as_str())
            .collect();
        assert_eq!(strs, vec!["rb'\\d'", "f\"{a}\"", "'''multi\nline # x\n'''"]);
    }

    #[test]
    fn newlines_inside_brackets_are_nl() {
        let toks = kinds("f(1,\n  2)\n");
        let nls: Vec<_> = toks
            .iter()
            .filter(|(k, _)| matches!(k, TokenKind::Nl | TokenKind::Newline))
            .collect();
        assert_eq!(nls[0].0, TokenKind::Nl);
        assert_eq!(nls[1].0, TokenKind::Newline);
    }

    #[test]
    fn numbers() {
        let toks = kinds("a = 1e-5 + 0x1F + 3.14j + .5\n");
        let nums: Vec<_> = toks
            .iter()
            .filter(|(k, _)| *k == TokenKind::Number)
            .map(|(_, s)| s.as_str())
            .collect();
        assert_eq!(nums, vec!["1e-5", "0x1F", "3.14j", ".5"]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(tokenize("x = 'abc\n", Language::Python).is_err());
        assert!(tokenize("f(1, 2\n", Language::Python).is_err());
        assert!(tokenize("x = 1)\n", Language::Python).is_err());
        assert!(tokenize("x = '''never closed\n", Language::Python).is_err());
        assert!(tokenize("a ? b\n", Language::Python).is_err());
    }

    #[test]
    fn unknown_language() {
        assert!(matches!(
            Language::from_id("cobol"),
            Err(TokenizeError::UnsupportedLanguage(_))
        ));
        assert_eq!(Language::from_id("Python3").unwrap(), Language::Python);
    }

    #[test]
    fn final_newline_synthesized() {
        let toks = kinds("x=1");
        assert_eq!(toks.last().unwrap().0, TokenKind::Newline);
    }
}
