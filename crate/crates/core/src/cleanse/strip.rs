//! Comment and docstring removal.
//!
//! Line comments are cut together with the whitespace that precedes them;
//! lines that held nothing but a comment disappear. A logical line made only
//! of string literals is an expression statement with no effect (a docstring
//! or a commented-out block) and is deleted, unless it is the sole statement
//! of a block, where it becomes `pass`.

use super::tokenize::{tokenize, Language, Token, TokenKind, TokenizeError};
use crate::corpus::SourceText;

struct PhysLine {
    start: usize,
    /// End of content, excluding the terminator.
    end: usize,
    /// End including the terminator.
    full_end: usize,
}

fn physical_lines(src: &str) -> Vec<PhysLine> {
    let bytes = src.as_bytes();
    let mut lines = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let term = match (bytes[i], bytes.get(i + 1)) {
            (b'\r', Some(b'\n')) => 2,
            (b'\n', _) | (b'\r', _) => 1,
            _ => {
                i += 1;
                continue;
            }
        };
        lines.push(PhysLine {
            start,
            end: i,
            full_end: i + term,
        });
        i += term;
        start = i;
    }
    if start < bytes.len() {
        lines.push(PhysLine {
            start,
            end: bytes.len(),
            full_end: bytes.len(),
        });
    }
    lines
}

fn indent_width(text: &str) -> usize {
    let mut width = 0;
    for ch in text.chars() {
        match ch {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            '\x0c' => width = 0,
            _ => break,
        }
    }
    width
}

/// A statement line: the significant tokens between two logical line ends.
struct Logical {
    first_line: usize,
    last_line: usize,
    indent: usize,
    only_strings: bool,
    ends_with_colon: bool,
}

fn logical_lines(src: &str, tokens: &[Token], lines: &[PhysLine]) -> Vec<Logical> {
    let mut out = Vec::new();
    let mut current: Vec<&Token> = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::Newline => {
                if let (Some(first), Some(last)) = (current.first(), current.last()) {
                    let line = &lines[first.line];
                    // string tokens record their starting line; find where the last one ends
                    let last_line = lines.partition_point(|l| l.full_end <= last.end.saturating_sub(1));
                    out.push(Logical {
                        first_line: first.line,
                        last_line: last_line.max(last.line),
                        indent: indent_width(&src[line.start..line.end]),
                        only_strings: current.iter().all(|t| t.kind == TokenKind::Str),
                        ends_with_colon: last.kind == TokenKind::Op && last.text(src) == ":",
                    });
                }
                current.clear();
            }
            k if k.is_significant() => current.push(tok),
            _ => {}
        }
    }
    out
}

/// Strip comments and no-op string statements from Python source text.
pub fn strip_python(src: &str) -> Result<String, TokenizeError> {
    let tokens = tokenize(src, Language::Python)?;
    let lines = physical_lines(src);

    let mut delete = vec![false; lines.len()];
    let mut replace: Vec<Option<usize>> = vec![None; lines.len()]; // last line of the replaced statement

    let logical = logical_lines(src, &tokens, &lines);
    let mut prev_kept: Option<(usize, bool)> = None; // (indent, ends_with_colon)
    for (i, stmt) in logical.iter().enumerate() {
        if !stmt.only_strings {
            prev_kept = Some((stmt.indent, stmt.ends_with_colon));
            continue;
        }
        let needs_pass = match prev_kept {
            Some((header_indent, true)) => logical[i + 1..]
                .iter()
                .find(|s| !s.only_strings)
                .is_none_or(|next| next.indent <= header_indent),
            _ => false,
        };
        for flag in &mut delete[stmt.first_line..=stmt.last_line] {
            *flag = true;
        }
        if needs_pass {
            replace[stmt.first_line] = Some(stmt.last_line);
            prev_kept = Some((stmt.indent, false));
        }
    }

    // at most one comment per physical line
    let mut comment_at: Vec<Option<(usize, usize)>> = vec![None; lines.len()];
    for tok in tokens.iter().filter(|t| t.kind == TokenKind::Comment) {
        comment_at[tok.line] = Some((tok.start, tok.end));
    }

    let mut out = String::with_capacity(src.len());
    for (idx, line) in lines.iter().enumerate() {
        let terminator = &src[line.end..line.full_end];
        if let Some(last) = replace[idx] {
            let text = &src[line.start..line.end];
            let body = text.trim_start_matches([' ', '\t', '\x0c']);
            out.push_str(&text[..text.len() - body.len()]);
            out.push_str("pass");
            let l = &lines[last];
            out.push_str(&src[l.end..l.full_end]);
            continue;
        }
        if delete[idx] {
            continue;
        }
        match comment_at[idx] {
            Some((cstart, cend)) => {
                let before = src[line.start..cstart].trim_end_matches([' ', '\t', '\x0c']);
                let after = &src[cend..line.end];
                if before.trim().is_empty() && after.trim().is_empty() {
                    continue;
                }
                out.push_str(before);
                out.push_str(after);
                out.push_str(terminator);
            }
            None => out.push_str(&src[line.start..line.full_end]),
        }
    }
    Ok(out)
}

/// Strip a source in its declared language.
pub fn strip_comments(source: &SourceText) -> Result<SourceText, TokenizeError> {
    let body = match Language::from_id(&source.language_id)? {
        Language::Python => strip_python(&source.body)?,
    };
    Ok(SourceText {
        language_id: source.language_id.clone(),
        body,
    })
}

/// Outcome of stripping inside a batch: malformed sources come back unchanged
/// and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct StripOutcome {
    pub source: SourceText,
    pub error: Option<TokenizeError>,
}

pub fn strip_or_keep(source: &SourceText) -> StripOutcome {
    match strip_comments(source) {
        Ok(source) => StripOutcome { source, error: None },
        Err(e) => StripOutcome {
            source: source.clone(),
            error: Some(e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strip(s: &str) -> String {
        strip_python(s).unwrap()
    }

    #[test]
    fn line_comment_removed() {
        assert_eq!(strip("x=1  # note"), "x=1");
        assert_eq!(strip("x=1  # note\ny=2\n"), "x=1\ny=2\n");
    }

    #[test]
    fn comment_only_lines_vanish_blank_lines_stay() {
        assert_eq!(strip("# header\nx = 1\n\n    # indented\ny = 2\n"), "x = 1\n\ny = 2\n");
    }

    #[test]
    fn string_literal_with_hash_unchanged() {
        let s = "s = '# not a comment'";
        assert_eq!(strip(s), s);
    }

    #[test]
    fn docstring_removed_body_intact() {
        let src = "def f(x):\n    \"\"\"Return x doubled.\n\n    More text.\n    \"\"\"\n    y = x * 2\n    return y\n";
        assert_eq!(strip(src), "def f(x):\n    y = x * 2\n    return y\n");
    }

    #[test]
    fn sole_docstring_becomes_pass() {
        let src = "class E(Exception):\n    '''Marker.'''\n\nprint(1)\n";
        let out = strip(src);
        assert_eq!(out, "class E(Exception):\n    pass\n\nprint(1)\n");
        assert_eq!(strip(&out), out);
    }

    #[test]
    fn sole_docstring_before_else() {
        let src = "if a:\n    'nothing'\nelse:\n    b()\n";
        assert_eq!(strip(src), "if a:\n    pass\nelse:\n    b()\n");
    }

    #[test]
    fn two_docstrings_in_empty_block() {
        let src = "def f():\n    'a'\n    'b'\n";
        assert_eq!(strip(src), "def f():\n    pass\n");
    }

    #[test]
    fn module_docstring_and_string_values_kept() {
        let src = "\"\"\"Module doc.\"\"\"\nimport sys\nmsg = \"\"\"keep me\"\"\"\nprint('a' 'b')\n";
        assert_eq!(strip(src), "import sys\nmsg = \"\"\"keep me\"\"\"\nprint('a' 'b')\n");
    }

    #[test]
    fn comment_inside_brackets() {
        let src = "xs = [\n    1,  # one\n    # gap\n    2,\n]\n";
        assert_eq!(strip(src), "xs = [\n    1,\n    2,\n]\n");
    }

    #[test]
    fn crlf_preserved() {
        assert_eq!(strip("a = 1 # c\r\nb = 2\r\n"), "a = 1\r\nb = 2\r\n");
    }

    #[test]
    fn malformed_is_flagged_not_lost() {
        let src = SourceText::python("x = 'oops\n");
        let out = strip_or_keep(&src);
        assert_eq!(out.source, src);
        assert!(out.error.is_some());
    }

    #[test]
    fn output_retokenizes() {
        let src = "def g():\n    '''d'''\n    # c\n    return [1, # x\n        2]\n";
        let out = strip(src);
        tokenize(&out, Language::Python).unwrap();
        assert_eq!(out, "def g():\n    return [1,\n        2]\n");
    }

    fn arb_line() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("x = 1".to_string()),
            Just("# comment".to_string()),
            Just("y = '# str'  # trailing".to_string()),
            Just("'''doc'''".to_string()),
            Just("\"bare\"".to_string()),
            Just("def f():".to_string()),
            Just("if x:".to_string()),
            Just("".to_string()),
            Just("print(x)".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn strip_is_idempotent(lines in prop::collection::vec((arb_line(), 0usize..3), 0..20)) {
            let src: String = lines
                .iter()
                .map(|(l, depth)| format!("{}{}\n", "    ".repeat(*depth), l))
                .collect();
            if let Ok(once) = strip_python(&src) {
                let twice = strip_python(&once).unwrap();
                prop_assert_eq!(twice, once);
            }
        }
    }
}
