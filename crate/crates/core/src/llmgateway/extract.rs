//! Isolate program text from a chat completion.

use serde::{Deserialize, Serialize};

use crate::cleanse::tokenize::{tokenize, Language, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedCode {
    pub code: String,
    pub from_fence: bool,
    /// Neither a fence nor a code-looking line was found; `code` is the whole
    /// completion.
    pub low_confidence: bool,
}

const KEYWORDS: &[&str] = &[
    "import", "from", "def", "class", "for", "while", "if", "print", "return", "with", "try", "async", "@",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "//=", "%=", ":=", "**=", "|=", "&=", "^=", "<<=", ">>=",
];

fn first_fence(text: &str) -> Option<String> {
    let mut lines = text.lines();
    loop {
        let line = lines.next()?;
        if line.trim_start().starts_with("```") {
            break;
        }
    }
    let mut body = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            break;
        }
        body.push(line);
    }
    Some(body.join("\n"))
}

fn looks_like_code(line: &str) -> bool {
    let Ok(tokens) = tokenize(line, Language::Python) else {
        return false;
    };
    let sig: Vec<&str> = tokens
        .iter()
        .filter(|t| t.kind.is_significant())
        .map(|t| t.text(line))
        .collect();
    let Some(&first) = sig.first() else {
        return false;
    };
    if KEYWORDS.contains(&first) {
        return true;
    }
    let first_is_name = tokens
        .iter()
        .find(|t| t.kind.is_significant())
        .is_some_and(|t| t.kind == TokenKind::Name);
    sig.iter().any(|t| ASSIGN_OPS.contains(t))
        || (first_is_name && matches!(sig.get(1), Some(&"(") | Some(&".") | Some(&"[")))
}

pub fn extract_code(completion: &str) -> ExtractedCode {
    if let Some(code) = first_fence(completion) {
        return ExtractedCode {
            code,
            from_fence: true,
            low_confidence: false,
        };
    }
    let lines: Vec<&str> = completion.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if !looks_like_code(line) {
            continue;
        }
        if i == 0 {
            return ExtractedCode {
                code: completion.to_string(),
                from_fence: false,
                low_confidence: false,
            };
        }
        let suffix = lines[i..].join("\n");
        if tokenize(&suffix, Language::Python).is_ok() {
            return ExtractedCode {
                code: suffix,
                from_fence: false,
                low_confidence: false,
            };
        }
    }
    ExtractedCode {
        code: completion.to_string(),
        from_fence: false,
        low_confidence: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block() {
        let e = extract_code("Here you go:\n```\nprint(1)\n```");
        assert_eq!(e.code, "print(1)");
        assert!(e.from_fence);
    }

    #[test]
    fn language_tagged_fence_and_first_of_two() {
        let e = extract_code("A:\n```python\nx = 1\nprint(x)\n```\nB:\n```python\nprint(2)\n```\n");
        assert_eq!(e.code, "x = 1\nprint(x)");
    }

    #[test]
    fn pure_code_passthrough() {
        let src = "n = int(input())\nprint(n * 2)\n";
        let e = extract_code(src);
        assert_eq!(e.code, src);
        assert!(!e.from_fence && !e.low_confidence);
    }

    #[test]
    fn prose_then_code() {
        let e = extract_code("Here's the solution:\nimport sys\nprint(sys.stdin.read())");
        assert_eq!(e.code, "import sys\nprint(sys.stdin.read())");
        assert!(!e.low_confidence);
    }

    #[test]
    fn prose_only_is_low_confidence() {
        let e = extract_code("I can't solve this one, sorry!");
        assert!(e.low_confidence);
        assert_eq!(e.code, "I can't solve this one, sorry!");
    }
}
