//! The knowledge library: algorithm and data-structure notes keyed by tag, and
//! exact tag matching of problems against it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{canonical_tag, Problem};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("duplicate knowledge tag {0:?}")]
    DuplicateTag(String),
    #[error("entry {tag:?} has no {format} text")]
    MissingFormat { tag: String, format: KnowledgeFormat },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub tag: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub pseudo_code: String,
    #[serde(default)]
    pub steps: Vec<String>,
}

impl KnowledgeEntry {
    fn has(&self, format: KnowledgeFormat) -> bool {
        match format {
            KnowledgeFormat::Description => !self.description.trim().is_empty(),
            KnowledgeFormat::PseudoCode => !self.pseudo_code.trim().is_empty(),
            KnowledgeFormat::StepsOfPseudoCode => self.steps.iter().any(|s| !s.trim().is_empty()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeFormat {
    #[default]
    Description,
    PseudoCode,
    StepsOfPseudoCode,
}

impl KnowledgeFormat {
    pub const ALL: [KnowledgeFormat; 3] = [Self::Description, Self::PseudoCode, Self::StepsOfPseudoCode];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Description => "description",
            Self::PseudoCode => "pseudo_code",
            Self::StepsOfPseudoCode => "steps_of_pseudo_code",
        }
    }
}

impl fmt::Display for KnowledgeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KnowledgeFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "description" => Ok(Self::Description),
            "pseudo_code" | "pseudocode" => Ok(Self::PseudoCode),
            "steps_of_pseudo_code" | "steps" => Ok(Self::StepsOfPseudoCode),
            other => Err(format!("unknown knowledge format {other:?}")),
        }
    }
}

/// Render one entry in the requested format. Steps become a numbered list.
pub fn render_entry(entry: &KnowledgeEntry, format: KnowledgeFormat) -> Result<String, KnowledgeError> {
    if !entry.has(format) {
        return Err(KnowledgeError::MissingFormat {
            tag: entry.tag.clone(),
            format,
        });
    }
    Ok(match format {
        KnowledgeFormat::Description => entry.description.clone(),
        KnowledgeFormat::PseudoCode => entry.pseudo_code.clone(),
        KnowledgeFormat::StepsOfPseudoCode => entry
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n"),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryFile {
    entries: Vec<KnowledgeEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeLibrary {
    entries: BTreeMap<String, KnowledgeEntry>,
}

impl KnowledgeLibrary {
    pub fn from_entries(entries: impl IntoIterator<Item = KnowledgeEntry>) -> Result<Self, KnowledgeError> {
        let mut map = BTreeMap::new();
        for mut entry in entries {
            entry.tag = canonical_tag(&entry.tag);
            if entry.tag.is_empty() {
                return Err(KnowledgeError::Parse {
                    path: PathBuf::new(),
                    message: "entry with empty tag".into(),
                });
            }
            if !KnowledgeFormat::ALL.iter().any(|&f| entry.has(f)) {
                return Err(KnowledgeError::Parse {
                    path: PathBuf::new(),
                    message: format!("entry {:?} has no knowledge text in any format", entry.tag),
                });
            }
            if map.contains_key(&entry.tag) {
                return Err(KnowledgeError::DuplicateTag(entry.tag));
            }
            map.insert(entry.tag.clone(), entry);
        }
        Ok(Self { entries: map })
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        let file: LibraryFile = serde_json::from_str(text).map_err(|e| KnowledgeError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        Self::from_entries(file.entries)
    }

    pub fn to_json(&self) -> String {
        let file = LibraryFile {
            entries: self.entries.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("library serializes")
    }

    /// Sorted tag list.
    pub fn vocabulary(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn get(&self, tag: &str) -> Option<&KnowledgeEntry> {
        self.entries.get(&canonical_tag(tag))
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.get(tag).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_library(path: &Path) -> Result<KnowledgeLibrary, KnowledgeError> {
    let text = fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    KnowledgeLibrary::from_json(&text).map_err(|e| match e {
        KnowledgeError::Parse { message, .. } => KnowledgeError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedItem {
    pub tag: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedKnowledge {
    pub items: Vec<MatchedItem>,
    pub format: KnowledgeFormat,
    pub unmatched_tags: Vec<String>,
}

impl MatchedKnowledge {
    pub fn tags(&self) -> Vec<String> {
        self.items.iter().map(|i| i.tag.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Exact dictionary join of the problem's tags with the library. Items come
/// back sorted by tag; tags absent from the library are listed as unmatched.
/// An entry lacking the requested format falls back to the first format it
/// does have, in `KnowledgeFormat::ALL` order.
pub fn match_knowledge(problem: &Problem, lib: &KnowledgeLibrary, format: KnowledgeFormat) -> MatchedKnowledge {
    match_tags(&problem.tags, lib, format)
}

pub fn match_tags<S: AsRef<str>>(tags: &[S], lib: &KnowledgeLibrary, format: KnowledgeFormat) -> MatchedKnowledge {
    let tags: BTreeSet<String> = tags
        .iter()
        .map(|t| canonical_tag(t.as_ref()))
        .filter(|t| !t.is_empty())
        .collect();
    let mut items = Vec::new();
    let mut unmatched_tags = Vec::new();
    for tag in tags {
        match lib.entries.get(&tag) {
            Some(entry) => {
                let text = render_entry(entry, format).unwrap_or_else(|_| {
                    log::warn!("knowledge entry {tag:?} lacks {format}; using another format");
                    KnowledgeFormat::ALL
                        .iter()
                        .find_map(|&f| render_entry(entry, f).ok())
                        .expect("entries hold at least one format")
                });
                items.push(MatchedItem { tag, text });
            }
            None => unmatched_tags.push(tag),
        }
    }
    if !unmatched_tags.is_empty() {
        log::warn!("tags outside the knowledge vocabulary: {unmatched_tags:?}");
    }
    MatchedKnowledge {
        items,
        format,
        unmatched_tags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(tag: &str) -> KnowledgeEntry {
        KnowledgeEntry {
            tag: tag.into(),
            description: format!("{tag} description"),
            pseudo_code: format!("{tag}()"),
            steps: vec![format!("do {tag}"), "finish".into()],
        }
    }

    fn lib(tags: &[&str]) -> KnowledgeLibrary {
        KnowledgeLibrary::from_entries(tags.iter().map(|t| entry(t))).unwrap()
    }

    fn problem(tags: &[&str]) -> Problem {
        Problem {
            id: "p".into(),
            statement: "s".into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            difficulty_rating: None,
            release_date: None,
            test_cases: vec![],
            solutions: vec![],
            allow_empty_output: false,
        }
    }

    #[test]
    fn load_and_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.json");
        fs::write(
            &path,
            r#"{"entries": [{"tag": "greedy", "description": "g"}, {"tag": "DP", "steps": ["a"]}]}"#,
        )
        .unwrap();
        let lib = load_library(&path).unwrap();
        assert_eq!(lib.vocabulary(), vec!["dp", "greedy"]);
    }

    #[test]
    fn load_rejects_empty_and_duplicate_entries() {
        let empty = r#"{"entries": [{"tag": "dp", "description": "", "pseudo_code": "", "steps": []}]}"#;
        assert!(matches!(
            KnowledgeLibrary::from_json(empty),
            Err(KnowledgeError::Parse { .. })
        ));
        let dup = r#"{"entries": [{"tag": "dp", "description": "a"}, {"tag": "dp", "description": "b"}]}"#;
        match KnowledgeLibrary::from_json(dup) {
            Err(KnowledgeError::DuplicateTag(t)) => assert_eq!(t, "dp"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn render_formats() {
        let e = KnowledgeEntry {
            tag: "greedy".into(),
            description: "Greedy chooses locally optimal moves".into(),
            pseudo_code: String::new(),
            steps: vec!["sort items".into(), "scan once".into()],
        };
        assert_eq!(
            render_entry(&e, KnowledgeFormat::Description).unwrap(),
            "Greedy chooses locally optimal moves"
        );
        assert_eq!(
            render_entry(&e, KnowledgeFormat::StepsOfPseudoCode).unwrap(),
            "1. sort items\n2. scan once"
        );
        assert!(matches!(
            render_entry(&e, KnowledgeFormat::PseudoCode),
            Err(KnowledgeError::MissingFormat { .. })
        ));
    }

    #[test]
    fn matching_examples() {
        let l = lib(&["dp", "greedy"]);
        let m = match_knowledge(&problem(&["greedy", "dp"]), &l, KnowledgeFormat::Description);
        assert_eq!(m.tags(), vec!["dp", "greedy"]);
        assert_eq!(m.items[0].text, "dp description");

        let m = match_knowledge(&problem(&[]), &l, KnowledgeFormat::Description);
        assert!(m.items.is_empty() && m.unmatched_tags.is_empty());

        let m = match_knowledge(&problem(&["dp", "quantum"]), &l, KnowledgeFormat::PseudoCode);
        assert_eq!(m.tags(), vec!["dp"]);
        assert_eq!(m.unmatched_tags, vec!["quantum"]);
        assert_eq!(m.items[0].text, "dp()");
    }

    #[test]
    fn library_round_trip() {
        let l = lib(&["graphs", "dp", "math"]);
        assert_eq!(KnowledgeLibrary::from_json(&l.to_json()).unwrap(), l);
    }

    proptest! {
        #[test]
        fn matching_is_total_and_order_free(tags in prop::collection::vec(prop::sample::select(vec!["dp", "greedy", "math", "graphs", "x", "y"]), 0..8), seed in any::<u64>()) {
            let l = lib(&["dp", "greedy", "math"]);
            let mut shuffled = tags.clone();
            let len = shuffled.len().max(1);
            shuffled.rotate_left((seed as usize) % len);
            for f in KnowledgeFormat::ALL {
                let a = match_knowledge(&problem(&tags), &l, f);
                let b = match_knowledge(&problem(&shuffled), &l, f);
                prop_assert_eq!(&a, &b);
                let mut covered: BTreeSet<String> = a.tags().into_iter().collect();
                covered.extend(a.unmatched_tags.iter().cloned());
                let expected: BTreeSet<String> = tags.iter().map(|t| t.to_string()).collect();
                prop_assert_eq!(covered, expected);
            }
        }
    }
}
