//! Three-level aircraft label hierarchy: one root ("aircraft"), six
//! function labels, and the identification labels underneath them.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Level-2 count enforced by strict mode.
pub const STRICT_LEVEL2_COUNT: usize = 6;
/// Level-3 count enforced by strict mode.
pub const STRICT_LEVEL3_COUNT: usize = 61;

const DEFAULT_TAXONOMY_TEXT: &str = include_str!("../data/default_taxonomy.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("line {line}: cannot parse record `{text}`")]
    Syntax { line: usize, text: String },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("level-3 label `{label}` names unknown parent `{parent}`")]
    OrphanLabel { label: String, parent: String },
    #[error("strict mode requires {expected} level-{level} labels, found {found}")]
    StrictCount {
        level: u8,
        expected: usize,
        found: usize,
    },
    #[error("document defines no labels")]
    Empty,
    #[error("label `{0}` is not part of the taxonomy")]
    UnknownLabel(String),
    #[error("no ancestor of `{label}` at level {target}: label is at level {level}")]
    LevelAboveLabel { label: String, target: u8, level: u8 },
    #[error("invalid level {0}: levels are 1, 2 or 3")]
    InvalidLevel(u8),
}

/// A name anchored at one level of the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Label {
    pub name: String,
    pub level: u8,
}

impl Label {
    pub fn new(name: impl Into<String>, level: u8) -> Self {
        Label {
            name: name.into(),
            level,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (L{})", self.name, self.level)
    }
}

/// Immutable label tree. Level-2 and level-3 labels keep the order in which
/// the source document listed them, so identical documents always produce
/// identical taxonomies.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    root: String,
    level2: Vec<String>,
    level3: Vec<String>,
    parent_of: HashMap<String, String>,
}

impl Taxonomy {
    /// Parses the line-oriented taxonomy document. With `strict` on, the
    /// shipped 1/6/61 shape is enforced.
    pub fn parse(text: &str, strict: bool) -> Result<Self, TaxonomyError> {
        let mut root: Option<String> = None;
        let mut level2 = Vec::new();
        let mut level3 = Vec::new();
        let mut parent_of = HashMap::new();
        let mut seen: HashMap<String, u8> = HashMap::new();

        let mut claim = |name: &str, level: u8| -> Result<(), TaxonomyError> {
            if seen.insert(name.to_string(), level).is_some() {
                return Err(TaxonomyError::DuplicateLabel(name.to_string()));
            }
            Ok(())
        };

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = || TaxonomyError::Syntax {
                line: idx + 1,
                text: line.to_string(),
            };
            let (kind, rest) = line.split_once(':').ok_or_else(syntax)?;
            let rest = rest.trim();
            match kind.trim() {
                "root" => {
                    if rest.is_empty() || root.is_some() {
                        return Err(syntax());
                    }
                    claim(rest, 1)?;
                    root = Some(rest.to_string());
                }
                "level2" => {
                    if rest.is_empty() {
                        return Err(syntax());
                    }
                    claim(rest, 2)?;
                    level2.push(rest.to_string());
                }
                "level3" => {
                    let (name, parent) = rest.split_once("->").ok_or_else(syntax)?;
                    let (name, parent) = (name.trim(), parent.trim());
                    if name.is_empty() || parent.is_empty() {
                        return Err(syntax());
                    }
                    claim(name, 3)?;
                    level3.push(name.to_string());
                    parent_of.insert(name.to_string(), parent.to_string());
                }
                _ => return Err(syntax()),
            }
        }

        if level2.is_empty() && level3.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        for (label, parent) in &parent_of {
            if !level2.contains(parent) {
                return Err(TaxonomyError::OrphanLabel {
                    label: label.clone(),
                    parent: parent.clone(),
                });
            }
        }
        if strict {
            if level2.len() != STRICT_LEVEL2_COUNT {
                return Err(TaxonomyError::StrictCount {
                    level: 2,
                    expected: STRICT_LEVEL2_COUNT,
                    found: level2.len(),
                });
            }
            if level3.len() != STRICT_LEVEL3_COUNT {
                return Err(TaxonomyError::StrictCount {
                    level: 3,
                    expected: STRICT_LEVEL3_COUNT,
                    found: level3.len(),
                });
            }
        }

        Ok(Taxonomy {
            root: root.unwrap_or_else(|| "aircraft".to_string()),
            level2,
            level3,
            parent_of,
        })
    }

    /// The shipped hierarchy, validated against the strict 1/6/61 shape.
    pub fn default_taxonomy() -> Self {
        Taxonomy::parse(DEFAULT_TAXONOMY_TEXT, true)
            .expect("bundled taxonomy document is valid")
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    /// Root as a level-1 `Label`.
    pub fn root_label(&self) -> Label {
        Label::new(self.root.clone(), 1)
    }

    pub fn level2(&self) -> &[String] {
        &self.level2
    }

    pub fn level3(&self) -> &[String] {
        &self.level3
    }

    /// Looks a name up at any level.
    pub fn label(&self, name: &str) -> Result<Label, TaxonomyError> {
        if name == self.root {
            Ok(Label::new(name, 1))
        } else if self.level2.iter().any(|l| l == name) {
            Ok(Label::new(name, 2))
        } else if self.parent_of.contains_key(name) {
            Ok(Label::new(name, 3))
        } else {
            Err(TaxonomyError::UnknownLabel(name.to_string()))
        }
    }

    /// True when `label` exists at its claimed level.
    pub fn contains(&self, label: &Label) -> bool {
        matches!(self.label(&label.name), Ok(found) if found.level == label.level)
    }

    /// The unique ancestor of `label` at `target_level` (identity when the
    /// levels are equal).
    pub fn ancestor(&self, label: &Label, target_level: u8) -> Result<Label, TaxonomyError> {
        if !(1..=3).contains(&target_level) {
            return Err(TaxonomyError::InvalidLevel(target_level));
        }
        if !self.contains(label) {
            return Err(TaxonomyError::UnknownLabel(label.name.clone()));
        }
        if target_level > label.level {
            return Err(TaxonomyError::LevelAboveLabel {
                label: label.name.clone(),
                target: target_level,
                level: label.level,
            });
        }
        let mut current = label.clone();
        while current.level > target_level {
            current = match current.level {
                3 => Label::new(self.parent_of[&current.name].clone(), 2),
                2 => Label::new(self.root.clone(), 1),
                _ => unreachable!("level 1 has no parent"),
            };
        }
        Ok(current)
    }
}
