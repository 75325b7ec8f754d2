//! Demographic proportion vectors with layered fallbacks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proportion::ProportionVector;
use crate::taxonomy::{PromptRecord, ProtectedKind, ProtectedSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundTruthError {
    #[error("malformed ground-truth table: {0}")]
    MalformedTable(String),
    #[error("no global default for {0}")]
    MissingGlobalDefault(ProtectedKind),
}

/// What an entry is keyed on, from most to least specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyType {
    Prompt,
    Label,
    Category,
}

/// Where a lookup was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionPath {
    Prompt,
    Label,
    Category,
    Default,
}

impl ResolutionPath {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Prompt => "prompt",
            Self::Label => "label",
            Self::Category => "category",
            Self::Default => "default",
        }
    }
}

impl fmt::Display for ResolutionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthEntry {
    pub key_type: KeyType,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<ProportionVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub race: Option<ProportionVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<ProportionVector>,
    /// Free-text provenance note.
    #[serde(default)]
    pub source: String,
}

impl GroundTruthEntry {
    pub fn get(&self, kind: ProtectedKind) -> Option<&ProportionVector> {
        match kind {
            ProtectedKind::Gender => self.gender.as_ref(),
            ProtectedKind::Race => self.race.as_ref(),
            ProtectedKind::Age => self.age.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    defaults: BTreeMap<ProtectedKind, ProportionVector>,
    #[serde(default)]
    defaults_source: String,
    #[serde(default)]
    entries: Vec<GroundTruthEntry>,
}

/// Validated, immutable ground-truth table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTable {
    defaults: BTreeMap<ProtectedKind, ProportionVector>,
    defaults_source: String,
    entries: BTreeMap<(KeyType, String), GroundTruthEntry>,
}

impl GroundTruthTable {
    /// Parses and validates a table against the protected set's dimensions.
    pub fn from_json(text: &str, protected: &ProtectedSet) -> Result<Self, GroundTruthError> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| GroundTruthError::MalformedTable(e.to_string()))?;
        Self::new(file.defaults, file.defaults_source, file.entries, protected)
    }

    pub fn new(
        defaults: BTreeMap<ProtectedKind, ProportionVector>,
        defaults_source: String,
        entries: Vec<GroundTruthEntry>,
        protected: &ProtectedSet,
    ) -> Result<Self, GroundTruthError> {
        let check = |where_: &str, kind: ProtectedKind, v: &ProportionVector| {
            let attr = protected.get(kind).ok_or_else(|| {
                GroundTruthError::MalformedTable(format!("{where_}: {kind} is not a protected kind"))
            })?;
            if v.len() != attr.len() {
                return Err(GroundTruthError::MalformedTable(format!(
                    "{where_}: {kind} has {} values, expected {}",
                    v.len(),
                    attr.len()
                )));
            }
            Ok(())
        };
        for kind in protected.kinds() {
            if !defaults.contains_key(&kind) {
                return Err(GroundTruthError::MissingGlobalDefault(kind));
            }
        }
        for (kind, v) in &defaults {
            check("defaults", *kind, v)?;
        }
        let mut index = BTreeMap::new();
        for entry in entries {
            let where_ = format!("{} `{}`", key_type_name(entry.key_type), entry.key);
            for kind in ProtectedKind::ALL {
                if let Some(v) = entry.get(kind) {
                    check(&where_, kind, v)?;
                }
            }
            let key = (entry.key_type, entry.key.clone());
            if index.insert(key, entry).is_some() {
                return Err(GroundTruthError::MalformedTable(format!("{where_} appears twice")));
            }
        }
        Ok(Self {
            defaults,
            defaults_source,
            entries: index,
        })
    }

    /// Only global defaults.
    pub fn uniform_defaults(protected: &ProtectedSet) -> Self {
        let defaults = protected
            .iter()
            .map(|a| (a.kind, ProportionVector::uniform(a.len())))
            .collect();
        Self {
            defaults,
            defaults_source: "uniform".into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            defaults: self.defaults.clone(),
            defaults_source: self.defaults_source.clone(),
            entries: self.entries.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("table serializes")
    }

    pub fn entries(&self) -> impl Iterator<Item = &GroundTruthEntry> {
        self.entries.values()
    }

    pub fn defaults_source(&self) -> &str {
        &self.defaults_source
    }

    fn find(&self, key_type: KeyType, key: &str, kind: ProtectedKind) -> Option<&ProportionVector> {
        self.entries
            .get(&(key_type, key.to_string()))
            .and_then(|e| e.get(kind))
    }

    /// Most specific vector for `prompt` and `kind`: prompt id, then acquired
    /// label, then category, then the global default. An entry without the
    /// requested kind falls through to the next level.
    ///
    /// # Panics
    /// If `kind` has no default, which a table built for the same protected
    /// set rules out.
    pub fn lookup(&self, prompt: &PromptRecord, kind: ProtectedKind) -> (&ProportionVector, ResolutionPath) {
        let levels = [
            (KeyType::Prompt, prompt.id.as_str(), ResolutionPath::Prompt),
            (KeyType::Label, prompt.acquired.label.as_str(), ResolutionPath::Label),
            (KeyType::Category, prompt.acquired.category.as_str(), ResolutionPath::Category),
        ];
        for (key_type, key, path) in levels {
            if let Some(v) = self.find(key_type, key, kind) {
                return (v, path);
            }
        }
        let v = self
            .defaults
            .get(&kind)
            .unwrap_or_else(|| panic!("ground-truth table has no {kind} default"));
        (v, ResolutionPath::Default)
    }
}

fn key_type_name(k: KeyType) -> &'static str {
    match k {
        KeyType::Prompt => "prompt",
        KeyType::Label => "label",
        KeyType::Category => "category",
    }
}
