//! The attribute taxonomy and prompt-set compiler.
//!
//! Biases are classified along four axes: how they manifest (ignorance vs.
//! discrimination), how visible they are (implicit vs. explicit prompts), the
//! acquired attribute a prompt describes (occupation, social relation,
//! characteristic) and the protected attribute being measured (gender, race,
//! age). The types here encode the last three; manifestation is measured by
//! [`crate::manifestation`] over antonym pairs produced by [`pair_prompts`].

mod compile;
mod config;
mod defaults;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compile::{compile_prompt_set, pair_prompts};
pub use config::{
    CharacteristicEntry, Inclusion, OccupationEntry, RelationEntry, TaxonomyConfig, Templates,
};
pub use defaults::OCCUPATION_CATEGORIES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaxonomyError {
    #[error("template `{template}`: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("duplicate {kind} label `{label}`")]
    DuplicateLabel { kind: String, label: String },
    #[error("no protected attributes defined")]
    NoProtectedAttributes,
    #[error("protected attribute {0} has no sub-attributes")]
    EmptyProtectedAttribute(ProtectedKind),
    #[error("explicit cell references undefined protected attribute {0}")]
    UndefinedProtectedKind(ProtectedKind),
    #[error("occupation `{label}` has unknown category `{category}`")]
    UnknownCategory { label: String, category: String },
    #[error("empty {0} label")]
    EmptyLabel(String),
    #[error("characteristic `{label}` has no partner `{partner}` in the prompt set")]
    MissingPartner { label: String, partner: String },
    #[error("characteristic `{label}` carries no antonym information")]
    PartnerUnknown { label: String },
    #[error("characteristics `{a}` and `{b}` are not mutual partners with opposite polarity")]
    AsymmetricPartner { a: String, b: String },
    #[error("prompt line {line}: {reason}")]
    MalformedPrompt { line: usize, reason: String },
}

/// Protected attribute dimension.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ProtectedKind {
    Gender,
    Race,
    Age,
}

impl ProtectedKind {
    pub const ALL: [ProtectedKind; 3] = [Self::Gender, Self::Race, Self::Age];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gender => "gender",
            Self::Race => "race",
            Self::Age => "age",
        }
    }

    /// Row label used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Self::Gender => "Gender",
            Self::Race => "Race",
            Self::Age => "Age",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s) || k.title() == s)
    }
}

impl fmt::Display for ProtectedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A protected attribute with its ordered sub-attribute labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedAttribute {
    pub kind: ProtectedKind,
    pub sub_attributes: Vec<String>,
}

impl ProtectedAttribute {
    pub fn gender() -> Self {
        Self::from_labels(ProtectedKind::Gender, &["male", "female"])
    }

    pub fn race() -> Self {
        Self::from_labels(
            ProtectedKind::Race,
            &["European", "African", "East-Asian", "South-Asian", "Latino"],
        )
    }

    pub fn age() -> Self {
        Self::from_labels(ProtectedKind::Age, &["young", "middle-aged", "elderly"])
    }

    fn from_labels(kind: ProtectedKind, labels: &[&str]) -> Self {
        Self {
            kind,
            sub_attributes: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sub_attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_attributes.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.sub_attributes.iter().position(|s| s == label)
    }
}

/// The protected attributes in use, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProtectedSet(Vec<ProtectedAttribute>);

impl Default for ProtectedSet {
    fn default() -> Self {
        Self(vec![
            ProtectedAttribute::gender(),
            ProtectedAttribute::race(),
            ProtectedAttribute::age(),
        ])
    }
}

impl ProtectedSet {
    pub fn new(attributes: Vec<ProtectedAttribute>) -> Result<Self, TaxonomyError> {
        if attributes.is_empty() {
            return Err(TaxonomyError::NoProtectedAttributes);
        }
        let mut seen = Vec::new();
        for attr in &attributes {
            if seen.contains(&attr.kind) {
                return Err(TaxonomyError::DuplicateLabel {
                    kind: "protected attribute".into(),
                    label: attr.kind.to_string(),
                });
            }
            seen.push(attr.kind);
            if attr.is_empty() {
                return Err(TaxonomyError::EmptyProtectedAttribute(attr.kind));
            }
            check_unique(attr.kind.as_str(), attr.sub_attributes.iter())?;
        }
        Ok(Self(attributes))
    }

    pub fn get(&self, kind: ProtectedKind) -> Option<&ProtectedAttribute> {
        self.0.iter().find(|a| a.kind == kind)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProtectedAttribute> {
        self.0.iter()
    }

    pub fn kinds(&self) -> impl Iterator<Item = ProtectedKind> + '_ {
        self.0.iter().map(|a| a.kind)
    }

    /// Every sub-attribute label of every kind.
    pub fn all_labels(&self) -> impl Iterator<Item = &str> {
        self.0
            .iter()
            .flat_map(|a| a.sub_attributes.iter().map(String::as_str))
    }
}

pub(crate) fn check_unique<'a>(
    kind: &str,
    labels: impl Iterator<Item = &'a String>,
) -> Result<(), TaxonomyError> {
    let mut seen = std::collections::BTreeSet::new();
    for label in labels {
        if label.trim().is_empty() {
            return Err(TaxonomyError::EmptyLabel(kind.to_string()));
        }
        if !seen.insert(label.as_str()) {
            return Err(TaxonomyError::DuplicateLabel {
                kind: kind.to_string(),
                label: label.clone(),
            });
        }
    }
    Ok(())
}

/// Acquired attribute dimension.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum AcquiredKind {
    Occupation,
    SocialRelation,
    Characteristic,
}

impl AcquiredKind {
    pub const ALL: [AcquiredKind; 3] = [Self::Occupation, Self::SocialRelation, Self::Characteristic];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Occupation => "occupation",
            Self::SocialRelation => "social_relation",
            Self::Characteristic => "characteristic",
        }
    }

    /// Short row label used in report tables.
    pub fn abbreviation(self) -> &'static str {
        match self {
            Self::Occupation => "Oc",
            Self::SocialRelation => "SR",
            Self::Characteristic => "Char",
        }
    }

    pub(crate) fn id_code(self) -> &'static str {
        match self {
            Self::Occupation => "oc",
            Self::SocialRelation => "sr",
            Self::Characteristic => "ch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.abbreviation() == s)
    }
}

impl fmt::Display for AcquiredKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Implicit,
    Explicit,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Implicit => "implicit",
            Self::Explicit => "explicit",
        }
    }
}

impl fmt::Display for Visibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionTag {
    Left,
    Right,
}

impl PositionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationClass {
    Intimate,
    Instructional,
    Hierarchical,
}

impl RelationClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Intimate => "intimate",
            Self::Instructional => "instructional",
            Self::Hierarchical => "hierarchical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Self::Positive),
            "negative" => Some(Self::Negative),
            _ => None,
        }
    }
}

/// One acquired sub-attribute as it appears in a prompt.
///
/// `category` is an occupation category, a relation class or a polarity.
/// For characteristics `polarity_partner` is the antonym; for relations it is
/// the counterpart role and `position_tag` says where this role stands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquiredAttribute {
    pub kind: AcquiredKind,
    pub label: String,
    pub category: String,
    pub polarity_partner: Option<String>,
    pub position_tag: Option<PositionTag>,
}

impl AcquiredAttribute {
    pub fn polarity(&self) -> Option<Polarity> {
        match self.kind {
            AcquiredKind::Characteristic => Polarity::parse(&self.category),
            _ => None,
        }
    }
}

/// Requested protected sub-attribute labels, one map per depicted person.
///
/// Empty for implicit prompts. Two-person prompts hold `[left, right]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Targets(Vec<BTreeMap<ProtectedKind, String>>);

impl Targets {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn single(map: BTreeMap<ProtectedKind, String>) -> Self {
        Self(vec![map])
    }

    pub fn pair(left: BTreeMap<ProtectedKind, String>, right: BTreeMap<ProtectedKind, String>) -> Self {
        Self(vec![left, right])
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(BTreeMap::is_empty)
    }

    /// Per-person target maps, in slot order.
    pub fn slots(&self) -> &[BTreeMap<ProtectedKind, String>] {
        &self.0
    }

    /// Kinds targeted in any slot.
    pub fn kinds(&self) -> Vec<ProtectedKind> {
        let mut kinds: Vec<ProtectedKind> = self.0.iter().flat_map(|m| m.keys().copied()).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetsRepr {
    Pair {
        left: BTreeMap<ProtectedKind, String>,
        right: BTreeMap<ProtectedKind, String>,
    },
    Single(BTreeMap<ProtectedKind, String>),
}

impl Serialize for Targets {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.0.as_slice() {
            [left, right] => TargetsRepr::Pair {
                left: left.clone(),
                right: right.clone(),
            }
            .serialize(serializer),
            [single] => single.serialize(serializer),
            _ => BTreeMap::<ProtectedKind, String>::new().serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for Targets {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match TargetsRepr::deserialize(deserializer)? {
            TargetsRepr::Pair { left, right } => Targets::pair(left, right),
            TargetsRepr::Single(map) if map.is_empty() => Targets::none(),
            TargetsRepr::Single(map) => Targets::single(map),
        })
    }
}

/// One evaluable prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub visibility: Visibility,
    pub acquired: AcquiredAttribute,
    pub targets: Targets,
    pub persons: u8,
    pub identity_prompt: String,
    pub photorealism_prompt: String,
    pub full_text: String,
}

/// Immutable, ordered collection of prompts with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSet {
    prompts: Vec<PromptRecord>,
    index: BTreeMap<String, usize>,
}

impl PromptSet {
    pub fn new(prompts: Vec<PromptRecord>) -> Result<Self, TaxonomyError> {
        let mut index = BTreeMap::new();
        for (i, p) in prompts.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateLabel {
                    kind: "prompt id".into(),
                    label: p.id.clone(),
                });
            }
        }
        Ok(Self { prompts, index })
    }

    pub fn get(&self, id: &str) -> Option<&PromptRecord> {
        self.index.get(id).map(|&i| &self.prompts[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptRecord> {
        self.prompts.iter()
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn prompts(&self) -> &[PromptRecord] {
        &self.prompts
    }
}

/// Antonym characteristic prompts used for the manifestation factor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptPair {
    pub advantageous: String,
    pub disadvantageous: String,
}

impl PromptPair {
    pub fn id(&self) -> String {
        format!("{}~{}", self.advantageous, self.disadvantageous)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_protected_labels() {
        let set = ProtectedSet::default();
        assert_eq!(set.get(ProtectedKind::Gender).unwrap().sub_attributes, ["male", "female"]);
        assert_eq!(
            set.get(ProtectedKind::Race).unwrap().sub_attributes,
            ["European", "African", "East-Asian", "South-Asian", "Latino"]
        );
        assert_eq!(
            set.get(ProtectedKind::Age).unwrap().sub_attributes,
            ["young", "middle-aged", "elderly"]
        );
    }

    #[test]
    fn protected_set_rejects_duplicates() {
        let dup = ProtectedAttribute {
            kind: ProtectedKind::Gender,
            sub_attributes: vec!["male".into(), "male".into()],
        };
        assert!(matches!(
            ProtectedSet::new(vec![dup]),
            Err(TaxonomyError::DuplicateLabel { .. })
        ));
        assert_eq!(ProtectedSet::new(vec![]), Err(TaxonomyError::NoProtectedAttributes));
    }

    #[test]
    fn targets_serde_shapes() {
        let empty = Targets::none();
        assert_eq!(serde_json::to_string(&empty).unwrap(), "{}");
        let single = Targets::single(BTreeMap::from([(ProtectedKind::Race, "African".to_string())]));
        assert_eq!(serde_json::to_string(&single).unwrap(), r#"{"race":"African"}"#);
        let pair = Targets::pair(
            BTreeMap::from([(ProtectedKind::Gender, "male".to_string())]),
            BTreeMap::from([(ProtectedKind::Gender, "female".to_string())]),
        );
        let text = serde_json::to_string(&pair).unwrap();
        assert_eq!(text, r#"{"left":{"gender":"male"},"right":{"gender":"female"}}"#);
        for t in [empty, single, pair] {
            let s = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<Targets>(&s).unwrap(), t);
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(ProtectedKind::parse("Race"), Some(ProtectedKind::Race));
        assert_eq!(ProtectedKind::parse("age"), Some(ProtectedKind::Age));
        assert_eq!(AcquiredKind::parse("SR"), Some(AcquiredKind::SocialRelation));
        assert_eq!(AcquiredKind::parse("characteristic"), Some(AcquiredKind::Characteristic));
    }
}
