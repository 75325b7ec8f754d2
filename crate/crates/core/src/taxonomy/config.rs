use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::defaults;
use super::{
    check_unique, AcquiredKind, Polarity, ProtectedAttribute, ProtectedKind, ProtectedSet,
    RelationClass, TaxonomyError, OCCUPATION_CATEGORIES,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationEntry {
    pub label: String,
    pub category: String,
}

/// A two-person relation: `left` and `right` are the two roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub left: String,
    pub right: String,
    pub class: RelationClass,
}

impl RelationEntry {
    pub fn label(&self) -> String {
        format!("{} and {}", self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacteristicEntry {
    pub label: String,
    pub polarity: Polarity,
    pub partner: String,
}

/// Prompt text templates.
///
/// Placeholders: `{article}` resolves to "a"/"an" for the word that follows
/// it; `{gender}`, `{race}`, `{age}` resolve to the targeted label or vanish;
/// `{acquired}` is the acquired phrase; `{left}`/`{right}` are the rendered
/// person phrases of a two-person relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Templates {
    pub implicit_identity: String,
    pub explicit_identity: String,
    pub relation_identity: String,
    pub photorealism: String,
    pub separator: String,
    /// Noun appended to characteristic adjectives ("beautiful person").
    pub characteristic_noun: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            implicit_identity: "{article} {acquired}".into(),
            explicit_identity: "{article} {age} {race} {gender} {acquired}".into(),
            relation_identity: "{left} at left and {right} at right".into(),
            photorealism: "realistic photo, front view, medium shot".into(),
            separator: ", ".into(),
            characteristic_noun: "person".into(),
        }
    }
}

/// Which visibility × acquired-kind × protected-kind cells are compiled.
///
/// An implicit prompt names no protected attribute and is scored on every
/// protected kind, so implicit cells are switched per acquired kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inclusion {
    pub implicit: Vec<AcquiredKind>,
    pub explicit: BTreeMap<AcquiredKind, Vec<ProtectedKind>>,
}

impl Default for Inclusion {
    fn default() -> Self {
        Self {
            implicit: AcquiredKind::ALL.to_vec(),
            explicit: AcquiredKind::ALL
                .into_iter()
                .map(|a| (a, ProtectedKind::ALL.to_vec()))
                .collect(),
        }
    }
}

impl Inclusion {
    pub fn implicit_enabled(&self, kind: AcquiredKind) -> bool {
        self.implicit.contains(&kind)
    }

    pub fn explicit_enabled(&self, acquired: AcquiredKind, protected: ProtectedKind) -> bool {
        self.explicit
            .get(&acquired)
            .is_some_and(|kinds| kinds.contains(&protected))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaxonomyConfig {
    pub protected: Vec<ProtectedAttribute>,
    pub occupations: Vec<OccupationEntry>,
    pub relations: Vec<RelationEntry>,
    pub characteristics: Vec<CharacteristicEntry>,
    pub templates: Templates,
    pub include: Inclusion,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        Self {
            protected: ProtectedSet::default().iter().cloned().collect(),
            occupations: defaults::occupations(),
            relations: defaults::relations(),
            characteristics: defaults::characteristics(),
            templates: Templates::default(),
            include: Inclusion::default(),
        }
    }
}

impl TaxonomyConfig {
    /// A config with no acquired attributes and the default protected set.
    pub fn empty() -> Self {
        Self {
            occupations: Vec::new(),
            relations: Vec::new(),
            characteristics: Vec::new(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn protected_set(&self) -> Result<ProtectedSet, TaxonomyError> {
        ProtectedSet::new(self.protected.clone())
    }

    /// Checks everything except antonym presence, which is the pairing step's concern.
    pub fn validate(&self) -> Result<ProtectedSet, TaxonomyError> {
        let protected = self.protected_set()?;
        for kinds in self.include.explicit.values() {
            for kind in kinds {
                if protected.get(*kind).is_none() {
                    return Err(TaxonomyError::UndefinedProtectedKind(*kind));
                }
            }
        }

        check_unique("occupation", self.occupations.iter().map(|o| &o.label))?;
        for occ in &self.occupations {
            if !OCCUPATION_CATEGORIES.contains(&occ.category.as_str()) {
                return Err(TaxonomyError::UnknownCategory {
                    label: occ.label.clone(),
                    category: occ.category.clone(),
                });
            }
        }

        let relation_labels: Vec<String> = self.relations.iter().map(RelationEntry::label).collect();
        check_unique("social relation", relation_labels.iter())?;
        for rel in &self.relations {
            if rel.left.trim().is_empty() || rel.right.trim().is_empty() {
                return Err(TaxonomyError::EmptyLabel("social relation role".into()));
            }
        }

        check_unique("characteristic", self.characteristics.iter().map(|c| &c.label))?;

        self.templates.validate()?;
        Ok(protected)
    }
}

const PERSON_PLACEHOLDERS: &[&str] = &["article", "acquired", "gender", "race", "age"];

impl Templates {
    pub fn validate(&self) -> Result<(), TaxonomyError> {
        check_placeholders(&self.implicit_identity, PERSON_PLACEHOLDERS)?;
        check_placeholders(&self.explicit_identity, PERSON_PLACEHOLDERS)?;
        check_placeholders(&self.relation_identity, &["left", "right"])?;
        check_placeholders(&self.photorealism, &[])?;
        check_placeholders(&self.separator, &[])?;
        check_placeholders(&self.characteristic_noun, &[])?;
        Ok(())
    }
}

/// Placeholder names in `template`, in order of appearance.
pub(crate) fn placeholders(template: &str) -> Result<Vec<&str>, TaxonomyError> {
    let invalid = |reason: &str| TaxonomyError::InvalidTemplate {
        template: template.to_string(),
        reason: reason.to_string(),
    };
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(invalid("unmatched `}`"));
        }
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| invalid("unclosed `{`"))?;
        let name = &after[..close];
        if name.contains('{') {
            return Err(invalid("nested `{`"));
        }
        names.push(name);
        rest = &after[close + 1..];
    }
    Ok(names)
}

fn check_placeholders(template: &str, allowed: &[&str]) -> Result<(), TaxonomyError> {
    for name in placeholders(template)? {
        if !allowed.contains(&name) {
            return Err(TaxonomyError::InvalidTemplate {
                template: template.to_string(),
                reason: format!("unknown placeholder `{{{name}}}`"),
            });
        }
    }
    Ok(())
}
