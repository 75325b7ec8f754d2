use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::{placeholders, Templates};
use super::{
    AcquiredAttribute, AcquiredKind, Polarity, PositionTag, PromptPair, PromptRecord, PromptSet,
    ProtectedAttribute, ProtectedKind, ProtectedSet, TaxonomyConfig, TaxonomyError, Targets,
    Visibility,
};

const ARTICLE_MARK: char = '\u{1}';

/// Compiles the prompt set described by `config`.
///
/// Per acquired sub-attribute, in config order: the implicit prompt (when its
/// acquired kind is enabled), then one explicit prompt per enabled protected
/// kind and sub-attribute, in declaration order.
pub fn compile_prompt_set(config: &TaxonomyConfig) -> Result<PromptSet, TaxonomyError> {
    let protected = config.validate()?;
    let compiler = Compiler {
        config,
        protected: &protected,
    };
    let mut prompts = Vec::new();

    for occ in &config.occupations {
        let acquired = AcquiredAttribute {
            kind: AcquiredKind::Occupation,
            label: occ.label.clone(),
            category: occ.category.clone(),
            polarity_partner: None,
            position_tag: None,
        };
        compiler.single_person(&acquired, &occ.label, &mut prompts)?;
    }

    for rel in &config.relations {
        compiler.relation(rel, &mut prompts)?;
    }

    for ch in &config.characteristics {
        let acquired = AcquiredAttribute {
            kind: AcquiredKind::Characteristic,
            label: ch.label.clone(),
            category: ch.polarity.as_str().to_string(),
            polarity_partner: Some(ch.partner.clone()),
            position_tag: None,
        };
        let phrase = format!("{} {}", ch.label, config.templates.characteristic_noun);
        compiler.single_person(&acquired, &phrase, &mut prompts)?;
    }

    PromptSet::new(prompts)
}

struct Compiler<'a> {
    config: &'a TaxonomyConfig,
    protected: &'a ProtectedSet,
}

impl Compiler<'_> {
    fn templates(&self) -> &Templates {
        &self.config.templates
    }

    fn explicit_kinds(&self, acquired: AcquiredKind) -> impl Iterator<Item = &ProtectedAttribute> {
        self.protected
            .iter()
            .filter(move |p| self.config.include.explicit_enabled(acquired, p.kind))
    }

    fn single_person(
        &self,
        acquired: &AcquiredAttribute,
        phrase: &str,
        out: &mut Vec<PromptRecord>,
    ) -> Result<(), TaxonomyError> {
        let base = format!("{}-{}", acquired.kind.id_code(), slug(&acquired.label));
        if self.config.include.implicit_enabled(acquired.kind) {
            let identity = render_person(&self.templates().implicit_identity, phrase, &BTreeMap::new())?;
            out.push(self.record(format!("im-{base}"), acquired, Targets::none(), 1, identity));
        }
        for attr in self.explicit_kinds(acquired.kind) {
            for label in &attr.sub_attributes {
                let targets = BTreeMap::from([(attr.kind, label.clone())]);
                let identity = render_person(&self.templates().explicit_identity, phrase, &targets)?;
                let id = format!("ex-{base}-{}-{}", attr.kind, slug(label));
                out.push(self.record(id, acquired, Targets::single(targets), 1, identity));
            }
        }
        Ok(())
    }

    fn relation(&self, rel: &super::RelationEntry, out: &mut Vec<PromptRecord>) -> Result<(), TaxonomyError> {
        let acquired = AcquiredAttribute {
            kind: AcquiredKind::SocialRelation,
            label: rel.left.clone(),
            category: rel.class.as_str().to_string(),
            polarity_partner: Some(rel.right.clone()),
            position_tag: Some(PositionTag::Left),
        };
        let base = format!("sr-{}-{}", slug(&rel.left), slug(&rel.right));
        let t = self.templates();

        if self.config.include.implicit_enabled(AcquiredKind::SocialRelation) {
            let left = render_person(&t.implicit_identity, &rel.left, &BTreeMap::new())?;
            let right = render_person(&t.implicit_identity, &rel.right, &BTreeMap::new())?;
            let identity = render_relation(&t.relation_identity, &left, &right)?;
            out.push(self.record(format!("im-{base}"), &acquired, Targets::none(), 2, identity));
        }
        for attr in self.explicit_kinds(AcquiredKind::SocialRelation) {
            let n = attr.sub_attributes.len();
            for (i, label) in attr.sub_attributes.iter().enumerate() {
                // The right-hand person gets the next sub-attribute so that
                // the two people differ whenever the kind has more than one.
                let left_t = BTreeMap::from([(attr.kind, label.clone())]);
                let right_t = BTreeMap::from([(attr.kind, attr.sub_attributes[(i + 1) % n].clone())]);
                let left = render_person(&t.explicit_identity, &rel.left, &left_t)?;
                let right = render_person(&t.explicit_identity, &rel.right, &right_t)?;
                let identity = render_relation(&t.relation_identity, &left, &right)?;
                let id = format!("ex-{base}-{}-{}", attr.kind, slug(label));
                out.push(self.record(id, &acquired, Targets::pair(left_t, right_t), 2, identity));
            }
        }
        Ok(())
    }

    fn record(
        &self,
        id: String,
        acquired: &AcquiredAttribute,
        targets: Targets,
        persons: u8,
        identity: String,
    ) -> PromptRecord {
        let t = self.templates();
        let full_text = join_text(&identity, &t.separator, &t.photorealism);
        PromptRecord {
            id,
            visibility: if targets.is_empty() {
                Visibility::Implicit
            } else {
                Visibility::Explicit
            },
            acquired: acquired.clone(),
            targets,
            persons,
            identity_prompt: identity,
            photorealism_prompt: t.photorealism.clone(),
            full_text,
        }
    }
}

fn join_text(identity: &str, separator: &str, photorealism: &str) -> String {
    format!("{identity}{separator}{photorealism}")
}

fn fill(template: &str, mut value: impl FnMut(&str) -> String) -> Result<String, TaxonomyError> {
    // Validates brace structure before substituting.
    let names = placeholders(template)?;
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    for name in names {
        let open = rest.find('{').expect("placeholder positions were validated");
        out.push_str(&rest[..open]);
        out.push_str(&value(name));
        rest = &rest[open + name.len() + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn render_person(
    template: &str,
    acquired_phrase: &str,
    targets: &BTreeMap<ProtectedKind, String>,
) -> Result<String, TaxonomyError> {
    let raw = fill(template, |name| match name {
        "article" => ARTICLE_MARK.to_string(),
        "acquired" => acquired_phrase.to_string(),
        other => ProtectedKind::parse(other)
            .and_then(|k| targets.get(&k).cloned())
            .unwrap_or_default(),
    })?;
    Ok(resolve_articles(&collapse_whitespace(&raw)))
}

fn render_relation(template: &str, left: &str, right: &str) -> Result<String, TaxonomyError> {
    let raw = fill(template, |name| match name {
        "left" => left.to_string(),
        "right" => right.to_string(),
        _ => String::new(),
    })?;
    Ok(collapse_whitespace(&raw))
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Replaces each article mark with "a" or "an" by the initial letter of the next word.
fn resolve_articles(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 4);
    for (i, c) in s.char_indices() {
        if c != ARTICLE_MARK {
            out.push(c);
            continue;
        }
        let next = s[i + c.len_utf8()..]
            .chars()
            .find(|ch| !ch.is_whitespace() && *ch != ARTICLE_MARK);
        let vowel = next.is_some_and(|ch| "aeiouAEIOU".contains(ch));
        out.push_str(if vowel { "an" } else { "a" });
    }
    out
}

/// Lowercase id fragment: alphanumerics kept, everything else collapsed to `-`.
pub(crate) fn slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

/// Pairs every implicit characteristic prompt with its antonym.
///
/// The positive member of each pair is the advantageous prompt. Pairs are
/// returned in order of the positive prompt's position in the set.
pub fn pair_prompts(set: &PromptSet) -> Result<Vec<PromptPair>, TaxonomyError> {
    let characteristics: Vec<&PromptRecord> = set
        .iter()
        .filter(|p| p.visibility == Visibility::Implicit && p.acquired.kind == AcquiredKind::Characteristic)
        .collect();
    let by_label: BTreeMap<&str, &PromptRecord> = characteristics
        .iter()
        .map(|p| (p.acquired.label.as_str(), *p))
        .collect();

    let mut pairs = Vec::new();
    for prompt in &characteristics {
        let label = &prompt.acquired.label;
        let partner_label = prompt
            .acquired
            .polarity_partner
            .as_deref()
            .ok_or_else(|| TaxonomyError::PartnerUnknown { label: label.clone() })?;
        let partner = by_label
            .get(partner_label)
            .ok_or_else(|| TaxonomyError::MissingPartner {
                label: label.clone(),
                partner: partner_label.to_string(),
            })?;
        let mutual = partner.acquired.polarity_partner.as_deref() == Some(label.as_str());
        let polarities = (prompt.acquired.polarity(), partner.acquired.polarity());
        let opposite = matches!(
            polarities,
            (Some(Polarity::Positive), Some(Polarity::Negative))
                | (Some(Polarity::Negative), Some(Polarity::Positive))
        );
        if !mutual || !opposite {
            return Err(TaxonomyError::AsymmetricPartner {
                a: label.clone(),
                b: partner_label.to_string(),
            });
        }
        if polarities.0 == Some(Polarity::Positive) {
            pairs.push(PromptPair {
                advantageous: prompt.id.clone(),
                disadvantageous: partner.id.clone(),
            });
        }
    }
    Ok(pairs)
}

/// One line of the prompt-set JSONL file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptLine {
    id: String,
    visibility: Visibility,
    acquired_kind: AcquiredKind,
    acquired_label: String,
    category: String,
    persons: u8,
    targets: Targets,
    text: String,
}

impl PromptSet {
    /// Writes one JSON object per prompt, LF-terminated.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in self.iter() {
            let line = PromptLine {
                id: p.id.clone(),
                visibility: p.visibility,
                acquired_kind: p.acquired.kind,
                acquired_label: p.acquired.label.clone(),
                category: p.acquired.category.clone(),
                persons: p.persons,
                targets: p.targets.clone(),
                text: p.full_text.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Reads a prompt-set JSONL file.
    ///
    /// The JSONL form carries neither antonym partners nor the counterpart
    /// role of relation prompts, so a set read this way scores fine but
    /// cannot be paired. `templates` supplies the photorealism suffix used to
    /// split each text back into its two sub-prompts.
    pub fn read_jsonl<R: BufRead>(input: R, templates: &Templates) -> Result<Self, TaxonomyError> {
        let suffix = format!("{}{}", templates.separator, templates.photorealism);
        let mut prompts = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let malformed = |reason: String| TaxonomyError::MalformedPrompt { line: lineno, reason };
            let line = line.map_err(|e| malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: PromptLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if !(1..=2).contains(&row.persons) {
                return Err(malformed(format!("persons must be 1 or 2, got {}", row.persons)));
            }
            let implicit = row.visibility == Visibility::Implicit;
            if implicit != row.targets.is_empty() {
                return Err(malformed("implicit prompts carry no targets and explicit prompts do".into()));
            }
            if !row.targets.is_empty() && row.targets.slots().len() != row.persons as usize {
                return Err(malformed("target slots do not match persons".into()));
            }
            let identity = row
                .text
                .strip_suffix(&suffix)
                .ok_or_else(|| malformed(format!("text does not end with `{suffix}`")))?
                .to_string();
            prompts.push(PromptRecord {
                id: row.id,
                visibility: row.visibility,
                acquired: AcquiredAttribute {
                    kind: row.acquired_kind,
                    label: row.acquired_label,
                    category: row.category,
                    polarity_partner: None,
                    position_tag: (row.acquired_kind == AcquiredKind::SocialRelation)
                        .then_some(PositionTag::Left),
                },
                targets: row.targets,
                persons: row.persons,
                identity_prompt: identity,
                photorealism_prompt: templates.photorealism.clone(),
                full_text: row.text,
            });
        }
        PromptSet::new(prompts)
    }
}
