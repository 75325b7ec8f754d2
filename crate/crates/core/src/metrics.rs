//! Per-prompt bias scores and their weighted aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{AlignmentRecord, GenerativeProportions};
use crate::numeric::{stable_sum, weighted_mean};
use crate::taxonomy::{AcquiredKind, PromptRecord, ProtectedKind, ProtectedSet, Visibility};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("vectors have lengths {left} and {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cannot score against an all-zero vector")]
    ZeroVector,
    #[error("component {index} is {value}; scores take non-negative finite vectors")]
    InvalidComponent { index: usize, value: f64 },
    #[error("prompt `{prompt_id}` has no valid images")]
    NoValidImages { prompt_id: String },
    #[error("prompt `{prompt_id}` requests no protected attribute")]
    NotExplicitPrompt { prompt_id: String },
    #[error("prompt `{prompt_id}` targets `{label}`, not a {kind} sub-attribute")]
    UnknownTarget {
        prompt_id: String,
        kind: ProtectedKind,
        label: String,
    },
    #[error("prompt `{prompt_id}` has no {kind} proportions")]
    MissingKind { prompt_id: String, kind: ProtectedKind },
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("weights sum to zero")]
    ZeroTotalWeight,
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("implicit and explicit scores cannot be aggregated together")]
    MixedVisibility,
}

/// Which level of the hierarchy a score summarizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", content = "key", rename_all = "snake_case")]
pub enum Scope {
    Prompt(String),
    Category(String),
    Acquired(AcquiredKind),
    Protected(ProtectedKind),
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScore {
    pub value: f64,
    pub visibility: Visibility,
    pub scope: Scope,
}

/// `½(cos(gen, demo) + 1)`. Inputs are non-negative, so the result lies in `[0.5, 1]`.
pub fn implicit_score(gen: &[f64], demo: &[f64]) -> Result<f64, MetricsError> {
    if gen.len() != demo.len() {
        return Err(MetricsError::DimensionMismatch {
            left: gen.len(),
            right: demo.len(),
        });
    }
    for (index, &value) in gen.iter().chain(demo).enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(MetricsError::InvalidComponent {
                index: index % gen.len(),
                value,
            });
        }
    }
    let dot = stable_sum(gen.iter().zip(demo).map(|(a, b)| a * b));
    let na = stable_sum(gen.iter().map(|a| a * a));
    let nb = stable_sum(demo.iter().map(|b| b * b));
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let cos = (dot / (na * nb).sqrt()).clamp(0.0, 1.0);
    Ok(0.5 * (cos + 1.0))
}

/// Implicit score of one prompt for one kind. With two depicted persons,
/// each slot is scored against `demo` and the slot scores are averaged.
pub fn implicit_prompt_score(
    gp: &GenerativeProportions,
    kind: ProtectedKind,
    demo: &[f64],
) -> Result<f64, MetricsError> {
    let scores = gp
        .slots
        .iter()
        .filter_map(|slot| slot.get(&kind))
        .map(|v| implicit_score(v.values(), demo))
        .collect::<Result<Vec<_>, _>>()?;
    if scores.is_empty() {
        return Err(MetricsError::MissingKind {
            prompt_id: gp.prompt_id.clone(),
            kind,
        });
    }
    Ok(stable_sum(scores.iter().copied()) / scores.len() as f64)
}

/// Share of `kept` images whose argmax matches every target in every slot.
///
/// Records lacking a targeted kind or slot are left out of both counts.
pub fn explicit_score(
    prompt: &PromptRecord,
    kept: &[AlignmentRecord],
    protected: &ProtectedSet,
) -> Result<f64, MetricsError> {
    if prompt.targets.is_empty() {
        return Err(MetricsError::NotExplicitPrompt {
            prompt_id: prompt.id.clone(),
        });
    }
    let mut wanted = Vec::new();
    for (slot, map) in prompt.targets.slots().iter().enumerate() {
        for (kind, label) in map {
            let index = protected
                .get(*kind)
                .and_then(|attr| attr.index_of(label))
                .ok_or_else(|| MetricsError::UnknownTarget {
                    prompt_id: prompt.id.clone(),
                    kind: *kind,
                    label: label.clone(),
                })?;
            wanted.push((slot, *kind, index));
        }
    }

    let mut scored = 0usize;
    let mut correct = 0usize;
    for record in kept {
        let argmaxes: Option<Vec<usize>> = wanted
            .iter()
            .map(|&(slot, kind, _)| record.persons.get(slot)?.get(&kind).map(|v| v.argmax()))
            .collect();
        let Some(argmaxes) = argmaxes else { continue };
        scored += 1;
        if argmaxes.iter().zip(&wanted).all(|(got, &(_, _, want))| *got == want) {
            correct += 1;
        }
    }
    if scored == 0 {
        return Err(MetricsError::NoValidImages {
            prompt_id: prompt.id.clone(),
        });
    }
    Ok(correct as f64 / scored as f64)
}

fn check_weight(w: f64) -> Result<(), MetricsError> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidWeight(w))
    }
}

/// Weighted mean `Σk·S / Σk` of same-visibility scores, labelled with `scope`.
pub fn aggregate(scores: &[(BiasScore, f64)], scope: Scope) -> Result<BiasScore, MetricsError> {
    let Some((first, _)) = scores.first() else {
        return Err(MetricsError::EmptyInput);
    };
    let visibility = first.visibility;
    if scores.iter().any(|(s, _)| s.visibility != visibility) {
        return Err(MetricsError::MixedVisibility);
    }
    let pairs: Vec<(f64, f64)> = scores.iter().map(|(s, w)| (*w, s.value)).collect();
    Ok(BiasScore {
        value: weighted_value(&pairs)?,
        visibility,
        scope,
    })
}

/// Weighted mean over `(weight, value)` pairs.
pub fn weighted_value(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for &(w, _) in pairs {
        check_weight(w)?;
    }
    weighted_mean(pairs).ok_or(MetricsError::ZeroTotalWeight)
}

/// One-pass form of a two-level weighted mean.
///
/// `groups` holds `(k_i, [(k_ij, S_ij)])`. Each leaf carries the effective
/// weight `(k_i / Σk) · (k_ij / Σ_j k_ij)` and the result is the single sum
/// of weight times score. Groups whose inner weights sum to zero drop out,
/// matching the nested form.
pub fn one_pass_mean(groups: &[(f64, Vec<(f64, f64)>)]) -> Result<f64, MetricsError> {
    let mut live = Vec::new();
    for (k, leaves) in groups {
        check_weight(*k)?;
        for &(w, _) in leaves {
            check_weight(w)?;
        }
        let inner = stable_sum(leaves.iter().map(|l| l.0));
        if inner > 0.0 && *k > 0.0 {
            live.push((*k, inner, leaves));
        }
    }
    if groups.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let outer = stable_sum(live.iter().map(|l| l.0));
    if outer == 0.0 {
        return Err(MetricsError::ZeroTotalWeight);
    }
    Ok(stable_sum(live.iter().flat_map(|&(k, inner, leaves)| {
        leaves.iter().map(move |&(w, s)| (k / outer) * (w / inner) * s)
    })))
}

/// Weighting coefficients per hierarchy level. Missing entries weigh 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub kinds: BTreeMap<ProtectedKind, f64>,
    pub acquired: BTreeMap<AcquiredKind, f64>,
    pub categories: BTreeMap<String, f64>,
    pub prompts: BTreeMap<String, f64>,
    /// Coefficients for the summary manifestation factor.
    pub eta_kinds: BTreeMap<ProtectedKind, f64>,
}

impl WeightConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn kind(&self, kind: ProtectedKind) -> f64 {
        self.kinds.get(&kind).copied().unwrap_or(1.0)
    }

    pub fn acquired(&self, kind: AcquiredKind) -> f64 {
        self.acquired.get(&kind).copied().unwrap_or(1.0)
    }

    pub fn category(&self, category: &str) -> f64 {
        self.categories.get(category).copied().unwrap_or(1.0)
    }

    pub fn prompt(&self, id: &str) -> f64 {
        self.prompts.get(id).copied().unwrap_or(1.0)
    }

    pub fn eta_kind(&self, kind: ProtectedKind) -> f64 {
        self.eta_kinds.get(&kind).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let all = self
            .kinds
            .values()
            .chain(self.acquired.values())
            .chain(self.categories.values())
            .chain(self.prompts.values())
            .chain(self.eta_kinds.values());
        for &w in all {
            check_weight(w)?;
        }
        Ok(())
    }
}
