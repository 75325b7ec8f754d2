//! Agreement between machine alignment and human annotation of the same images.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::GenerativeProportions;
use crate::groundtruth::GroundTruthTable;
use crate::metrics::{implicit_prompt_score, MetricsError};
use crate::numeric::stable_sum;
use crate::taxonomy::{PromptSet, ProtectedKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HumanEvalError {
    #[error("prompt sets differ: only machine {only_machine:?}, only human {only_human:?}")]
    PromptSetMismatch {
        only_machine: Vec<String>,
        only_human: Vec<String>,
    },
    #[error("no prompts to compare")]
    Empty,
    #[error("prompt `{0}` shares no protected kind between the two sides")]
    NoSharedKinds(String),
    #[error("prompt `{0}` is not in the prompt set")]
    UnknownPrompt(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    /// Mean absolute difference of the proportion vectors.
    #[default]
    Proportions,
    /// Mean absolute difference of the implicit scores.
    Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDifference {
    pub prompt_id: String,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalComparison {
    pub mode: ComparisonMode,
    pub prompts: Vec<PromptDifference>,
    pub average: f64,
}

type Proportions = BTreeMap<String, GenerativeProportions>;

fn check_same_prompts(machine: &Proportions, human: &Proportions) -> Result<(), HumanEvalError> {
    let m: BTreeSet<&String> = machine.keys().collect();
    let h: BTreeSet<&String> = human.keys().collect();
    if m != h {
        return Err(HumanEvalError::PromptSetMismatch {
            only_machine: m.difference(&h).map(|s| s.to_string()).collect(),
            only_human: h.difference(&m).map(|s| s.to_string()).collect(),
        });
    }
    if m.is_empty() {
        return Err(HumanEvalError::Empty);
    }
    Ok(())
}

fn shared(a: &GenerativeProportions, b: &GenerativeProportions) -> Vec<(usize, ProtectedKind)> {
    let mut out = Vec::new();
    for slot in 0..a.slots.len().min(b.slots.len()) {
        for kind in ProtectedKind::ALL {
            if a.get(slot, kind).is_some() && b.get(slot, kind).is_some() {
                out.push((slot, kind));
            }
        }
    }
    out
}

fn finish(mode: ComparisonMode, prompts: Vec<PromptDifference>) -> HumanEvalComparison {
    let average = stable_sum(prompts.iter().map(|p| p.difference)) / prompts.len() as f64;
    HumanEvalComparison { mode, prompts, average }
}

/// Per prompt, the mean absolute element difference pooled over every
/// person slot and protected kind both sides report; then the mean over prompts.
pub fn compare_human(machine: &Proportions, human: &Proportions) -> Result<HumanEvalComparison, HumanEvalError> {
    check_same_prompts(machine, human)?;
    let mut prompts = Vec::new();
    for (id, m) in machine {
        let h = &human[id];
        let mut diffs = Vec::new();
        for (slot, kind) in shared(m, h) {
            let (a, b) = (m.get(slot, kind).unwrap(), h.get(slot, kind).unwrap());
            if a.len() != b.len() {
                return Err(MetricsError::DimensionMismatch {
                    left: a.len(),
                    right: b.len(),
                }
                .into());
            }
            diffs.extend(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()));
        }
        if diffs.is_empty() {
            return Err(HumanEvalError::NoSharedKinds(id.clone()));
        }
        prompts.push(PromptDifference {
            prompt_id: id.clone(),
            difference: stable_sum(diffs.iter().copied()) / diffs.len() as f64,
        });
    }
    Ok(finish(ComparisonMode::Proportions, prompts))
}

/// Per prompt, the mean over shared kinds of `|S_machine − S_human|` against
/// the ground-truth vector; then the mean over prompts.
pub fn compare_human_scores(
    machine: &Proportions,
    human: &Proportions,
    prompts: &PromptSet,
    table: &GroundTruthTable,
) -> Result<HumanEvalComparison, HumanEvalError> {
    check_same_prompts(machine, human)?;
    let mut out = Vec::new();
    for (id, m) in machine {
        let h = &human[id];
        let prompt = prompts.get(id).ok_or_else(|| HumanEvalError::UnknownPrompt(id.clone()))?;
        let kinds: BTreeSet<ProtectedKind> = shared(m, h).into_iter().map(|(_, k)| k).collect();
        if kinds.is_empty() {
            return Err(HumanEvalError::NoSharedKinds(id.clone()));
        }
        let mut diffs = Vec::new();
        for kind in kinds {
            let demo = table.lookup(prompt, kind).0.values();
            let sm = implicit_prompt_score(m, kind, demo)?;
            let sh = implicit_prompt_score(h, kind, demo)?;
            diffs.push((sm - sh).abs());
        }
        out.push(PromptDifference {
            prompt_id: id.clone(),
            difference: stable_sum(diffs.iter().copied()) / diffs.len() as f64,
        });
    }
    Ok(finish(ComparisonMode::Scores, out))
}
