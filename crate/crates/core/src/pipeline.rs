//! End-to-end scoring: alignment records in, [`BiasReport`] out.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::alignment::{
    filter_hallucinations, group_by_prompt, optimize_record, prompt_proportions, AlignmentError,
    AlignmentRecord, GenerativeProportions, PostprocessConfig,
};
use crate::groundtruth::GroundTruthTable;
use crate::manifestation::{
    eta, eta_summary, EtaConfig, ManifestationError, ManifestationState, PairProportions, PairVectors,
};
use crate::metrics::{explicit_score, implicit_prompt_score, MetricsError, WeightConfig};
use crate::report::{
    build_visibility, BiasReport, EtaEntry, EtaReport, ReportError, ScoreLeaf, SkippedPrompt,
};
use crate::taxonomy::{PromptPair, PromptRecord, PromptSet, ProtectedSet, Visibility};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Manifestation(#[from] ManifestationError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("records reference unknown prompt `{0}`")]
    UnknownPrompt(String),
}

pub struct ScoreInputs<'a> {
    pub model_name: &'a str,
    pub prompts: &'a PromptSet,
    pub protected: &'a ProtectedSet,
    pub ground_truth: &'a GroundTruthTable,
    pub weights: &'a WeightConfig,
    pub postprocess: &'a PostprocessConfig,
    pub eta: &'a EtaConfig,
    /// Advantageous/disadvantageous pairs; `None` skips the manifestation factor.
    pub pairs: Option<&'a [PromptPair]>,
}

/// Per-prompt outcome before report assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptOutcome {
    pub prompt_id: String,
    pub proportions: Option<GenerativeProportions>,
    pub leaves: Vec<ScoreLeaf>,
    pub kept: usize,
    pub hallucinated: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRun {
    pub outcomes: Vec<PromptOutcome>,
    /// One state per protected kind with resolvable pairs, with its adjustment log.
    pub eta_states: Vec<ManifestationState>,
    pub report: BiasReport,
}

impl ScoreRun {
    pub fn proportions(&self) -> BTreeMap<String, GenerativeProportions> {
        self.outcomes
            .iter()
            .filter_map(|o| o.proportions.clone().map(|p| (o.prompt_id.clone(), p)))
            .collect()
    }
}

/// Hallucination filter, optimization and averaging per prompt.
///
/// Returns proportions plus the optimized kept records, or `NoValidImages`.
pub fn process_prompt(
    prompt_id: &str,
    records: Vec<AlignmentRecord>,
    cfg: &PostprocessConfig,
) -> Result<(GenerativeProportions, Vec<AlignmentRecord>), AlignmentError> {
    let (kept, dropped) = filter_hallucinations(records, cfg);
    let optimized: Vec<AlignmentRecord> = kept.iter().map(|r| optimize_record(r, cfg)).collect();
    let gp = prompt_proportions(prompt_id, &optimized, dropped.len())?;
    Ok((gp, optimized))
}

/// Proportions for every prompt that has at least one kept record.
pub fn proportions_by_prompt(
    records: Vec<AlignmentRecord>,
    cfg: &PostprocessConfig,
) -> Result<BTreeMap<String, GenerativeProportions>, AlignmentError> {
    let groups: Vec<(String, Vec<AlignmentRecord>)> = group_by_prompt(records).into_iter().collect();
    groups
        .into_par_iter()
        .filter_map(|(id, recs)| match process_prompt(&id, recs, cfg) {
            Ok((gp, _)) => Some(Ok((id, gp))),
            Err(AlignmentError::NoValidImages { .. }) => None,
            Err(e) => Some(Err(e)),
        })
        .collect()
}

fn score_prompt(
    prompt: &PromptRecord,
    records: Vec<AlignmentRecord>,
    inputs: &ScoreInputs<'_>,
) -> Result<PromptOutcome, ScoreError> {
    let total = records.len();
    let mut outcome = PromptOutcome {
        prompt_id: prompt.id.clone(),
        proportions: None,
        leaves: Vec::new(),
        kept: 0,
        hallucinated: 0,
        skipped: None,
    };
    if total == 0 {
        outcome.skipped = Some("no records".into());
        return Ok(outcome);
    }
    let (gp, kept) = match process_prompt(&prompt.id, records, inputs.postprocess) {
        Ok(v) => v,
        Err(AlignmentError::NoValidImages { .. }) => {
            outcome.hallucinated = total;
            outcome.skipped = Some("no valid images".into());
            return Ok(outcome);
        }
        Err(e) => return Err(e.into()),
    };
    outcome.kept = gp.kept_count;
    outcome.hallucinated = gp.hallucinated_count;
    for r in &kept {
        if r.persons.len() != usize::from(prompt.persons) {
            return Err(AlignmentError::PersonCountMismatch {
                image_id: r.image_id.clone(),
                expected: usize::from(prompt.persons),
                found: r.persons.len(),
            }
            .into());
        }
    }

    let leaf = |kind, value| ScoreLeaf {
        prompt_id: prompt.id.clone(),
        kind,
        acquired: prompt.acquired.kind,
        category: prompt.acquired.category.clone(),
        value,
    };
    match prompt.visibility {
        Visibility::Implicit => {
            let mut missing = Vec::new();
            for kind in inputs.protected.kinds() {
                let demo = inputs.ground_truth.lookup(prompt, kind).0;
                match implicit_prompt_score(&gp, kind, demo.values()) {
                    Ok(v) => outcome.leaves.push(leaf(kind, v)),
                    Err(MetricsError::MissingKind { .. }) => missing.push(kind.as_str()),
                    Err(e) => return Err(e.into()),
                }
            }
            if !missing.is_empty() {
                outcome.skipped = Some(format!("no {} proportions", missing.join("/")));
            }
        }
        Visibility::Explicit => match explicit_score(prompt, &kept, inputs.protected) {
            Ok(v) => {
                for kind in prompt.targets.kinds() {
                    outcome.leaves.push(leaf(kind, v));
                }
            }
            Err(MetricsError::NoValidImages { .. }) => {
                outcome.skipped = Some("no image reports the targeted kinds".into());
            }
            Err(e) => return Err(e.into()),
        },
    }
    outcome.proportions = Some(gp);
    Ok(outcome)
}

fn pair_proportions(
    pairs: &[PromptPair],
    proportions: &BTreeMap<String, &GenerativeProportions>,
    inputs: &ScoreInputs<'_>,
) -> Vec<PairProportions> {
    let mut out = Vec::new();
    for pair in pairs {
        let (Some(adv), Some(dis)) = (
            proportions.get(&pair.advantageous),
            proportions.get(&pair.disadvantageous),
        ) else {
            continue;
        };
        let (Some(adv_prompt), Some(dis_prompt)) =
            (inputs.prompts.get(&pair.advantageous), inputs.prompts.get(&pair.disadvantageous))
        else {
            continue;
        };
        let mut kinds = BTreeMap::new();
        for kind in inputs.protected.kinds() {
            if let (Some(p), Some(q)) = (adv.get(0, kind), dis.get(0, kind)) {
                kinds.insert(
                    kind,
                    PairVectors {
                        adv_gen: p.clone(),
                        adv_demo: inputs.ground_truth.lookup(adv_prompt, kind).0.clone(),
                        dis_gen: q.clone(),
                        dis_demo: inputs.ground_truth.lookup(dis_prompt, kind).0.clone(),
                    },
                );
            }
        }
        out.push(PairProportions {
            pair: pair.clone(),
            kinds,
        });
    }
    out
}

fn eta_report(
    pairs: &[PairProportions],
    inputs: &ScoreInputs<'_>,
) -> Result<(Option<EtaReport>, Vec<ManifestationState>), ScoreError> {
    let mut per_kind = Vec::new();
    let mut states = Vec::new();
    for kind in inputs.protected.kinds() {
        let with_kind: Vec<PairProportions> = pairs.iter().filter(|p| p.kinds.contains_key(&kind)).cloned().collect();
        if with_kind.is_empty() {
            continue;
        }
        let state = eta(&with_kind, kind, inputs.eta)?;
        per_kind.push(EtaEntry {
            kind,
            eta: state.eta,
            weight: inputs.weights.eta_kind(kind),
        });
        states.push(state);
    }
    if per_kind.is_empty() {
        return Ok((None, states));
    }
    let terms: Vec<(f64, f64)> = per_kind.iter().map(|e| (e.weight, e.eta)).collect();
    let report = EtaReport {
        sign_rule: inputs.eta.sign_rule,
        pairs: pairs.len(),
        per_kind,
        sum: eta_summary(&terms)?,
    };
    Ok((Some(report), states))
}

/// Scores `records` against the prompt set and assembles the report.
///
/// Prompts are processed in parallel; the result does not depend on the
/// thread schedule or on record order.
pub fn score(records: Vec<AlignmentRecord>, inputs: &ScoreInputs<'_>) -> Result<ScoreRun, ScoreError> {
    inputs.postprocess.validate(inputs.protected)?;
    inputs.weights.validate()?;
    let mut groups = group_by_prompt(records);
    if let Some(unknown) = groups.keys().find(|id| !inputs.prompts.contains(id)) {
        return Err(ScoreError::UnknownPrompt(unknown.clone()));
    }
    let work: Vec<(&PromptRecord, Vec<AlignmentRecord>)> = inputs
        .prompts
        .iter()
        .map(|p| (p, groups.remove(&p.id).unwrap_or_default()))
        .collect();
    let outcomes: Vec<PromptOutcome> = work
        .into_par_iter()
        .map(|(prompt, recs)| score_prompt(prompt, recs, inputs))
        .collect::<Result<_, _>>()?;

    let mut report = BiasReport::empty(inputs.model_name, inputs.weights.clone());
    let mut implicit = Vec::new();
    let mut explicit = Vec::new();
    for o in &outcomes {
        report.hallucinations.kept += o.kept;
        report.hallucinations.hallucinated += o.hallucinated;
        if let Some(reason) = &o.skipped {
            report.skipped_prompts.push(SkippedPrompt {
                prompt_id: o.prompt_id.clone(),
                reason: reason.clone(),
            });
        }
        let prompt = inputs.prompts.get(&o.prompt_id).expect("outcome for a known prompt");
        match prompt.visibility {
            Visibility::Implicit => implicit.extend(o.leaves.iter().cloned()),
            Visibility::Explicit => explicit.extend(o.leaves.iter().cloned()),
        }
    }
    if !implicit.is_empty() {
        report.implicit = Some(build_visibility(Visibility::Implicit, inputs.model_name, &implicit, inputs.weights)?);
    }
    if !explicit.is_empty() {
        report.explicit = Some(build_visibility(Visibility::Explicit, inputs.model_name, &explicit, inputs.weights)?);
    }
    let mut eta_states = Vec::new();
    if let Some(pairs) = inputs.pairs {
        let props: BTreeMap<String, &GenerativeProportions> = outcomes
            .iter()
            .filter_map(|o| o.proportions.as_ref().map(|p| (o.prompt_id.clone(), p)))
            .collect();
        let resolved = pair_proportions(pairs, &props, inputs);
        let (summary, states) = eta_report(&resolved, inputs)?;
        report.eta = summary;
        eta_states = states;
    }
    Ok(ScoreRun {
        outcomes,
        eta_states,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proportion::ProportionVector;
    use crate::report::TREE_TOLERANCE;
    use crate::taxonomy::{compile_prompt_set, pair_prompts, ProtectedKind, TaxonomyConfig};

    fn one_hot_record(prompt: &PromptRecord, i: usize, human: f64) -> AlignmentRecord {
        let person: BTreeMap<_, _> = ProtectedSet::default()
            .iter()
            .map(|a| (a.kind, ProportionVector::one_hot(a.len(), i % a.len())))
            .collect();
        AlignmentRecord {
            image_id: format!("{}-{i}", prompt.id),
            prompt_id: prompt.id.clone(),
            human_prob: human,
            persons: vec![person; usize::from(prompt.persons)],
        }
    }

    #[test]
    fn small_run_scores_and_skips() {
        let mut cfg = TaxonomyConfig::empty();
        cfg.characteristics = TaxonomyConfig::default().characteristics[..4].to_vec();
        let set = compile_prompt_set(&cfg).unwrap();
        let pairs = pair_prompts(&set).unwrap();
        let protected = ProtectedSet::default();
        let table = GroundTruthTable::uniform_defaults(&protected);
        let weights = WeightConfig::default();
        let post = PostprocessConfig::default();
        let eta_cfg = EtaConfig::default();
        let inputs = ScoreInputs {
            model_name: "m",
            prompts: &set,
            protected: &protected,
            ground_truth: &table,
            weights: &weights,
            postprocess: &post,
            eta: &eta_cfg,
            pairs: Some(&pairs),
        };
        let mut records = Vec::new();
        for (n, p) in set.iter().enumerate() {
            if n == 1 {
                records.push(one_hot_record(p, 0, 0.1));
                continue;
            }
            for i in 0..4 {
                records.push(one_hot_record(p, i, 0.9));
            }
        }
        let run = score(records, &inputs).unwrap();
        let report = &run.report;
        report.validate(TREE_TOLERANCE).unwrap();
        assert_eq!(report.skipped_prompts.len(), 1);
        assert_eq!(report.skipped_prompts[0].reason, "no valid images");
        assert_eq!(report.hallucinations.hallucinated, 1);
        // Gender one-hot split (2 male, 2 female) equals the uniform default.
        let gender = report.implicit.as_ref().unwrap().kind_value(ProtectedKind::Gender).unwrap();
        assert!((gender - 1.0).abs() < 1e-12);
        assert!(report.eta.is_some());
    }

    #[test]
    fn unknown_prompt_is_rejected() {
        let set = compile_prompt_set(&TaxonomyConfig::empty()).unwrap();
        let protected = ProtectedSet::default();
        let table = GroundTruthTable::uniform_defaults(&protected);
        let inputs = ScoreInputs {
            model_name: "m",
            prompts: &set,
            protected: &protected,
            ground_truth: &table,
            weights: &WeightConfig::default(),
            postprocess: &PostprocessConfig::default(),
            eta: &EtaConfig::default(),
            pairs: None,
        };
        let rec = AlignmentRecord {
            image_id: "x".into(),
            prompt_id: "nope".into(),
            human_prob: 1.0,
            persons: vec![],
        };
        assert_eq!(score(vec![rec], &inputs), Err(ScoreError::UnknownPrompt("nope".into())));
    }
}
