//! Aligner output ingestion and post-processing.
//!
//! Each generated image yields one [`AlignmentRecord`]: the probability that
//! it depicts a person at all, plus per-person probability distributions over
//! each protected attribute. Records below the human threshold are counted as
//! hallucinations; the rest go through [`optimize_distribution`] and are
//! averaged into a prompt's [`GenerativeProportions`].

mod optimize;
mod proportions;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proportion::ProportionVector;
use crate::taxonomy::{PromptSet, ProtectedKind, ProtectedSet};

pub use optimize::{
    filter_hallucinations, optimize_distribution, optimize_record, Guard, PostprocessConfig,
    ReweightRule,
};
pub use proportions::{prompt_proportions, GenerativeProportions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("line {line}: read failed: {message}")]
    Read { line: usize, message: String },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: unknown prompt id `{prompt_id}`")]
    UnknownPromptId { line: usize, prompt_id: String },
    #[error("prompt `{prompt_id}` has no valid images")]
    NoValidImages { prompt_id: String },
    #[error("image `{image_id}` has {found} person entries, prompt expects {expected}")]
    PersonCountMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("records for prompt `{prompt_id}` disagree on {kind} vector length")]
    DimensionMismatch { prompt_id: String, kind: ProtectedKind },
    #[error("invalid post-processing config: {0}")]
    InvalidConfig(String),
}

/// Per-person distributions keyed by protected kind. Kinds may be absent.
pub type PersonDistribution = BTreeMap<ProtectedKind, ProportionVector>;

/// Aligner output for one generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentRecord {
    pub image_id: String,
    pub prompt_id: String,
    pub human_prob: f64,
    /// Ordered `[left, right]` for two-person prompts.
    pub persons: Vec<PersonDistribution>,
}

/// Reads AlignmentRecord JSONL, validating every line.
///
/// Vectors must sum to 1 within tolerance and match the sub-attribute count
/// of their kind in `protected`. With `prompts`, each record's prompt id must
/// exist in the set. Blank lines are skipped; line numbers are 1-based.
pub fn parse_alignment_records<R: BufRead>(
    input: R,
    protected: &ProtectedSet,
    prompts: Option<&PromptSet>,
) -> Result<Vec<AlignmentRecord>, AlignmentError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| AlignmentError::Read {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(&line, line_no, protected)?;
        if let Some(set) = prompts {
            if !set.contains(&record.prompt_id) {
                return Err(AlignmentError::UnknownPromptId {
                    line: line_no,
                    prompt_id: record.prompt_id,
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

fn parse_line(
    line: &str,
    line_no: usize,
    protected: &ProtectedSet,
) -> Result<AlignmentRecord, AlignmentError> {
    let malformed = |reason: String| AlignmentError::MalformedRecord {
        line: line_no,
        reason,
    };
    let record: AlignmentRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if !(0.0..=1.0).contains(&record.human_prob) {
        return Err(malformed(format!(
            "human_prob {} outside [0, 1]",
            record.human_prob
        )));
    }
    if record.persons.len() > 2 {
        return Err(malformed(format!(
            "{} person entries, at most 2 supported",
            record.persons.len()
        )));
    }
    for (slot, person) in record.persons.iter().enumerate() {
        for (kind, vector) in person {
            let attr = protected
                .get(*kind)
                .ok_or_else(|| malformed(format!("person {slot}: undefined protected kind {kind}")))?;
            if vector.len() != attr.len() {
                return Err(malformed(format!(
                    "person {slot}: {kind} has {} values, expected {}",
                    vector.len(),
                    attr.len()
                )));
            }
        }
    }
    Ok(record)
}

/// Writes records as JSONL, one per line.
pub fn write_alignment_records<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a AlignmentRecord>,
) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups records by prompt id, preserving file order within each group.
pub fn group_by_prompt(records: Vec<AlignmentRecord>) -> BTreeMap<String, Vec<AlignmentRecord>> {
    let mut groups: BTreeMap<String, Vec<AlignmentRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(record.prompt_id.clone()).or_default().push(record);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{compile_prompt_set, TaxonomyConfig};

    const GOOD: &str = r#"{"image_id":"a.png","prompt_id":"im-oc-doctor","human_prob":0.97,"persons":[{"gender":[0.8,0.2],"race":[0.1,0.2,0.3,0.2,0.2],"age":[0.2,0.5,0.3]}]}
{"image_id":"b.png","prompt_id":"im-oc-doctor","human_prob":0.12,"persons":[]}
"#;

    #[test]
    fn parses_valid_file() {
        let recs = parse_alignment_records(GOOD.as_bytes(), &ProtectedSet::default(), None).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].persons[0][&ProtectedKind::Gender].values(), &[0.8, 0.2]);
        assert!(recs[1].persons.is_empty());
    }

    #[test]
    fn bad_sum_reports_line() {
        let text = format!(
            "{}\n{}\n",
            GOOD.lines().next().unwrap(),
            r#"{"image_id":"c.png","prompt_id":"im-oc-doctor","human_prob":0.9,"persons":[{"gender":[0.5,0.3]}]}"#
        );
        match parse_alignment_records(text.as_bytes(), &ProtectedSet::default(), None) {
            Err(AlignmentError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("sum"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_dimension_and_probability_are_malformed() {
        let short = r#"{"image_id":"c","prompt_id":"p","human_prob":0.9,"persons":[{"race":[0.5,0.5]}]}"#;
        assert!(matches!(
            parse_alignment_records(short.as_bytes(), &ProtectedSet::default(), None),
            Err(AlignmentError::MalformedRecord { line: 1, .. })
        ));
        let prob = r#"{"image_id":"c","prompt_id":"p","human_prob":1.5,"persons":[]}"#;
        assert!(parse_alignment_records(prob.as_bytes(), &ProtectedSet::default(), None).is_err());
        let unknown_key = r#"{"image_id":"c","prompt_id":"p","human_prob":0.5,"persons":[{"height":[1.0]}]}"#;
        assert!(parse_alignment_records(unknown_key.as_bytes(), &ProtectedSet::default(), None).is_err());
    }

    #[test]
    fn cross_check_flags_unknown_prompt() {
        let set = compile_prompt_set(&TaxonomyConfig::empty()).unwrap();
        assert_eq!(
            parse_alignment_records(GOOD.as_bytes(), &ProtectedSet::default(), Some(&set)),
            Err(AlignmentError::UnknownPromptId {
                line: 1,
                prompt_id: "im-oc-doctor".into()
            })
        );
    }

    #[test]
    fn missing_kinds_are_permitted() {
        let text = r#"{"image_id":"c","prompt_id":"p","human_prob":0.9,"persons":[{"gender":[1.0,0.0]}]}"#;
        let recs = parse_alignment_records(text.as_bytes(), &ProtectedSet::default(), None).unwrap();
        assert_eq!(recs[0].persons[0].len(), 1);
    }

    #[test]
    fn write_then_parse() {
        let recs = parse_alignment_records(GOOD.as_bytes(), &ProtectedSet::default(), None).unwrap();
        let mut buf = Vec::new();
        write_alignment_records(&mut buf, &recs).unwrap();
        let again = parse_alignment_records(buf.as_slice(), &ProtectedSet::default(), None).unwrap();
        assert_eq!(again, recs);
    }
}
