use serde::{Deserialize, Serialize};

use super::{AlignmentError, AlignmentRecord};
use crate::numeric::argmax;
use crate::proportion::ProportionVector;
use crate::taxonomy::{ProtectedKind, ProtectedSet};

/// Predicate over a proportion vector, by sub-attribute index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "snake_case")]
pub enum Guard {
    Always,
    /// The declaration-order argmax is `index`.
    Argmax { index: usize },
    /// `v[index] > value`.
    Above { index: usize, value: f64 },
    /// `v[index] < value`.
    Below { index: usize, value: f64 },
    /// `min <= v[numerator] / v[denominator] < max`, false when the denominator is 0.
    RatioBetween {
        numerator: usize,
        denominator: usize,
        min: f64,
        max: f64,
    },
    All { guards: Vec<Guard> },
}

impl Guard {
    pub fn holds(&self, v: &[f64]) -> bool {
        match self {
            Guard::Always => true,
            Guard::Argmax { index } => argmax(v) == Some(*index),
            Guard::Above { index, value } => v.get(*index).is_some_and(|x| x > value),
            Guard::Below { index, value } => v.get(*index).is_some_and(|x| x < value),
            Guard::RatioBetween {
                numerator,
                denominator,
                min,
                max,
            } => match (v.get(*numerator), v.get(*denominator)) {
                (Some(&n), Some(&d)) if d > 0.0 => {
                    let r = n / d;
                    r >= *min && r < *max
                }
                _ => false,
            },
            Guard::All { guards } => guards.iter().all(|g| g.holds(v)),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Guard::Always => None,
            Guard::Argmax { index } | Guard::Above { index, .. } | Guard::Below { index, .. } => Some(*index),
            Guard::RatioBetween {
                numerator,
                denominator,
                ..
            } => Some(*numerator.max(denominator)),
            Guard::All { guards } => guards.iter().filter_map(Guard::max_index).max(),
        }
    }
}

/// Element-wise re-weighting applied when `guard` holds.
///
/// A rule should move the vectors it touches out of its own guard, otherwise
/// optimizing twice re-applies it. The shipped examples do this with a ratio
/// band `[min, max)` and a multiplier `m` where `min * m > max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightRule {
    pub name: String,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
    pub kind: ProtectedKind,
    pub guard: Guard,
    pub multipliers: Vec<f64>,
}

fn enabled_by_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    /// A sub-attribute probability strictly above this becomes 1, the rest 0.
    pub dominance_threshold: f64,
    /// Images with `human_prob` below this are hallucinations.
    pub human_threshold: f64,
    /// Tried in order; the first enabled rule for the kind whose guard holds wins.
    pub reweight_rules: Vec<ReweightRule>,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            dominance_threshold: 0.9,
            human_threshold: 0.5,
            reweight_rules: Self::example_rules(),
        }
    }
}

impl PostprocessConfig {
    /// Two documented example rules for the default protected set, both disabled.
    ///
    /// * `dark-skinned-european`: when Latino leads and the European share
    ///   is 60–75% of it, scale European by 1.3.
    /// * `wrinkled-elderly`: when middle-aged leads and the elderly share is
    ///   60–75% of it, scale elderly by 1.3.
    pub fn example_rules() -> Vec<ReweightRule> {
        vec![
            ReweightRule {
                name: "dark-skinned-european".into(),
                enabled: false,
                kind: ProtectedKind::Race,
                guard: Guard::All {
                    guards: vec![
                        Guard::Argmax { index: 4 },
                        Guard::RatioBetween {
                            numerator: 0,
                            denominator: 4,
                            min: 0.6,
                            max: 0.75,
                        },
                    ],
                },
                multipliers: vec![1.3, 1.0, 1.0, 1.0, 1.0],
            },
            ReweightRule {
                name: "wrinkled-elderly".into(),
                enabled: false,
                kind: ProtectedKind::Age,
                guard: Guard::All {
                    guards: vec![
                        Guard::Argmax { index: 1 },
                        Guard::RatioBetween {
                            numerator: 2,
                            denominator: 1,
                            min: 0.6,
                            max: 0.75,
                        },
                    ],
                },
                multipliers: vec![1.0, 1.0, 1.3],
            },
        ]
    }

    /// Same config with every rule switched on.
    pub fn with_all_rules_enabled(mut self) -> Self {
        for rule in &mut self.reweight_rules {
            rule.enabled = true;
        }
        self
    }

    pub fn validate(&self, protected: &ProtectedSet) -> Result<(), AlignmentError> {
        let invalid = |msg: String| Err(AlignmentError::InvalidConfig(msg));
        let t = self.dominance_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return invalid(format!("dominance_threshold {t} outside (0, 1]"));
        }
        let h = self.human_threshold;
        if !(0.0..=1.0).contains(&h) {
            return invalid(format!("human_threshold {h} outside [0, 1]"));
        }
        for rule in &self.reweight_rules {
            let Some(attr) = protected.get(rule.kind) else {
                return invalid(format!("rule `{}`: undefined kind {}", rule.name, rule.kind));
            };
            if rule.multipliers.len() != attr.len() {
                return invalid(format!(
                    "rule `{}`: {} multipliers for {} sub-attributes",
                    rule.name,
                    rule.multipliers.len(),
                    attr.len()
                ));
            }
            if rule.multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return invalid(format!("rule `{}`: multipliers must be positive", rule.name));
            }
            if rule.guard.max_index().is_some_and(|i| i >= attr.len()) {
                return invalid(format!("rule `{}`: guard index out of range", rule.name));
            }
        }
        Ok(())
    }
}

/// Splits records into `(kept, hallucinated)` by `human_prob >= human_threshold`.
pub fn filter_hallucinations(
    records: impl IntoIterator<Item = AlignmentRecord>,
    cfg: &PostprocessConfig,
) -> (Vec<AlignmentRecord>, Vec<AlignmentRecord>) {
    records
        .into_iter()
        .partition(|r| r.human_prob >= cfg.human_threshold)
}

/// Dominance snap, then the first matching re-weight rule, else unchanged.
pub fn optimize_distribution(
    v: &ProportionVector,
    kind: ProtectedKind,
    cfg: &PostprocessConfig,
) -> ProportionVector {
    let values = v.values();
    let top = v.argmax();
    if values[top] > cfg.dominance_threshold {
        return ProportionVector::one_hot(values.len(), top);
    }
    let rule = cfg.reweight_rules.iter().find(|r| {
        r.enabled && r.kind == kind && r.multipliers.len() == values.len() && r.guard.holds(values)
    });
    match rule {
        Some(rule) => {
            let scaled = values.iter().zip(&rule.multipliers).map(|(x, m)| x * m).collect();
            ProportionVector::normalized(scaled).expect("positive multipliers keep a valid vector valid")
        }
        None => v.clone(),
    }
}

/// Applies [`optimize_distribution`] to every vector of a record.
pub fn optimize_record(record: &AlignmentRecord, cfg: &PostprocessConfig) -> AlignmentRecord {
    let persons = record
        .persons
        .iter()
        .map(|person| {
            person
                .iter()
                .map(|(kind, v)| (*kind, optimize_distribution(v, *kind, cfg)))
                .collect()
        })
        .collect();
    AlignmentRecord {
        persons,
        ..record.clone()
    }
}
