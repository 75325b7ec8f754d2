//! Hierarchical bias reports and their JSON/CSV forms.
//!
//! A [`VisibilityReport`] holds one score tree, model → protected kind →
//! acquired kind → category → prompt, where every inner node is the weighted
//! mean of its children. Alongside it sits the acquired-attribute view,
//! which folds the protected kinds together per acquired kind and category.

mod csv;
pub mod human;
pub mod plot;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifestation::SignRule;
use crate::metrics::{weighted_value, MetricsError, WeightConfig};
use crate::taxonomy::{AcquiredKind, Polarity, ProtectedKind, RelationClass, Visibility, OCCUPATION_CATEGORIES};

pub use self::csv::{CsvDocument, CsvTable};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Inner-node tolerance for reports built from full-precision values.
pub const TREE_TOLERANCE: f64 = 1e-9;
/// Inner-node tolerance for reports read back from six-decimal CSV, where
/// a parent and its children are each rounded by up to half a unit.
pub const CSV_TREE_TOLERANCE: f64 = 1.01e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("malformed CSV report: {0}")]
    MalformedCsv(String),
    #[error("malformed JSON report: {0}")]
    MalformedJson(String),
    #[error("node `{path}`: stored {stored}, children give {computed}")]
    TreeMismatch { path: String, stored: f64, computed: f64 },
}

/// One scored prompt for one protected kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLeaf {
    pub prompt_id: String,
    pub kind: ProtectedKind,
    pub acquired: AcquiredKind,
    pub category: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreNode {
    pub label: String,
    pub weight: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ScoreNode>,
}

impl ScoreNode {
    fn from_children(label: String, weight: f64, children: Vec<ScoreNode>) -> Result<Self, ReportError> {
        let pairs: Vec<(f64, f64)> = children.iter().map(|c| (c.weight, c.value)).collect();
        Ok(Self {
            label,
            weight,
            value: weighted_value(&pairs)?,
            children,
        })
    }

    pub fn child(&self, label: &str) -> Option<&ScoreNode> {
        self.children.iter().find(|c| c.label == label)
    }

    /// Checks every inner node against the weighted mean of its children.
    pub fn validate(&self, tolerance: f64) -> Result<(), ReportError> {
        self.validate_at(&self.label, tolerance)
    }

    fn validate_at(&self, path: &str, tolerance: f64) -> Result<(), ReportError> {
        if self.children.is_empty() {
            return Ok(());
        }
        let pairs: Vec<(f64, f64)> = self.children.iter().map(|c| (c.weight, c.value)).collect();
        let computed = weighted_value(&pairs)?;
        let diff = (computed - self.value).abs();
        if diff.is_nan() || diff > tolerance {
            return Err(ReportError::TreeMismatch {
                path: path.to_string(),
                stored: self.value,
                computed,
            });
        }
        for child in &self.children {
            child.validate_at(&format!("{path}/{}", child.label), tolerance)?;
        }
        Ok(())
    }

    /// Leaf count below this node.
    pub fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(ScoreNode::leaf_count).sum()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryValue {
    pub category: String,
    pub value: f64,
}

/// One acquired kind with the protected kinds folded together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquiredView {
    pub acquired: AcquiredKind,
    pub value: f64,
    pub categories: Vec<CategoryValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub visibility: Visibility,
    pub tree: ScoreNode,
    #[serde(default)]
    pub acquired: Vec<AcquiredView>,
}

impl VisibilityReport {
    pub fn kind_node(&self, kind: ProtectedKind) -> Option<&ScoreNode> {
        self.tree.child(kind.as_str())
    }

    pub fn kind_value(&self, kind: ProtectedKind) -> Option<f64> {
        self.kind_node(kind).map(|n| n.value)
    }

    /// Score of `acquired` within protected `kind`.
    pub fn kind_acquired_value(&self, kind: ProtectedKind, acquired: AcquiredKind) -> Option<f64> {
        self.kind_node(kind)?.child(acquired.as_str()).map(|n| n.value)
    }

    pub fn acquired_view(&self, acquired: AcquiredKind) -> Option<&AcquiredView> {
        self.acquired.iter().find(|a| a.acquired == acquired)
    }

    /// Tree invariant plus agreement of the acquired view with the tree.
    pub fn validate(&self, weights: &WeightConfig, tolerance: f64) -> Result<(), ReportError> {
        self.tree.validate(tolerance)?;
        let expected = acquired_views(&self.tree, weights)?;
        let check = |path: String, stored: f64, computed: f64| {
            if (stored - computed).abs() <= tolerance {
                Ok(())
            } else {
                Err(ReportError::TreeMismatch { path, stored, computed })
            }
        };
        if expected.len() != self.acquired.len() {
            return Err(ReportError::InconsistentInputs(
                "acquired view does not match the tree".into(),
            ));
        }
        for (want, got) in expected.iter().zip(&self.acquired) {
            if want.acquired != got.acquired || want.categories.len() != got.categories.len() {
                return Err(ReportError::InconsistentInputs(format!(
                    "acquired view for {} does not match the tree",
                    got.acquired
                )));
            }
            check(got.acquired.to_string(), got.value, want.value)?;
            for (w, g) in want.categories.iter().zip(&got.categories) {
                if w.category != g.category {
                    return Err(ReportError::InconsistentInputs(format!(
                        "category `{}` out of place under {}",
                        g.category, got.acquired
                    )));
                }
                check(format!("{}/{}", got.acquired, g.category), g.value, w.value)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEntry {
    pub kind: ProtectedKind,
    pub eta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaReport {
    pub sign_rule: SignRule,
    pub pairs: usize,
    pub per_kind: Vec<EtaEntry>,
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationTotals {
    pub kept: usize,
    pub hallucinated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPrompt {
    pub prompt_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub model_name: String,
    pub engine_version: String,
    pub weights: WeightConfig,
    pub implicit: Option<VisibilityReport>,
    pub explicit: Option<VisibilityReport>,
    pub eta: Option<EtaReport>,
    pub hallucinations: HallucinationTotals,
    #[serde(default)]
    pub skipped_prompts: Vec<SkippedPrompt>,
}

impl BiasReport {
    pub fn empty(model_name: &str, weights: WeightConfig) -> Self {
        Self {
            model_name: model_name.to_string(),
            engine_version: ENGINE_VERSION.to_string(),
            weights,
            implicit: None,
            explicit: None,
            eta: None,
            hallucinations: HallucinationTotals::default(),
            skipped_prompts: Vec::new(),
        }
    }

    pub fn visibility(&self, visibility: Visibility) -> Option<&VisibilityReport> {
        match visibility {
            Visibility::Implicit => self.implicit.as_ref(),
            Visibility::Explicit => self.explicit.as_ref(),
        }
    }

    pub fn validate(&self, tolerance: f64) -> Result<(), ReportError> {
        for vis in [&self.implicit, &self.explicit].into_iter().flatten() {
            vis.validate(&self.weights, tolerance)?;
        }
        if let Some(eta) = &self.eta {
            let pairs: Vec<(f64, f64)> = eta.per_kind.iter().map(|e| (e.weight, e.eta)).collect();
            let computed = weighted_value(&pairs)?;
            if (computed - eta.sum).abs() > tolerance {
                return Err(ReportError::TreeMismatch {
                    path: "eta".into(),
                    stored: eta.sum,
                    computed,
                });
            }
        }
        Ok(())
    }

    /// Pretty JSON with full-precision numbers and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::MalformedJson(e.to_string()))
    }
}

/// Row position of a category within its acquired kind.
pub fn category_rank(acquired: AcquiredKind, category: &str) -> usize {
    let known = match acquired {
        AcquiredKind::Occupation => OCCUPATION_CATEGORIES.iter().position(|c| *c == category),
        AcquiredKind::SocialRelation => [RelationClass::Intimate, RelationClass::Instructional, RelationClass::Hierarchical]
            .iter()
            .position(|c| c.as_str() == category),
        AcquiredKind::Characteristic => [Polarity::Positive, Polarity::Negative]
            .iter()
            .position(|c| c.as_str() == category),
    };
    known.unwrap_or(usize::MAX)
}

type CategoryKey = (usize, String);
type Grouped<'a> = BTreeMap<ProtectedKind, BTreeMap<AcquiredKind, BTreeMap<CategoryKey, BTreeMap<&'a str, f64>>>>;

/// Builds the score tree and acquired view for one visibility.
///
/// Fails with `InconsistentInputs` when a prompt shows up under two acquired
/// kinds or categories, or twice for the same protected kind.
pub fn build_visibility(
    visibility: Visibility,
    model_name: &str,
    leaves: &[ScoreLeaf],
    weights: &WeightConfig,
) -> Result<VisibilityReport, ReportError> {
    if leaves.is_empty() {
        return Err(ReportError::Metrics(MetricsError::EmptyInput));
    }
    let mut placement: BTreeMap<&str, (AcquiredKind, &str)> = BTreeMap::new();
    let mut grouped: Grouped = BTreeMap::new();
    for leaf in leaves {
        let place = (leaf.acquired, leaf.category.as_str());
        if let Some(prev) = placement.insert(&leaf.prompt_id, place) {
            if prev != place {
                return Err(ReportError::InconsistentInputs(format!(
                    "prompt `{}` listed under {}/{} and {}/{}",
                    leaf.prompt_id, prev.0, prev.1, place.0, place.1
                )));
            }
        }
        let key = (category_rank(leaf.acquired, &leaf.category), leaf.category.clone());
        let prompts = grouped
            .entry(leaf.kind)
            .or_default()
            .entry(leaf.acquired)
            .or_default()
            .entry(key)
            .or_default();
        if prompts.insert(&leaf.prompt_id, leaf.value).is_some() {
            return Err(ReportError::InconsistentInputs(format!(
                "prompt `{}` scored twice for {}",
                leaf.prompt_id, leaf.kind
            )));
        }
    }

    let mut kind_nodes = Vec::new();
    for (kind, acquired_map) in grouped {
        let mut acquired_nodes = Vec::new();
        for (acquired, categories) in acquired_map {
            let mut category_nodes = Vec::new();
            for ((_, category), prompts) in categories {
                let prompt_nodes = prompts
                    .into_iter()
                    .map(|(id, value)| ScoreNode {
                        label: id.to_string(),
                        weight: weights.prompt(id),
                        value,
                        children: Vec::new(),
                    })
                    .collect();
                let weight = weights.category(&category);
                category_nodes.push(ScoreNode::from_children(category, weight, prompt_nodes)?);
            }
            acquired_nodes.push(ScoreNode::from_children(
                acquired.as_str().to_string(),
                weights.acquired(acquired),
                category_nodes,
            )?);
        }
        kind_nodes.push(ScoreNode::from_children(
            kind.as_str().to_string(),
            weights.kind(kind),
            acquired_nodes,
        )?);
    }
    let tree = ScoreNode::from_children(model_name.to_string(), 1.0, kind_nodes)?;
    let acquired = acquired_views(&tree, weights)?;
    Ok(VisibilityReport {
        visibility,
        tree,
        acquired,
    })
}

/// Folds the kind level of `tree` away, per acquired kind and per category.
fn acquired_views(tree: &ScoreNode, weights: &WeightConfig) -> Result<Vec<AcquiredView>, ReportError> {
    let mut totals: BTreeMap<AcquiredKind, Vec<(f64, f64)>> = BTreeMap::new();
    let mut cats: BTreeMap<AcquiredKind, BTreeMap<CategoryKey, Vec<(f64, f64)>>> = BTreeMap::new();
    for kind_node in &tree.children {
        let Some(kind) = ProtectedKind::parse(&kind_node.label) else {
            continue;
        };
        let k = weights.kind(kind);
        for acq_node in &kind_node.children {
            let Some(acquired) = AcquiredKind::parse(&acq_node.label) else {
                continue;
            };
            totals.entry(acquired).or_default().push((k, acq_node.value));
            for cat_node in &acq_node.children {
                let key = (category_rank(acquired, &cat_node.label), cat_node.label.clone());
                cats.entry(acquired)
                    .or_default()
                    .entry(key)
                    .or_default()
                    .push((k, cat_node.value));
            }
        }
    }
    let mut views = Vec::new();
    for (acquired, pairs) in totals {
        let categories = cats
            .remove(&acquired)
            .unwrap_or_default()
            .into_iter()
            .map(|((_, category), pairs)| Ok(CategoryValue { category, value: weighted_value(&pairs)? }))
            .collect::<Result<Vec<_>, ReportError>>()?;
        views.push(AcquiredView {
            acquired,
            value: weighted_value(&pairs)?,
            categories,
        });
    }
    Ok(views)
}

/// A report with only protected-kind scores, such as a published top-level table.
pub fn kind_level_report(
    visibility: Visibility,
    model_name: &str,
    scores: &[(ProtectedKind, f64)],
    weights: &WeightConfig,
) -> Result<VisibilityReport, ReportError> {
    let mut sorted = scores.to_vec();
    sorted.sort_by_key(|s| s.0);
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(ReportError::InconsistentInputs(format!("{} given twice", pair[0].0)));
        }
    }
    let children = sorted
        .into_iter()
        .map(|(kind, value)| ScoreNode {
            label: kind.as_str().to_string(),
            weight: weights.kind(kind),
            value,
            children: Vec::new(),
        })
        .collect();
    Ok(VisibilityReport {
        visibility,
        tree: ScoreNode::from_children(model_name.to_string(), 1.0, children)?,
        acquired: Vec::new(),
    })
}
