//! Manifestation factor: where a model's bias sits between ignorance (0)
//! and discrimination (1), measured on advantageous/disadvantageous pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::weighted_mean;
use crate::proportion::ProportionVector;
use crate::taxonomy::{PromptPair, ProtectedKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifestationError {
    #[error("no prompt pairs")]
    EmptyPairs,
    #[error("sub-attribute index {index} out of range for {len} values")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("pair `{pair}` has mismatched {kind} vector lengths")]
    DimensionMismatch { pair: String, kind: ProtectedKind },
    #[error("pair `{pair}` has no {kind} proportions")]
    MissingKind { pair: String, kind: ProtectedKind },
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("{expected} per-sub-attribute weights needed, {found} given")]
    WeightCount { expected: usize, found: usize },
    #[error("initial value {0} outside [0, 1]")]
    InvalidInitial(f64),
    #[error("weights sum to zero")]
    ZeroTotalWeight,
}

/// Generative and demographic proportions of both pair members for one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVectors {
    pub adv_gen: ProportionVector,
    pub adv_demo: ProportionVector,
    pub dis_gen: ProportionVector,
    pub dis_demo: ProportionVector,
}

impl PairVectors {
    fn dimension(&self) -> Option<usize> {
        let n = self.adv_gen.len();
        [&self.adv_demo, &self.dis_gen, &self.dis_demo]
            .iter()
            .all(|v| v.len() == n)
            .then_some(n)
    }

    /// The same pair seen with advantageous and disadvantageous swapped.
    pub fn swapped(&self) -> Self {
        Self {
            adv_gen: self.dis_gen.clone(),
            adv_demo: self.dis_demo.clone(),
            dis_gen: self.adv_gen.clone(),
            dis_demo: self.adv_demo.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProportions {
    pub pair: PromptPair,
    pub kinds: BTreeMap<ProtectedKind, PairVectors>,
}

impl PairProportions {
    fn vectors(&self, kind: ProtectedKind) -> Result<&PairVectors, ManifestationError> {
        self.kinds.get(&kind).ok_or_else(|| ManifestationError::MissingKind {
            pair: self.pair.id(),
            kind,
        })
    }
}

/// `α = k · ((p_i − p′_i)² + (q_i − q′_i)²)`.
pub fn adjustment_factor(
    pp: &PairProportions,
    kind: ProtectedKind,
    index: usize,
    k: f64,
) -> Result<f64, ManifestationError> {
    check_weight(k)?;
    let v = pp.vectors(kind)?;
    let len = v.dimension().ok_or_else(|| ManifestationError::DimensionMismatch {
        pair: pp.pair.id(),
        kind,
    })?;
    if index >= len {
        return Err(ManifestationError::IndexOutOfRange { index, len });
    }
    Ok(alpha(v, index, k))
}

fn alpha(v: &PairVectors, i: usize, k: f64) -> f64 {
    let dp = v.adv_gen.values()[i] - v.adv_demo.values()[i];
    let dq = v.dis_gen.values()[i] - v.dis_demo.values()[i];
    k * (dp * dp + dq * dq)
}

fn check_weight(k: f64) -> Result<(), ManifestationError> {
    if k.is_finite() && k >= 0.0 {
        Ok(())
    } else {
        Err(ManifestationError::InvalidWeight(k))
    }
}

/// How the direction of the two deviations maps to the sign of α.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignRule {
    /// Both members deviate the same way: −α (ignorance). Opposite ways: +α
    /// (discrimination).
    #[default]
    Prose,
    /// The reverse assignment, as typeset in the displayed piecewise formula.
    Printed,
}

impl SignRule {
    /// `-1`, `0` or `1` for deviations `dp = p − p′` and `dq = q − q′`.
    pub fn sign(self, dp: f64, dq: f64) -> i8 {
        if dp == 0.0 || dq == 0.0 || dp.is_nan() || dq.is_nan() {
            return 0;
        }
        let same = (dp > 0.0) == (dq > 0.0);
        match (self, same) {
            (SignRule::Prose, true) | (SignRule::Printed, false) => -1,
            (SignRule::Prose, false) | (SignRule::Printed, true) => 1,
        }
    }
}

/// The coefficient `k` used in every α of one kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum TermWeight {
    /// `1 / (2 · sub-attributes · pairs)`, which keeps `Σ|α| ≤ 1`.
    #[default]
    Auto,
    Constant(f64),
    PerSubAttribute(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtaConfig {
    pub eta_0: f64,
    pub sign_rule: SignRule,
    pub term_weight: TermWeight,
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self {
            eta_0: 0.5,
            sign_rule: SignRule::Prose,
            term_weight: TermWeight::Auto,
        }
    }
}

/// One signed term of the η sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub pair: String,
    pub kind: ProtectedKind,
    pub sub_attribute: usize,
    pub alpha: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestationState {
    pub kind: ProtectedKind,
    pub eta_0: f64,
    /// `eta_0 + Σ sign·α` before clamping.
    pub unclamped: f64,
    pub eta: f64,
    pub log: Vec<Adjustment>,
}

impl ManifestationState {
    /// Folds the log from `eta_0` exactly as [`eta`] did.
    pub fn replay(&self) -> f64 {
        fold(self.eta_0, &self.log).clamp(0.0, 1.0)
    }
}

fn fold(eta_0: f64, log: &[Adjustment]) -> f64 {
    let mut eta = eta_0;
    for adj in log {
        eta += f64::from(adj.sign) * adj.alpha;
    }
    eta
}

/// η for one protected kind over `pairs`.
///
/// Terms are folded over pairs sorted by id, then sub-attribute index, by
/// plain sequential addition, so the log replays bit-exactly.
pub fn eta(
    pairs: &[PairProportions],
    kind: ProtectedKind,
    cfg: &EtaConfig,
) -> Result<ManifestationState, ManifestationError> {
    if pairs.is_empty() {
        return Err(ManifestationError::EmptyPairs);
    }
    if !(0.0..=1.0).contains(&cfg.eta_0) {
        return Err(ManifestationError::InvalidInitial(cfg.eta_0));
    }
    let mut ordered: Vec<(String, &PairVectors)> = Vec::with_capacity(pairs.len());
    for pp in pairs {
        ordered.push((pp.pair.id(), pp.vectors(kind)?));
    }
    ordered.sort_by(|a, b| a.0.cmp(&b.0));

    let n_sub = ordered[0].1.adv_gen.len();
    for (id, v) in &ordered {
        if v.dimension() != Some(n_sub) {
            return Err(ManifestationError::DimensionMismatch {
                pair: id.clone(),
                kind,
            });
        }
    }
    let weights: Vec<f64> = match &cfg.term_weight {
        TermWeight::Auto => vec![1.0 / (2.0 * n_sub as f64 * ordered.len() as f64); n_sub],
        TermWeight::Constant(k) => vec![*k; n_sub],
        TermWeight::PerSubAttribute(ks) => {
            if ks.len() != n_sub {
                return Err(ManifestationError::WeightCount {
                    expected: n_sub,
                    found: ks.len(),
                });
            }
            ks.clone()
        }
    };
    for &k in &weights {
        check_weight(k)?;
    }

    let mut log = Vec::with_capacity(ordered.len() * n_sub);
    for (id, v) in &ordered {
        for (i, &k) in weights.iter().enumerate() {
            let dp = v.adv_gen.values()[i] - v.adv_demo.values()[i];
            let dq = v.dis_gen.values()[i] - v.dis_demo.values()[i];
            log.push(Adjustment {
                pair: id.clone(),
                kind,
                sub_attribute: i,
                alpha: alpha(v, i, k),
                sign: cfg.sign_rule.sign(dp, dq),
            });
        }
    }
    let unclamped = fold(cfg.eta_0, &log);
    Ok(ManifestationState {
        kind,
        eta_0: cfg.eta_0,
        unclamped,
        eta: unclamped.clamp(0.0, 1.0),
        log,
    })
}

/// `η_sum = Σ k_i·η_i / Σ k_i` over `(k_i, η_i)`.
pub fn eta_summary(etas: &[(f64, f64)]) -> Result<f64, ManifestationError> {
    for &(k, _) in etas {
        check_weight(k)?;
    }
    weighted_mean(etas).ok_or(ManifestationError::ZeroTotalWeight)
}
