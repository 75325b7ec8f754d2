use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AlignmentError, AlignmentRecord};
use crate::numeric::stable_sum;
use crate::proportion::ProportionVector;
use crate::taxonomy::ProtectedKind;

/// Mean optimized distribution of one prompt's kept images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeProportions {
    pub prompt_id: String,
    /// One map per person slot. A kind is present when at least one kept
    /// image reported it for that slot.
    pub slots: Vec<BTreeMap<ProtectedKind, ProportionVector>>,
    pub kept_count: usize,
    pub hallucinated_count: usize,
}

impl GenerativeProportions {
    pub fn get(&self, slot: usize, kind: ProtectedKind) -> Option<&ProportionVector> {
        self.slots.get(slot).and_then(|m| m.get(&kind))
    }

    /// Kinds present in every slot.
    pub fn kinds(&self) -> Vec<ProtectedKind> {
        ProtectedKind::ALL
            .into_iter()
            .filter(|k| !self.slots.is_empty() && self.slots.iter().all(|m| m.contains_key(k)))
            .collect()
    }
}

/// Averages already-optimized `kept` records element-wise, per slot and kind.
///
/// Each mean runs over the records that carry that kind in that slot, so a
/// record missing a kind does not dilute the others. Sums are
/// order-independent, so the result does not depend on record order.
pub fn prompt_proportions(
    prompt_id: &str,
    kept: &[AlignmentRecord],
    hallucinated_count: usize,
) -> Result<GenerativeProportions, AlignmentError> {
    if kept.is_empty() {
        return Err(AlignmentError::NoValidImages {
            prompt_id: prompt_id.to_string(),
        });
    }
    let slot_count = kept.iter().map(|r| r.persons.len()).max().unwrap_or(0);
    let mut slots = Vec::with_capacity(slot_count);
    for slot in 0..slot_count {
        let mut collected: BTreeMap<ProtectedKind, Vec<&ProportionVector>> = BTreeMap::new();
        for record in kept {
            if let Some(person) = record.persons.get(slot) {
                for (kind, v) in person {
                    collected.entry(*kind).or_default().push(v);
                }
            }
        }
        let mut means = BTreeMap::new();
        for (kind, vectors) in collected {
            let dim = vectors[0].len();
            if vectors.iter().any(|v| v.len() != dim) {
                return Err(AlignmentError::DimensionMismatch {
                    prompt_id: prompt_id.to_string(),
                    kind,
                });
            }
            let n = vectors.len() as f64;
            let mean = (0..dim)
                .map(|j| stable_sum(vectors.iter().map(|v| v.values()[j])) / n)
                .collect();
            let mean = ProportionVector::new(mean).expect("mean of proportion vectors is a proportion vector");
            means.insert(kind, mean);
        }
        slots.push(means);
    }
    Ok(GenerativeProportions {
        prompt_id: prompt_id.to_string(),
        slots,
        kept_count: kept.len(),
        hallucinated_count,
    })
}
