use std::collections::BTreeMap;

use proptest::prelude::*;

use t2ibias::alignment::{AlignmentRecord, PostprocessConfig};
use t2ibias::groundtruth::GroundTruthTable;
use t2ibias::manifestation::EtaConfig;
use t2ibias::metrics::WeightConfig;
use t2ibias::pipeline::{score, ScoreInputs};
use t2ibias::proportion::ProportionVector;
use t2ibias::taxonomy::{
    compile_prompt_set, pair_prompts, AcquiredKind, PromptSet, ProtectedKind, ProtectedSet, TaxonomyConfig,
    Visibility,
};

fn default_set() -> PromptSet {
    compile_prompt_set(&TaxonomyConfig::default()).unwrap()
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '-')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[test]
fn explicit_prompts_name_their_targets() {
    for prompt in default_set().iter().filter(|p| p.visibility == Visibility::Explicit) {
        let text = prompt.full_text.to_lowercase();
        for slot in prompt.targets.slots() {
            for label in slot.values() {
                assert!(text.contains(&label.to_lowercase()), "{}: `{}` lacks `{label}`", prompt.id, prompt.full_text);
            }
        }
    }
}

#[test]
fn implicit_prompts_name_no_protected_label() {
    let protected = ProtectedSet::default();
    let labels: Vec<String> = protected.all_labels().map(str::to_lowercase).collect();
    for prompt in default_set().iter().filter(|p| p.visibility == Visibility::Implicit) {
        assert!(prompt.targets.is_empty());
        for w in words(&prompt.full_text) {
            assert!(!labels.contains(&w), "{} mentions `{w}`", prompt.id);
        }
    }
}

#[test]
fn acquired_counts_and_explicit_fanout() {
    let set = default_set();
    let count = |vis, kind| set.iter().filter(|p| p.visibility == vis && p.acquired.kind == kind).count();
    let implicit = [
        (AcquiredKind::Occupation, 75),
        (AcquiredKind::Characteristic, 24),
        (AcquiredKind::SocialRelation, 11),
    ];
    let sub_attributes: usize = ProtectedSet::default().iter().map(|a| a.len()).sum();
    for (kind, n) in implicit {
        assert_eq!(count(Visibility::Implicit, kind), n, "{kind:?}");
        assert_eq!(count(Visibility::Explicit, kind), n * sub_attributes, "{kind:?}");
    }
    assert_eq!(set.len(), 1210);
    // Every characteristic is paired with its antonym.
    assert_eq!(pair_prompts(&set).unwrap().len(), 12);
}

fn person(rng: &[f64]) -> BTreeMap<ProtectedKind, ProportionVector> {
    let norm = |v: &[f64]| {
        let t: f64 = v.iter().sum();
        ProportionVector::new(v.iter().map(|x| x / t).collect()).unwrap()
    };
    BTreeMap::from([
        (ProtectedKind::Gender, norm(&rng[0..2])),
        (ProtectedKind::Race, norm(&rng[2..7])),
        (ProtectedKind::Age, norm(&rng[7..10])),
    ])
}

fn records_strategy() -> impl Strategy<Value = (Vec<AlignmentRecord>, Vec<AlignmentRecord>)> {
    let prompts = ["im-oc-doctor", "im-ch-beautiful", "im-ch-ugly", "ex-oc-doctor-race-african"];
    prop::collection::vec(
        (0..prompts.len(), 0.0f64..1.0, prop::collection::vec(0.01f64..1.0, 10)),
        8..40,
    )
    .prop_map(move |items| {
        let mut out: Vec<AlignmentRecord> = items
            .into_iter()
            .enumerate()
            .map(|(i, (p, human_prob, raw))| AlignmentRecord {
                image_id: format!("img{i}"),
                prompt_id: prompts[p].into(),
                human_prob,
                persons: vec![person(&raw)],
            })
            .collect();
        // Guarantee one kept image per prompt.
        for (i, p) in prompts.iter().enumerate() {
            out.push(AlignmentRecord {
                image_id: format!("anchor{i}"),
                prompt_id: p.to_string(),
                human_prob: 1.0,
                persons: vec![person(&[0.3, 0.7, 0.1, 0.2, 0.3, 0.2, 0.2, 0.5, 0.3, 0.2])],
            });
        }
        out
    })
    .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn report_ignores_record_order((records, shuffled) in records_strategy()) {
        let set = default_set();
        let pairs = pair_prompts(&set).unwrap();
        let protected = ProtectedSet::default();
        let table = GroundTruthTable::uniform_defaults(&protected);
        let weights = WeightConfig::default();
        let post = PostprocessConfig::default();
        let eta = EtaConfig::default();
        let inputs = ScoreInputs {
            model_name: "m",
            prompts: &set,
            protected: &protected,
            ground_truth: &table,
            weights: &weights,
            postprocess: &post,
            eta: &eta,
            pairs: Some(&pairs),
        };
        let a = score(records, &inputs).unwrap();
        let b = score(shuffled, &inputs).unwrap();
        prop_assert_eq!(a.report.to_json(), b.report.to_json());
        prop_assert_eq!(a.eta_states, b.eta_states);
    }
}
