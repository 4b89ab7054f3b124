use std::collections::BTreeSet;

use labelaudit_core::bias::{self, AnnotationVariant};
use labelaudit_core::classifier::{EncoderConfig, TrainConfig};
use labelaudit_core::corpus;
use labelaudit_core::discovery::{self, DiscoveryConfig};
use labelaudit_core::review::{Resolution, ReviewStore, Submission, Verdict};
use labelaudit_core::synth::{self, FlipDirection, FlipSelection, NoisePlan, SynthSpec};
use labelaudit_core::verification::{self, VerificationConfig};

fn noisy_corpus() -> synth::SynthOutput {
    synth::generate(&SynthSpec {
        sources: 3,
        instances_per_source: 120,
        signal_strength: 0.6,
        noise_plan: [(
            "S01".to_string(),
            NoisePlan {
                flip_rate: 0.1,
                direction: FlipDirection::Symmetric,
                selection: FlipSelection::Uniform,
                subgroup: None,
            },
        )]
        .into(),
        seed: 5,
        ..Default::default()
    })
    .unwrap()
}

// Flags go through a two-annotator review whose verdicts follow the known
// flips, and the exported corrections undo exactly the flagged flips.
#[test]
fn flags_reviewed_and_corrected_end_to_end() {
    let out = noisy_corpus();
    let enc = EncoderConfig {
        hash_dim: 1 << 12,
        ..Default::default()
    };
    let tc = TrainConfig {
        epochs: 10,
        learning_rate: 0.05,
        ..Default::default()
    };
    let ledger =
        discovery::run_discovery(&out.corpus, "family", "S01", &DiscoveryConfig::default(), &enc, &tc).unwrap();
    assert!(!ledger.flags.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path(), None).unwrap();
    let annotators = vec!["a".to_string(), "b".to_string()];
    let header = store.create_session(&ledger, &annotators).unwrap();
    for id in &ledger.flags {
        let verdict = if out.ledger.is_flipped(id) { Verdict::Flip } else { Verdict::Keep };
        for a in &annotators {
            store
                .submit(
                    &header.session_id,
                    Submission {
                        incident_id: id.clone(),
                        annotator_id: a.clone(),
                        verdict,
                        note: String::new(),
                        version: 1,
                    },
                )
                .unwrap();
        }
    }
    let iaa = store.iaa(&header.session_id).unwrap();
    assert_eq!(iaa.compared as usize, ledger.flags.len());
    assert_eq!(iaa.table[0][1] + iaa.table[1][0], 0);
    let (bundle, _) = store.export(&header.session_id, Resolution::ConsensusOnly).unwrap();
    assert_eq!(bundle.corrections.len(), ledger.flags.len());
    assert!(bundle.disagreements.is_empty());

    let vc = VerificationConfig::default();
    let prepared = corpus::prepare_target_view(
        &out.corpus,
        "family",
        "S01",
        vc.partition_seed,
        vc.min_positives,
        vc.allow_unbalanced,
    )
    .unwrap();
    let corrected = verification::apply_corrections(&prepared.view, &ledger.flags, &bundle.corrections).unwrap();
    let in_view: BTreeSet<&str> = prepared.view.items.iter().map(|i| i.incident_id.as_str()).collect();
    let expected: BTreeSet<&str> = ledger
        .flags
        .iter()
        .map(String::as_str)
        .filter(|id| out.ledger.is_flipped(id) && in_view.contains(id))
        .collect();
    let overridden: BTreeSet<&str> = corrected.overrides.keys().map(String::as_str).collect();
    assert_eq!(overridden, expected);

    let variants = bias::build_variants(&out.corpus, &ledger, 0).unwrap();
    let flags: BTreeSet<String> = ledger.flags.iter().cloned().collect();
    let removed = variants
        .iter()
        .find(|v| v.variant == AnnotationVariant::FlagsRemoved)
        .unwrap();
    assert_eq!(removed.dropped, flags);
    let random = variants
        .iter()
        .find(|v| v.variant == AnnotationVariant::RandomDropped)
        .unwrap();
    assert_eq!(random.dropped.len(), flags.len());
}
