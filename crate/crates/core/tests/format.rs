//! Model format: canonical round-trips, random-document stability, and
//! truncation fuzzing.

use discourse_sheaf::joint::{Scenario, ScenarioPolicy};
use discourse_sheaf::learning::AdaptationSpec;
use discourse_sheaf::model::{parse_model, render_model, ModelDocument};
use discourse_sheaf::random::*;
use discourse_sheaf::stubborn::StubbornSpec;
use proptest::prelude::*;
use rand::Rng;

fn random_document(seed: u64) -> ModelDocument {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=6);
    let extra = rng.random_range(0..=2);
    let graph = random_connected_graph(&mut rng, n, extra);
    let sheaf = random_sheaf(&mut rng, &graph, 3, true);
    let cochain0 = Some(random_cochain0(&mut rng, &sheaf));
    let stubborn = if rng.random_bool(0.7) {
        Some(random_stubborn_spec(&mut rng, &sheaf, 0.5))
    } else {
        None
    };
    let adapting = if rng.random_bool(0.7) {
        Some(random_adaptation(&mut rng, sheaf.graph(), 0.5))
    } else {
        None
    };
    let policy = if rng.random_bool(0.4) {
        let spec = stubborn
            .clone()
            .unwrap_or_else(|| StubbornSpec::empty(&sheaf));
        let table = sheaf
            .graph()
            .edges()
            .map(|e| {
                let edge = sheaf.graph().edge(e);
                let mixed = spec.is_stubborn(edge.tail) != spec.is_stubborn(edge.head);
                let scenario = if mixed && rng.random_bool(0.5) {
                    if rng.random_bool(0.5) {
                        Scenario::Accommodation
                    } else {
                        Scenario::Outreach
                    }
                } else if rng.random_bool(0.5) {
                    Scenario::UniversalAdaptation
                } else {
                    Scenario::StructuralStubbornness
                };
                (e, scenario)
            })
            .collect();
        Some(ScenarioPolicy::new(table))
    } else {
        None
    };
    ModelDocument {
        sheaf,
        cochain0,
        stubborn,
        adapting,
        policy,
    }
}

#[test]
fn random_documents_round_trip_byte_identically() {
    for seed in 0..60 {
        let doc = random_document(seed);
        let first = render_model(&doc);
        let parsed = parse_model(&first).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{first}"));
        let second = render_model(&parsed);
        assert_eq!(first, second, "seed {seed}");
    }
}

#[test]
fn parsed_documents_preserve_every_value_bit() {
    for seed in 0..30 {
        let doc = random_document(seed);
        let parsed = parse_model(&render_model(&doc)).unwrap();
        for (key, m) in doc.sheaf.restrictions() {
            assert_eq!(m, &parsed.sheaf.restrictions()[key]);
        }
        if let (Some(a), Some(b)) = (&doc.cochain0, &parsed.cochain0) {
            assert_eq!(a.to_flat(), b.to_flat());
        }
    }
}

#[test]
fn adapting_sections_distinguish_empty_from_absent() {
    let mut doc = random_document(3);
    doc.adapting = Some(AdaptationSpec::frozen());
    let text = render_model(&doc);
    let parsed = parse_model(&text).unwrap();
    assert!(parsed.adapting.is_some());
    assert_eq!(parsed.adapting.unwrap().len(), 0);
}

#[test]
fn truncation_never_panics() {
    for seed in 0..10 {
        let text = render_model(&random_document(seed));
        for cut in 0..text.len() {
            if text.is_char_boundary(cut) {
                let _ = parse_model(&text[..cut]);
            }
        }
    }
}

#[test]
fn corruption_never_panics() {
    let text = render_model(&random_document(1));
    let mut rng = rng_from_seed(99);
    let bytes = text.as_bytes().to_vec();
    for _ in 0..500 {
        let mut corrupted = bytes.clone();
        let at = rng.random_range(0..corrupted.len());
        corrupted[at] = rng.random_range(32..127) as u8;
        if let Ok(mangled) = String::from_utf8(corrupted) {
            let _ = parse_model(&mangled);
        }
    }
}

proptest! {
    #[test]
    fn float_formatting_round_trips(bits in any::<u64>()) {
        let value = f64::from_bits(bits);
        prop_assume!(value.is_finite());
        let rendered = format!("{value}");
        let parsed: f64 = rendered.parse().unwrap();
        prop_assert_eq!(parsed.to_bits(), value.to_bits());
    }
}
