//! Triple extraction against the hand-annotated fixture corpus.

#[path = "support/svo_fixture.rs"]
mod svo_fixture;

use svo_fixture::score_fixture;

#[test]
fn fixture_has_thirty_sentences() {
    assert_eq!(include_str!("fixtures/svo_gold.jsonl").lines().count(), 30);
}

#[test]
fn extraction_meets_fixture_thresholds() {
    let score = score_fixture();
    for m in &score.misses {
        eprintln!("{m}");
    }
    eprintln!("precision {:.3} recall {:.3}", score.precision, score.recall);
    assert!(score.precision >= 0.8, "precision {}", score.precision);
    assert!(score.recall >= 0.7, "recall {}", score.recall);
}
