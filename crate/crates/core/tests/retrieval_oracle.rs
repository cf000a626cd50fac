#[path = "support/bm25_oracle.rs"]
mod bm25_oracle;

use bm25_oracle::{check, Case, WORDS};
use docbot::retrieval::RetrievalConfig;
use proptest::prelude::*;

fn case() -> impl Strategy<Value = Case> {
    let sentence = prop::collection::vec(0..WORDS.len(), 1..9);
    (
        prop::collection::vec(sentence, 1..9),
        prop::collection::vec(0..WORDS.len(), 1..5),
        1usize..6,
        0.0f64..2.5,
        0.0f64..=1.0,
    )
        .prop_map(|(sentences, query, k, bm25_k1, bm25_b)| Case {
            sentences,
            query,
            config: RetrievalConfig { k, bm25_k1, bm25_b },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn index_agrees_with_brute_force_bm25(case in case()) {
        if let Err(e) = check(&case) {
            prop_assert!(false, "{e}\n{}", case.text());
        }
    }
}
