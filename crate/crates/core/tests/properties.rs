use std::collections::BTreeSet;

use factgpt_core::annotate::{aggregate_votes, distribution_report};
use factgpt_core::domain::{decode_records, encode_records, Claim, Post};
use factgpt_core::matcher::{token_similarity, tokenize};
use factgpt_core::{EntailmentLabel, GoldLabel, Prediction, VoteSet};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = EntailmentLabel> {
    prop::sample::select(EntailmentLabel::ALL.to_vec())
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 \n\"\\\\é#@]{0,40}".prop_map(|s| format!("x{s}"))
}

proptest! {
    #[test]
    fn claims_round_trip(ids in prop::collection::vec("[a-z0-9]{1,8}", 0..8), body in text()) {
        let claims: Vec<Claim> = ids
            .iter()
            .map(|id| Claim { source: Some("snopes".into()), ..Claim::new(id.clone(), body.clone()) })
            .collect();
        let encoded = encode_records(&claims);
        prop_assert_eq!(encoded.lines().count(), claims.len());
        let decoded = decode_records::<Claim>(&encoded);
        prop_assert!(decoded.is_clean());
        prop_assert_eq!(decoded.records, claims);
    }

    #[test]
    fn predictions_round_trip(pair in "[a-z]{1,6}", l in prop::option::of(label()), raw in text(), amb: bool) {
        let p = Prediction { pair_id: pair, model_id: "m".into(), label: l, raw_response: raw, ambiguous: amb };
        let decoded = decode_records::<Prediction>(&encode_records(std::slice::from_ref(&p)));
        prop_assert_eq!(decoded.records, vec![p]);
    }

    #[test]
    fn jaccard_symmetric_and_bounded(a in text(), b in text()) {
        let (ta, tb) = (tokenize(&a), tokenize(&b));
        let s = token_similarity(&ta, &tb);
        prop_assert_eq!(s, token_similarity(&tb, &ta));
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, ta == tb && !ta.is_empty());
    }

    #[test]
    fn votes_permutation_invariant(mut votes in prop::collection::vec(label(), 1..9), seed: u64) {
        let before = aggregate_votes(&VoteSet::from_labels("p", &votes)).unwrap();
        let n = votes.len();
        votes.rotate_left((seed as usize) % n);
        votes.reverse();
        prop_assert_eq!(aggregate_votes(&VoteSet::from_labels("p", &votes)).unwrap(), before);
    }

    #[test]
    fn distribution_is_a_partition(sets in prop::collection::vec(prop::collection::vec(label(), 1..6), 0..60)) {
        let gold: Vec<GoldLabel> = sets
            .iter()
            .enumerate()
            .map(|(i, v)| aggregate_votes(&VoteSet::from_labels(format!("p{i}"), v)).unwrap())
            .collect();
        let report = distribution_report(&gold);
        prop_assert_eq!(report.rows.iter().map(|r| r.count).sum::<usize>(), report.total);
        if report.total > 0 {
            let pct: f64 = report.rows.iter().map(|r| r.percentage()).sum();
            prop_assert!((pct - 100.0).abs() <= 0.2 + 1e-9, "sum {}", pct);
        }
    }
}

#[test]
fn posts_with_timestamps_round_trip() {
    let post = Post {
        created_at: Some("2023-03-01T12:30:00Z".parse().unwrap()),
        origin: Some("twitter".into()),
        ..Post::new("p1", "hello")
    };
    let decoded = decode_records::<Post>(&encode_records(std::slice::from_ref(&post)));
    assert_eq!(decoded.records, vec![post]);
}

#[test]
fn tokenize_returns_sorted_set() {
    let got: BTreeSet<String> = tokenize("b a c");
    assert_eq!(got.into_iter().collect::<Vec<_>>(), ["a", "b", "c"]);
}
