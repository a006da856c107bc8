use std::collections::BTreeSet;

use proptest::prelude::*;
use varm::attrkit::{heuristic_labels, parse_attr_response, reconcile_labels, retrieve_variation_context, variation_keys, AttrPrediction};
use varm::catalog::{ingest_reader, synth_catalog, Product, SynthSpec};
use varm::evalkit::{auroc, basic_metrics, variation_recall, ConfusionCounts};
use varm::matchkit::{baseline_score, parse_match_response, MatchError};
use varm::pairforge::{extract_positive_pairs, MatchLabel};

const KEYS: [&str; 5] = ["brand", "color", "size", "style", "title"];

fn product_strategy(id: &'static str) -> impl Strategy<Value = Product> {
    proptest::collection::btree_map(0usize..KEYS.len(), "[a-c]{1,2}( [a-c]{1,2})?", 0..KEYS.len()).prop_map(move |m| {
        let mut b = Product::builder(id);
        for (k, v) in m {
            b = b.attr(KEYS[k], v);
        }
        b.build().unwrap()
    })
}

fn label_vec(bits: &[bool]) -> Vec<MatchLabel> {
    bits.iter()
        .map(|&b| if b { MatchLabel::VariantMatch } else { MatchLabel::Mismatch })
        .collect()
}

fn brute_force_auroc(scores: &[f64], gold: &[MatchLabel]) -> f64 {
    let mut twice = 0u128;
    let (mut p, mut n) = (0u128, 0u128);
    for (i, gi) in gold.iter().enumerate() {
        if gi.is_match() {
            p += 1;
        } else {
            n += 1;
        }
        for (j, gj) in gold.iter().enumerate() {
            if gi.is_match() && !gj.is_match() {
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

proptest! {
    #[test]
    fn baseline_symmetric_and_bounded(a in product_strategy("a"), b in product_strategy("b")) {
        let ab = baseline_score::<f64>(&a, &b).value;
        let ba = baseline_score::<f64>(&b, &a).value;
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        let ab32 = baseline_score::<f32>(&a, &b).value;
        prop_assert_eq!(ab32, baseline_score::<f32>(&b, &a).value);
    }

    #[test]
    fn match_parser_is_total(text in "\\PC{0,40}") {
        match parse_match_response::<f64>(&text) {
            Ok(v) => prop_assert!((0.0..=1.0).contains(&v.similarity)),
            Err(MatchError::Parse { raw, .. }) => prop_assert_eq!(raw, text),
            Err(e) => prop_assert!(false, "unexpected error {e:?}"),
        }
    }

    #[test]
    fn match_parser_reads_generated_answers(yes: bool, score in 0u32..=1000, sep in "[ ,.:;]{0,3}") {
        let s = score as f64 / 1000.0;
        let text = format!("{}{sep} {s}", if yes { "Yes" } else { "no" });
        let v = parse_match_response::<f64>(&text).unwrap();
        prop_assert_eq!(v.label.is_match(), yes);
        prop_assert_eq!(v.similarity, s);
        prop_assert!(!v.default_used);
    }

    #[test]
    fn attr_parser_is_total(text in "\\PC{0,60}") {
        let _ = parse_attr_response(&text);
    }

    #[test]
    fn reconciliation_is_disjoint(
        diff in proptest::collection::vec("[a-e]", 0..6),
        same in proptest::collection::vec("[a-e]", 0..6),
    ) {
        let d: Vec<&str> = diff.iter().map(String::as_str).collect();
        let s: Vec<&str> = same.iter().map(String::as_str).collect();
        let pred = AttrPrediction::from_lists(&d, &s);
        let (labels, penalty) = reconcile_labels(&pred);
        let overlap = d.iter().collect::<BTreeSet<_>>().intersection(&s.iter().collect()).count();
        prop_assert_eq!(penalty, overlap);
        prop_assert_eq!(penalty, pred.contradictions.len());
        let keys: BTreeSet<&str> = d.iter().chain(&s).copied().collect();
        prop_assert_eq!(labels.len(), keys.len());
    }

    #[test]
    fn heuristic_labels_every_key(
        members in proptest::collection::vec(product_strategy("m"), 2..6),
    ) {
        let refs: Vec<&Product> = members.iter().collect();
        let labels = heuristic_labels(&refs).unwrap();
        let keys: BTreeSet<&str> = members.iter().flat_map(|p| p.keys()).collect();
        prop_assert_eq!(labels.keys().map(String::as_str).collect::<BTreeSet<_>>(), keys);
        prop_assert_eq!(labels, heuristic_labels(&refs).unwrap());
    }

    #[test]
    fn auroc_matches_brute_force(
        raw in proptest::collection::vec((0u8..20, any::<bool>()), 2..60),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 19.0).collect();
        let gold = label_vec(&raw.iter().map(|(_, g)| *g).collect::<Vec<_>>());
        let pos = gold.iter().filter(|g| g.is_match()).count();
        prop_assume!(pos > 0 && pos < gold.len());
        let fast: f64 = auroc(&scores, &gold).unwrap();
        prop_assert_eq!(fast, brute_force_auroc(&scores, &gold));
        prop_assert!((0.0..=1.0).contains(&fast));
    }

    #[test]
    fn auroc_complement(
        raw in proptest::collection::btree_map(0u32..100_000, any::<bool>(), 2..50),
    ) {
        let scores: Vec<f64> = raw.keys().map(|s| *s as f64).collect();
        let bits: Vec<bool> = raw.values().copied().collect();
        prop_assume!(bits.iter().any(|b| *b) && bits.iter().any(|b| !*b));
        let gold = label_vec(&bits);
        let inverted = label_vec(&bits.iter().map(|b| !b).collect::<Vec<_>>());
        let a: f64 = auroc(&scores, &gold).unwrap();
        let b: f64 = auroc(&scores, &inverted).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f1_is_harmonic_mean(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
        let c = ConfusionCounts { tp, fp, fn_, tn };
        prop_assume!(c.total() > 0);
        let m = basic_metrics::<f64>(&c).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.precision + m.recall > 0.0 {
            let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - h).abs() < 1e-12);
        }
    }

    #[test]
    fn recall_is_monotone(
        gold in proptest::collection::btree_set("[a-f]", 1..5),
        pred in proptest::collection::btree_set("[a-h]", 0..6),
        extra in "[a-h]",
    ) {
        let before: f64 = variation_recall(pred.iter().map(String::as_str), gold.iter().map(String::as_str), None).unwrap();
        let mut more = pred.clone();
        more.insert(extra);
        let after: f64 = variation_recall(more.iter().map(String::as_str), gold.iter().map(String::as_str), None).unwrap();
        prop_assert!(after >= before);
        prop_assert!((0.0..=1.0).contains(&after));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn catalog_round_trip(seed in any::<u64>()) {
        let spec = SynthSpec { n_types: 2, brands_per_type: 2, groups_per_brand: 2, ..SynthSpec::default() };
        let store = synth_catalog(&spec, seed).unwrap();
        let bytes = store.to_jsonl_bytes();
        let back = ingest_reader(bytes.as_slice()).unwrap();
        prop_assert!(back.report.errors.is_empty());
        prop_assert_eq!(back.store.to_jsonl_bytes(), bytes);
        prop_assert_eq!(extract_positive_pairs(&back.store), extract_positive_pairs(&store));
    }

    #[test]
    fn heuristic_recovers_synthetic_gold(seed in any::<u64>()) {
        let spec = SynthSpec { n_types: 2, brands_per_type: 2, groups_per_brand: 4, group_size_range: (2, 10), ..SynthSpec::default() };
        let store = synth_catalog(&spec, seed).unwrap();
        for g in store.groups() {
            let labels = heuristic_labels(&store.members(g)).unwrap();
            let gold: BTreeSet<String> = g.gold_variation_keys().unwrap().iter().cloned().collect();
            prop_assert_eq!(variation_keys(&labels), gold);
        }
    }

    #[test]
    fn retriever_never_leaks_query_group(seed in any::<u64>()) {
        let spec = SynthSpec { n_types: 2, brands_per_type: 2, groups_per_brand: 2, variation_key_pool: vec!["color".into(), "size".into(), "style".into(), "pattern".into(), "flavor".into(), "scent".into()], ..SynthSpec::default() };
        let store = synth_catalog(&spec, seed).unwrap();
        for g in store.groups() {
            let members = store.members(g);
            let ids: Vec<&str> = members.iter().map(|p| p.id()).collect();
            let own: BTreeSet<&String> = g.gold_variation_keys().unwrap().iter().collect();
            let others: BTreeSet<&String> = store
                .groups()
                .filter(|o| o.id() != g.id())
                .flat_map(|o| o.gold_variation_keys().unwrap())
                .collect();
            let ctx = retrieve_variation_context(
                &store,
                members[0].product_type().unwrap(),
                members[0].brand().unwrap(),
                &ids,
            );
            for k in ctx.type_variation_attrs.iter().chain(&ctx.brand_variation_attrs) {
                prop_assert!(!own.contains(k) || others.contains(k), "{k} leaked from {}", g.id());
            }
        }
    }
}
