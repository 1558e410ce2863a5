use proptest::prelude::*;

use luq_core::baselines::{deg_uncertainty, eigv_uncertainty, numsets};
use luq_core::domain::{FrequencyLabel, Query, Response, ResponseSet, SimilarityMatrix};
use luq_core::entailment::{EntailmentGateway, MockScorer};
use luq_core::luq::{luq_uncertainty, LuqVariant};
use luq_core::text::Decomposer;

const SENTENCES: &[&str] = &[
    "Ada Byrne was born in Lisbon.",
    "Ada Byrne was born in Oslo.",
    "She studied physics at Leiden.",
    "She studied law at Leiden.",
    "She won the Hale Prize.",
    "She wrote three novels.",
    "She retired in Porto.",
];

fn text(idx: &[usize]) -> String {
    idx.iter().map(|&i| SENTENCES[i]).collect::<Vec<_>>().join(" ")
}

fn set(texts: &[String]) -> ResponseSet {
    ResponseSet {
        query: Query {
            id: "q".into(),
            entity: "Ada Byrne".into(),
            prompt: "Tell me a bio of Ada Byrne.".into(),
            frequency_label: FrequencyLabel::default(),
        },
        main: Response::new(texts[0].clone()),
        samples: texts[1..].iter().map(|t| Response::new(t.clone())).collect(),
        temperature: 1.0,
        model_id: "m".into(),
    }
}

fn gateway() -> EntailmentGateway {
    EntailmentGateway::uncached(Box::new(MockScorer::new()))
}

fn responses() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::collection::vec(0..SENTENCES.len(), 1..4), 2..6)
        .prop_map(|rs| rs.iter().map(|r| text(r)).collect())
}

fn similarity(m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..=1.0f64, m), m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn luq_ignores_response_order(texts in responses(), rot in 0usize..6) {
        let gw = gateway();
        let d = Decomposer::default();
        let mut shuffled = texts.clone();
        shuffled.rotate_left(rot % texts.len());
        shuffled[1..].reverse();
        for v in [LuqVariant::Luq, LuqVariant::LuqPair] {
            let a = luq_uncertainty(&set(&texts), &gw, &d, v).unwrap().value;
            let b = luq_uncertainty(&set(&shuffled), &gw, &d, v).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn numsets_ignores_response_order(texts in responses()) {
        let gw = gateway();
        let owned: Vec<Response> = texts.iter().map(|t| Response::new(t.clone())).collect();
        let forward: Vec<&Response> = owned.iter().collect();
        let backward: Vec<&Response> = owned.iter().rev().collect();
        let a = numsets(&forward, &gw, 0.5).unwrap().value;
        let b = numsets(&backward, &gw, 0.5).unwrap().value;
        prop_assert_eq!(a, b);
        prop_assert!(a >= 1.0 && a <= texts.len() as f64);
    }

    #[test]
    fn deg_and_eigv_move_continuously(rows in similarity(6), eps in 1e-9..1e-6f64) {
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let nudged: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| (v - eps).max(0.0)).collect()).collect();
        let t = SimilarityMatrix::from_rows(&nudged).unwrap();
        prop_assert!((deg_uncertainty(&s).value - deg_uncertainty(&t).value).abs() <= eps + 1e-15);
        let de = eigv_uncertainty(&s).map(|u| u.value);
        let te = eigv_uncertainty(&t).map(|u| u.value);
        if let (Ok(a), Ok(b)) = (de, te) {
            prop_assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn deg_falls_as_similarity_rises(rows in similarity(5), i in 0usize..5, j in 0usize..5, bump in 0.01..0.5f64) {
        prop_assume!(i != j);
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let mut raised = rows.clone();
        raised[i][j] = (raised[i][j] + bump).min(1.0);
        raised[j][i] = (raised[j][i] + bump).min(1.0);
        let t = SimilarityMatrix::from_rows(&raised).unwrap();
        prop_assert!(deg_uncertainty(&t).value <= deg_uncertainty(&s).value);
    }
}
