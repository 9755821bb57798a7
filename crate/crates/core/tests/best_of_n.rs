//! Best-of-N image selection.

mod common;

use belief_agent_core::backends::scripted;
use belief_agent_core::backends::scripted::key_phrase;
use belief_agent_core::metrics::{generate_best_of, select_best_image, yes_no_question};
use proptest::prelude::*;

fn brute_force(scores: &[(String, Vec<f64>)]) -> String {
    let mut best: Option<(f64, &str)> = None;
    for (id, s) in scores {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let better = match best {
            None => true,
            Some((m, b)) => mean > m || (mean == m && id.as_str() < b),
        };
        if better {
            best = Some((mean, id));
        }
    }
    best.unwrap().1.to_string()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_brute_force_argmax(
        rows in (1usize..6).prop_flat_map(|q| proptest::collection::vec(
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], q), 1..12)),
    ) {
        let table: Vec<_> = rows.into_iter().enumerate().map(|(i, r)| (format!("img{i:02}"), r)).collect();
        prop_assert_eq!(select_best_image(&table).unwrap(), brute_force(&table));
    }
}

#[test]
fn ten_seeds_five_questions_end_to_end() {
    let statements = [
        "a red barn",
        "a white horse beside the barn",
        "the sky is stormy",
        "a wooden fence",
        "the image is an oil painting",
    ];
    let prompt = statements.join(". ");
    let questions: Vec<String> = statements.iter().map(|s| yes_no_question(s)).collect();
    let backends = scripted::build_backends(&common::backend_config(0.5)).unwrap();
    let result = generate_best_of(&backends, &prompt, &questions, 10, 100).unwrap();
    assert_eq!(result.images.len(), 10);
    assert!(result.scores.iter().all(|s| s.len() == 5));

    let covered = |text: &str| questions.iter().filter(|q| text.to_lowercase().contains(key_phrase(q))).count();
    let counts: Vec<usize> = result.images.iter().map(|i| covered(&i.prompt_used)).collect();
    let most = *counts.iter().max().unwrap();
    assert_eq!(counts[result.best], most);
    assert_eq!(counts.iter().position(|c| *c == most), Some(result.best));
    // Dropout must actually vary the images for the selection to mean anything.
    assert!(counts.iter().min() < counts.iter().max(), "{counts:?}");
}
