//! Slot value permutation on the "Chinese | centre" example.

use dstaug::augment::{self, SampleKind, TrainingSample};
use dstaug::complicate::Variant;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let values = vec!["Chinese".to_owned(), "centre".to_owned()];
    let sample = TrainingSample {
        id: "demo/t0/v".into(),
        dialogue_id: "demo".into(),
        variant: Variant::Easy,
        turn_index: 0,
        kind: SampleKind::ValueGeneration,
        history: Vec::new(),
        system: "Hello, how can I help you?".into(),
        user: "I want a Chinese restaurant in the centre.".into(),
        value: None,
        target_text: values.join(augment::SEPARATOR),
        target_values: values,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in augment::permute_values(&sample, augment::DEFAULT_PERMUTATION_CAP, "none", &mut rng) {
        println!("{:<14} {}", s.id, s.target_text);
    }

    for k in 0..=6 {
        let vals: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        let n = augment::permutations(&vals, augment::DEFAULT_PERMUTATION_CAP, &mut rng).len();
        println!("k = {k}: {n} orderings");
    }
}
