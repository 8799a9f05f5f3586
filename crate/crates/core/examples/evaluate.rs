//! Joint goal accuracy and co-reference slot accuracy on a toy prediction set.

use dstaug::eval::{self, CorefAnnotation, GoldTurn, PredictionRecord};
use indexmap::IndexMap;

fn belief(pairs: &[(&str, &str)]) -> IndexMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let turns = [
        belief(&[("restaurant-food", "british")]),
        belief(&[("restaurant-food", "british"), ("restaurant-book time", "12:30")]),
        belief(&[
            ("restaurant-food", "british"),
            ("restaurant-book time", "12:30"),
            ("taxi-arriveby", "12:30"),
        ]),
    ];
    let gold: Vec<GoldTurn> = turns
        .iter()
        .enumerate()
        .map(|(i, b)| GoldTurn { dialogue_id: "d1".into(), turn_index: i, belief: b.clone() })
        .collect();
    let mut preds: Vec<PredictionRecord> = gold
        .iter()
        .map(|g| PredictionRecord {
            dialogue_id: g.dialogue_id.clone(),
            turn_index: g.turn_index,
            predicted_belief: g.belief.clone(),
        })
        .collect();
    preds[2].predicted_belief.insert("taxi-arriveby".into(), "12:00".into());
    let notes = vec![CorefAnnotation { dialogue_id: "d1".into(), turn_index: 2, slot: "taxi-arriveby".into() }];

    let report = eval::evaluate(&preds, &gold, &notes)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
