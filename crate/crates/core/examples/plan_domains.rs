//! Enumerates domain combinations and filters seed states with the logic
//! rules, using the simulated model as the planner.

use dstaug::llm::{LlmClient, SimulatedBackend};
use dstaug::planner::{self, DomainCombo, RuleSet};
use dstaug::Schema;
use std::sync::Arc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::multiwoz();
    let combos = planner::enumerate_combos(&schema.domain_names())?;
    println!("{} combinations", combos.len());

    let llm = LlmClient::new(Arc::new(SimulatedBackend::new(schema.clone())));
    let rules = RuleSet::default();
    let combo = DomainCombo::new(["hotel", "restaurant", "taxi"]).expect("three domains");
    let outcome = planner::judge_combo(&llm, &schema, &combo)?;
    let judgment = outcome.reasonable().expect("a sensible combination");
    println!("{combo}: {}", judgment.explanation);

    for seed in planner::generate_seed_states(&llm, &schema, judgment)? {
        let out = planner::filter_seed_state(&seed, &schema, &rules);
        println!("\n{}", seed.id);
        for link in seed.coref() {
            let removed = out.removed.iter().find(|r| r.target == link.target && r.source == link.source);
            match removed {
                Some(r) => println!("  drop {} <- {} ({})", link.target, link.source, r.rule.as_str()),
                None => println!("  keep {} <- {}", link.target, link.source),
            }
        }
        if let Some(why) = &out.rejected {
            println!("  rejected: {why}");
        }
        if out.lost_all_links {
            println!("  no references left");
        }
    }
    Ok(())
}
