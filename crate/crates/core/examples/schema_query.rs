//! Loads the ontology and entity tables and runs a few filtered lookups.

use std::path::Path;

use dstaug::normalize::normalize;
use dstaug::{Database, Schema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let schema = Schema::load(root.join("schema.json"))?;
    let db = Database::load_dir(root.join("db"), &schema)?;

    for domain in schema.domain_names() {
        let rows = db.table(&domain).map_or(0, <[_]>::len);
        let slots = schema.domain(&domain).map_or(0, |d| d.slots.len());
        println!("{domain:<11} {slots:>2} slots {rows:>3} entities");
    }

    let hits = db.query(&schema, "restaurant", [("area", "Centre"), ("pricerange", "expensive")])?;
    println!("\nexpensive restaurants in the centre: {}", hits.len());
    for e in hits.iter().take(5) {
        println!("  {} ({})", e["name"], e["food"]);
    }

    for raw in ["Midsummer House Restaurant ", "9:00", "the travellers rest"] {
        println!("normalize({raw:?}) = {:?}", normalize(raw));
    }
    Ok(())
}
