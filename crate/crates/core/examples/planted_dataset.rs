//! Writes the seeded planted check-in corpus as CSV.
//!
//! Usage: `cargo run --example planted_dataset [OUT.csv] [SEED]`; without a
//! path the CSV goes to stdout.

use std::fs::File;
use std::io::{self, Write};

use trajshield::data::write_csv;
use trajshield::planted::{planted_dataset, PlantedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = PlantedConfig::default();
    if let Some(seed) = args.get(1) {
        cfg.seed = seed.parse()?;
    }
    let ds = planted_dataset(&cfg)?;
    let out: Box<dyn Write> = match args.first() {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    write_csv(out, ds.trajectories(), ds.category_vocab())?;
    Ok(())
}
