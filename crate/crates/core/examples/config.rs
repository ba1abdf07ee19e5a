//! Prints the JSON Schema of run configs, or validates the given file and
//! prints it back in canonical form with all defaults filled in.
//!
//! cargo run --example config -- [path/to/config.json]

use eenas::report::{config_hash, config_schema, RunConfig};

fn main() -> eenas::Result<()> {
    match std::env::args().nth(1) {
        None => println!("{}", serde_json::to_string_pretty(&config_schema())?),
        Some(path) => {
            let cfg = RunConfig::load(path.as_ref())?;
            println!("{}", cfg.canonical_json());
            eprintln!("sha256 {}", config_hash(&cfg));
        }
    }
    Ok(())
}
