//! Desk-scale constrained search on the synthetic task: 16 random
//! candidates, then 5 iterations adding 4 candidates each.
//!
//! cargo run --release --example search_desk -- [seed] [unconstrained]

use std::time::Instant;

use eenas::data::{generate_synthetic, split_stratified, SyntheticConfig};
use eenas::search::{first_admissible_iteration, search_loop, Objective, SearchConfig};
use eenas::train::TrainConfig;

fn main() -> eenas::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let objective = match args.next().as_deref() {
        Some("unconstrained") => Objective::Unconstrained,
        _ => Objective::Constrained,
    };

    let ds = generate_synthetic(&SyntheticConfig::default())?;
    let split = split_stratified(&ds, (0.8, 0.2), 0)?;
    let cfg = SearchConfig {
        objective,
        seed,
        ..SearchConfig::desk()
    };
    let train = TrainConfig::desk();

    let start = Instant::now();
    let outcome = search_loop(&cfg, &train, &ds, &split, None, &mut |_, _| Ok(()))?;
    println!("search finished in {:.1?}", start.elapsed());
    for log in &outcome.log {
        println!(
            "iteration {}: +{} (failed {}), archive {}, surrogates {:?} / {:?}",
            log.iteration,
            log.added,
            log.failed,
            log.archive_size,
            log.accuracy_surrogate,
            log.macs_surrogate
        );
    }
    for e in outcome.archive.entries() {
        println!(
            "{:>3} it{} {}  F_A {:.3}  F_M {:.3} M  U {:.2?}",
            e.id,
            e.iteration,
            e.genome,
            e.accuracy,
            e.macs / 1e6,
            e.utilization
        );
    }
    println!(
        "first admissible iteration: {:?}",
        first_admissible_iteration(&outcome.archive, cfg.min_accuracy, cfg.max_macs)
    );
    for p in &outcome.selection {
        let e = &outcome.archive.entries()[p.id];
        println!(
            "selected {} {} (admissible {}): F_A {:.3}, F_M {:.3} M",
            e.id,
            e.genome,
            p.admissible,
            e.accuracy,
            e.macs / 1e6
        );
    }
    Ok(())
}
