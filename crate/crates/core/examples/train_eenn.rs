//! Trains one early-exit network on the synthetic task and prints its
//! evaluation.
//!
//! cargo run --release --example train_eenn -- 2-3-24,1-5-16,1-3-32,2-3-32/1010

use std::time::Instant;

use eenas::data::{generate_synthetic, split_stratified, SyntheticConfig};
use eenas::model::{decode_genome, place_exits, Genome, MAX_EXITS};
use eenas::train::{evaluate, train_eenn, TrainConfig};

fn main() -> eenas::Result<()> {
    env_logger::init();
    let arg = std::env::args().nth(1);
    let genome = Genome::parse(arg.as_deref().unwrap_or("2-3-24,1-5-16,1-3-32,2-3-32/1010"))?;
    let ds = generate_synthetic(&SyntheticConfig::default())?;
    let split = split_stratified(&ds, (0.8, 0.2), 0)?;
    let backbone = decode_genome(&genome, ds.shape(), ds.classes())?;
    let spec = place_exits(&backbone, &genome.theta, MAX_EXITS)?;
    println!(
        "genome {genome}: {} exits, gamma (M) {:.3?}",
        spec.exit_count(),
        spec.gamma.millions()
    );

    let cfg = TrainConfig {
        epochs: [4, 2, 2],
        min_accuracy: 0.6,
        max_macs: Some(1.5e6),
        ..Default::default()
    };
    let start = Instant::now();
    let trained = train_eenn(&spec, &ds, &split, &cfg)?;
    let trained_in = start.elapsed();
    for r in &trained.trace {
        println!(
            "phase {} epoch {}: train {:.4} validation {:.4}",
            r.phase, r.epoch, r.train_loss, r.validation_loss
        );
    }
    let (eval, _) = evaluate(&trained, &ds, &split, &cfg)?;
    println!(
        "trained in {:.1?}, evaluated in {:.1?}",
        trained_in,
        start.elapsed() - trained_in
    );
    println!(
        "accuracy {:.3} (final exit alone {:.3}), adaptive MACs {:.3} M, thresholds {:?}, utilization {:.3?}",
        eval.accuracy,
        eval.backbone_accuracy,
        eval.macs / 1e6,
        eval.thresholds,
        eval.utilization
    );
    println!("ECE per exit (%) {:.2?}", eval.ece);
    Ok(())
}
