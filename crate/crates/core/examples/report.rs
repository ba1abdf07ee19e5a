//! Regenerates the report of a finished search directory.
//!
//! cargo run --release --example report -- eenas-out [min_accuracy] [max_macs]

use std::path::PathBuf;

use eenas::report::emit_report;
use eenas::search::{select_tradeoff, Archive};

fn main() -> eenas::Result<()> {
    let mut args = std::env::args().skip(1);
    let run = PathBuf::from(args.next().unwrap_or_else(|| "eenas-out".into()));
    let min_accuracy: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.65);
    let max_macs: Option<f64> = args.next().and_then(|s| s.parse().ok());
    let archive = Archive::load(&run.join("archive.ndjson"))?;
    println!("{} entries", archive.len());
    let files = emit_report(
        &archive,
        &run.join("tables"),
        &run.join("report"),
        min_accuracy,
        max_macs,
        None,
    )?;
    println!("{files:#?}");
    let pts = archive.objectives();
    let front = eenas::search::pareto_indices(&pts);
    let front_pts: Vec<[f64; 2]> = front.iter().map(|&i| pts[i]).collect();
    for k in select_tradeoff(&front_pts, 3)? {
        let e = &archive.entries()[front[k]];
        println!(
            "trade-off {} {}: F_A {:.3}, F_M {:.4} M",
            e.id,
            e.genome,
            e.accuracy,
            e.macs / 1e6
        );
    }
    Ok(())
}
