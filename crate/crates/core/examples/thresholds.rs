//! Threshold tuning and calibration on a simulated three-exit table whose
//! early exits are right more often when they are confident.
//!
//! cargo run --release --example thresholds -- [min_accuracy] [max_macs]

use eenas::train::{compute_ece, evaluate_thresholds, tune_thresholds, ExitTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> eenas::Result<()> {
    let mut args = std::env::args().skip(1);
    let min_accuracy: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.75);
    let max_macs: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let gamma = [1.0, 2.0, 3.0];
    let skill = [0.55, 0.75, 0.9];

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 2000;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
    let mut predictions = vec![Vec::new(); 3];
    let mut confidences = vec![Vec::new(); 3];
    for &y in &labels {
        for i in 0..3 {
            let c: f64 = if i == 2 { 1.0 } else { rng.random() };
            let p_right = if i == 2 {
                skill[i]
            } else {
                skill[i] * (0.5 + c)
            };
            let right = rng.random::<f64>() < p_right.min(1.0);
            predictions[i].push(if right { y } else { (y + 1) % 10 });
            confidences[i].push(c);
        }
    }
    let table = ExitTable {
        labels,
        predictions,
        confidences,
    };

    for th in [[1.1, 1.1], [0.9, 0.9], [0.5, 0.5], [0.0, 0.0]] {
        let o = evaluate_thresholds(&table, &gamma, &th)?;
        println!(
            "eps {th:?}: accuracy {:.3}, MACs {:.3}, U {:.3?}",
            o.accuracy, o.macs, o.utilization
        );
    }
    let tuned = tune_thresholds(&table, &gamma, min_accuracy, Some(max_macs))?;
    println!(
        "tuned for accuracy >= {min_accuracy}, MACs <= {max_macs}: eps {:?}, accuracy {:.3}, MACs {:.3}",
        tuned.thresholds, tuned.accuracy, tuned.macs
    );
    for i in 0..3 {
        let ok: Vec<bool> = (0..n).map(|k| table.correct(i, k)).collect();
        println!(
            "exit {} ECE {:.2}%",
            i + 1,
            compute_ece(&table.confidences[i], &ok, 10)?
        );
    }
    Ok(())
}
