//! Cross-validated surrogate selection on genome features, predicting the
//! log backbone MACs of unseen genomes.
//!
//! cargo run --release --example surrogates -- [archive_size]

use eenas::model::{decode_genome, Genome};
use eenas::search::{kendall_tau, select_surrogate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample(n: usize, rng: &mut ChaCha8Rng) -> eenas::Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let g = Genome::random(rng);
        y.push((decode_genome(&g, [3, 16, 16], 10)?.backbone_macs() as f64).ln());
        x.push(g.features());
    }
    Ok((x, y))
}

fn main() -> eenas::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(40);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = sample(n, &mut rng)?;
    let selected = select_surrogate(&x, &y)?;
    for (family, tau) in &selected.scores {
        println!("{family:?}: 5-fold tau {tau:.3}");
    }
    println!("selected {:?}", selected.model.family);
    let (tx, ty) = sample(200, &mut rng)?;
    let pred = selected.model.predict_many(&tx);
    println!("tau on 200 unseen genomes {:.3}", kendall_tau(&pred, &ty)?);
    Ok(())
}
