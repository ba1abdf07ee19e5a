//! NSGA-II on genomes with exact objectives: maximize backbone depth while
//! minimizing backbone MACs on 16x16 inputs.
//!
//! cargo run --release --example nsga2 -- [generations]

use eenas::model::{decode_genome, Genome};
use eenas::search::{nondominated_sort, nsga2_generation, GaParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn objectives(pool: &[Genome]) -> Vec<[f64; 2]> {
    pool.iter()
        .map(|g| {
            let spec = decode_genome(g, [3, 16, 16], 10).expect("genomes decode");
            [
                -(spec.blocks.len() as f64),
                spec.backbone_macs() as f64 / 1e6,
            ]
        })
        .collect()
}

fn main() {
    let generations: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = GaParams {
        population: 24,
        crossover_rate: 0.9,
        mutation_rate: 1.0 / 16.0,
    };
    let mut pop: Vec<Genome> = (0..params.population)
        .map(|_| Genome::random(&mut rng))
        .collect();
    for gen in 0..=generations {
        if gen % 10 == 0 {
            let pts = objectives(&pop);
            let fronts = nondominated_sort(&pts);
            println!(
                "generation {gen}: first front has {} genomes",
                fronts[0].len()
            );
        }
        if gen < generations {
            pop = nsga2_generation(&pop, &mut objectives, &params, &mut rng);
        }
    }
    let pts = objectives(&pop);
    let mut front: Vec<usize> = nondominated_sort(&pts)[0].clone();
    front.sort_by(|&a, &b| pts[a][1].total_cmp(&pts[b][1]));
    front.dedup_by(|a, b| pts[*a] == pts[*b]);
    for i in front {
        println!(
            "{}  blocks {:>2}  {:.4} M MACs",
            pop[i], -pts[i][0], pts[i][1]
        );
    }
}
