use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::dominates;
use crate::model::genome::{gene_alphabet_sizes, GENE_COUNT};
use crate::model::Genome;

/// Fast non-dominated sorting of minimized objective pairs. Fronts hold
/// indices in ascending order.
pub fn nondominated_sort(points: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if dominates(&points[i], &points[j]) {
                dominated_by[i].push(j);
            } else if dominates(&points[j], &points[i]) {
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (indices into `points`).
pub fn crowding_distance(points: &[[f64; 2]], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    for d in 0..2 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            points[front[a]][d]
                .total_cmp(&points[front[b]][d])
                .then(front[a].cmp(&front[b]))
        });
        let lo = points[front[order[0]]][d];
        let hi = points[front[order[m - 1]]][d];
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..m - 1 {
                let gap = points[front[order[w + 1]]][d] - points[front[order[w - 1]]][d];
                dist[order[w]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Front rank and crowding distance for every point.
pub fn rank_and_crowding(points: &[[f64; 2]]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in nondominated_sort(points).iter().enumerate() {
        let cd = crowding_distance(points, front);
        for (k, &i) in front.iter().enumerate() {
            rank[i] = r;
            crowd[i] = cd[k];
        }
    }
    (rank, crowd)
}

/// Indices sorted best first by (rank, descending crowding, index).
pub fn crowded_order(points: &[[f64; 2]]) -> Vec<usize> {
    let (rank, crowd) = rank_and_crowding(points);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| crowded_cmp(a, b, &rank, &crowd));
    order
}

fn crowded_cmp(a: usize, b: usize, rank: &[usize], crowd: &[f64]) -> Ordering {
    rank[a]
        .cmp(&rank[b])
        .then(crowd[b].total_cmp(&crowd[a]))
        .then(a.cmp(&b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 40,
            crossover_rate: 0.9,
            mutation_rate: 1.0 / GENE_COUNT as f64,
        }
    }
}

/// Swaps the genes in `cut.0..cut.1` between the two chromosomes.
pub fn two_point_crossover(a: &Genome, b: &Genome, cut: (usize, usize)) -> (Genome, Genome) {
    let mut ga = a.to_genes().expect("valid genome");
    let mut gb = b.to_genes().expect("valid genome");
    for i in cut.0..cut.1.min(GENE_COUNT) {
        std::mem::swap(&mut ga[i], &mut gb[i]);
    }
    (
        Genome::from_genes(&ga).expect("genes stay in their alphabets"),
        Genome::from_genes(&gb).expect("genes stay in their alphabets"),
    )
}

/// Resamples each gene with probability `rate` to a different symbol of its alphabet.
pub fn mutate<R: Rng + ?Sized>(g: &Genome, rate: f64, rng: &mut R) -> Genome {
    let mut genes = g.to_genes().expect("valid genome");
    for (v, n) in genes.iter_mut().zip(gene_alphabet_sizes()) {
        if rate > 0.0 && rng.random::<f64>() < rate {
            let r = rng.random_range(0..n - 1);
            *v = if r >= *v { r + 1 } else { r };
        }
    }
    Genome::from_genes(&genes).expect("genes stay in their alphabets")
}

pub fn crossover_mutate<R: Rng + ?Sized>(
    parents: (&Genome, &Genome),
    params: &GaParams,
    rng: &mut R,
) -> (Genome, Genome) {
    let (mut a, mut b) = (*parents.0, *parents.1);
    if params.crossover_rate > 0.0 && rng.random::<f64>() < params.crossover_rate {
        let i = rng.random_range(0..=GENE_COUNT);
        let j = rng.random_range(0..=GENE_COUNT);
        (a, b) = two_point_crossover(&a, &b, (i.min(j), i.max(j)));
    }
    (
        mutate(&a, params.mutation_rate, rng),
        mutate(&b, params.mutation_rate, rng),
    )
}

fn tournament<R: Rng + ?Sized>(rank: &[usize], crowd: &[f64], rng: &mut R) -> usize {
    let a = rng.random_range(0..rank.len());
    let b = rng.random_range(0..rank.len());
    if crowded_cmp(a, b, rank, crowd) == Ordering::Greater {
        b
    } else {
        a
    }
}

/// One μ+λ generation. `objectives` maps a pool of genomes to minimized
/// objective pairs; it sees the whole pool so pool-level statistics can
/// enter the objectives.
pub fn nsga2_generation<R, F>(
    population: &[Genome],
    objectives: &mut F,
    params: &GaParams,
    rng: &mut R,
) -> Vec<Genome>
where
    R: Rng + ?Sized,
    F: FnMut(&[Genome]) -> Vec<[f64; 2]>,
{
    let mu = population.len();
    if mu == 0 {
        return Vec::new();
    }
    let (rank, crowd) = rank_and_crowding(&objectives(population));
    let mut pool: Vec<Genome> = population.to_vec();
    while pool.len() < 2 * mu {
        let p = tournament(&rank, &crowd, rng);
        let q = tournament(&rank, &crowd, rng);
        let (a, b) = crossover_mutate((&population[p], &population[q]), params, rng);
        pool.push(a);
        if pool.len() < 2 * mu {
            pool.push(b);
        }
    }
    let mut seen = HashSet::new();
    let (unique, repeats): (Vec<Genome>, Vec<Genome>) =
        pool.into_iter().partition(|g| seen.insert(*g));
    let order = crowded_order(&objectives(&unique));
    let mut next: Vec<Genome> = order.into_iter().take(mu).map(|i| unique[i]).collect();
    next.extend(repeats.into_iter().take(mu - next.len()));
    next
}
