//! Oracle-backed checks shared by the integration tests and the acceptance run.
//! Each returns `Err` with a description of the first counterexample.

use std::collections::HashMap;

use eenas::model::genome::{StageGene, STAGES};
use eenas::model::network::cumulative_confidences;
use eenas::model::spec::place_exits_with_heads;
use eenas::model::{decode_genome, place_exits, Genome, MAX_EXITS};
use eenas::search::{kendall_tau, nondominated_sort};
use eenas::train::{compute_ece, evaluate_thresholds, ExitTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

/// Peels fronts by repeated pairwise dominance checks among the remaining points.
pub fn brute_force_fronts(points: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let better = |a: [f64; 2], b: [f64; 2]| a[0] <= b[0] && a[1] <= b[1] && a != b;
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| better(points[j], points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// τ-b from tie-group sizes: (C − D) / sqrt((n0 − n1)(n0 − n2)).
pub fn tau_oracle(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
        }
    }
    let tie_pairs = |v: &[i64]| {
        let mut groups: HashMap<i64, i64> = HashMap::new();
        for x in v {
            *groups.entry(*x).or_default() += 1;
        }
        groups.values().map(|t| t * (t - 1) / 2).sum::<i64>()
    };
    let n0 = (n * (n - 1) / 2) as i64;
    let d = ((n0 - tie_pairs(a)) as f64 * (n0 - tie_pairs(b)) as f64).sqrt();
    if d == 0.0 {
        0.0
    } else {
        s as f64 / d
    }
}

pub fn sort_matches_brute_force(populations: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..populations {
        let n = rng.random_range(1..=64);
        // Coarse grids produce ties and duplicates.
        let levels = if case % 2 == 0 { 5 } else { 1000 };
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(0..levels) as f64,
                    rng.random_range(0..levels) as f64,
                ]
            })
            .collect();
        if nondominated_sort(&pts) != brute_force_fronts(&pts) {
            return Err(format!("population {case} ({n} points) sorts differently"));
        }
    }
    Ok(())
}

pub fn tau_matches_pair_counting(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..pairs {
        let n = rng.random_range(2..30);
        let levels = if case % 2 == 0 { 4 } else { 1_000_000 };
        let a: Vec<i64> = (0..n).map(|_| rng.random_range(0..levels)).collect();
        let b: Vec<i64> = (0..n).map(|_| rng.random_range(0..levels)).collect();
        let fa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        let fb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
        let got = kendall_tau(&fa, &fb).map_err(|e| e.to_string())?;
        let want = tau_oracle(&a, &b);
        if (got - want).abs() > 1e-12 {
            return Err(format!("pair {case}: τ {got} vs {want}"));
        }
    }
    Ok(())
}

/// Largest |Σ c^r_i − 1| over random confidence vectors ending in 1.
pub fn cumulative_sum_worst(vectors: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..vectors)
        .map(|_| {
            let b = rng.random_range(1..=MAX_EXITS);
            let mut c: Vec<f64> = (0..b - 1).map(|_| rng.random()).collect();
            c.push(1.0);
            let s: f64 = cumulative_confidences(&c).unwrap().iter().sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// γ non-decreasing after placement for random genomes and exit bits.
pub fn placement_postcondition(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..pairs {
        let g = Genome::random(&mut rng);
        let backbone = decode_genome(&g, [3, 16, 16], 10).map_err(|e| e.to_string())?;
        let spec = place_exits(&backbone, &g.theta, MAX_EXITS).map_err(|e| e.to_string())?;
        let gamma = spec.gamma.as_slice();
        if gamma.windows(2).any(|w| w[0] > w[1]) {
            return Err(format!("pair {case} {g}: γ {gamma:?}"));
        }
        if gamma.len() > 1 + g.theta.iter().filter(|&&b| b == 1).count() {
            return Err(format!("pair {case} {g}: {} exits", gamma.len()));
        }
    }
    Ok(())
}

/// Head MACs by hand: optional `w×w` pooling, optional 3×3 same-padded
/// convolution to `conv` channels, then dense to `classes` plus dense to 1.
pub fn head_macs(
    feature: [usize; 3],
    classes: usize,
    conv: Option<usize>,
    window: Option<usize>,
) -> u64 {
    let [c, h, w] = feature;
    let (h, w) = window.map_or((h, w), |k| (h / k, w / k));
    let (c, trunk) = match conv {
        Some(k) => (k, 9 * c * k * h * w),
        None => (c, 0),
    };
    (trunk + c * h * w * (classes + 1)) as u64
}

/// Oversized first-exit heads whose unpooled cost exceeds the next exit;
/// the placed window must equal the smallest one found by trying every window.
/// Returns the windows that were verified.
pub fn minimal_window_cases(cases: usize) -> Result<Vec<usize>, String> {
    let mut verified = Vec::new();
    let widths = [16, 24, 32];
    let mut k = 0;
    while verified.len() < cases {
        if k > 500 {
            return Err(format!("only {} violations constructed", verified.len()));
        }
        let depth = [1, 2, 3][k % 3];
        let width = widths[(k / 3) % 3];
        let head_channels = 48 + 16 * (k / 9);
        k += 1;
        let stages = [StageGene {
            depth,
            kernel: 3,
            width,
        }; STAGES];
        let g = Genome::new(stages, [1, 0, 0, 0]).map_err(|e| e.to_string())?;
        let backbone = decode_genome(&g, [3, 16, 16], 10).map_err(|e| e.to_string())?;
        let spec = place_exits_with_heads(&backbone, &g.theta, MAX_EXITS, head_channels)
            .map_err(|e| e.to_string())?;
        if spec.exits.len() != 2 {
            return Err(format!("{g}: expected two exits"));
        }
        let after = spec.exits[0].after_block;
        let feature = spec.feature_shape(after);
        let prefix = spec.prefix_macs(after);
        let limit = spec.gamma.as_slice()[1];
        let unpooled = prefix + head_macs(feature, 10, Some(head_channels), None);
        if unpooled as f64 <= limit {
            continue;
        }
        let oracle = (2..=feature[1].min(feature[2])).find(|&w| {
            (prefix + head_macs(feature, 10, Some(head_channels), Some(w))) as f64 <= limit
        });
        let Some(w) = oracle else {
            continue;
        };
        let head = &spec.exits[0].head;
        if head.pool_window != Some(w) || head.conv_channels != Some(head_channels) {
            return Err(format!(
                "{g} with {head_channels}-channel head: placed window {:?}, minimal {w}",
                head.pool_window
            ));
        }
        if spec.gamma.as_slice()[0]
            != (prefix + head_macs(feature, 10, Some(head_channels), Some(w))) as f64
        {
            return Err(format!("{g}: γ_1 disagrees with the hand count"));
        }
        verified.push(w);
    }
    Ok(verified)
}

pub fn random_table(b: usize, n: usize, rng: &mut ChaCha8Rng) -> ExitTable {
    ExitTable {
        labels: (0..n).map(|_| rng.random_range(0..10)).collect(),
        predictions: (0..b)
            .map(|_| (0..n).map(|_| rng.random_range(0..10)).collect())
            .collect(),
        confidences: (0..b)
            .map(|i| {
                (0..n)
                    .map(|_| if i + 1 == b { 1.0 } else { rng.random() })
                    .collect()
            })
            .collect(),
    }
}

/// Lowering any single threshold never lowers that exit's utilization and
/// never raises the utilization summed over later exits.
pub fn threshold_monotonicity(tables: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..tables {
        let b = rng.random_range(2..=MAX_EXITS);
        let table = random_table(b, rng.random_range(1..300), &mut rng);
        let gamma: Vec<f64> = (1..=b).map(|i| i as f64).collect();
        for _ in 0..10 {
            let th: Vec<f64> = (0..b - 1).map(|_| rng.random()).collect();
            let base = evaluate_thresholds(&table, &gamma, &th).map_err(|e| e.to_string())?;
            for i in 0..b - 1 {
                let mut lower = th.clone();
                lower[i] = rng.random_range(0.0..=th[i]);
                let low = evaluate_thresholds(&table, &gamma, &lower).map_err(|e| e.to_string())?;
                let later = |u: &[f64]| u[i + 1..].iter().sum::<f64>();
                if low.utilization[i] < base.utilization[i]
                    || later(&low.utilization) > later(&base.utilization) + 1e-12
                {
                    return Err(format!(
                        "table {case}, ε_{} {} → {}: U {:?} → {:?}",
                        i + 1,
                        th[i],
                        lower[i],
                        base.utilization,
                        low.utilization
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Confidences on the grid k/8 with exactly k/8 of each bin's samples
/// correct, shuffled; every bin's mean confidence equals its accuracy.
pub fn calibrated_ece(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for k in 0..=8 {
        let groups = rng.random_range(1..4);
        for _ in 0..groups {
            for s in 0..8 {
                samples.push((k as f64 / 8.0, s < k));
            }
        }
    }
    samples.shuffle(&mut rng);
    let (c, ok): (Vec<f64>, Vec<bool>) = samples.into_iter().unzip();
    compute_ece(&c, &ok, 10).unwrap()
}
