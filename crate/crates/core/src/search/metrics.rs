use crate::error::{Error, Result};

/// Fraction of `macs` values within the budget.
pub fn admissible_ratio(macs: &[f64], max_macs: f64) -> Result<f64> {
    if macs.is_empty() {
        return Err(Error::contract("admissible ratio of an empty population"));
    }
    let ok = macs.iter().filter(|&&m| m <= max_macs).count();
    Ok(ok as f64 / macs.len() as f64)
}

/// Constraint-aware MAC objective: `φ·F_M + (1 − φ)·max(0, F_M − F̄_M)`.
pub fn fcm(macs: f64, max_macs: f64, phi: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&phi));
    phi * macs + (1.0 - phi) * (macs - max_macs).max(0.0)
}

/// Kendall's τ-b. Returns 0 when either side is entirely tied.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "kendall_tau over sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::contract(
            "kendall_tau needs at least two observations",
        ));
    }
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = sign(a[i] - a[j]);
            let db = sign(b[i] - b[j]);
            match (da, db) {
                (0, 0) => {
                    ties_a += 1;
                    ties_b += 1;
                }
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_a) * (n0 - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((concordant - discordant) as f64 / denom)
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `a` dominates `b` when it is no worse everywhere and better somewhere (minimization).
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Indices of the non-dominated points.
pub fn pareto_indices(points: &[[f64; 2]]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}

/// Area dominated by `points` and bounded by `reference` (both objectives minimized).
pub fn hypervolume(points: &[[f64; 2]], reference: [f64; 2]) -> f64 {
    let mut front: Vec<[f64; 2]> = pareto_indices(points)
        .into_iter()
        .map(|i| points[i])
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    front.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    front.dedup();
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in front {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

fn normalizer(points: &[[f64; 2]]) -> impl Fn(&[f64; 2]) -> [f64; 2] {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    move |p| {
        let mut out = [0.0; 2];
        for d in 0..2 {
            let span = hi[d] - lo[d];
            out[d] = if span > 0.0 {
                (p[d] - lo[d]) / span
            } else {
                0.0
            };
        }
        out
    }
}

/// Knee of a front of minimized objective pairs: the point farthest from the
/// segment joining the extremes after normalizing each objective to `[0, 1]`.
/// Ties go to the smaller first objective.
pub fn knee_index(front: &[[f64; 2]]) -> Result<usize> {
    if front.is_empty() {
        return Err(Error::contract("knee of an empty front"));
    }
    let norm = normalizer(front);
    let pts: Vec<[f64; 2]> = front.iter().map(&norm).collect();
    let by_first = |a: &usize, b: &usize| {
        pts[*a][0]
            .total_cmp(&pts[*b][0])
            .then(pts[*a][1].total_cmp(&pts[*b][1]))
    };
    let idx: Vec<usize> = (0..pts.len()).collect();
    let lo = *idx.iter().min_by(|a, b| by_first(a, b)).unwrap();
    let hi = *idx.iter().max_by(|a, b| by_first(a, b)).unwrap();
    let (p, q) = (pts[lo], pts[hi]);
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let dist = |r: &[f64; 2]| {
        if len == 0.0 {
            0.0
        } else {
            (dy * (r[0] - p[0]) - dx * (r[1] - p[1])).abs() / len
        }
    };
    let best = idx
        .iter()
        .copied()
        .max_by(|&a, &b| {
            dist(&pts[a])
                .total_cmp(&dist(&pts[b]))
                .then_with(|| front[b][0].total_cmp(&front[a][0]))
                .then_with(|| b.cmp(&a))
        })
        .unwrap();
    Ok(best)
}

/// Indices ordered by normalized distance to `points[center]`, `center`
/// first, truncated to `k`. Ties go to the smaller first objective.
pub fn nearest_to(points: &[[f64; 2]], center: usize, k: usize) -> Vec<usize> {
    let norm = normalizer(points);
    let c = norm(&points[center]);
    let dist = |i: usize| {
        let p = norm(&points[i]);
        ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
    };
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| i != center).collect();
    order.sort_by(|&a, &b| {
        dist(a)
            .total_cmp(&dist(b))
            .then(points[a][0].total_cmp(&points[b][0]))
            .then(a.cmp(&b))
    });
    order.insert(0, center);
    order.truncate(k);
    order
}

/// The knee of `front` and the points nearest to it, `k` in total.
pub fn select_tradeoff(front: &[[f64; 2]], k: usize) -> Result<Vec<usize>> {
    Ok(nearest_to(front, knee_index(front)?, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(admissible_ratio(&[1.0, 2.0], 5.0).unwrap(), 1.0);
        assert_eq!(admissible_ratio(&[6.0, 7.0], 5.0).unwrap(), 0.0);
        let m = [1.0, 9.0, 9.0, 2.0, 9.0, 9.0, 5.0, 9.0];
        assert_eq!(admissible_ratio(&m, 5.0).unwrap(), 3.0 / 8.0);
        assert!(admissible_ratio(&[], 5.0).is_err());
    }

    #[test]
    fn fcm_examples() {
        assert_eq!(fcm(3.7, 2.7, 1.0), 3.7);
        assert!((fcm(3.0, 2.7, 0.0) - 0.3).abs() < 1e-12);
        assert!((fcm(3.7, 2.7, 0.5) - 2.35).abs() < 1e-12);
        assert_eq!(fcm(2.0, 2.7, 0.0), 0.0);
    }

    #[test]
    fn tau_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        let r = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&a, &r).unwrap(), -1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&a, &a[..3]).is_err());
    }

    #[test]
    fn hypervolume_of_a_staircase() {
        let pts = [[1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [3.0, 3.0]];
        assert_eq!(hypervolume(&pts, [4.0, 4.0]), 3.0 + 2.0 + 1.0);
        assert_eq!(hypervolume(&[], [4.0, 4.0]), 0.0);
    }

    #[test]
    fn knee_examples() {
        assert_eq!(knee_index(&[[0.4, 0.2]]).unwrap(), 0);
        let front = [[0.0, 1.0], [0.3, 0.3], [1.0, 0.0]];
        assert_eq!(knee_index(&front).unwrap(), 1);
        let scaled: Vec<[f64; 2]> = front
            .iter()
            .map(|p| [5.0 * p[0] - 2.0, 1e6 * p[1] + 3.0])
            .collect();
        assert_eq!(knee_index(&scaled).unwrap(), 1);
        assert_eq!(select_tradeoff(&front, 2).unwrap()[0], 1);
    }
}
