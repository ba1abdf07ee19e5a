use eenas::model::{CostVector, Genome};
use eenas::report::{
    emit_report, heatmap_csv, histogram_csv, pareto_svg, results_csv, save_table, HISTOGRAM_BINS,
};
use eenas::search::{Archive, ArchiveEntry, ARCHIVE_VERSION};
use eenas::train::{ExitTable, GRID_STEPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_entry(id: usize, rng: &mut ChaCha8Rng) -> ArchiveEntry {
    let genome = Genome::random(rng);
    let b = 1 + genome.theta.iter().filter(|&&t| t == 1).count();
    let mut gamma: Vec<f64> = (0..b).map(|_| rng.random_range(1e4..4e6)).collect();
    gamma.sort_by(f64::total_cmp);
    let mut utilization: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
    let total: f64 = utilization.iter().sum();
    utilization.iter_mut().for_each(|u| *u /= total);
    ArchiveEntry {
        version: ARCHIVE_VERSION,
        id,
        iteration: rng.random_range(0..10),
        genome,
        seed: rng.random(),
        accuracy: rng.random(),
        macs: rng.random_range(1e4..4e6),
        thresholds: (1..b).map(|_| rng.random()).collect(),
        utilization,
        gamma: CostVector(gamma),
        backbone_accuracy: rng.random(),
        ece: (0..b).map(|_| rng.random_range(0.0..30.0)).collect(),
        expected_cost: rng.random_range(1e4..4e6),
        peak_gap: rng.random(),
    }
}

fn random_archive(n: usize, rng: &mut ChaCha8Rng) -> Archive {
    let mut a = Archive::new();
    while a.len() < n {
        let e = random_entry(a.len(), rng);
        if !a.contains(&e.genome) {
            a.push(e).unwrap();
        }
    }
    a
}

fn random_table(b: usize, n: usize, rng: &mut ChaCha8Rng) -> ExitTable {
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

#[test]
fn archives_round_trip_through_ndjson() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("archive.ndjson");
    for case in 0..100 {
        let n = rng.random_range(0..12);
        let a = random_archive(n, &mut rng);
        a.save(&path).unwrap();
        let back = Archive::load(&path).unwrap();
        assert_eq!(back.entries(), a.entries(), "case {case}");
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), n);
    }
}

#[test]
fn single_entry_csv_gamma_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let a = random_archive(1, &mut rng);
    let text = results_csv(&a, 0.5, Some(1e6)).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let gamma: CostVector = serde_json::from_str(&rows[0][col("gamma")]).unwrap();
    assert_eq!(gamma, a.entries()[0].gamma);
    assert_eq!(rows[0][col("B")], a.entries()[0].exits().to_string());
    assert_eq!(rows[0][col("genome")], a.entries()[0].genome.to_string());
    assert_eq!(&rows[0][col("pareto")], "true");
    assert_eq!(&rows[0][col("knee")], "true");
}

fn attr(tag: &str, name: &str) -> f64 {
    let key = format!(" {name}=\"");
    let start = tag.find(&key).unwrap() + key.len();
    let end = start + tag[start..].find('"').unwrap();
    tag[start..end].parse().unwrap()
}

#[test]
fn constraint_lines_sit_at_the_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let a = random_archive(rng.random_range(1..15), &mut rng);
        let min_acc = rng.random::<f64>();
        let max_macs = rng.random_range(1e4..4e6);
        let svg = pareto_svg(&a, min_acc, Some(max_macs));

        // Plot area: 640×480 canvas, margins 70/20 horizontally and 30/50 vertically,
        // data range padded by 5% on each side.
        let pad = |v: Vec<f64>| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - p, hi + p)
        };
        let mut xs: Vec<f64> = a.entries().iter().map(|e| e.macs / 1e6).collect();
        xs.push(max_macs / 1e6);
        let mut ys: Vec<f64> = a.entries().iter().map(|e| 100.0 * e.accuracy).collect();
        ys.push(100.0 * min_acc);
        let (x_lo, x_hi) = pad(xs);
        let (y_lo, y_hi) = pad(ys);
        let px = 70.0 + (max_macs / 1e6 - x_lo) / (x_hi - x_lo) * 550.0;
        let py = 430.0 - (100.0 * min_acc - y_lo) / (y_hi - y_lo) * 400.0;

        let lines: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains("class=\"constraint\""))
            .collect();
        assert_eq!(lines.len(), 2);
        let vertical = lines
            .iter()
            .find(|l| l.contains("data-axis=\"x\""))
            .unwrap();
        let horizontal = lines
            .iter()
            .find(|l| l.contains("data-axis=\"y\""))
            .unwrap();
        assert!((attr(vertical, "x1") - px).abs() < 1e-3);
        assert_eq!(attr(vertical, "x1"), attr(vertical, "x2"));
        assert!((attr(horizontal, "y1") - py).abs() < 1e-3);
        assert_eq!(attr(horizontal, "y1"), attr(horizontal, "y2"));
        assert!((attr(vertical, "data-value") - max_macs / 1e6).abs() < 1e-9);
    }
}

#[test]
fn zero_first_threshold_empties_exit_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut entry = random_entry(0, &mut rng);
    while entry.exits() < 3 {
        entry = random_entry(0, &mut rng);
    }
    let table = random_table(entry.exits(), 200, &mut rng);
    let csv_text = heatmap_csv(&entry, &table).unwrap();
    let rows: Vec<Vec<f64>> = csv_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), (GRID_STEPS + 1) * (GRID_STEPS + 1));
    for r in &rows {
        if r[0] == 0.0 {
            assert_eq!(r[2], 0.0);
        }
        assert!((0.0..=1.0).contains(&r[2]));
    }
    // With ε_1 = 1 only samples whose first confidence is exactly one leave early,
    // so exit two sees at least one sample at ε_2 = 0.
    assert!(rows
        .iter()
        .any(|r| r[0] == 1.0 && r[1] == 0.0 && r[2] > 0.0));

    let single = {
        let mut e = random_entry(1, &mut rng);
        while e.exits() != 1 {
            e = random_entry(1, &mut rng);
        }
        e
    };
    assert!(heatmap_csv(&single, &random_table(1, 10, &mut rng)).is_err());
}

#[test]
fn histograms_count_every_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let table = random_table(3, 157, &mut rng);
    let text = histogram_csv(&table);
    let mut totals = [0usize; 3];
    let mut lines = 0;
    for l in text.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        totals[f[0].parse::<usize>().unwrap() - 1] += f[4].parse::<usize>().unwrap();
        lines += 1;
    }
    assert_eq!(lines, 3 * HISTOGRAM_BINS);
    assert_eq!(totals, [157; 3]);
    let last_bin = text
        .lines()
        .find(|l| l.starts_with(&format!("3,{},", HISTOGRAM_BINS - 1)))
        .unwrap();
    assert!(last_bin.ends_with(",157"));
}

#[test]
fn reports_regenerate_byte_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let a = random_archive(9, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    for e in a.entries() {
        save_table(&tables, e.id, &random_table(e.exits(), 50, &mut rng)).unwrap();
    }
    let first = emit_report(&a, &tables, &dir.path().join("r1"), 0.4, Some(2e6), None).unwrap();
    let second = emit_report(&a, &tables, &dir.path().join("r2"), 0.4, Some(2e6), None).unwrap();
    assert!(first.histograms.is_some());
    for name in ["results.csv", "pareto.svg", "histograms.csv"] {
        let x = std::fs::read(dir.path().join("r1").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("r2").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(first.heatmap.is_some(), second.heatmap.is_some());
}

#[test]
fn report_guards() {
    let dir = tempfile::tempdir().unwrap();
    let err = emit_report(&Archive::new(), dir.path(), dir.path(), 0.5, None, None).unwrap_err();
    assert!(err.to_string().contains("archive contains no entries"));
    let a = random_archive(3, &mut ChaCha8Rng::seed_from_u64(37));
    assert!(emit_report(&a, dir.path(), dir.path(), 0.5, None, Some(3)).is_err());
    assert!(emit_report(&a, dir.path(), dir.path(), 0.5, None, Some(2)).is_ok());
}
