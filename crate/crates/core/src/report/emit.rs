use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::search::{knee_index, pareto_indices, Archive, ArchiveEntry};
use crate::train::{evaluate_thresholds, ExitTable, GRID_STEPS};

pub const HISTOGRAM_BINS: usize = 20;

/// Archive positions on the measured front and the position of its knee.
pub fn front_and_knee(archive: &Archive) -> (Vec<usize>, Option<usize>) {
    let pts = archive.objectives();
    if pts.is_empty() {
        return (Vec::new(), None);
    }
    let front = pareto_indices(&pts);
    let front_pts: Vec<[f64; 2]> = front.iter().map(|&i| pts[i]).collect();
    let knee = knee_index(&front_pts).ok().map(|k| front[k]);
    (front, knee)
}

fn list(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(" ")
}

/// One row per entry in archive order.
pub fn results_csv(archive: &Archive, min_accuracy: f64, max_macs: Option<f64>) -> Result<String> {
    let (front, knee) = front_and_knee(archive);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "id",
        "iteration",
        "genome",
        "theta",
        "B",
        "F_A (%)",
        "F_M (M)",
        "U (%)",
        "thresholds",
        "gamma",
        "backbone F_A (%)",
        "ECE (%)",
        "seed",
        "admissible",
        "pareto",
        "knee",
    ];
    w.write_record(header).map_err(csv_err)?;
    for (i, e) in archive.entries().iter().enumerate() {
        let theta: String = e.genome.theta.iter().map(|b| b.to_string()).collect();
        let row = [
            e.id.to_string(),
            e.iteration.to_string(),
            e.genome.to_string(),
            theta,
            e.exits().to_string(),
            format!("{:.2}", 100.0 * e.accuracy),
            format!("{:.4}", e.macs / 1e6),
            list(e.utilization.iter().map(|u| format!("{:.2}", 100.0 * u))),
            list(e.thresholds.iter().map(|t| format!("{t}"))),
            serde_json::to_string(&e.gamma)?,
            format!("{:.2}", 100.0 * e.backbone_accuracy),
            list(e.ece.iter().map(|v| format!("{v:.2}"))),
            e.seed.to_string(),
            e.is_admissible(min_accuracy, max_macs).to_string(),
            front.contains(&i).to_string(),
            (knee == Some(i)).to_string(),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::contract(format!("csv: {e}"))
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub from: f64,
    pub to: f64,
}

impl Axis {
    fn spanning(values: impl IntoIterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        Axis {
            min: lo - pad,
            max: hi + pad,
            from,
            to,
        }
    }

    pub fn map(&self, v: f64) -> f64 {
        self.from + (v - self.min) / (self.max - self.min) * (self.to - self.from)
    }
}

pub const SVG_WIDTH: f64 = 640.0;
pub const SVG_HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Axes of the Pareto plot: adaptive MACs in millions on x, accuracy in percent on y.
pub fn pareto_axes(archive: &Archive, min_accuracy: f64, max_macs: Option<f64>) -> (Axis, Axis) {
    let xs = archive
        .entries()
        .iter()
        .map(|e| e.macs / 1e6)
        .chain(max_macs.map(|m| m / 1e6));
    let ys = archive
        .entries()
        .iter()
        .map(|e| 100.0 * e.accuracy)
        .chain(std::iter::once(100.0 * min_accuracy));
    (
        Axis::spanning(xs, LEFT, SVG_WIDTH - RIGHT),
        Axis::spanning(ys, SVG_HEIGHT - BOTTOM, TOP),
    )
}

/// Scatter of (F_M, F_A) with the measured front, its knee and the constraint lines.
pub fn pareto_svg(archive: &Archive, min_accuracy: f64, max_macs: Option<f64>) -> String {
    let (front, knee) = front_and_knee(archive);
    let (x, y) = pareto_axes(archive, min_accuracy, max_macs);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<g id="plot" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
        x.min, x.max, y.min, y.max
    );
    let (x0, x1, y0, y1) = (x.from, x.to, y.from, y.to);
    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y0 - y1
    );
    for t in 0..=4 {
        let vx = x.min + (x.max - x.min) * t as f64 / 4.0;
        let vy = y.min + (y.max - y.min) * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{}" text-anchor="middle">{vx:.2}</text>"#,
            x.map(vx),
            y0 + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.3}" text-anchor="end">{vy:.1}</text>"#,
            x0 - 6.0,
            y.map(vy) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">adaptive MACs F_M (M)</text>"#,
        (x0 + x1) / 2.0,
        SVG_HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">accuracy F_A (%)</text>"#,
        (y0 + y1) / 2.0
    );
    if let Some(m) = max_macs {
        let px = x.map(m / 1e6);
        let _ = writeln!(
            s,
            r##"<line class="constraint" data-axis="x" data-value="{}" x1="{px:.3}" y1="{y1}" x2="{px:.3}" y2="{y0}" stroke="#c00" stroke-dasharray="6 4"/>"##,
            m / 1e6
        );
    }
    let py = y.map(100.0 * min_accuracy);
    let _ = writeln!(
        s,
        r##"<line class="constraint" data-axis="y" data-value="{}" x1="{x0}" y1="{py:.3}" x2="{x1}" y2="{py:.3}" stroke="#c00" stroke-dasharray="6 4"/>"##,
        100.0 * min_accuracy
    );
    let entries = archive.entries();
    let mut on_front: Vec<usize> = front.clone();
    on_front.sort_by(|&a, &b| entries[a].macs.total_cmp(&entries[b].macs).then(a.cmp(&b)));
    if on_front.len() > 1 {
        let pts: Vec<String> = on_front
            .iter()
            .map(|&i| {
                format!(
                    "{:.3},{:.3}",
                    x.map(entries[i].macs / 1e6),
                    y.map(100.0 * entries[i].accuracy)
                )
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline class="front" points="{}" fill="none" stroke="#1565c0"/>"##,
            pts.join(" ")
        );
    }
    for (i, e) in entries.iter().enumerate() {
        let (class, fill, r) = if knee == Some(i) {
            ("entry pareto knee", "#ff8f00", 6)
        } else if front.contains(&i) {
            ("entry pareto", "#1565c0", 4)
        } else {
            ("entry", "#9e9e9e", 3)
        };
        let _ = writeln!(
            s,
            r#"<circle class="{class}" cx="{:.3}" cy="{:.3}" r="{r}" fill="{fill}"><title>{} {} F_A {:.2}% F_M {:.4} M</title></circle>"#,
            x.map(e.macs / 1e6),
            y.map(100.0 * e.accuracy),
            e.id,
            e.genome,
            100.0 * e.accuracy,
            e.macs / 1e6
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Utilization of exit 2 over an `ε_1 × ε_2` grid, other thresholds at their tuned values.
pub fn heatmap_csv(entry: &ArchiveEntry, table: &ExitTable) -> Result<String> {
    let b = table.exits();
    if b < 2 {
        return Err(Error::contract(format!(
            "entry {} has a single exit",
            entry.id
        )));
    }
    let mut out = String::from("eps1,eps2,u2\n");
    for i in 0..=GRID_STEPS {
        for j in 0..=GRID_STEPS {
            let (e1, e2) = (i as f64 / GRID_STEPS as f64, j as f64 / GRID_STEPS as f64);
            let mut th = entry.thresholds.clone();
            th[0] = e1;
            if b > 2 {
                th[1] = e2;
            }
            let o = evaluate_thresholds(table, entry.gamma.as_slice(), &th)?;
            let _ = writeln!(out, "{e1},{e2},{}", o.utilization[1]);
        }
    }
    Ok(out)
}

/// Per-exit histogram of raw confidences over `[0, 1]`.
pub fn histogram_csv(table: &ExitTable) -> String {
    let mut out = String::from("exit,bin,lower,upper,count\n");
    for (i, conf) in table.confidences.iter().enumerate() {
        let mut counts = [0usize; HISTOGRAM_BINS];
        for &c in conf {
            let k = ((c * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[k] += 1;
        }
        for (k, n) in counts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{k},{},{},{n}",
                i + 1,
                k as f64 / HISTOGRAM_BINS as f64,
                (k + 1) as f64 / HISTOGRAM_BINS as f64
            );
        }
    }
    out
}

pub fn table_path(tables: &Path, id: usize) -> PathBuf {
    tables.join(format!("{id}.json"))
}

pub fn save_table(tables: &Path, id: usize, table: &ExitTable) -> Result<()> {
    fs::create_dir_all(tables).map_err(|e| Error::io(tables, e))?;
    let path = table_path(tables, id);
    fs::write(&path, serde_json::to_string(table)?).map_err(|e| Error::io(&path, e))
}

pub fn load_table(tables: &Path, id: usize) -> Result<ExitTable> {
    let path = table_path(tables, id);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Files written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub pareto: PathBuf,
    pub heatmap: Option<PathBuf>,
    pub histograms: Option<PathBuf>,
}

/// Writes the tables and plots for `archive` into `dir`. The per-entry files
/// describe `entry` (an archive position), defaulting to the knee; they are
/// skipped when no cached exit table exists for it.
pub fn emit_report(
    archive: &Archive,
    tables: &Path,
    dir: &Path,
    min_accuracy: f64,
    max_macs: Option<f64>,
    entry: Option<usize>,
) -> Result<ReportFiles> {
    if archive.is_empty() {
        return Err(Error::contract("archive contains no entries"));
    }
    let pos = match entry {
        Some(p) if p >= archive.len() => {
            return Err(Error::contract(format!(
                "entry {p} is out of range for an archive of {}",
                archive.len()
            )))
        }
        Some(p) => p,
        None => front_and_knee(archive)
            .1
            .expect("non-empty archive has a knee"),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let results = write(
        "results.csv",
        &results_csv(archive, min_accuracy, max_macs)?,
    )?;
    let pareto = write("pareto.svg", &pareto_svg(archive, min_accuracy, max_macs))?;
    let e = &archive.entries()[pos];
    let (mut heatmap, mut histograms) = (None, None);
    if table_path(tables, e.id).exists() {
        let table = load_table(tables, e.id)?;
        histograms = Some(write("histograms.csv", &histogram_csv(&table))?);
        if table.exits() > 1 {
            heatmap = Some(write("heatmap.csv", &heatmap_csv(e, &table)?)?);
        }
    } else {
        log::warn!(
            "no cached exit table for entry {}; skipping heatmap and histograms",
            e.id
        );
    }
    Ok(ReportFiles {
        results,
        pareto,
        heatmap,
        histograms,
    })
}
