use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostVector, Genome};
use crate::train::EvaluationResult;

pub const ARCHIVE_VERSION: u32 = 1;

/// One trained and measured candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub version: u32,
    pub id: usize,
    /// Search iteration that proposed the candidate; 0 for the initial sample.
    pub iteration: usize,
    #[serde(with = "genome_text")]
    pub genome: Genome,
    pub seed: u64,
    pub accuracy: f64,
    pub macs: f64,
    pub thresholds: Vec<f64>,
    pub utilization: Vec<f64>,
    pub gamma: CostVector,
    pub backbone_accuracy: f64,
    pub ece: Vec<f64>,
    pub expected_cost: f64,
    pub peak_gap: f64,
}

mod genome_text {
    use super::Genome;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &Genome, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(g)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Genome, D::Error> {
        let text = String::deserialize(d)?;
        Genome::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl ArchiveEntry {
    pub fn from_evaluation(
        id: usize,
        iteration: usize,
        genome: Genome,
        seed: u64,
        ev: &EvaluationResult,
    ) -> Self {
        ArchiveEntry {
            version: ARCHIVE_VERSION,
            id,
            iteration,
            genome,
            seed,
            accuracy: ev.accuracy,
            macs: ev.macs,
            thresholds: ev.thresholds.clone(),
            utilization: ev.utilization.clone(),
            gamma: ev.gamma.clone(),
            backbone_accuracy: ev.backbone_accuracy,
            ece: ev.ece.clone(),
            expected_cost: ev.expected_cost,
            peak_gap: ev.peak_gap,
        }
    }

    /// Number of exits, final one included.
    pub fn exits(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_admissible(&self, min_accuracy: f64, max_macs: Option<f64>) -> bool {
        self.accuracy >= min_accuracy && max_macs.is_none_or(|m| self.macs <= m)
    }

    /// Relative constraint violation; 0 for admissible entries.
    pub fn violation(&self, min_accuracy: f64, max_macs: Option<f64>) -> f64 {
        let mut v = 0.0;
        if min_accuracy > 0.0 {
            v += (min_accuracy - self.accuracy).max(0.0) / min_accuracy;
        }
        if let Some(m) = max_macs.filter(|&m| m > 0.0) {
            v += (self.macs - m).max(0.0) / m;
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::contract(format!("archive entry {}: {why}", self.id)));
        let b = self.exits();
        if b == 0 {
            return bad("empty cost vector".into());
        }
        if !self.gamma.is_non_decreasing() {
            return bad("exit costs decrease along the network".into());
        }
        if self.utilization.len() != b || self.ece.len() != b || self.thresholds.len() + 1 != b {
            return bad(format!(
                "{} exits but {} utilizations, {} ECE values and {} thresholds",
                b,
                self.utilization.len(),
                self.ece.len(),
                self.thresholds.len()
            ));
        }
        let finite = [
            self.accuracy,
            self.macs,
            self.backbone_accuracy,
            self.expected_cost,
            self.peak_gap,
        ]
        .iter()
        .chain(&self.thresholds)
        .chain(&self.utilization)
        .chain(&self.ece)
        .chain(self.gamma.as_slice())
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite value".into());
        }
        if !(0.0..=1.0).contains(&self.accuracy) || !(0.0..=1.0).contains(&self.backbone_accuracy) {
            return bad("accuracy outside [0, 1]".into());
        }
        if self.utilization.iter().any(|u| *u < 0.0)
            || (self.utilization.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("utilization is not a distribution".into());
        }
        if self.macs < 0.0 {
            return bad("negative MACs".into());
        }
        Ok(())
    }
}

/// Measured candidates keyed by chromosome.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
    index: HashMap<Genome, usize>,
}

impl Archive {
    pub fn new() -> Self {
        Archive::default()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, g: &Genome) -> bool {
        self.index.contains_key(g)
    }

    pub fn get(&self, g: &Genome) -> Option<&ArchiveEntry> {
        self.index.get(g).map(|&i| &self.entries[i])
    }

    pub fn next_id(&self) -> usize {
        self.entries.iter().map(|e| e.id + 1).max().unwrap_or(0)
    }

    pub fn push(&mut self, entry: ArchiveEntry) -> Result<()> {
        entry.validate()?;
        if self.index.contains_key(&entry.genome) {
            return Err(Error::contract(format!(
                "genome {} is already archived",
                entry.genome
            )));
        }
        self.index.insert(entry.genome, self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// Minimized objective pairs `(−F_A, F_M)`.
    pub fn objectives(&self) -> Vec<[f64; 2]> {
        self.entries.iter().map(|e| [-e.accuracy, e.macs]).collect()
    }

    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let mut archive = Archive::new();
        let mut warned = false;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| Error::CorruptRecord {
                line: line_no,
                reason,
            };
            let entry: ArchiveEntry =
                serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            if entry.version > ARCHIVE_VERSION {
                return Err(corrupt(format!(
                    "unsupported archive version {}",
                    entry.version
                )));
            }
            if entry.version < ARCHIVE_VERSION && !warned {
                log::warn!(
                    "archive written by version {} (current {ARCHIVE_VERSION}); loading validated records",
                    entry.version
                );
                warned = true;
            }
            archive.push(entry).map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ndjson()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Archive::from_ndjson(&text)
    }
}

/// Appends one record to an NDJSON archive file.
pub fn append_entry(path: &Path, entry: &ArchiveEntry) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(entry)?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Earliest iteration holding an admissible entry.
pub fn first_admissible_iteration(
    archive: &Archive,
    min_accuracy: f64,
    max_macs: Option<f64>,
) -> Option<usize> {
    archive
        .entries()
        .iter()
        .filter(|e| e.is_admissible(min_accuracy, max_macs))
        .map(|e| e.iteration)
        .min()
}
