use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::emit::{emit_report, save_table, ReportFiles};
use crate::autodiff::ParamSet;
use crate::data::{split_stratified, Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{decode_genome, place_exits, EennModel, EennSpec, Genome, MAX_EXITS};
use crate::search::{append_entry, search_loop, Archive, SearchOutcome, ARCHIVE_VERSION};
use crate::train::{
    evaluate, evaluate_thresholds, train_eenn, tune_thresholds, EvaluationResult, ExitTable,
};

pub const CRATE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of an output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub archive_version: u32,
    /// SHA-256 of the bytes of the `config.json` stored next to the manifest.
    pub config_hash: String,
    pub seed: u64,
}

fn config_text(cfg: &RunConfig) -> String {
    cfg.canonical_json() + "\n"
}

pub fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(config_text(cfg).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Output locations inside a run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn archive(&self) -> PathBuf {
        self.root.join("archive.ndjson")
    }
    pub fn tables(&self) -> PathBuf {
        self.root.join("tables")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Creates the run directory and records the config and manifest.
pub fn prepare(cfg: &RunConfig, paths: &RunPaths, command: &str) -> Result<()> {
    fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
    fs::write(paths.config(), config_text(cfg)).map_err(|e| Error::io(paths.config(), e))?;
    write_json(
        &paths.manifest(),
        &Manifest {
            command: command.into(),
            crate_version: CRATE_VERSION.into(),
            archive_version: ARCHIVE_VERSION,
            config_hash: config_hash(cfg),
            seed: cfg.seed,
        },
    )
}

/// Reads a manifest, warning when it predates the current archive format.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(path)?;
    if m.archive_version < ARCHIVE_VERSION {
        log::warn!(
            "{} was written with archive version {} (current {ARCHIVE_VERSION})",
            path.display(),
            m.archive_version
        );
    }
    Ok(m)
}

pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Split)> {
    let ds = cfg.load_dataset()?;
    let split = split_stratified(&ds, cfg.split_fractions(), cfg.dataset.seed)?;
    Ok((ds, split))
}

/// Full search: archive, cached exit tables, selection, log and report.
pub fn run_search(
    cfg: &RunConfig,
    paths: &RunPaths,
    resume: Option<&Path>,
) -> Result<SearchOutcome> {
    let resumed = resume.map(Archive::load).transpose()?;
    if let Some(a) = &resumed {
        log::info!("resuming with {} archived candidates", a.len());
    }
    prepare(cfg, paths, "search")?;
    let (ds, split) = load_data(cfg)?;
    let archive_path = paths.archive();
    fs::write(&archive_path, "").map_err(|e| Error::io(&archive_path, e))?;
    let tables = paths.tables();
    let mut sink = |entry: &crate::search::ArchiveEntry, table: Option<&ExitTable>| -> Result<()> {
        if let Some(t) = table {
            save_table(&tables, entry.id, t)?;
        }
        append_entry(&archive_path, entry)
    };
    let outcome = search_loop(
        &cfg.search_config(),
        &cfg.train_config(),
        &ds,
        &split,
        resumed,
        &mut sink,
    )?;
    outcome.archive.save(&archive_path)?;
    write_json(&paths.root.join("selection.json"), &outcome.selection)?;
    write_json(&paths.root.join("search_log.json"), &outcome.log)?;
    emit_report(
        &outcome.archive,
        &tables,
        &paths.report(),
        cfg.constraints.min_accuracy,
        cfg.constraints.max_macs,
        None,
    )?;
    Ok(outcome)
}

/// Trains one explicit genome and stores its checkpoint and evaluation.
pub fn run_train_one(
    cfg: &RunConfig,
    paths: &RunPaths,
    genome: &Genome,
) -> Result<EvaluationResult> {
    prepare(cfg, paths, "train-one")?;
    let (ds, split) = load_data(cfg)?;
    let backbone = decode_genome(genome, ds.shape(), ds.classes())?;
    let spec = place_exits(&backbone, &genome.theta, MAX_EXITS)?;
    let train = cfg.train_config();
    let trained = train_eenn(&spec, &ds, &split, &train)?;
    let (ev, table) = evaluate(&trained, &ds, &split, &train)?;
    let dir = paths.checkpoint();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fs::write(dir.join("spec.json"), spec.to_json()?)
        .map_err(|e| Error::io(dir.join("spec.json"), e))?;
    trained.model.params.save(&dir.join("params.ckpt"))?;
    write_json(&paths.root.join("trace.json"), &trained.trace)?;
    write_json(&paths.root.join("evaluation.json"), &ev)?;
    save_table(&paths.tables(), 0, &table)?;
    Ok(ev)
}

/// Outcome of re-evaluating a stored checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reevaluation {
    pub exits: usize,
    pub thresholds: Vec<f64>,
    pub accuracy: f64,
    pub macs: f64,
    pub utilization: Vec<f64>,
}

/// Re-evaluates a checkpoint, under explicit thresholds when given and
/// otherwise by tuning against the configured constraints.
pub fn run_eval(
    cfg: &RunConfig,
    paths: &RunPaths,
    checkpoint: &Path,
    thresholds: Option<&[f64]>,
) -> Result<Reevaluation> {
    let spec_path = checkpoint.join("spec.json");
    let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
    let spec = EennSpec::from_json(&text)?;
    let params = ParamSet::load(&checkpoint.join("params.ckpt"))?;
    let model = EennModel { spec, params };
    let (ds, split) = load_data(cfg)?;
    let table = ExitTable::collect(&model, &ds, &split.validation, 256)?;
    let gamma = model.spec.gamma.clone();
    let outcome = match thresholds {
        Some(t) => evaluate_thresholds(&table, gamma.as_slice(), t)?,
        None => tune_thresholds(
            &table,
            gamma.as_slice(),
            cfg.constraints.min_accuracy,
            cfg.constraints.max_macs,
        )?,
    };
    let r = Reevaluation {
        exits: table.exits(),
        thresholds: outcome.thresholds,
        accuracy: outcome.accuracy,
        macs: outcome.macs,
        utilization: outcome.utilization,
    };
    fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
    write_json(&paths.root.join("eval.json"), &r)?;
    Ok(r)
}

/// Regenerates the report of an archive; tables are looked up next to it.
pub fn run_report(
    cfg: &RunConfig,
    paths: &RunPaths,
    archive: Option<&Path>,
    entry: Option<usize>,
) -> Result<ReportFiles> {
    let archive_path = archive
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths.archive());
    let a = Archive::load(&archive_path)?;
    if a.is_empty() {
        return Err(Error::contract("archive contains no entries"));
    }
    let run_dir = archive_path.parent().unwrap_or(Path::new("."));
    let manifest = run_dir.join("manifest.json");
    if manifest.exists() {
        let m = read_manifest(&manifest)?;
        if m.config_hash != config_hash(cfg) {
            log::warn!(
                "config differs from the one recorded in {}",
                manifest.display()
            );
        }
    }
    emit_report(
        &a,
        &run_dir.join("tables"),
        &paths.report(),
        cfg.constraints.min_accuracy,
        cfg.constraints.max_macs,
        entry,
    )
}
