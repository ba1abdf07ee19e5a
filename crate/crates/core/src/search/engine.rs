use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{Archive, ArchiveEntry};
use super::metrics::{admissible_ratio, fcm, hypervolume, knee_index, nearest_to, pareto_indices};
use super::nsga2::{
    crowded_order, crowding_distance, nondominated_sort, nsga2_generation, GaParams,
};
use super::surrogate::{fit_and_switch_surrogates, Family, MIN_ARCHIVE};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::genome::GENE_COUNT;
use crate::model::{decode_genome, place_exits, Genome, MAX_EXITS};
use crate::train::{evaluate, train_eenn, ExitTable, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Rank by `(−S_A, S_CM)` with the adaptive MAC penalty.
    Constrained,
    /// Rank by `(−S_A, S_M)`.
    Unconstrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_start: usize,
    pub iterations: usize,
    pub population: usize,
    pub generations: usize,
    pub n_batch: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub min_accuracy: f64,
    pub max_macs: Option<f64>,
    pub k: usize,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_start: 2 * GENE_COUNT,
            iterations: 10,
            population: 40,
            generations: 20,
            n_batch: 8,
            crossover_rate: 0.9,
            mutation_rate: 1.0 / GENE_COUNT as f64,
            min_accuracy: 0.65,
            max_macs: Some(2.7e6),
            k: 3,
            objective: Objective::Constrained,
            seed: 0,
        }
    }
}

impl SearchConfig {
    /// Desk-scale settings for the 16×16 synthetic task.
    pub fn desk() -> Self {
        SearchConfig {
            n_start: 16,
            iterations: 5,
            population: 20,
            n_batch: 4,
            min_accuracy: 0.8,
            max_macs: Some(0.45e6),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_start < MIN_ARCHIVE {
            errs.push(format!(
                "n_start = {} is below the surrogate minimum of {MIN_ARCHIVE}",
                self.n_start
            ));
        }
        if self.n_batch == 0 {
            errs.push("n_batch must be at least 1".into());
        }
        if self.population < 2 {
            errs.push("population must be at least 2".into());
        }
        if self.k == 0 {
            errs.push("k must be at least 1".into());
        }
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            errs.push(format!(
                "min_accuracy = {} is outside [0, 1]",
                self.min_accuracy
            ));
        }
        if let Some(m) = self.max_macs {
            if !(m > 0.0 && m.is_finite()) {
                errs.push(format!("max_macs = {m} must be positive"));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Schema(errs));
        }
        if self.n_start < 2 * GENE_COUNT {
            log::warn!(
                "n_start = {} is below twice the feature dimension ({})",
                self.n_start,
                2 * GENE_COUNT
            );
        }
        Ok(())
    }

    fn ga(&self) -> GaParams {
        GaParams {
            population: self.population,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
        }
    }
}

/// Training seed of a candidate: a mix of the run seed and the chromosome hash.
pub fn candidate_seed(run_seed: u64, genome: &Genome) -> u64 {
    let mut z = run_seed ^ genome.stable_hash().rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Places exits, trains and evaluates one candidate.
pub fn train_candidate(
    genome: &Genome,
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(crate::train::EvaluationResult, ExitTable)> {
    let backbone = decode_genome(genome, ds.shape(), ds.classes())?;
    let spec = place_exits(&backbone, &genome.theta, MAX_EXITS)?;
    let trained = train_eenn(&spec, ds, split, cfg)?;
    evaluate(&trained, ds, split, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub accuracy_surrogate: Option<(Family, f64)>,
    pub macs_surrogate: Option<(Family, f64)>,
    pub proposed: Vec<String>,
    pub added: usize,
    pub failed: usize,
    pub archive_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub id: usize,
    pub admissible: bool,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub archive: Archive,
    /// The `k` selected architectures, knee first.
    pub selection: Vec<Pick>,
    pub log: Vec<IterationLog>,
}

/// Receives every newly measured candidate at the join point.
/// Reused entries from a resume archive come without a table.
pub type EntrySink<'a> = dyn FnMut(&ArchiveEntry, Option<&ExitTable>) -> Result<()> + 'a;

struct Runner<'a> {
    cfg: &'a SearchConfig,
    train: TrainConfig,
    ds: &'a Dataset,
    split: &'a Split,
    resumed: Archive,
    archive: Archive,
}

impl Runner<'_> {
    /// Trains the candidates not yet measured, in parallel, then appends
    /// every result in proposal order.
    fn measure(
        &mut self,
        iteration: usize,
        batch: &[Genome],
        sink: &mut EntrySink<'_>,
    ) -> Result<(usize, usize)> {
        let fresh: Vec<Genome> = batch
            .iter()
            .filter(|g| !self.archive.contains(g) && !self.resumed.contains(g))
            .copied()
            .collect();
        let results: Vec<(
            Genome,
            u64,
            Result<(crate::train::EvaluationResult, ExitTable)>,
        )> = fresh
            .par_iter()
            .map(|g| {
                let seed = candidate_seed(self.cfg.seed, g);
                let cfg = TrainConfig {
                    seed,
                    ..self.train.clone()
                };
                (*g, seed, train_candidate(g, self.ds, self.split, &cfg))
            })
            .collect();
        let mut fresh_results = results.into_iter();
        let (mut added, mut failed) = (0, 0);
        for g in batch {
            if self.archive.contains(g) {
                continue;
            }
            if let Some(prev) = self.resumed.get(g) {
                let mut e = prev.clone();
                e.id = self.archive.next_id();
                sink(&e, None)?;
                self.archive.push(e)?;
                added += 1;
                continue;
            }
            let (genome, seed, res) = fresh_results
                .next()
                .expect("one result per fresh candidate");
            debug_assert_eq!(genome, *g);
            match res {
                Ok((ev, table)) => {
                    let entry = ArchiveEntry::from_evaluation(
                        self.archive.next_id(),
                        iteration,
                        genome,
                        seed,
                        &ev,
                    );
                    sink(&entry, Some(&table))?;
                    log::info!(
                        "iteration {iteration}: {genome} accuracy {:.3} MACs {:.3} M",
                        entry.accuracy,
                        entry.macs / 1e6
                    );
                    self.archive.push(entry)?;
                    added += 1;
                }
                Err(e) => {
                    log::warn!(
                        "iteration {iteration}: candidate {genome} failed and is skipped: {e}"
                    );
                    failed += 1;
                }
            }
        }
        Ok((added, failed))
    }

    fn macs_objective(&self, predicted_macs: &[f64]) -> Vec<f64> {
        match (self.cfg.objective, self.cfg.max_macs) {
            (Objective::Constrained, Some(limit)) => {
                let phi = admissible_ratio(predicted_macs, limit).expect("non-empty pool");
                predicted_macs.iter().map(|&m| fcm(m, limit, phi)).collect()
            }
            _ => predicted_macs.to_vec(),
        }
    }

    /// Initial NSGA-II population: best archived genomes by measured
    /// objectives, topped up with random ones.
    fn seed_population(&self, rng: &mut ChaCha8Rng) -> Vec<Genome> {
        let entries = self.archive.entries();
        let macs: Vec<f64> = entries.iter().map(|e| e.macs).collect();
        let penalized = self.macs_objective(&macs);
        let pts: Vec<[f64; 2]> = entries
            .iter()
            .zip(&penalized)
            .map(|(e, m)| [-e.accuracy, *m])
            .collect();
        let mut pop: Vec<Genome> = crowded_order(&pts)
            .into_iter()
            .take(self.cfg.population)
            .map(|i| entries[i].genome)
            .collect();
        while pop.len() < self.cfg.population {
            pop.push(Genome::random(rng));
        }
        pop
    }

    fn propose(&self, rng: &mut ChaCha8Rng, log: &mut IterationLog) -> Result<Vec<Genome>> {
        let entries = self.archive.entries();
        let x: Vec<Vec<f64>> = entries.iter().map(|e| e.genome.features()).collect();
        let acc: Vec<f64> = entries.iter().map(|e| e.accuracy).collect();
        let macs: Vec<f64> = entries.iter().map(|e| e.macs).collect();
        let (sa, sm) = fit_and_switch_surrogates(&x, &acc, &macs)?;
        log.accuracy_surrogate = Some((sa.model.family, sa.tau()));
        log.macs_surrogate = Some((sm.model.family, sm.tau()));

        let mut objectives = |pool: &[Genome]| -> Vec<[f64; 2]> {
            let feats: Vec<Vec<f64>> = pool.iter().map(|g| g.features()).collect();
            let a = sa.model.predict_many(&feats);
            let m = self.macs_objective(&sm.model.predict_many(&feats));
            a.iter().zip(&m).map(|(a, m)| [-a, *m]).collect()
        };
        let mut pop = self.seed_population(rng);
        for _ in 0..self.cfg.generations {
            pop = nsga2_generation(&pop, &mut objectives, &self.cfg.ga(), rng);
        }

        let mut seen = HashSet::new();
        let unseen: Vec<Genome> = pop
            .into_iter()
            .filter(|g| !self.archive.contains(g) && seen.insert(*g))
            .collect();
        let pts = objectives(&unseen);
        let mut picks = Vec::new();
        for front in nondominated_sort(&pts) {
            let cd = crowding_distance(&pts, &front);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]).then(front[a].cmp(&front[b])));
            for k in order {
                if picks.len() < self.cfg.n_batch {
                    picks.push(unseen[front[k]]);
                }
            }
        }
        let mut attempts = 0;
        while picks.len() < self.cfg.n_batch && attempts < 1000 {
            let g = Genome::random(rng);
            if !self.archive.contains(&g) && !picks.contains(&g) {
                picks.push(g);
            }
            attempts += 1;
        }
        Ok(picks)
    }
}

/// The `k` architectures to report: admissible entries nearest the knee of
/// their measured front, then the least violating others.
pub fn select_final(
    archive: &Archive,
    k: usize,
    min_accuracy: f64,
    max_macs: Option<f64>,
) -> Result<Vec<Pick>> {
    let entries = archive.entries();
    if entries.is_empty() {
        return Err(Error::contract("archive contains no entries"));
    }
    let admissible: Vec<usize> = (0..entries.len())
        .filter(|&i| entries[i].is_admissible(min_accuracy, max_macs))
        .collect();
    let mut picks = Vec::new();
    if !admissible.is_empty() {
        let pts: Vec<[f64; 2]> = admissible
            .iter()
            .map(|&i| [-entries[i].accuracy, entries[i].macs])
            .collect();
        let front = pareto_indices(&pts);
        let front_pts: Vec<[f64; 2]> = front.iter().map(|&i| pts[i]).collect();
        let knee = front[knee_index(&front_pts)?];
        let order = nearest_to(&pts, knee, k);
        picks.extend(order.into_iter().take(k).map(|i| Pick {
            id: entries[admissible[i]].id,
            admissible: true,
        }));
    }
    if picks.len() < k {
        let mut rest: Vec<usize> = (0..entries.len())
            .filter(|&i| !entries[i].is_admissible(min_accuracy, max_macs))
            .collect();
        rest.sort_by(|&a, &b| {
            entries[a]
                .violation(min_accuracy, max_macs)
                .total_cmp(&entries[b].violation(min_accuracy, max_macs))
                .then(entries[b].accuracy.total_cmp(&entries[a].accuracy))
                .then(a.cmp(&b))
        });
        picks.extend(rest.into_iter().take(k - picks.len()).map(|i| Pick {
            id: entries[i].id,
            admissible: false,
        }));
    }
    Ok(picks)
}

/// Hypervolume of the measured front after each iteration, against the
/// worst corner observed over the whole archive.
pub fn hypervolume_trace(archive: &Archive) -> Vec<f64> {
    let pts = archive.objectives();
    if pts.is_empty() {
        return Vec::new();
    }
    let reference = pts.iter().fold([f64::NEG_INFINITY; 2], |r, p| {
        [r[0].max(p[0]), r[1].max(p[1])]
    });
    let last = archive.entries().iter().map(|e| e.iteration).max().unwrap();
    (0..=last)
        .map(|t| {
            let prefix: Vec<[f64; 2]> = archive
                .entries()
                .iter()
                .zip(&pts)
                .filter(|(e, _)| e.iteration <= t)
                .map(|(_, p)| *p)
                .collect();
            hypervolume(&prefix, reference)
        })
        .collect()
}

/// Runs the surrogate-assisted search. Candidates found in `resume` are
/// reused instead of retrained, so an interrupted run continues where it
/// stopped and reproduces the same archive.
pub fn search_loop(
    cfg: &SearchConfig,
    train: &TrainConfig,
    ds: &Dataset,
    split: &Split,
    resume: Option<Archive>,
    sink: &mut EntrySink<'_>,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let train = TrainConfig {
        min_accuracy: cfg.min_accuracy,
        max_macs: cfg.max_macs,
        ..train.clone()
    };
    train.validate()?;
    let mut runner = Runner {
        cfg,
        train,
        ds,
        split,
        resumed: resume.unwrap_or_default(),
        archive: Archive::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut logs = Vec::new();

    let mut start = Vec::new();
    let mut attempts = 0;
    while start.len() < cfg.n_start && attempts < 100 * cfg.n_start {
        let g = Genome::random(&mut rng);
        if !start.contains(&g) {
            start.push(g);
        }
        attempts += 1;
    }
    let (added, failed) = runner.measure(0, &start, sink)?;
    logs.push(IterationLog {
        iteration: 0,
        accuracy_surrogate: None,
        macs_surrogate: None,
        proposed: start.iter().map(|g| g.to_string()).collect(),
        added,
        failed,
        archive_size: runner.archive.len(),
    });

    for t in 1..=cfg.iterations {
        let mut log = IterationLog {
            iteration: t,
            accuracy_surrogate: None,
            macs_surrogate: None,
            proposed: Vec::new(),
            added: 0,
            failed: 0,
            archive_size: 0,
        };
        let batch = runner.propose(&mut rng, &mut log)?;
        log.proposed = batch.iter().map(|g| g.to_string()).collect();
        let (added, failed) = runner.measure(t, &batch, sink)?;
        log.added = added;
        log.failed = failed;
        log.archive_size = runner.archive.len();
        logs.push(log);
    }

    let selection = select_final(&runner.archive, cfg.k, cfg.min_accuracy, cfg.max_macs)?;
    Ok(SearchOutcome {
        archive: runner.archive,
        selection,
        log: logs,
    })
}
