use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Sample indices of a stratified train/validation partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified split with per-class validation share `fractions.1`.
pub fn split_stratified(ds: &Dataset, fractions: (f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv) = fractions;
    if !(ft >= 0.0 && fv >= 0.0 && ((ft + fv) - 1.0).abs() < 1e-9) {
        return Err(Error::contract(format!(
            "split fractions {fractions:?} must sum to 1"
        )));
    }
    if fv == 0.0 || ft == 0.0 {
        return Err(Error::contract(format!(
            "split fractions {fractions:?} leave an empty split; training needs both a training and a validation set"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); ds.classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
    };
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::contract(format!(
                "class {class} has a single sample and cannot be split"
            )));
        }
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fv).round() as usize).clamp(1, idx.len() - 1);
        split.validation.extend_from_slice(&idx[..n_val]);
        split.train.extend_from_slice(&idx[n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    Ok(split)
}

/// Exactly `per_class` samples of every class drawn from `pool`.
pub fn support_set<R: Rng + ?Sized>(
    ds: &Dataset,
    pool: &[usize],
    per_class: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.classes()];
    for &i in pool {
        by_class[ds.label(i)].push(i);
    }
    let mut out = Vec::with_capacity(per_class * ds.classes());
    for (class, idx) in by_class.iter().enumerate() {
        if idx.len() < per_class {
            return Err(Error::contract(format!(
                "class {class} has {} samples, support set needs {per_class}",
                idx.len()
            )));
        }
        out.extend(idx.choose_multiple(rng, per_class).copied());
    }
    Ok(out)
}

/// A seeded permutation of `indices` cut into batches of at most `batch`.
pub fn batches<R: Rng + ?Sized>(indices: &[usize], batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut perm = indices.to_vec();
    perm.shuffle(rng);
    perm.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
