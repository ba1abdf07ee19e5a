use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::metrics::kendall_tau;
use crate::error::{Error, Result};

pub const MIN_ARCHIVE: usize = 10;
pub const FOLDS: usize = 5;
/// Ridge penalties for the intercept and linear terms, and for the quadratic terms.
const RIDGE_LINEAR: f64 = 1e-6;
const RIDGE_QUADRATIC: f64 = 1.0;
const KNN_K: usize = 3;

/// Candidate regressor families in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Rbf,
    Ridge,
    Knn,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Rbf, Family::Ridge, Family::Knn];
}

#[derive(Clone, Debug)]
enum Fitted {
    Rbf {
        centers: Vec<Vec<f64>>,
        weights: Vec<f64>,
        shape: f64,
        offset: f64,
    },
    Ridge {
        coef: Vec<f64>,
    },
    Knn {
        points: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    pub family: Family,
    mean: Vec<f64>,
    scale: Vec<f64>,
    fitted: Fitted,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn quadratic(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut f = Vec::with_capacity(1 + d + d * (d + 1) / 2);
    f.push(1.0);
    f.extend_from_slice(x);
    for i in 0..d {
        for j in i..d {
            f.push(x[i] * x[j]);
        }
    }
    f
}

impl Surrogate {
    pub fn fit(family: Family, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::contract(format!(
                "surrogate fit on {} feature rows and {} targets",
                x.len(),
                y.len()
            )));
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for k in 0..d {
                scale[k] += (row[k] - mean[k]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
        }
        let mut s = Surrogate {
            family,
            mean,
            scale,
            fitted: Fitted::Ridge { coef: Vec::new() },
        };
        let z: Vec<Vec<f64>> = x.iter().map(|r| s.normalize(r)).collect();
        s.fitted = match family {
            Family::Rbf => fit_rbf(&z, y),
            Family::Ridge => fit_ridge(&z, y),
            Family::Knn => Fitted::Knn {
                points: z,
                targets: y.to_vec(),
            },
        };
        Ok(s)
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.normalize(x);
        match &self.fitted {
            Fitted::Rbf {
                centers,
                weights,
                shape,
                offset,
            } => {
                offset
                    + centers
                        .iter()
                        .zip(weights)
                        .map(|(c, w)| w * (dist2(&z, c) + shape * shape).sqrt())
                        .sum::<f64>()
            }
            Fitted::Ridge { coef } => quadratic(&z).iter().zip(coef).map(|(a, b)| a * b).sum(),
            Fitted::Knn { points, targets } => {
                let mut order: Vec<(f64, usize)> =
                    points.iter().map(|p| dist2(&z, p)).zip(0..).collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let k = KNN_K.min(order.len());
                order[..k].iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
            }
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

fn fit_rbf(z: &[Vec<f64>], y: &[f64]) -> Fitted {
    let n = z.len();
    let offset = y.iter().sum::<f64>() / n as f64;
    let mut pair = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            pair += dist2(&z[i], &z[j]).sqrt();
            pairs += 1;
        }
    }
    let shape = if pairs > 0 && pair > 0.0 {
        pair / pairs as f64
    } else {
        1.0
    };
    let phi = DMatrix::from_fn(n, n, |i, j| (dist2(&z[i], &z[j]) + shape * shape).sqrt());
    let rhs = DVector::from_iterator(n, y.iter().map(|v| v - offset));
    let weights = phi
        .svd(true, true)
        .solve(&rhs, 1e-10)
        .map(|w| w.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; n]);
    Fitted::Rbf {
        centers: z.to_vec(),
        weights,
        shape,
        offset,
    }
}

fn fit_ridge(z: &[Vec<f64>], y: &[f64]) -> Fitted {
    let rows: Vec<Vec<f64>> = z.iter().map(|r| quadratic(r)).collect();
    let p = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let linear = 1 + z[0].len();
    let mut gram = x.transpose() * &x;
    for k in 0..p {
        gram[(k, k)] += if k < linear {
            RIDGE_LINEAR
        } else {
            RIDGE_QUADRATIC
        };
    }
    let rhs = x.transpose() * DVector::from_column_slice(y);
    let coef = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(p)),
    };
    Fitted::Ridge {
        coef: coef.iter().copied().collect(),
    }
}

/// Mean held-out Kendall τ of each family under `FOLDS`-fold cross-validation.
/// Row `i` belongs to fold `i % FOLDS`.
pub fn cross_validate(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<(Family, f64)>> {
    if x.len() < MIN_ARCHIVE {
        return Err(Error::contract(format!(
            "surrogate selection needs at least {MIN_ARCHIVE} archive entries, got {}",
            x.len()
        )));
    }
    Family::ALL
        .iter()
        .map(|&family| {
            let mut total = 0.0;
            for fold in 0..FOLDS {
                let (mut tx, mut ty, mut vx, mut vy) =
                    (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for (i, (row, t)) in x.iter().zip(y).enumerate() {
                    if i % FOLDS == fold {
                        vx.push(row.clone());
                        vy.push(*t);
                    } else {
                        tx.push(row.clone());
                        ty.push(*t);
                    }
                }
                let model = Surrogate::fit(family, &tx, &ty)?;
                total += kendall_tau(&model.predict_many(&vx), &vy)?;
            }
            Ok((family, total / FOLDS as f64))
        })
        .collect()
}

/// Surrogate chosen by cross-validated τ and refitted on all rows.
#[derive(Clone, Debug)]
pub struct Selected {
    pub model: Surrogate,
    pub scores: Vec<(Family, f64)>,
}

impl Selected {
    pub fn tau(&self) -> f64 {
        self.scores
            .iter()
            .find(|(f, _)| *f == self.model.family)
            .map(|s| s.1)
            .unwrap_or(0.0)
    }
}

pub fn select_surrogate(x: &[Vec<f64>], y: &[f64]) -> Result<Selected> {
    let scores = cross_validate(x, y)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 > scores[best].1 {
            best = i;
        }
    }
    Ok(Selected {
        model: Surrogate::fit(scores[best].0, x, y)?,
        scores,
    })
}

/// Accuracy and MAC surrogates fitted on the same feature rows.
pub fn fit_and_switch_surrogates(
    x: &[Vec<f64>],
    accuracy: &[f64],
    macs: &[f64],
) -> Result<(Selected, Selected)> {
    Ok((select_surrogate(x, accuracy)?, select_surrogate(x, macs)?))
}
