use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub per_class: usize,
    pub classes: usize,
    pub size: usize,
    /// Standard deviation of additive pixel noise, in `[0, 1]` intensity units.
    pub noise: f64,
    /// Randomize texture phase, gradient polarity and brightness per sample.
    pub jitter: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            per_class: 200,
            classes: 10,
            size: 16,
            noise: 0.1,
            jitter: true,
        }
    }
}

struct Pattern {
    grad_angle: f64,
    tex_angle: f64,
    freq: f64,
    tint: [f64; 3],
}

fn pattern(class: usize, classes: usize) -> Pattern {
    let t = class as f64 / classes as f64;
    Pattern {
        grad_angle: 2.0 * PI * t,
        tex_angle: PI * ((3 * class) % classes) as f64 / classes as f64,
        freq: 1.0 + (class % 3) as f64,
        tint: [
            0.5 + 0.5 * (2.0 * PI * t).cos(),
            0.5 + 0.5 * (2.0 * PI * t + 2.0).cos(),
            0.5 + 0.5 * (2.0 * PI * t + 4.0).cos(),
        ],
    }
}

/// Each class is an oriented intensity gradient overlaid with a
/// class-specific sinusoidal texture and colour tint, plus Gaussian noise.
/// With jitter the gradient sign and texture phase are random, so class
/// means carry little signal and a linear read-out of pixels does poorly.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.per_class == 0 || cfg.classes < 2 || cfg.classes > 256 || cfg.size < 2 {
        return Err(Error::contract(format!("synthetic config {cfg:?}")));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::contract(format!(
            "noise {} outside [0, 1]",
            cfg.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise).expect("finite deviation");
    let s = cfg.size;
    let n = cfg.per_class * cfg.classes;
    let mut pixels = Vec::with_capacity(n * 3 * s * s);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let class = k % cfg.classes;
        let p = pattern(class, cfg.classes);
        let (phase, polarity, offset) = if cfg.jitter {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (
                rng.random_range(0.0..2.0 * PI),
                sign,
                rng.random_range(-0.1..0.1),
            )
        } else {
            (0.0, 1.0, 0.0)
        };
        for (ch, tint) in p.tint.iter().enumerate() {
            for y in 0..s {
                for x in 0..s {
                    let u = (x as f64 + 0.5) / s as f64 - 0.5;
                    let v = (y as f64 + 0.5) / s as f64 - 0.5;
                    let grad = u * p.grad_angle.cos() + v * p.grad_angle.sin();
                    let along = u * p.tex_angle.cos() + v * p.tex_angle.sin();
                    let tex = (2.0 * PI * p.freq * along + phase + ch as f64).sin();
                    let mut val = 0.5 + offset + 0.6 * polarity * grad + 0.25 * tex * tint;
                    if cfg.noise > 0.0 {
                        val += noise.sample(&mut rng);
                    }
                    pixels.push((val.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        labels.push(class);
    }
    Dataset::new(
        pixels,
        labels,
        [3, s, s],
        cfg.classes,
        format!("synthetic:seed={},size={}", cfg.seed, s),
    )
}
