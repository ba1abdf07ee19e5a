use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STAGES: usize = 4;
/// Maximum number of exits including the final one.
pub const MAX_EXITS: usize = 5;
pub const EXIT_BITS: usize = MAX_EXITS - 1;

pub const DEPTHS: [usize; 3] = [1, 2, 3];
pub const KERNELS: [usize; 2] = [3, 5];
pub const WIDTHS: [usize; 3] = [16, 24, 32];

/// Number of integer genes in the flat chromosome.
pub const GENE_COUNT: usize = STAGES * 3 + EXIT_BITS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StageGene {
    pub depth: usize,
    pub kernel: usize,
    pub width: usize,
}

impl StageGene {
    pub const MIN: StageGene = StageGene {
        depth: 1,
        kernel: 3,
        width: 16,
    };
    pub const MAX: StageGene = StageGene {
        depth: 3,
        kernel: 5,
        width: 32,
    };
}

/// Backbone hyperparameters for each stage plus the exit-placement bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genome {
    pub stages: [StageGene; STAGES],
    pub theta: [u8; EXIT_BITS],
}

/// Size of the alphabet of each flat gene position.
pub fn gene_alphabet_sizes() -> [usize; GENE_COUNT] {
    let mut sizes = [2; GENE_COUNT];
    for s in 0..STAGES {
        sizes[3 * s] = DEPTHS.len();
        sizes[3 * s + 1] = KERNELS.len();
        sizes[3 * s + 2] = WIDTHS.len();
    }
    sizes
}

fn position(alphabet: &[usize], v: usize, what: &str) -> Result<usize> {
    alphabet
        .iter()
        .position(|&a| a == v)
        .ok_or_else(|| Error::contract(format!("{what} {v} not in {alphabet:?}")))
}

impl Genome {
    pub const MIN: Genome = Genome {
        stages: [StageGene::MIN; STAGES],
        theta: [0; EXIT_BITS],
    };
    pub const MAX: Genome = Genome {
        stages: [StageGene::MAX; STAGES],
        theta: [1; EXIT_BITS],
    };

    pub fn new(stages: [StageGene; STAGES], theta: [u8; EXIT_BITS]) -> Result<Self> {
        let g = Genome { stages, theta };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.to_genes().map(|_| ())
    }

    /// Flat chromosome of alphabet indices: `(depth, kernel, width)` per stage, then θ.
    pub fn to_genes(&self) -> Result<[usize; GENE_COUNT]> {
        let mut out = [0; GENE_COUNT];
        for (s, st) in self.stages.iter().enumerate() {
            out[3 * s] = position(&DEPTHS, st.depth, "depth")?;
            out[3 * s + 1] = position(&KERNELS, st.kernel, "kernel")?;
            out[3 * s + 2] = position(&WIDTHS, st.width, "width")?;
        }
        for (i, &b) in self.theta.iter().enumerate() {
            if b > 1 {
                return Err(Error::contract(format!("theta bit {i} is {b}")));
            }
            out[3 * STAGES + i] = b as usize;
        }
        Ok(out)
    }

    pub fn from_genes(genes: &[usize]) -> Result<Self> {
        if genes.len() != GENE_COUNT {
            return Err(Error::contract(format!(
                "chromosome has {} genes, expected {GENE_COUNT}",
                genes.len()
            )));
        }
        let sizes = gene_alphabet_sizes();
        if let Some(i) = (0..GENE_COUNT).find(|&i| genes[i] >= sizes[i]) {
            return Err(Error::contract(format!(
                "gene {i} = {} out of alphabet",
                genes[i]
            )));
        }
        let mut stages = [StageGene::MIN; STAGES];
        for (s, st) in stages.iter_mut().enumerate() {
            *st = StageGene {
                depth: DEPTHS[genes[3 * s]],
                kernel: KERNELS[genes[3 * s + 1]],
                width: WIDTHS[genes[3 * s + 2]],
            };
        }
        let mut theta = [0u8; EXIT_BITS];
        for (i, t) in theta.iter_mut().enumerate() {
            *t = genes[3 * STAGES + i] as u8;
        }
        Ok(Genome { stages, theta })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let sizes = gene_alphabet_sizes();
        let genes: Vec<usize> = sizes.iter().map(|&n| rng.random_range(0..n)).collect();
        Genome::from_genes(&genes).expect("sampled within alphabets")
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.depth).sum()
    }

    /// Surrogate features: gene values scaled to `[0, 1]` followed by the θ bits.
    pub fn features(&self) -> Vec<f64> {
        let genes = self.to_genes().expect("genome validated on construction");
        let sizes = gene_alphabet_sizes();
        genes
            .iter()
            .zip(sizes)
            .map(|(&g, n)| g as f64 / (n - 1) as f64)
            .collect()
    }

    /// FNV-1a over the chromosome; stable across platforms and releases.
    pub fn stable_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in &self.stages {
            for v in [s.depth, s.kernel, s.width] {
                h ^= v as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        for &b in &self.theta {
            h ^= b as u64 + 0x100;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    /// Compact text form, e.g. `1-3-16,2-5-24,1-3-16,3-5-32/1010`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::contract(format!("cannot parse genome {s:?}"));
        let (stages_s, theta_s) = s.split_once('/').ok_or_else(bad)?;
        let parts: Vec<&str> = stages_s.split(',').collect();
        if parts.len() != STAGES || theta_s.len() != EXIT_BITS {
            return Err(bad());
        }
        let mut stages = [StageGene::MIN; STAGES];
        for (st, p) in stages.iter_mut().zip(parts) {
            let v: Vec<usize> = p
                .split('-')
                .map(|x| x.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(bad());
            }
            *st = StageGene {
                depth: v[0],
                kernel: v[1],
                width: v[2],
            };
        }
        let mut theta = [0u8; EXIT_BITS];
        for (t, ch) in theta.iter_mut().zip(theta_s.chars()) {
            *t = match ch {
                '0' => 0,
                '1' => 1,
                _ => return Err(bad()),
            };
        }
        Genome::new(stages, theta)
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}-{}-{}", s.depth, s.kernel, s.width)?;
        }
        f.write_str("/")?;
        for b in self.theta {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
