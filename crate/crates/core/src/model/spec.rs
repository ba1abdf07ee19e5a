//! Decoding genomes into concrete networks and placing early-exit classifiers.

use serde::{Deserialize, Serialize};

use super::genome::Genome;
use super::layers::{mac_count, LayerSpec, LayerStack};
use crate::error::{Error, Result};

/// Channels of the stem convolution.
pub const STEM_CHANNELS: usize = 16;
/// Channels of the convolution inside a default exit head.
pub const HEAD_CHANNELS: usize = 16;

/// Per-exit MAC cost γ: backbone prefix plus exit head.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostVector(pub Vec<f64>);

impl CostVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("cost vector has a final exit")
    }

    pub fn millions(&self) -> Vec<f64> {
        self.0.iter().map(|v| v / 1e6).collect()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Classifier head attached to the backbone.
///
/// `trunk` holds the optional pooling and convolution shared by both
/// branches; `confidence` is empty for the final exit, whose confidence is
/// fixed to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitHead {
    pub pool_window: Option<usize>,
    pub conv_channels: Option<usize>,
    pub trunk: Vec<LayerSpec>,
    pub classifier: Vec<LayerSpec>,
    pub confidence: Vec<LayerSpec>,
}

impl ExitHead {
    pub fn macs(&self) -> u64 {
        let all: Vec<LayerSpec> = self
            .trunk
            .iter()
            .chain(&self.classifier)
            .chain(&self.confidence)
            .copied()
            .collect();
        mac_count(&all).expect("head layers are built with resolved shapes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSpec {
    /// Number of backbone blocks computed before this exit.
    pub after_block: usize,
    pub head: ExitHead,
}

/// A backbone with its exits. The last exit is always the final classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EennSpec {
    pub genome: Genome,
    pub input: [usize; 3],
    pub classes: usize,
    pub stem: Vec<LayerSpec>,
    pub blocks: Vec<Vec<LayerSpec>>,
    pub exits: Vec<ExitSpec>,
    pub gamma: CostVector,
}

impl EennSpec {
    /// Total exit count including the final exit.
    pub fn exit_count(&self) -> usize {
        self.exits.len()
    }

    /// Feature-map shape after `blocks` backbone blocks (0 = after the stem).
    pub fn feature_shape(&self, blocks: usize) -> [usize; 3] {
        match blocks {
            0 => self.stem.last().map_or(self.input, |l| l.output),
            b => {
                self.blocks[b - 1]
                    .last()
                    .expect("blocks are non-empty")
                    .output
            }
        }
    }

    /// MACs of the stem plus the first `blocks` blocks.
    pub fn prefix_macs(&self, blocks: usize) -> u64 {
        let stem = mac_count(&self.stem).expect("resolved");
        stem + self.blocks[..blocks]
            .iter()
            .map(|b| mac_count(b).expect("resolved"))
            .sum::<u64>()
    }

    /// MACs of the whole backbone without any head.
    pub fn backbone_macs(&self) -> u64 {
        self.prefix_macs(self.blocks.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Builds the exit-free network for a genome: a stem convolution, one
/// stride-2 block opening each stage, and a flatten + dense classifier.
pub fn decode_genome(genome: &Genome, input: [usize; 3], classes: usize) -> Result<EennSpec> {
    genome.validate()?;
    if classes < 2 || input.contains(&0) {
        return Err(Error::contract(format!(
            "input {input:?} with {classes} classes"
        )));
    }
    let mut stack = LayerStack::new(input);
    let stem = stack.conv(STEM_CHANNELS, 3, 1).relu().finish();
    let mut blocks = Vec::with_capacity(genome.block_count());
    for stage in &genome.stages {
        for d in 0..stage.depth {
            let stride = if d == 0 { 2 } else { 1 };
            blocks.push(
                stack
                    .conv(stage.width, stage.kernel, stride)
                    .relu()
                    .finish(),
            );
        }
    }
    let final_head = final_head(stack.shape(), classes);
    let mut spec = EennSpec {
        genome: *genome,
        input,
        classes,
        stem,
        blocks,
        exits: vec![ExitSpec {
            after_block: genome.block_count(),
            head: final_head,
        }],
        gamma: CostVector::default(),
    };
    spec.gamma = gamma_vector(&spec);
    Ok(spec)
}

fn final_head(feature: [usize; 3], classes: usize) -> ExitHead {
    let mut s = LayerStack::new(feature);
    ExitHead {
        pool_window: None,
        conv_channels: None,
        trunk: vec![],
        classifier: s.flatten().dense(classes).finish(),
        confidence: vec![],
    }
}

/// Early-exit head: `[maxpool] → [conv 3×3 + relu] → flatten → dense(classes)`
/// with a confidence branch `flatten → dense(1) → sigmoid` on the same features.
pub fn build_eec(
    feature: [usize; 3],
    classes: usize,
    conv_channels: Option<usize>,
    pool_window: Option<usize>,
) -> Result<ExitHead> {
    let mut s = LayerStack::new(feature);
    if let Some(w) = pool_window {
        if w < 2 || w > feature[1] || w > feature[2] {
            return Err(Error::contract(format!(
                "pool window {w} on feature {feature:?}"
            )));
        }
        s.maxpool(w);
    }
    if let Some(c) = conv_channels {
        s.conv(c, 3, 1).relu();
    }
    let trunk = s.finish();
    let shared = s.shape();
    let classifier = s.flatten().dense(classes).finish();
    let confidence = LayerStack::new(shared)
        .flatten()
        .dense(1)
        .sigmoid()
        .finish();
    Ok(ExitHead {
        pool_window,
        conv_channels,
        trunk,
        classifier,
        confidence,
    })
}

/// Backbone block counts after which the early exits selected by `theta`
/// attach. Bit `j` (1-based) maps to `max(1, ⌊j·L/B̄⌋)`; collisions move the
/// later exit one block further, and exits that would land on or after the
/// last block are dropped.
pub fn attach_points(theta: &[u8], blocks: usize, max_exits: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (j, _) in theta.iter().enumerate().filter(|(_, &b)| b == 1) {
        let mut idx = ((j + 1) * blocks / max_exits).max(1);
        if let Some(&prev) = out.last() {
            idx = idx.max(prev + 1);
        }
        if idx >= blocks {
            break;
        }
        out.push(idx);
    }
    out
}

/// γ_i = MACs(stem + blocks up to exit i) + MACs(head i).
pub fn gamma_vector(spec: &EennSpec) -> CostVector {
    CostVector(
        spec.exits
            .iter()
            .map(|e| (spec.prefix_macs(e.after_block) + e.head.macs()) as f64)
            .collect(),
    )
}

/// Attaches early exits for `theta` and enforces non-decreasing exit costs.
pub fn place_exits(backbone: &EennSpec, theta: &[u8], max_exits: usize) -> Result<EennSpec> {
    place_exits_with_heads(backbone, theta, max_exits, HEAD_CHANNELS)
}

pub fn place_exits_with_heads(
    backbone: &EennSpec,
    theta: &[u8],
    max_exits: usize,
    head_channels: usize,
) -> Result<EennSpec> {
    if max_exits < 1 || theta.len() != max_exits - 1 {
        return Err(Error::contract(format!(
            "theta has {} bits, expected {}",
            theta.len(),
            max_exits.saturating_sub(1)
        )));
    }
    if theta.iter().any(|&b| b > 1) {
        return Err(Error::contract(format!("theta {theta:?} is not binary")));
    }
    let blocks = backbone.blocks.len();
    if blocks < max_exits - 1 {
        return Err(Error::contract(format!(
            "backbone has {blocks} blocks, need at least {}",
            max_exits - 1
        )));
    }
    let mut spec = backbone.clone();
    let final_exit = spec
        .exits
        .pop()
        .filter(|e| e.after_block == blocks)
        .ok_or_else(|| Error::contract("backbone lacks a final exit"))?;
    spec.exits.clear();
    for after in attach_points(theta, blocks, max_exits) {
        let head = build_eec(
            spec.feature_shape(after),
            spec.classes,
            Some(head_channels),
            None,
        )?;
        spec.exits.push(ExitSpec {
            after_block: after,
            head,
        });
    }
    spec.exits.push(final_exit);
    enforce_cost_order(&mut spec)?;
    Ok(spec)
}

/// Scans exits from the second-last down to the first; an exit costlier than
/// its successor gets the smallest max-pooling window that fixes the order.
/// If no window suffices the head's convolution is dropped as well.
pub fn enforce_cost_order(spec: &mut EennSpec) -> Result<()> {
    spec.gamma = gamma_vector(spec);
    for i in (0..spec.exits.len().saturating_sub(1)).rev() {
        let limit = spec.gamma.0[i + 1];
        if spec.gamma.0[i] <= limit {
            continue;
        }
        let after = spec.exits[i].after_block;
        let prefix = spec.prefix_macs(after) as f64;
        let feature = spec.feature_shape(after);
        let conv = spec.exits[i].head.conv_channels;
        let head = minimal_pool_head(feature, spec.classes, conv, prefix, limit)?
            .or(if conv.is_some() {
                minimal_pool_head(feature, spec.classes, None, prefix, limit)?
            } else {
                None
            })
            .ok_or_else(|| {
                Error::contract(format!(
                    "exit {i} cannot be made cheaper than exit {}",
                    i + 1
                ))
            })?;
        spec.exits[i].head = head;
        spec.gamma.0[i] = prefix + spec.exits[i].head.macs() as f64;
    }
    debug_assert!(spec.gamma.is_non_decreasing());
    Ok(())
}

/// Smallest window `w ≥ 2` (or no pooling at all when the head has no
/// convolution) such that `prefix + MACs(head) ≤ limit`.
pub fn minimal_pool_head(
    feature: [usize; 3],
    classes: usize,
    conv_channels: Option<usize>,
    prefix: f64,
    limit: f64,
) -> Result<Option<ExitHead>> {
    let max_w = feature[1].min(feature[2]);
    let unpooled = conv_channels.is_none().then_some(None);
    let windows = unpooled.into_iter().chain((2..=max_w).map(Some));
    for w in windows {
        let head = build_eec(feature, classes, conv_channels, w)?;
        if prefix + head.macs() as f64 <= limit {
            return Ok(Some(head));
        }
    }
    Ok(None)
}
