//! Genomes, layer shapes, exit placement and the trainable early-exit network.

pub mod genome;
pub mod layers;
pub mod network;
pub mod spec;

pub use genome::{Genome, StageGene, MAX_EXITS};
pub use network::{EennModel, ForwardMode, ForwardOutputs};
pub use spec::{decode_genome, place_exits, CostVector, EennSpec};
