//! Datasets: the procedural synthetic generator, the 8-bit binary record
//! format, stratified splits and batching.

mod dataset;
mod records;
mod split;
mod synthetic;

pub use dataset::Dataset;
pub use records::{load_cifar10_binary, parse_records, write_records, CIFAR_CLASSES, CIFAR_SIDE};
pub use split::{batches, split_stratified, support_set, Split};
pub use synthetic::{generate_synthetic, SyntheticConfig};
