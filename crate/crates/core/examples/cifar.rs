//! Loads a CIFAR-10 binary batch, or writes and reloads a two-record file
//! when no path is given, and prints per-class counts.
//!
//! cargo run --release --example cifar -- data_batch_1.bin

use eenas::data::{load_cifar10_binary, write_records};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path: std::path::PathBuf = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let mut bytes = Vec::new();
            for label in [3u8, 7] {
                bytes.push(label);
                bytes.extend((0..3072).map(|i| (i % 256) as u8));
            }
            let p = std::env::temp_dir().join("eenas-demo.bin");
            std::fs::write(&p, &bytes)?;
            p
        }
    };
    let ds = load_cifar10_binary(&path)?;
    println!(
        "{}: {} images of shape {:?}",
        path.display(),
        ds.len(),
        ds.shape()
    );
    println!("per class {:?}", ds.class_counts());
    let first = ds.image(0);
    println!("first image R(0,0..4) {:?}", &first[..4]);
    let again = write_records(&ds)?;
    println!(
        "re-encoded {} bytes, identical to the file: {}",
        again.len(),
        std::fs::read(&path)? == again
    );
    Ok(())
}
