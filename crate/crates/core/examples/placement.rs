//! Decodes a genome, places its exits and prints the cost of every exit.
//!
//! cargo run --release --example placement -- 3-3-32,2-5-32,3-5-32,1-3-32/1110

use eenas::model::{decode_genome, place_exits, Genome, MAX_EXITS};

fn main() -> eenas::Result<()> {
    let arg = std::env::args().nth(1);
    let genome = Genome::parse(arg.as_deref().unwrap_or("3-3-32,2-5-32,3-5-32,1-3-32/1110"))?;
    let backbone = decode_genome(&genome, [3, 32, 32], 10)?;
    println!(
        "{genome}: {} blocks, backbone {:.3} M MACs",
        backbone.blocks.len(),
        backbone.backbone_macs() as f64 / 1e6
    );
    let spec = place_exits(&backbone, &genome.theta, MAX_EXITS)?;
    for (i, (exit, g)) in spec.exits.iter().zip(spec.gamma.millions()).enumerate() {
        let [c, h, w] = spec.feature_shape(exit.after_block);
        println!(
            "exit {} after block {:>2} on {c}x{h}x{w}: pool {:?}, conv {:?}, head {:.4} M, gamma {g:.4} M",
            i + 1,
            exit.after_block,
            exit.head.pool_window,
            exit.head.conv_channels,
            exit.head.macs() as f64 / 1e6
        );
    }
    println!("non-decreasing: {}", spec.gamma.is_non_decreasing());
    Ok(())
}
