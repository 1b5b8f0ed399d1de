//! Trains the deepened toy configuration with and without intermediate heads
//! and compares the generator gradient distributions per parameter group.
//!
//! `cargo run --release --example gradscan -- [seeds] [epochs]`

use msg_unet::data::synthetic::write_synthetic_dataset;
use msg_unet::data::{load_dataset, Dataset};
use msg_unet::harness::gradscan::{scan_pair, write_gradscan};
use msg_unet::harness::RunConfig;

fn main() -> msg_unet::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let epochs: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let text = include_str!("../../../configs/gradscan_deep.cfg");
    let mut config = RunConfig::parse(text)?;
    let dir = std::env::temp_dir().join("msgu_gradscan");
    config.data.root = dir.join("data");
    config.output.dir = dir.join("run");
    write_synthetic_dataset(&config.data.root, "train", 4, config.arch.finest(), 5)?;
    let dataset = Dataset::load(load_dataset(&config.data.root, "train")?)?;
    let mut pairs = Vec::new();
    for seed in 0..seeds {
        config.train.seed = seed;
        let pair = scan_pair(&config, &dataset, epochs)?;
        println!("seed {seed}");
        for (on, off) in pair.heads_on.groups.iter().zip(&pair.heads_off.groups) {
            println!(
                "  {:8} median on {:9.3e} off {:9.3e}   near-zero on {:.4} off {:.4}",
                on.group, on.median, off.median, on.near_zero, off.near_zero
            );
        }
        println!(
            "  earliest-group gain: {}, deep near-zero off >= on: {}",
            pair.earliest_median_gain(),
            pair.deep_near_zero_not_less()
        );
        pairs.push(pair);
    }
    write_gradscan(&config.output.dir, &pairs)?;
    println!("CSVs in {}", config.output.dir.display());
    Ok(())
}
