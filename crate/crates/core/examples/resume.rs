//! Trains four steps in one go and again as two plus two with a checkpoint
//! in between, and shows that both runs end in the same state.
//!
//! `cargo run --release --example resume`

use std::fs;

use msg_unet::data::synthetic::write_synthetic_dataset;
use msg_unet::harness::{train, Checkpoint, RunConfig};
use msg_unet::nets::ArchitectureConfig;

fn state(path: &std::path::Path) -> msg_unet::Result<Vec<u8>> {
    let mut c = Checkpoint::load(path)?;
    // the config record holds the output directory, which differs
    c.records.retain(|r| r.name != "config");
    Ok(c.to_bytes())
}

fn main() -> msg_unet::Result<()> {
    let dir = std::env::temp_dir().join("msgu_resume");
    let _ = fs::remove_dir_all(&dir);
    let data = dir.join("data");
    write_synthetic_dataset(&data, "train", 4, ArchitectureConfig::toy().finest(), 9)?;
    let config = |name: &str, steps: u64| {
        let mut c = RunConfig::default();
        c.data.root = data.clone();
        c.output.dir = dir.join(name);
        c.train.batch_size = 2;
        c.train.steps = steps;
        c
    };
    let whole = train(config("whole", 4), None)?;
    let half = train(config("split", 2), None)?;
    let resumed = train(config("split", 4), Some(&half.final_checkpoint))?;
    for (name, csv) in [("uninterrupted", &whole.loss_csv), ("resumed", &resumed.loss_csv)] {
        let text = fs::read_to_string(csv)?;
        let totals: Vec<&str> = text.lines().skip(1).filter_map(|l| l.split(',').nth(9)).collect();
        println!("{name:>13} total_g: {}", totals.join(" "));
    }
    let same = state(&whole.final_checkpoint)? == state(&resumed.final_checkpoint)?;
    println!("final states identical: {same}");
    Ok(())
}
