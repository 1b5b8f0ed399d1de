//! Overfits the toy model on synthetic pairs, then measures SSIM of every
//! output scale with the input degraded to each scale of the chain.
//!
//! `cargo run --release --example ablation`

use msg_unet::data::synthetic::write_synthetic_dataset;
use msg_unet::harness::{ablate_dataset, RunConfig, Trainer};

fn main() -> msg_unet::Result<()> {
    let dir = std::env::temp_dir().join("msgu_ablation");
    let mut config = RunConfig::default();
    config.data.root = dir.join("data");
    config.output.dir = dir.join("run");
    config.train.optimizer.lr = 1e-3;
    write_synthetic_dataset(&config.data.root, "train", 4, config.arch.finest(), 11)?;
    let mut trainer = Trainer::new(config)?;
    for _ in 0..300 {
        trainer.train_step()?;
    }
    let l1 = trainer.scale_l1()?;
    println!("per-scale L1 after {} steps: {l1:?}", trainer.step);
    let scales = trainer.config.arch.scales.clone();
    let grid = ablate_dataset(&mut trainer.generator, &trainer.dataset, &scales)?;
    print!("{}", grid.to_csv());
    Ok(())
}
