//! Trains the toy model briefly, saves a checkpoint, reloads it and
//! translates the validation inputs with and without input degradation,
//! then scores the finest outputs.
//!
//! `cargo run --release --example translate [steps=200]`

use std::fs;

use msg_unet::data::synthetic::write_synthetic_dataset;
use msg_unet::harness::{eval, infer, load_generator, Checkpoint, RunConfig, Trainer};

fn main() -> msg_unet::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let dir = std::env::temp_dir().join("msgu_translate");
    let _ = fs::remove_dir_all(&dir);
    let mut config = RunConfig::default();
    config.data.root = dir.join("data");
    config.output.dir = dir.join("run");
    config.train.optimizer.lr = 1e-3;
    let finest = config.arch.finest();
    write_synthetic_dataset(&config.data.root, "train", 4, finest, 11)?;
    write_synthetic_dataset(&config.data.root, "val", 2, finest, 12)?;

    let mut trainer = Trainer::new(config.clone())?;
    while trainer.step < steps {
        trainer.train_step()?;
    }
    let ckpt = dir.join("model.msgu");
    trainer.to_checkpoint().save(&ckpt)?;
    let (_, mut generator) = load_generator(&Checkpoint::load(&ckpt)?)?;

    let source = config.data.root.join("val").join("source");
    let target = config.data.root.join("val").join("target");
    for degrade in [None, Some(config.arch.scales[0])] {
        let label = degrade.map_or("clean".to_owned(), |r| format!("degraded_{r}"));
        let out = dir.join(&label);
        let written = infer(&mut generator, &source, degrade, &out)?;
        // keep only the finest head, renamed to match the targets
        let finest_dir = out.join("finest");
        fs::create_dir_all(&finest_dir)?;
        for path in written.iter().filter(|p| p.to_string_lossy().ends_with(&format!("_{finest}.ppm"))) {
            let name = path.file_name().unwrap().to_string_lossy().replace(&format!("_{finest}"), "");
            fs::copy(path, finest_dir.join(name))?;
        }
        let report = eval(&finest_dir, &target)?;
        println!(
            "{label}: {} files written, finest psnr {:.2} dB, ssim {:.4}, vif {:.4}",
            written.len(),
            report.mean.psnr_db,
            report.mean.ssim,
            report.mean.vif
        );
    }
    println!("outputs under {}", dir.display());
    Ok(())
}
