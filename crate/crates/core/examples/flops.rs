//! Per-network multiply-add cost of the toy and full-size configurations.
//!
//! `cargo run --release --example flops`

use msg_unet::harness::flops;
use msg_unet::nets::ArchitectureConfig;

fn main() -> msg_unet::Result<()> {
    for (name, config) in [("toy", ArchitectureConfig::toy()), ("cityscapes", ArchitectureConfig::cityscapes())] {
        let report = flops(&config)?;
        println!("{name}: {:.4} TFLOPs per forward", report.total as f64 / 1e12);
        for (network, f) in &report.networks {
            println!("  {network:<14} {:>10.4} GFLOPs", *f as f64 / 1e9);
        }
    }
    let report = flops(&ArchitectureConfig::cityscapes())?;
    let mut layers: Vec<_> = report.layers.iter().collect();
    layers.sort_by_key(|l| std::cmp::Reverse(l.flops));
    println!("heaviest full-size layers:");
    for l in layers.iter().take(5) {
        println!("  {:<14} {:<20} {:>10.4} GFLOPs", l.network, l.layer, l.flops as f64 / 1e9);
    }
    Ok(())
}
