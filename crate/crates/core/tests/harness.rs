use std::fs;
use std::path::Path;

use msg_unet::data::synthetic::write_synthetic_dataset;
use msg_unet::data::{load_dataset, read_image, Dataset};
use msg_unet::harness::flops::{block_flops, conv_flops};
use msg_unet::harness::gradscan::{bin_edge, GradScan, GroupHistogram, BINS};
use msg_unet::harness::{
    ablate_dataset, eval, flops, infer, load_generator, run_training, train, Checkpoint, RunConfig, Trainer, SEED_ENV,
};
use msg_unet::nets::{ArchitectureConfig, BlockSpec, ConvKind, Resolution};
use msg_unet::tensor::{allocation_count, Padding};
use msg_unet::{Error, Real};

fn toy_config(root: &Path, out: &Path, extra: &str) -> RunConfig {
    let text = format!(
        "arch.preset = toy\ntrain.batch_size = 2\ntrain.seed = 3\ntrain.flip = true\ntrain.steps = 4\n\
         data.root = {}\noutput.dir = {}\n{extra}",
        root.display(),
        out.display()
    );
    RunConfig::parse(&text).unwrap()
}

fn toy_data(root: &Path) {
    write_synthetic_dataset(root, "train", 4, Resolution::new(128, 64), 9).unwrap();
}

fn bits(t: &[Real]) -> Vec<u64> {
    t.iter().map(|v| v.to_bits() as u64).collect()
}

fn store_bits(store: &msg_unet::nets::ParamStore) -> Vec<Vec<u64>> {
    store.params.iter().map(|p| bits(p.value.data())).collect()
}

/// Checkpoint bytes without the config record, which names the output dir.
fn state_bytes(mut c: Checkpoint) -> Vec<u8> {
    c.records.retain(|r| r.name != "config");
    c.to_bytes()
}

#[test]
fn config_defaults_and_errors() {
    let c = RunConfig::parse("arch.preset = toy\n").unwrap();
    assert_eq!((c.train.weights.alpha, c.train.weights.beta), (10.0, 0.25));
    assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);

    let err = RunConfig::parse("arch.preset = toy\ntrain.colour = red\n").unwrap_err();
    assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    assert!(RunConfig::parse("train.steps = many\n").is_err());
    assert!(RunConfig::parse("arch.scales = 32x16, 96x48\n").is_err());
    assert!(RunConfig::parse("train.alpha = -1\n").is_err());

    std::env::set_var(SEED_ENV, "42");
    let seeded = c.clone().with_env_overrides().unwrap();
    std::env::set_var(SEED_ENV, "x");
    assert!(c.clone().with_env_overrides().is_err());
    std::env::remove_var(SEED_ENV);
    assert_eq!(seeded.train.seed, 42);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let mut trainer = Trainer::new(toy_config(data.path(), out.path(), "")).unwrap();
    trainer.train_step().unwrap();
    let ckpt = trainer.to_checkpoint();
    let path = out.path().join("a.msgu");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert!(loaded.to_bytes() == ckpt.to_bytes());
    assert!(fs::read(&path).unwrap() == ckpt.to_bytes());

    let mut fresh = Trainer::new(toy_config(data.path(), out.path(), "")).unwrap();
    fresh.restore(&loaded).unwrap();
    assert!(fresh.to_checkpoint().to_bytes() == ckpt.to_bytes());
    assert_eq!(store_bits(fresh.generator.store()), store_bits(trainer.generator.store()));
}

#[test]
fn mismatched_checkpoint_fails_before_mutation() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let trainer = Trainer::new(toy_config(data.path(), out.path(), "")).unwrap();
    let mut other = Trainer::new(toy_config(data.path(), out.path(), "arch.widths = 8, 16, 16, 32, 32\n")).unwrap();
    let before = other.to_checkpoint().to_bytes();
    assert!(other.restore(&trainer.to_checkpoint()).is_err());

    // Same architecture, one record truncated to the wrong length.
    let mut broken = trainer.to_checkpoint();
    let last = broken.records.len() - 1;
    broken.records.swap(0, last);
    broken.records.pop();
    let mut same = Trainer::new(toy_config(data.path(), out.path(), "")).unwrap();
    let same_before = same.to_checkpoint().to_bytes();
    assert!(same.restore(&broken).is_err());
    assert!(same.to_checkpoint().to_bytes() == same_before);
    assert!(other.to_checkpoint().to_bytes() == before);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let data = tempfile::tempdir().unwrap();
    let full_dir = tempfile::tempdir().unwrap();
    let part_dir = tempfile::tempdir().unwrap();
    toy_data(data.path());

    let mut full = Trainer::new(toy_config(data.path(), full_dir.path(), "")).unwrap();
    let mut full_reports = Vec::new();
    run_training(&mut full, |_, r| full_reports.push(r.clone())).unwrap();

    let mut part_cfg = toy_config(data.path(), part_dir.path(), "");
    part_cfg.train.steps = 2;
    let first = train(part_cfg, None).unwrap();
    let resumed_cfg = toy_config(data.path(), part_dir.path(), "");
    let mut resumed = Trainer::new(resumed_cfg).unwrap();
    resumed.restore(&Checkpoint::load(&first.final_checkpoint).unwrap()).unwrap();
    assert_eq!(resumed.step, 2);
    let mut tail = Vec::new();
    run_training(&mut resumed, |_, r| tail.push(r.clone())).unwrap();

    assert_eq!(tail.len(), 2);
    for (a, b) in tail.iter().zip(&full_reports[2..]) {
        assert_eq!(a.total_g.to_bits(), b.total_g.to_bits());
        assert_eq!(a.total_d.to_bits(), b.total_d.to_bits());
    }
    assert!(state_bytes(resumed.to_checkpoint()) == state_bytes(full.to_checkpoint()));
    assert_eq!(
        fs::read_to_string(part_dir.path().join("losses.csv")).unwrap(),
        fs::read_to_string(full_dir.path().join("losses.csv")).unwrap()
    );
}

#[test]
fn repeated_runs_write_identical_logs() {
    let data = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let extra = "train.steps = 2\n";
    train(toy_config(data.path(), a.path(), extra), None).unwrap();
    train(toy_config(data.path(), b.path(), extra), None).unwrap();
    let log = fs::read(a.path().join("losses.csv")).unwrap();
    assert!(log == fs::read(b.path().join("losses.csv")).unwrap());
    assert!(!log.contains(&b'\r'));
    let final_state = |d: &Path| state_bytes(Checkpoint::load(&d.join("final.msgu")).unwrap());
    assert!(final_state(a.path()) == final_state(b.path()));
}

#[test]
fn zero_weights_leave_pure_adversarial_loss() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let mut trainer =
        Trainer::new(toy_config(data.path(), out.path(), "train.alpha = 0\ntrain.beta = 0\n")).unwrap();
    for _ in 0..2 {
        let r = trainer.train_step().unwrap();
        assert_eq!((r.fm, r.perc), (0.0, 0.0));
        assert_eq!(r.total_g, r.adv_g.iter().sum::<Real>());
    }
}

#[test]
fn every_step_report_is_consistent() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let mut trainer = Trainer::new(toy_config(data.path(), out.path(), "")).unwrap();
    let w = trainer.config.train.weights;
    for _ in 0..3 {
        let r = trainer.train_step().unwrap();
        assert_eq!(r.adv_g.len(), 3);
        assert_eq!(r.adv_d.len(), 3);
        assert!(r.is_consistent(w, 1e-9), "{r:?}");
    }
}

#[test]
fn updates_alternate() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let mut trainer = Trainer::new(toy_config(data.path(), out.path(), "")).unwrap();
    let (g0, d0) = (store_bits(trainer.generator.store()), store_bits(trainer.bank.store()));
    let pending = trainer.discriminator_phase().unwrap();
    let d1 = store_bits(trainer.bank.store());
    assert_eq!(store_bits(trainer.generator.store()), g0);
    assert_ne!(d1, d0);
    trainer.generator_phase(pending).unwrap();
    assert_eq!(store_bits(trainer.bank.store()), d1);
    assert_ne!(store_bits(trainer.generator.store()), g0);
}

#[test]
fn inference_names_outputs_by_scale_and_is_deterministic() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let summary = train(toy_config(data.path(), out.path(), "train.steps = 1\n"), None).unwrap();
    let (_, mut generator) = load_generator(&Checkpoint::load(&summary.final_checkpoint).unwrap()).unwrap();
    let input = data.path().join("train/source/pair0000.ppm");

    let a = out.path().join("a");
    let files = infer(&mut generator, &input, None, &a).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["pair0000_32x16.ppm", "pair0000_64x32.ppm", "pair0000_128x64.ppm"]);
    let again = infer(&mut generator, &input, None, &out.path().join("b")).unwrap();
    for (x, y) in files.iter().zip(&again) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let img = read_image(&files[2]).unwrap();
    assert_eq!((img.height, img.width), (128, 64));

    let degraded = infer(&mut generator, &input, Some(Resolution::new(32, 16)), &out.path().join("c")).unwrap();
    assert_eq!(degraded.len(), 3);

    let square = out.path().join("square.ppm");
    msg_unet::data::write_ppm(&square, &msg_unet::data::RgbImage::filled(128, 128, [1, 2, 3])).unwrap();
    assert!(infer(&mut generator, &square, None, &out.path().join("d")).is_err());

    let dataset = Dataset::load(load_dataset(data.path(), "train").unwrap()).unwrap();
    let levels = generator.config().scales.clone();
    let grid = ablate_dataset(&mut generator, &dataset, &levels).unwrap();
    assert_eq!(grid.ssim.len(), 3);
    assert!(grid.ssim.iter().all(|row| row.len() == 3));
    assert!(grid.to_csv().starts_with("input,out_32x16,out_64x32,out_128x64\n"));
}

#[test]
fn eval_writes_metrics_for_identical_dirs() {
    let data = tempfile::tempdir().unwrap();
    toy_data(data.path());
    let target = data.path().join("train/target");
    let out = tempfile::tempdir().unwrap();
    for e in fs::read_dir(&target).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, out.path().join(p.file_name().unwrap())).unwrap();
    }
    let report = eval(out.path(), &target).unwrap();
    assert_eq!((report.mean.psnr_db, report.mean.ssim), (100.0, 1.0));
    assert!((report.mean.vif - 1.0).abs() < 1e-6);
    let csv = fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("id,psnr_db,ssim,vif\n"));
}

fn spec(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, input: Resolution, output: Resolution) -> BlockSpec {
    BlockSpec {
        name: "probe".into(),
        kind: ConvKind::Conv(Padding::uniform(pad)),
        in_ch,
        out_ch,
        kernel,
        stride,
        bias: true,
        norm: false,
        activation: None,
        input,
        output,
    }
}

#[test]
fn flops_unit_cases() {
    let big = spec(3, 8, 4, 2, 1, Resolution::new(64, 32), Resolution::new(32, 16));
    assert_eq!(conv_flops(&big), 2 * 4 * 4 * 3 * 8 * 32 * 16);
    assert_eq!(conv_flops(&big), 393_216);
    let unit = spec(1, 1, 1, 1, 0, Resolution::new(1, 1), Resolution::new(1, 1));
    assert_eq!(conv_flops(&unit), 2);
    assert_eq!(block_flops(&unit), 2);
    let mut normed = unit.clone();
    normed.norm = true;
    normed.activation = Some(msg_unet::nets::BlockActivation::Leaky);
    assert_eq!(block_flops(&normed), 2 + 2 + 2);
}

#[test]
fn flops_allocates_no_tensors() {
    let before = allocation_count();
    let report = flops(&ArchitectureConfig::cityscapes()).unwrap();
    assert_eq!(allocation_count(), before);
    assert_eq!(report.total, report.networks.iter().map(|(_, f)| f).sum::<u64>());
    assert_eq!(report.total, report.layers.iter().map(|l| l.flops).sum::<u64>());
    let csv = report.to_csv();
    assert!(csv.starts_with("network,layer,macs,flops\n"));
    assert!(csv.ends_with(&format!("all,total,,{}\n", report.total)));
}

#[test]
fn gradscan_histograms_share_bin_edges() {
    let on = GradScan {
        seed: 0,
        intermediate_heads: true,
        groups: vec![GroupHistogram::from_values("enc.L0", &[1e-3, 2e-9])],
    };
    let off = GradScan {
        seed: 0,
        intermediate_heads: false,
        groups: vec![GroupHistogram::from_values("enc.L0", &[0.0, 5.0])],
    };
    let edges = |csv: &str| -> Vec<String> {
        csv.lines().skip(1).map(|l| l.split(',').skip(1).take(3).collect::<Vec<_>>().join(",")).collect()
    };
    assert_eq!(edges(&on.to_csv()), edges(&off.to_csv()));
    assert_eq!(edges(&on.to_csv()).len(), BINS);
    assert_eq!(bin_edge(16), 1e-8);
}
