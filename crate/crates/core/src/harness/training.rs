use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use crate::data::{epoch_order, load_dataset, Dataset, ScalePyramid};
use crate::losses::{
    adversarial_d_loss, adversarial_g_loss, feature_matching_loss, perceptual_loss, total_g_loss, LossReport,
};
use crate::nets::{DiscriminatorBank, FeatureExtractor, MsgUNetGenerator, ParamStore};
use crate::tensor::{Adam, BnMode, Graph, Tensor, Var};
use crate::{Error, Real, Result};

/// Seeds of the independent random streams of a run.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 finaliser over (seed, stream).
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator graph of a step whose discriminator update has been applied.
pub struct PendingStep {
    graph: Graph,
    params: Vec<Var>,
    x_vars: Vec<Var>,
    ys: ScalePyramid,
    z: Vec<Var>,
    adv_d: Vec<Real>,
    total_d: Real,
}

/// Everything a training run mutates, plus the data it reads.
pub struct Trainer {
    pub config: RunConfig,
    pub generator: MsgUNetGenerator,
    pub bank: DiscriminatorBank,
    pub extractor: FeatureExtractor,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub step: u64,
    pub dataset: Dataset,
}

impl Trainer {
    /// Fresh networks for `config`, loading the dataset it names.
    pub fn new(config: RunConfig) -> Result<Self> {
        let manifest = load_dataset(&config.data.root, &config.data.split)?;
        let dataset = Dataset::load(manifest)?;
        Self::with_dataset(config, dataset)
    }

    pub fn with_dataset(config: RunConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        let seed = config.train.seed;
        let generator = MsgUNetGenerator::build(&config.arch, stream_seed(seed, 1))?;
        let bank = DiscriminatorBank::build(&config.arch, stream_seed(seed, 2))?;
        let extractor = match &config.train.extractor_weights {
            Some(path) => FeatureExtractor::from_tensors(&Checkpoint::load(path)?.named_tensors())?,
            None => FeatureExtractor::random(&config.arch.extractor_widths, stream_seed(seed, 3))?,
        };
        let opt_g = Adam::new(config.train.optimizer, &generator.store().params)?;
        let opt_d = Adam::new(config.train.optimizer, &bank.store().params)?;
        Ok(Trainer {
            config,
            generator,
            bank,
            extractor,
            opt_g,
            opt_d,
            step: 0,
            dataset,
        })
    }

    /// Sample indices and flip flags of the batch at `step`.
    pub fn batch_plan(&self, step: u64) -> (Vec<usize>, Vec<bool>) {
        let len = self.dataset.len();
        let bs = self.config.train.batch_size.min(len);
        let per_epoch = len.div_ceil(bs) as u64;
        let (epoch, b) = (step / per_epoch, (step % per_epoch) as usize);
        let order = epoch_order(len, self.config.train.seed, epoch);
        let indices = order[b * bs..((b + 1) * bs).min(len)].to_vec();
        let flips = if self.config.train.flip {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.config.train.seed, 4));
            rng.set_stream(step);
            indices.iter().map(|_| rng.random::<bool>()).collect()
        } else {
            vec![false; indices.len()]
        };
        (indices, flips)
    }

    fn batch(&self, step: u64) -> Result<(ScalePyramid, ScalePyramid)> {
        let (indices, flips) = self.batch_plan(step);
        self.dataset.batch(&indices, &self.config.arch.scales, &flips)
    }

    /// One discriminator-bank update followed by one generator update.
    pub fn train_step(&mut self) -> Result<LossReport> {
        let pending = self.discriminator_phase()?;
        self.generator_phase(pending)
    }

    /// Runs the generator forward on the current batch and updates the
    /// discriminator bank against its outputs. Generator parameters are
    /// left untouched until [`Trainer::generator_phase`].
    pub fn discriminator_phase(&mut self) -> Result<PendingStep> {
        let (xs, ys) = self.batch(self.step)?;
        let scales = self.generator.head_scales();

        let mut g = Graph::new();
        let g_params = self.generator.bind(&mut g, true);
        let x_vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let z = self.generator.forward(&mut g, &g_params, &x_vars, BnMode::Train)?;

        // Discriminators see the current outputs as constants.
        let mut gd = Graph::new();
        let d_params = self.bank.bind(&mut gd, true);
        let mut d_terms = Vec::with_capacity(scales.len());
        for (&k, &zk) in scales.iter().zip(&z) {
            let x = gd.constant(xs[k].clone());
            let y = gd.constant(ys[k].clone());
            let fake = gd.constant(g.value(zk).clone());
            let real = self.bank.forward(&mut gd, &d_params, k, x, y, BnMode::Train)?.logits;
            let fake = self.bank.forward(&mut gd, &d_params, k, x, fake, BnMode::Train)?.logits;
            d_terms.push(adversarial_d_loss(&mut gd, real, fake)?);
        }
        let total_d = gd.add_all(&d_terms)?;
        let total_d_value = gd.value(total_d).item();
        if !total_d_value.is_finite() {
            return Err(Error::NonFiniteLoss(self.step));
        }
        gd.backward(total_d)?;
        let d_grads = self.bank.store().grads(&gd, &d_params);
        self.opt_d.step(&mut self.bank.store_mut().params, &d_grads)?;
        Ok(PendingStep {
            graph: g,
            params: g_params,
            x_vars,
            ys,
            z,
            adv_d: d_terms.iter().map(|&v| gd.value(v).item()).collect(),
            total_d: total_d_value,
        })
    }

    /// Updates the generator against the bank as left by
    /// [`Trainer::discriminator_phase`], which stays frozen here.
    pub fn generator_phase(&mut self, pending: PendingStep) -> Result<LossReport> {
        let PendingStep {
            mut graph,
            params,
            x_vars,
            ys,
            z,
            adv_d,
            total_d,
        } = pending;
        let (total_g, mut report) = self.generator_objective(&mut graph, &x_vars, &ys, &z)?;
        graph.backward(total_g)?;
        let g_grads = self.generator.store().grads(&graph, &params);
        self.opt_g.step(&mut self.generator.store_mut().params, &g_grads)?;
        report.adv_d = adv_d;
        report.total_d = total_d;
        self.step += 1;
        Ok(report)
    }

    /// Adversarial, feature-matching and perceptual terms of the generator
    /// against the current, frozen discriminator bank.
    fn generator_objective(
        &mut self,
        g: &mut Graph,
        x_vars: &[Var],
        ys: &[Tensor],
        z: &[Var],
    ) -> Result<(Var, LossReport)> {
        let scales = self.generator.head_scales();
        let d_frozen = self.bank.bind(g, false);
        let mut adv = Vec::with_capacity(scales.len());
        let (mut real_feats, mut fake_feats) = (Vec::new(), Vec::new());
        let mut y_vars = Vec::with_capacity(scales.len());
        for (&k, &zk) in scales.iter().zip(z) {
            let y = g.constant(ys[k].clone());
            y_vars.push(y);
            let real = self.bank.forward(g, &d_frozen, k, x_vars[k], y, BnMode::Train)?;
            let fake = self.bank.forward(g, &d_frozen, k, x_vars[k], zk, BnMode::Train)?;
            adv.push(adversarial_g_loss(g, fake.logits)?);
            real_feats.push(real.features);
            fake_feats.push(fake.features);
        }
        // A term with zero weight is neither computed nor logged.
        let w = self.config.train.weights;
        let fm = if w.alpha == 0.0 {
            g.constant(Tensor::scalar(0.0))
        } else {
            feature_matching_loss(g, &real_feats, &fake_feats)?
        };
        let perc = if w.beta == 0.0 {
            g.constant(Tensor::scalar(0.0))
        } else {
            let ew = self.extractor.bind(g);
            perceptual_loss(g, &self.extractor, &ew, &y_vars, z)?
        };
        let (total, report) = total_g_loss(g, &adv, fm, perc, w)?;
        if !report.total_g.is_finite() {
            return Err(Error::NonFiniteLoss(self.step));
        }
        Ok((total, report))
    }

    /// Generator gradients of the objective on the batch of the current
    /// step, without updating anything but batch-norm statistics.
    pub fn generator_gradients(&mut self) -> Result<(Vec<Option<Tensor>>, LossReport)> {
        let (xs, ys) = self.batch(self.step)?;
        let mut g = Graph::new();
        let params = self.generator.bind(&mut g, true);
        let x_vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let z = self.generator.forward(&mut g, &params, &x_vars, BnMode::Train)?;
        let (total, report) = self.generator_objective(&mut g, &x_vars, &ys, &z)?;
        g.backward(total)?;
        Ok((self.generator.store().grads(&g, &params), report))
    }

    /// Eval-mode outputs for the samples at `indices`, in head order.
    pub fn predict(&mut self, indices: &[usize]) -> Result<Vec<Tensor>> {
        let flips = vec![false; indices.len()];
        let (xs, _) = self.dataset.batch(indices, &self.config.arch.scales, &flips)?;
        self.generator.generate(&xs)
    }

    /// Mean absolute error against the targets at every head scale, over the
    /// whole dataset, with eval-mode batch-norm.
    pub fn scale_l1(&mut self) -> Result<Vec<Real>> {
        let scales = self.generator.head_scales();
        let mut sums = vec![0.0; scales.len()];
        let all: Vec<usize> = (0..self.dataset.len()).collect();
        for chunk in all.chunks(self.config.train.batch_size) {
            let flips = vec![false; chunk.len()];
            let (xs, ys) = self.dataset.batch(chunk, &self.config.arch.scales, &flips)?;
            let z = self.generator.generate(&xs)?;
            for (i, (&k, zk)) in scales.iter().zip(&z).enumerate() {
                sums[i] += zk.mean_abs_diff(&ys[k])? * chunk.len() as Real;
            }
        }
        Ok(sums.into_iter().map(|s| s / self.dataset.len() as Real).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push_bytes("config", self.config.to_text().as_bytes());
        c.push_u64("step", self.step);
        push_store(&mut c, "generator", self.generator.store());
        push_store(&mut c, "discriminator", self.bank.store());
        push_adam(&mut c, "adam.generator", &self.opt_g, self.generator.store());
        push_adam(&mut c, "adam.discriminator", &self.opt_d, self.bank.store());
        for t in self.extractor.tensors() {
            c.push_tensor(&t.name, &t.value);
        }
        c
    }

    /// Restores networks, optimizer state and the step counter. Every
    /// record is validated before anything is overwritten.
    pub fn restore(&mut self, c: &Checkpoint) -> Result<()> {
        let stored = RunConfig::parse(
            std::str::from_utf8(c.bytes("config")?)
                .map_err(|_| Error::Checkpoint("config record is not UTF-8".into()))?,
        )?;
        if stored.arch != self.config.arch {
            return Err(Error::Checkpoint(
                "checkpoint was written for a different architecture".into(),
            ));
        }
        let step = c.u64("step")?;
        let g_store = read_store(c, "generator", self.generator.store())?;
        let d_store = read_store(c, "discriminator", self.bank.store())?;
        let opt_g = read_adam(c, "adam.generator", &self.opt_g, &g_store)?;
        let opt_d = read_adam(c, "adam.discriminator", &self.opt_d, &d_store)?;
        let extractor = FeatureExtractor::from_tensors(&c.named_tensors())?;
        if extractor.depth() != self.extractor.depth() {
            return Err(Error::Checkpoint("extractor depth differs from the configuration".into()));
        }
        self.generator.store_mut().assign(&g_store)?;
        self.bank.store_mut().assign(&d_store)?;
        self.opt_g = opt_g;
        self.opt_d = opt_d;
        self.extractor = extractor;
        self.step = step;
        Ok(())
    }
}

fn push_store(c: &mut Checkpoint, prefix: &str, store: &ParamStore) {
    for p in &store.params {
        c.push_tensor(&format!("{prefix}/{}", p.name), &p.value);
    }
    for s in &store.stats {
        c.push_reals(&format!("{prefix}/{}.mean", s.name), &s.stats.mean);
        c.push_reals(&format!("{prefix}/{}.var", s.name), &s.stats.var);
    }
}

pub(crate) fn read_store(c: &Checkpoint, prefix: &str, like: &ParamStore) -> Result<ParamStore> {
    let mut out = like.clone();
    for p in &mut out.params {
        let name = format!("{prefix}/{}", p.name);
        let t = c.tensor(&name)?;
        if t.shape() != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "`{name}` is {} in the checkpoint, {} in the network",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
    }
    for s in &mut out.stats {
        for (suffix, dst) in [("mean", &mut s.stats.mean), ("var", &mut s.stats.var)] {
            let name = format!("{prefix}/{}.{suffix}", s.name);
            let v = c.reals(&name)?;
            if v.len() != dst.len() {
                return Err(Error::Checkpoint(format!("`{name}` has {} channels, expected {}", v.len(), dst.len())));
            }
            *dst = v;
        }
    }
    Ok(out)
}

fn push_adam(c: &mut Checkpoint, prefix: &str, opt: &Adam, store: &ParamStore) {
    c.push_u64(&format!("{prefix}.step"), opt.step_count());
    let (m, v) = opt.moments();
    for ((p, m), v) in store.params.iter().zip(m).zip(v) {
        c.push_reals(&format!("{prefix}.m/{}", p.name), m);
        c.push_reals(&format!("{prefix}.v/{}", p.name), v);
    }
}

fn read_adam(c: &Checkpoint, prefix: &str, like: &Adam, store: &ParamStore) -> Result<Adam> {
    let step = c.u64(&format!("{prefix}.step"))?;
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for p in &store.params {
        for (kind, out) in [("m", &mut m), ("v", &mut v)] {
            let name = format!("{prefix}.{kind}/{}", p.name);
            let values = c.reals(&name)?;
            if values.len() != p.value.numel() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has {} values, expected {}",
                    values.len(),
                    p.value.numel()
                )));
            }
            out.push(values);
        }
    }
    Ok(Adam::from_parts(like.config, step, m, v))
}

/// Where [`train`] left its outputs.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub last: Option<LossReport>,
}

/// Trains until `config.train.steps`, resuming from `resume` if given.
/// Writes `losses.csv`, periodic `ckpt_<step>.msgu` and `final.msgu` into
/// `config.output.dir`.
pub fn train(config: RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    let mut trainer = Trainer::new(config)?;
    if let Some(path) = resume {
        trainer.restore(&Checkpoint::load(path)?)?;
    }
    run_training(&mut trainer, |_, _| {})
}

/// Drives `trainer` to its configured step count, calling `on_step` after
/// every update.
pub fn run_training(trainer: &mut Trainer, mut on_step: impl FnMut(u64, &LossReport)) -> Result<TrainSummary> {
    let out = trainer.config.output.clone();
    fs::create_dir_all(&out.dir)?;
    let loss_csv = out.dir.join("losses.csv");
    let appending = trainer.step > 0 && loss_csv.exists();
    let file = if appending {
        fs::OpenOptions::new().append(true).open(&loss_csv)?
    } else {
        File::create(&loss_csv)?
    };
    let mut log = BufWriter::new(file);
    if !appending {
        writeln!(log, "{}", LossReport::csv_header(trainer.generator.head_scales().len()))?;
    }
    let mut last = None;
    while trainer.step < trainer.config.train.steps {
        let report = trainer.train_step()?;
        let step = trainer.step;
        if step % out.log_every == 0 {
            writeln!(log, "{}", report.csv_row(step))?;
        }
        if out.checkpoint_every > 0 && step % out.checkpoint_every == 0 {
            log.flush()?;
            trainer.to_checkpoint().save(&out.dir.join(format!("ckpt_{step:06}.msgu")))?;
        }
        on_step(step, &report);
        last = Some(report);
    }
    log.flush()?;
    let final_checkpoint = out.dir.join("final.msgu");
    trainer.to_checkpoint().save(&final_checkpoint)?;
    Ok(TrainSummary {
        steps: trainer.step,
        final_checkpoint,
        loss_csv,
        last,
    })
}
