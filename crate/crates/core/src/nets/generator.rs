use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ArchitectureConfig;
use super::params::{BlockContext, Layer, ParamStore};
use super::plan::GeneratorPlan;
use crate::tensor::{BnMode, Graph, Shape, Tensor, Var};
use crate::{Error, Result};

struct EncoderLevel {
    injects: Option<usize>,
    down: Option<Layer>,
    fuse: Option<Layer>,
    main: Vec<Layer>,
}

struct DecoderLevel {
    level: usize,
    up: Layer,
    merge: Layer,
    head: Option<Layer>,
}

/// Named subset of parameter indices, e.g. `enc.L3` or `head.L1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub indices: Vec<usize>,
}

/// U-Net generator that takes the source image at every output scale and
/// emits one image per scale.
///
/// The source at scale `k` is concatenated into the encoder at the level of
/// matching resolution and fused by a 1×1 block. Each decoder level adds the
/// encoder skip and, inside the output range, branches an RGB head, so a
/// loss on any head reaches every layer below it directly.
pub struct MsgUNetGenerator {
    config: ArchitectureConfig,
    plan: GeneratorPlan,
    store: ParamStore,
    encoder: Vec<EncoderLevel>,
    decoder: Vec<DecoderLevel>,
}

impl MsgUNetGenerator {
    pub fn build(config: &ArchitectureConfig, seed: u64) -> Result<Self> {
        let plan = GeneratorPlan::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let mut layer = |spec: &super::plan::BlockSpec| Layer::new(&mut store, spec.clone(), &mut rng);
        let encoder = plan
            .encoder
            .iter()
            .map(|l| EncoderLevel {
                injects: l.injects,
                down: l.down.as_ref().map(&mut layer),
                fuse: l.fuse.as_ref().map(&mut layer),
                main: l.main.iter().map(&mut layer).collect(),
            })
            .collect();
        let decoder = plan
            .decoder
            .iter()
            .map(|l| DecoderLevel {
                level: l.level,
                up: layer(&l.up),
                merge: layer(&l.merge),
                head: l.head.as_ref().map(|(spec, _)| layer(spec)),
            })
            .collect();
        Ok(MsgUNetGenerator {
            config: config.clone(),
            plan,
            store,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn plan(&self) -> &GeneratorPlan {
        &self.plan
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    /// Scale indices of the outputs, in the order `forward` returns them.
    pub fn head_scales(&self) -> Vec<usize> {
        self.config.head_scales()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.store.bind(g, trainable)
    }

    /// Parameters grouped per encoder level, decoder level and head.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for (level, l) in self.encoder.iter().enumerate() {
            let indices = l
                .down
                .iter()
                .chain(l.fuse.iter())
                .chain(l.main.iter())
                .flat_map(Layer::indices)
                .collect();
            groups.push(ParamGroup {
                name: format!("enc.L{level}"),
                indices,
            });
        }
        for l in &self.decoder {
            let mut indices = l.up.indices();
            indices.extend(l.merge.indices());
            groups.push(ParamGroup {
                name: format!("dec.L{}", l.level),
                indices,
            });
            if let Some(h) = &l.head {
                groups.push(ParamGroup {
                    name: format!("head.L{}", l.level),
                    indices: h.indices(),
                });
            }
        }
        groups
    }

    /// Runs the generator on a source pyramid (coarsest first, one
    /// `[N, 3, H, W]` tensor per scale) and returns the output images in
    /// the order of [`Self::head_scales`].
    pub fn forward(&mut self, g: &mut Graph, params: &[Var], inputs: &[Var], mode: BnMode) -> Result<Vec<Var>> {
        let n = self.config.scales.len();
        if inputs.len() != n {
            return Err(Error::invalid(
                "generator_forward",
                format!("{} input scales given, configuration has {n}", inputs.len()),
            ));
        }
        if params.len() != self.store.params.len() {
            return Err(Error::invalid(
                "generator_forward",
                format!("{} bound parameters, generator has {}", params.len(), self.store.params.len()),
            ));
        }
        let batch = g.shape(inputs[0]).n;
        for (k, (&x, r)) in inputs.iter().zip(&self.config.scales).enumerate() {
            let s = g.shape(x);
            if s != Shape::new(batch, 3, r.h, r.w) {
                return Err(Error::invalid(
                    "generator_forward",
                    format!("input scale {k} is {s}, expected [{batch}, 3, {}, {}]", r.h, r.w),
                ));
            }
        }
        let ctx = BlockContext {
            mode,
            eps: self.config.bn_eps,
            momentum: self.config.bn_momentum,
            slope: self.config.leaky_slope,
        };
        let stats = &mut self.store.stats;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = inputs[n - 1];
        for (level, enc) in self.encoder.iter().enumerate() {
            if let Some(down) = &enc.down {
                h = down.apply(g, params, stats, h, ctx)?;
            }
            if let (Some(fuse), Some(scale)) = (&enc.fuse, enc.injects) {
                let joined = g.concat_channels(h, inputs[scale])?;
                h = fuse.apply(g, params, stats, joined, ctx)?;
            }
            for block in &enc.main {
                h = block.apply(g, params, stats, h, ctx)?;
            }
            debug_assert_eq!(g.shape(h).h, self.config.level_resolution(level).h);
            skips.push(h);
        }
        let mut outputs = Vec::new();
        for dec in &self.decoder {
            h = dec.up.apply(g, params, stats, h, ctx)?;
            h = g.add(h, skips[dec.level])?;
            h = dec.merge.apply(g, params, stats, h, ctx)?;
            if let Some(head) = &dec.head {
                outputs.push(head.apply(g, params, stats, h, ctx)?);
            }
        }
        Ok(outputs)
    }

    /// Eval-mode forward on plain tensors.
    pub fn generate(&mut self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let xs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let outs = self.forward(&mut g, &params, &xs, BnMode::Eval)?;
        Ok(outs.into_iter().map(|v| g.value(v).clone()).collect())
    }
}
