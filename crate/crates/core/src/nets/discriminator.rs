use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ArchitectureConfig, Resolution};
use super::params::{BlockContext, Layer, ParamStore};
use super::plan::{discriminator_plan, DISCRIMINATOR_TAPS};
use crate::tensor::{BnMode, Graph, Var};
use crate::{Error, Real, Result};

/// Patch discriminator for one scale. Its parameters live in the owning
/// [`DiscriminatorBank`]'s store.
pub struct PatchDiscriminator {
    scale: usize,
    input: Resolution,
    layers: Vec<Layer>,
}

impl PatchDiscriminator {
    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn input_resolution(&self) -> Resolution {
        self.input
    }

    /// Spatial size of the logit map.
    pub fn patch_resolution(&self) -> Resolution {
        self.layers.last().expect("five layers").spec.output
    }
}

/// Logit map plus every tapped feature (the logit map is the last tap).
pub struct DiscriminatorOutput {
    pub logits: Var,
    pub features: Vec<Var>,
}

/// One independent patch discriminator per output scale.
pub struct DiscriminatorBank {
    discriminators: Vec<PatchDiscriminator>,
    store: ParamStore,
    eps: Real,
    momentum: Real,
    slope: Real,
}

impl DiscriminatorBank {
    pub fn build(config: &ArchitectureConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let mut discriminators = Vec::with_capacity(config.scales.len());
        for (scale, &input) in config.scales.iter().enumerate() {
            let layers = discriminator_plan(config, scale)?
                .into_iter()
                .map(|spec| Layer::new(&mut store, spec, &mut rng))
                .collect::<Vec<_>>();
            debug_assert_eq!(layers.len(), DISCRIMINATOR_TAPS);
            discriminators.push(PatchDiscriminator { scale, input, layers });
        }
        Ok(DiscriminatorBank {
            discriminators,
            store,
            eps: config.bn_eps,
            momentum: config.bn_momentum,
            slope: config.leaky_slope,
        })
    }

    pub fn len(&self) -> usize {
        self.discriminators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discriminators.is_empty()
    }

    pub fn get(&self, scale: usize) -> Option<&PatchDiscriminator> {
        self.discriminators.get(scale)
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

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.store.bind(g, trainable)
    }

    /// Judges the pair `(source, candidate)` with the discriminator of `scale`.
    pub fn forward(
        &mut self,
        g: &mut Graph,
        params: &[Var],
        scale: usize,
        source: Var,
        candidate: Var,
        mode: BnMode,
    ) -> Result<DiscriminatorOutput> {
        let d = self
            .discriminators
            .get(scale)
            .ok_or_else(|| Error::invalid("discriminator_forward", format!("no discriminator for scale {scale}")))?;
        let (s, c) = (g.shape(source), g.shape(candidate));
        let expect = (d.input.h, d.input.w);
        for t in [s, c] {
            if t.c != 3 || (t.h, t.w) != expect {
                return Err(Error::invalid(
                    "discriminator_forward",
                    format!("scale {scale} takes 3-channel {} images, got {t}", d.input),
                ));
            }
        }
        if s.n != c.n {
            return Err(Error::ShapeMismatch {
                op: "discriminator_forward",
                left: s,
                right: c,
            });
        }
        let ctx = BlockContext {
            mode,
            eps: self.eps,
            momentum: self.momentum,
            slope: self.slope,
        };
        let mut h = g.concat_channels(source, candidate)?;
        let mut features = Vec::with_capacity(DISCRIMINATOR_TAPS);
        for layer in &d.layers {
            h = layer.apply(g, params, &mut self.store.stats, h, ctx)?;
            features.push(h);
        }
        Ok(DiscriminatorOutput { logits: h, features })
    }
}
