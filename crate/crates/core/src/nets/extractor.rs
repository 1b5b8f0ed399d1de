use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::Resolution;
use super::params::{orthogonal, weight_shape, BlockContext, Layer, ParamStore};
use super::plan::{extractor_plan, BlockActivation, BlockSpec, ConvKind};
use crate::tensor::{BnMode, Graph, NamedTensor, Padding, Tensor, Var};
use crate::{Error, Real, Result};

const SLOPE: Real = 0.2;

/// Frozen convolutional feature extractor for the perceptual term.
///
/// Weights are bound as constants, so nothing upstream of an image ever
/// sends gradient into them.
pub struct FeatureExtractor {
    store: ParamStore,
    layers: Vec<Layer>,
}

impl FeatureExtractor {
    /// Seeded orthogonal weights, zero biases.
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::Architecture("feature extractor widths must be non-empty and positive".into()));
        }
        // Only channel counts matter here; spatial sizes are checked per call.
        let specs = extractor_plan(widths, Resolution::new(64, 64))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let gain = (2.0 / (1.0 + (SLOPE as f64).powi(2))).sqrt();
        let layers = specs
            .into_iter()
            .map(|spec| {
                let layer = Layer::new(&mut store, spec, &mut rng);
                let shape = weight_shape(&layer.spec);
                let fan_in = shape.c * shape.h * shape.w;
                let values = orthogonal(shape.n, fan_in, gain, &mut rng);
                store.params[layer.weight_index()]
                    .value
                    .data_mut()
                    .copy_from_slice(&values);
                layer
            })
            .collect();
        Ok(FeatureExtractor { store, layers })
    }

    /// A single 1×1 stage that passes the image through unchanged.
    pub fn identity() -> Self {
        let spec = BlockSpec {
            name: "extractor.stage0".into(),
            kind: ConvKind::Conv(Padding::default()),
            in_ch: 3,
            out_ch: 3,
            kernel: 1,
            stride: 1,
            bias: true,
            norm: false,
            activation: None,
            input: Resolution::new(1, 1),
            output: Resolution::new(1, 1),
        };
        let mut store = ParamStore::default();
        let layer = Layer::new(&mut store, spec, &mut ChaCha8Rng::seed_from_u64(0));
        let w = store.params[layer.weight_index()].value.data_mut();
        w.fill(0.0);
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        FeatureExtractor {
            store,
            layers: vec![layer],
        }
    }

    /// Rebuilds an extractor from `extractor.stage{i}.weight` / `.bias`
    /// tensors. Stage kernels must alternate 3×3 and 4×4 starting with 3×3.
    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| tensors.iter().find(|t| t.name == name).map(|t| &t.value);
        let mut widths = Vec::new();
        let mut in_ch = 3;
        while let Some(w) = find(&format!("extractor.stage{}.weight", widths.len())) {
            let i = widths.len();
            let s = w.shape();
            let k = if i % 2 == 1 { 4 } else { 3 };
            if s.c != in_ch || s.h != k || s.w != k {
                return Err(Error::Checkpoint(format!(
                    "extractor stage {i} weight is {s}, expected [_, {in_ch}, {k}, {k}]"
                )));
            }
            in_ch = s.n;
            widths.push(s.n);
        }
        if widths.is_empty() {
            return Err(Error::Checkpoint("no extractor.stage0.weight tensor found".into()));
        }
        let mut out = Self::random(&widths, 0)?;
        for p in &mut out.store.params {
            let src = find(&p.name).ok_or_else(|| Error::Checkpoint(format!("missing tensor `{}`", p.name)))?;
            if src.numel() != p.value.numel() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has {} values, expected {}",
                    p.name,
                    src.numel(),
                    p.value.numel()
                )));
            }
            p.value.data_mut().copy_from_slice(src.data());
        }
        Ok(out)
    }

    /// Number of tapped stages.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.store.params
    }

    /// Inserts the weights into `g` as constants.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.store.bind(g, false)
    }

    /// Output of every stage, first to last.
    pub fn forward(&self, g: &mut Graph, weights: &[Var], image: Var) -> Result<Vec<Var>> {
        let s = g.shape(image);
        if s.c != 3 {
            return Err(Error::invalid("extractor_forward", format!("expected a 3-channel image, got {s}")));
        }
        let ctx = BlockContext {
            mode: BnMode::Eval,
            eps: 0.0,
            momentum: 0.0,
            slope: SLOPE,
        };
        let mut h = image;
        let mut taps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            debug_assert!(matches!(layer.spec.activation, Some(BlockActivation::Leaky) | None));
            h = layer.apply(g, weights, &mut [], h, ctx)?;
            taps.push(h);
        }
        Ok(taps)
    }

    /// Graph-free forward, for inspection.
    pub fn features(&self, image: &Tensor) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let w = self.bind(&mut g);
        let x = g.constant(image.clone());
        let taps = self.forward(&mut g, &w, x)?;
        Ok(taps.into_iter().map(|v| g.value(v).clone()).collect())
    }
}
