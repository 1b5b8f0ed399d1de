//! Shape walks of every network, computed from the configuration alone.
//!
//! The builders instantiate parameters from these plans and the FLOPs
//! analyser sums over them, so neither needs to run a forward pass.

use super::config::{ArchitectureConfig, Resolution};
use crate::tensor::kernels::conv_output_len;
use crate::tensor::Padding;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    Conv(Padding),
    Transposed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockActivation {
    Leaky,
    Tanh,
}

/// One convolution, optionally followed by batch-norm and an activation.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub kind: ConvKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    pub norm: bool,
    pub activation: Option<BlockActivation>,
    pub input: Resolution,
    pub output: Resolution,
}

impl BlockSpec {
    #[allow(clippy::too_many_arguments)]
    fn conv(
        name: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: Padding,
        input: Resolution,
        norm: bool,
        activation: Option<BlockActivation>,
    ) -> Result<Self> {
        let h = conv_output_len("conv2d", input.h, kernel, stride, pad.top + pad.bottom)
            .map_err(|e| Error::Architecture(format!("{name}: {e}")))?;
        let w = conv_output_len("conv2d", input.w, kernel, stride, pad.left + pad.right)
            .map_err(|e| Error::Architecture(format!("{name}: {e}")))?;
        Ok(BlockSpec {
            name,
            kind: ConvKind::Conv(pad),
            in_ch,
            out_ch,
            kernel,
            stride,
            bias: !norm,
            norm,
            activation,
            input,
            output: Resolution::new(h, w),
        })
    }

    fn transposed(name: String, in_ch: usize, out_ch: usize, kernel: usize, input: Resolution) -> Self {
        let padding = (kernel - 2) / 2;
        let up = |len: usize| (len - 1) * 2 + kernel - 2 * padding;
        BlockSpec {
            name,
            kind: ConvKind::Transposed(padding),
            in_ch,
            out_ch,
            kernel,
            stride: 2,
            bias: false,
            norm: true,
            activation: Some(BlockActivation::Leaky),
            input,
            output: Resolution::new(up(input.h), up(input.w)),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.in_ch * self.out_ch * self.kernel * self.kernel
            + if self.bias { self.out_ch } else { 0 }
            + if self.norm { 2 * self.out_ch } else { 0 }
    }

    /// Multiply-accumulate count of the convolution alone, per image.
    pub fn macs(&self) -> u64 {
        let k2 = (self.kernel * self.kernel) as u64;
        let spatial = match self.kind {
            ConvKind::Conv(_) => self.output.pixels(),
            ConvKind::Transposed(_) => self.input.pixels(),
        } as u64;
        k2 * self.in_ch as u64 * self.out_ch as u64 * spatial
    }

    pub fn output_elements(&self) -> u64 {
        (self.out_ch * self.output.pixels()) as u64
    }
}

/// Encoder side of one resolution level.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLevelPlan {
    pub level: usize,
    pub resolution: Resolution,
    /// Scale index whose source image is injected here.
    pub injects: Option<usize>,
    pub down: Option<BlockSpec>,
    /// 1×1 fusion after concatenating the injected image.
    pub fuse: Option<BlockSpec>,
    pub main: Vec<BlockSpec>,
}

/// Decoder side of one resolution level (every level above the bottleneck).
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLevelPlan {
    pub level: usize,
    pub resolution: Resolution,
    pub up: BlockSpec,
    pub merge: BlockSpec,
    /// Output head and the scale index it emits.
    pub head: Option<(BlockSpec, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorPlan {
    pub encoder: Vec<EncoderLevelPlan>,
    /// Ordered from the level just above the bottleneck up to the finest.
    pub decoder: Vec<DecoderLevelPlan>,
}

impl GeneratorPlan {
    pub fn new(config: &ArchitectureConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let same = Padding::same(k, k);
        let down_pad = Padding::uniform((k - 2) / 2);
        let leaky = Some(BlockActivation::Leaky);
        let levels = config.levels();
        let mut encoder = Vec::with_capacity(levels);
        for level in 0..levels {
            let res = config.level_resolution(level);
            let width = config.widths[level];
            let injects = config.scale_at_level(level);
            let name = |part: &str| format!("enc.L{level}.{part}");
            let plan = if level == 0 {
                EncoderLevelPlan {
                    level,
                    resolution: res,
                    injects,
                    down: None,
                    fuse: None,
                    main: vec![
                        BlockSpec::conv(name("main0"), 3, width, k, 1, same, res, true, leaky)?,
                        BlockSpec::conv(name("main1"), width, width, k, 1, same, res, true, leaky)?,
                    ],
                }
            } else {
                let prev = config.widths[level - 1];
                let down = BlockSpec::conv(
                    name("down"),
                    prev,
                    width,
                    k,
                    2,
                    down_pad,
                    config.level_resolution(level - 1),
                    true,
                    leaky,
                )?;
                let (fuse, main) = if injects.is_some() {
                    (
                        Some(BlockSpec::conv(
                            name("fuse"),
                            width + 3,
                            width,
                            1,
                            1,
                            Padding::default(),
                            res,
                            true,
                            leaky,
                        )?),
                        vec![BlockSpec::conv(name("main0"), width, width, k, 1, same, res, true, leaky)?],
                    )
                } else {
                    (None, vec![])
                };
                EncoderLevelPlan {
                    level,
                    resolution: res,
                    injects,
                    down: Some(down),
                    fuse,
                    main,
                }
            };
            encoder.push(plan);
        }

        let mut decoder = Vec::with_capacity(levels - 1);
        for level in (0..levels - 1).rev() {
            let res = config.level_resolution(level);
            let width = config.widths[level];
            let below = config.widths[level + 1];
            let name = |part: &str| format!("dec.L{level}.{part}");
            let up = BlockSpec::transposed(name("up"), below, width, k, config.level_resolution(level + 1));
            let skip_channels = encoder[level].main.last().map_or(width, |b| b.out_ch);
            if up.out_ch != skip_channels || up.output != res {
                return Err(Error::Architecture(format!(
                    "decoder level {level}: upsampled {}x{} channels do not match skip {}x{}",
                    up.out_ch, up.output, skip_channels, res
                )));
            }
            let merge = BlockSpec::conv(name("merge"), width, width, k, 1, same, res, true, leaky)?;
            let head = match config.scale_at_level(level) {
                Some(scale) if config.intermediate_heads || level == 0 => Some((
                    BlockSpec::conv(
                        format!("head.L{level}"),
                        width,
                        3,
                        3,
                        1,
                        Padding::uniform(1),
                        res,
                        false,
                        Some(BlockActivation::Tanh),
                    )?,
                    scale,
                )),
                _ => None,
            };
            decoder.push(DecoderLevelPlan {
                level,
                resolution: res,
                up,
                merge,
                head,
            });
        }
        Ok(GeneratorPlan { encoder, decoder })
    }

    pub fn injection_count(&self) -> usize {
        self.encoder.iter().filter(|l| l.injects.is_some()).count()
    }

    pub fn head_count(&self) -> usize {
        self.decoder.iter().filter(|l| l.head.is_some()).count()
    }

    /// All blocks in construction order.
    pub fn blocks(&self) -> Vec<&BlockSpec> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.extend(l.down.iter());
            out.extend(l.fuse.iter());
            out.extend(l.main.iter());
        }
        for l in &self.decoder {
            out.push(&l.up);
            out.push(&l.merge);
            out.extend(l.head.iter().map(|(b, _)| b));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.parameter_count()).sum()
    }
}

/// Number of tapped layers in a patch discriminator.
pub const DISCRIMINATOR_TAPS: usize = 5;

/// Patch discriminator on `(source ‖ candidate)` at one scale: three
/// stride-2 blocks, one stride-1 block, one stride-1 logit conv.
pub fn discriminator_plan(config: &ArchitectureConfig, scale: usize) -> Result<Vec<BlockSpec>> {
    let input = *config
        .scales
        .get(scale)
        .ok_or_else(|| Error::Architecture(format!("no scale {scale}")))?;
    let base = config.disc_width;
    let leaky = Some(BlockActivation::Leaky);
    let half = Padding::uniform(1);
    let same = Padding::same(4, 4);
    let name = |i: usize| format!("disc.S{scale}.b{i}");
    let b0 = BlockSpec::conv(name(0), 6, base, 4, 2, half, input, false, leaky)?;
    let b1 = BlockSpec::conv(name(1), base, 2 * base, 4, 2, half, b0.output, true, leaky)?;
    let b2 = BlockSpec::conv(name(2), 2 * base, 4 * base, 4, 2, half, b1.output, true, leaky)?;
    let b3 = BlockSpec::conv(name(3), 4 * base, 8 * base, 4, 1, same, b2.output, true, leaky)?;
    let out = BlockSpec::conv(name(4), 8 * base, 1, 4, 1, same, b3.output, false, None)?;
    Ok(vec![b0, b1, b2, b3, out])
}

/// Frozen feature extractor: alternating 3×3 stride-1 and 4×4 stride-2
/// convolutions, each followed by a leaky activation.
pub fn extractor_plan(widths: &[usize], input: Resolution) -> Result<Vec<BlockSpec>> {
    let mut blocks: Vec<BlockSpec> = Vec::with_capacity(widths.len());
    let mut in_ch = 3;
    let mut res = input;
    for (i, &out_ch) in widths.iter().enumerate() {
        let name = format!("extractor.stage{i}");
        let block = if i % 2 == 1 {
            BlockSpec::conv(name, in_ch, out_ch, 4, 2, Padding::uniform(1), res, false, Some(BlockActivation::Leaky))?
        } else {
            BlockSpec::conv(name, in_ch, out_ch, 3, 1, Padding::uniform(1), res, false, Some(BlockActivation::Leaky))?
        };
        in_ch = out_ch;
        res = block.output;
        blocks.push(block);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_plan_has_one_injection_and_head_per_scale() {
        let plan = GeneratorPlan::new(&ArchitectureConfig::toy()).unwrap();
        assert_eq!(plan.injection_count(), 3);
        assert_eq!(plan.head_count(), 3);
        assert_eq!(plan.encoder.len(), 5);
        assert_eq!(plan.decoder.len(), 4);
        assert_eq!(plan.decoder.last().unwrap().resolution, Resolution::new(128, 64));
    }

    #[test]
    fn heads_off_keeps_only_the_finest() {
        let mut c = ArchitectureConfig::toy();
        c.intermediate_heads = false;
        let plan = GeneratorPlan::new(&c).unwrap();
        assert_eq!(plan.head_count(), 1);
        assert_eq!(plan.decoder.last().unwrap().head.as_ref().unwrap().1, 2);
    }

    #[test]
    fn discriminator_walk_for_64x32() {
        let mut c = ArchitectureConfig::toy();
        c.scales = vec![Resolution::new(64, 32)];
        c.bottleneck = Resolution::new(8, 4);
        c.widths = vec![8, 8, 8, 8];
        let d = discriminator_plan(&c, 0).unwrap();
        let outs: Vec<_> = d.iter().map(|b| b.output).collect();
        assert_eq!(
            outs,
            vec![
                Resolution::new(32, 16),
                Resolution::new(16, 8),
                Resolution::new(8, 4),
                Resolution::new(8, 4),
                Resolution::new(8, 4)
            ]
        );
    }

    #[test]
    fn discriminator_rejects_tiny_scales() {
        let mut c = ArchitectureConfig::toy();
        c.scales = vec![Resolution::new(4, 2), Resolution::new(8, 4)];
        c.bottleneck = Resolution::new(2, 1);
        c.widths = vec![8, 8, 8];
        assert!(discriminator_plan(&c, 0).is_err());
    }
}
