use std::fmt;
use std::str::FromStr;

use crate::{Error, Real, Result};

/// Image size as `height × width`, written `HxW`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Resolution {
    pub h: usize,
    pub w: usize,
}

impl Resolution {
    pub const fn new(h: usize, w: usize) -> Self {
        Resolution { h, w }
    }

    pub fn halved(self) -> Self {
        Resolution::new(self.h / 2, self.w / 2)
    }

    pub fn pixels(self) -> usize {
        self.h * self.w
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.h, self.w)
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (h, w) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("expected HxW, got `{s}`"))
        };
        let r = Resolution::new(parse(h)?, parse(w)?);
        if r.h == 0 || r.w == 0 {
            return Err(format!("resolution `{s}` has a zero dimension"));
        }
        Ok(r)
    }
}

/// Everything that determines the network shapes.
///
/// `scales` runs coarsest to finest; `widths` runs from the finest level
/// down to the bottleneck, one entry per resolution level.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureConfig {
    pub scales: Vec<Resolution>,
    pub bottleneck: Resolution,
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: Real,
    pub intermediate_heads: bool,
    /// Width of the first patch-discriminator block; later blocks double it.
    pub disc_width: usize,
    /// Output channels of each frozen feature-extractor stage.
    pub extractor_widths: Vec<usize>,
    pub bn_eps: Real,
    pub bn_momentum: Real,
}

impl ArchitectureConfig {
    /// Three output scales 32x16 → 128x64 with an 8x4 bottleneck.
    pub fn toy() -> Self {
        ArchitectureConfig {
            scales: vec![
                Resolution::new(32, 16),
                Resolution::new(64, 32),
                Resolution::new(128, 64),
            ],
            bottleneck: Resolution::new(8, 4),
            widths: vec![8, 16, 32, 32, 32],
            kernel: 4,
            leaky_slope: 0.2,
            intermediate_heads: true,
            disc_width: 8,
            extractor_widths: vec![8, 16, 16, 32, 32],
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Five injection/output scales 128x64 → 2048x1024, bottleneck 8x4.
    pub fn cityscapes() -> Self {
        let scales: Vec<Resolution> = (0..5).map(|k| Resolution::new(128 << k, 64 << k)).collect();
        let bottleneck = Resolution::new(8, 4);
        let levels = level_count(scales[4], bottleneck);
        ArchitectureConfig {
            scales,
            bottleneck,
            widths: default_widths(levels),
            kernel: 4,
            leaky_slope: 0.2,
            intermediate_heads: true,
            disc_width: 64,
            extractor_widths: vec![64, 128, 256, 512, 512],
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn finest(&self) -> Resolution {
        *self.scales.last().expect("validated config has scales")
    }

    pub fn coarsest(&self) -> Resolution {
        self.scales[0]
    }

    /// Resolution levels from the finest scale down to the bottleneck, inclusive.
    pub fn levels(&self) -> usize {
        level_count(self.finest(), self.bottleneck)
    }

    pub fn level_resolution(&self, level: usize) -> Resolution {
        let f = self.finest();
        Resolution::new(f.h >> level, f.w >> level)
    }

    /// Index into `scales` of the injection/head at `level`, if any.
    pub fn scale_at_level(&self, level: usize) -> Option<usize> {
        let n = self.scales.len();
        (level < n).then(|| n - 1 - level)
    }

    /// Scale indices that produce an output image.
    pub fn head_scales(&self) -> Vec<usize> {
        if self.intermediate_heads {
            (0..self.scales.len()).collect()
        } else {
            vec![self.scales.len() - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Architecture(msg));
        if self.scales.is_empty() {
            return err("scale chain is empty".into());
        }
        for r in &self.scales {
            if r.h == 0 || r.w == 0 {
                return err(format!("scale {r} has a zero dimension"));
            }
        }
        let c = self.coarsest();
        if !(c.h == c.w || c.h == 2 * c.w || c.w == 2 * c.h) {
            return err(format!("aspect ratio of {c} is neither 1:1 nor 2:1"));
        }
        for (k, pair) in self.scales.windows(2).enumerate() {
            if pair[1].h != 2 * pair[0].h || pair[1].w != 2 * pair[0].w {
                return err(format!(
                    "scale chain entry {} ({}) is not twice entry {k} ({})",
                    k + 1,
                    pair[1],
                    pair[0]
                ));
            }
        }
        let b = self.bottleneck;
        let halvings = |from: usize, to: usize| -> Option<u32> {
            if to == 0 || from % to != 0 || !(from / to).is_power_of_two() || from / to < 2 {
                None
            } else {
                Some((from / to).trailing_zeros())
            }
        };
        match (halvings(c.h, b.h), halvings(c.w, b.w)) {
            (Some(a), Some(bw)) if a == bw => {}
            _ => {
                return err(format!(
                    "bottleneck {b} must be the coarsest scale {c} divided by a power of two (at least 2)"
                ))
            }
        }
        if self.widths.len() != self.levels() {
            return err(format!(
                "{} channel widths given for {} levels ({} down to {b})",
                self.widths.len(),
                self.levels(),
                self.finest()
            ));
        }
        if let Some(level) = self.widths.iter().position(|&w| w == 0) {
            return err(format!("channel width of level {level} is zero"));
        }
        if self.kernel < 2 || self.kernel % 2 != 0 {
            return err(format!("kernel {} must be even and at least 2", self.kernel));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return err(format!("leaky slope {} outside (0, 1)", self.leaky_slope));
        }
        if self.disc_width == 0 {
            return err("discriminator width is zero".into());
        }
        if self.extractor_widths.is_empty() || self.extractor_widths.contains(&0) {
            return err("feature extractor widths must be non-empty and positive".into());
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return err(format!(
                "batch-norm eps {} / momentum {} out of range",
                self.bn_eps, self.bn_momentum
            ));
        }
        Ok(())
    }
}

fn level_count(finest: Resolution, bottleneck: Resolution) -> usize {
    if bottleneck.h == 0 || finest.h < bottleneck.h {
        return 0;
    }
    let mut levels = 1;
    let mut h = finest.h;
    while h > bottleneck.h {
        h /= 2;
        levels += 1;
    }
    levels
}

/// 16 channels at the finest level, doubling per downsample, capped at 256.
pub fn default_widths(levels: usize) -> Vec<usize> {
    (0..levels).map(|l| (16usize << l.min(8)).min(256)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_and_cityscapes_validate() {
        ArchitectureConfig::toy().validate().unwrap();
        let c = ArchitectureConfig::cityscapes();
        c.validate().unwrap();
        assert_eq!(c.levels(), 9);
        assert_eq!(c.widths, vec![16, 32, 64, 128, 256, 256, 256, 256, 256]);
    }

    #[test]
    fn rejects_non_doubling_chain() {
        let mut c = ArchitectureConfig::toy();
        c.scales[1] = Resolution::new(48, 24);
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("not twice"), "{msg}");
    }

    #[test]
    fn rejects_bad_bottleneck_and_widths() {
        let mut c = ArchitectureConfig::toy();
        c.bottleneck = Resolution::new(6, 3);
        assert!(c.validate().is_err());
        let mut c = ArchitectureConfig::toy();
        c.widths.pop();
        assert!(c.validate().is_err());
        let mut c = ArchitectureConfig::toy();
        c.scales = vec![Resolution::new(48, 16)];
        c.bottleneck = Resolution::new(12, 4);
        assert!(c.validate().unwrap_err().to_string().contains("aspect"));
    }

    #[test]
    fn resolution_parsing() {
        assert_eq!("128x64".parse::<Resolution>().unwrap(), Resolution::new(128, 64));
        assert!("128".parse::<Resolution>().is_err());
        assert!("0x4".parse::<Resolution>().is_err());
        assert_eq!(Resolution::new(32, 16).to_string(), "32x16");
    }

    #[test]
    fn level_bookkeeping() {
        let c = ArchitectureConfig::toy();
        assert_eq!(c.levels(), 5);
        assert_eq!(c.level_resolution(4), c.bottleneck);
        assert_eq!(c.scale_at_level(0), Some(2));
        assert_eq!(c.scale_at_level(2), Some(0));
        assert_eq!(c.scale_at_level(3), None);
    }
}
