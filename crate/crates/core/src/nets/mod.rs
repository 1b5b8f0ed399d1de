//! Generator, discriminator bank and feature extractor.

pub mod config;
mod discriminator;
mod extractor;
mod generator;
mod params;
pub mod plan;

pub use config::{default_widths, ArchitectureConfig, Resolution};
pub use discriminator::{DiscriminatorBank, DiscriminatorOutput, PatchDiscriminator};
pub use extractor::FeatureExtractor;
pub use generator::{MsgUNetGenerator, ParamGroup};
pub use params::{NamedStats, ParamStore};
pub use plan::{BlockActivation, BlockSpec, ConvKind, GeneratorPlan, DISCRIMINATOR_TAPS};
