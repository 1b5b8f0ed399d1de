use std::fmt::Write as _;

use crate::nets::plan::{discriminator_plan, extractor_plan};
use crate::nets::{ArchitectureConfig, BlockSpec, GeneratorPlan};
use crate::Result;

/// FLOPs of the convolution alone: two per multiply-accumulate.
pub fn conv_flops(spec: &BlockSpec) -> u64 {
    2 * spec.macs()
}

/// Convolution plus two FLOPs per output element for batch-norm and for the
/// activation, when present.
pub fn block_flops(spec: &BlockSpec) -> u64 {
    let per_elem = if spec.norm { 2 } else { 0 } + if spec.activation.is_some() { 2 } else { 0 };
    conv_flops(spec) + per_elem * spec.output_elements()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerFlops {
    pub network: String,
    pub layer: String,
    pub macs: u64,
    pub flops: u64,
}

/// Per-image FLOPs of every network, from the shape walk alone.
#[derive(Clone, Debug, PartialEq)]
pub struct FlopsReport {
    pub layers: Vec<LayerFlops>,
    pub networks: Vec<(String, u64)>,
    pub total: u64,
}

impl FlopsReport {
    pub fn network(&self, name: &str) -> Option<u64> {
        self.networks.iter().find(|(n, _)| n == name).map(|&(_, f)| f)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("network,layer,macs,flops\n");
        for l in &self.layers {
            writeln!(s, "{},{},{},{}", l.network, l.layer, l.macs, l.flops).unwrap();
        }
        for (n, f) in &self.networks {
            writeln!(s, "{n},total,,{f}").unwrap();
        }
        writeln!(s, "all,total,,{}", self.total).unwrap();
        s
    }
}

/// Generator inference, one discriminator pass per head scale and one
/// extractor pass per head scale. Resizes and additions are not counted.
pub fn flops(config: &ArchitectureConfig) -> Result<FlopsReport> {
    let mut layers = Vec::new();
    let mut networks = Vec::new();
    let mut add = |network: &str, specs: &mut dyn Iterator<Item = &BlockSpec>| {
        let mut sum = 0;
        for spec in specs {
            let f = block_flops(spec);
            sum += f;
            layers.push(LayerFlops {
                network: network.to_owned(),
                layer: spec.name.clone(),
                macs: spec.macs(),
                flops: f,
            });
        }
        networks.push((network.to_owned(), sum));
    };
    let plan = GeneratorPlan::new(config)?;
    add("generator", &mut plan.blocks().into_iter());
    let heads = config.head_scales();
    let mut disc = Vec::new();
    let mut ext = Vec::new();
    for &k in &heads {
        disc.extend(discriminator_plan(config, k)?);
        let mut e = extractor_plan(&config.extractor_widths, config.scales[k])?;
        for spec in &mut e {
            spec.name = format!("{}@{}", spec.name, config.scales[k]);
        }
        ext.extend(e);
    }
    add("discriminators", &mut disc.iter());
    add("extractor", &mut ext.iter());
    let total = networks.iter().map(|(_, f)| f).sum();
    Ok(FlopsReport { layers, networks, total })
}
