use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::training::Trainer;
use crate::data::Dataset;
use crate::Result;

pub const BINS: usize = 64;
/// Gradients below this magnitude count as vanished.
pub const NEAR_ZERO: f64 = 1e-8;

/// Lower edge of bin `i` (and upper edge of bin `i - 1`): `10^(−12 + i/4)`.
pub fn bin_edge(i: usize) -> f64 {
    10f64.powf(-12.0 + 0.25 * i as f64)
}

/// Bin of `|g|`. Values below the first edge go to bin 0, values at or above
/// the last edge to the last bin.
pub fn bin_index(g: f64) -> usize {
    let a = g.abs();
    if !(a >= bin_edge(0)) {
        return 0;
    }
    let i = ((a.log10() + 12.0) * 4.0).floor() as usize;
    // log10 rounding can land one bin off at an exact edge.
    let i = if i < BINS && a < bin_edge(i) { i - 1 } else if i + 1 <= BINS && a >= bin_edge(i + 1) { i + 1 } else { i };
    i.min(BINS - 1)
}

/// |grad| distribution of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupHistogram {
    pub group: String,
    pub counts: [u64; BINS],
    pub median: f64,
    /// Fraction of entries with |grad| < [`NEAR_ZERO`].
    pub near_zero: f64,
}

impl GroupHistogram {
    pub fn from_values(group: &str, values: &[f64]) -> Self {
        let mut counts = [0u64; BINS];
        let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        for &a in &abs {
            counts[bin_index(a)] += 1;
        }
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => abs[n / 2],
            _ => 0.5 * (abs[n / 2 - 1] + abs[n / 2]),
        };
        let near = abs.iter().filter(|&&a| a < NEAR_ZERO).count();
        GroupHistogram {
            group: group.to_owned(),
            counts,
            median,
            near_zero: if n == 0 { 0.0 } else { near as f64 / n as f64 },
        }
    }
}

/// Histograms of one trained variant, in generator group order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradScan {
    pub seed: u64,
    pub intermediate_heads: bool,
    pub groups: Vec<GroupHistogram>,
}

impl GradScan {
    pub fn group(&self, name: &str) -> Option<&GroupHistogram> {
        self.groups.iter().find(|g| g.group == name)
    }

    /// Long-format histogram: one row per group and bin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,bin,lower,upper,count\n");
        for g in &self.groups {
            for (b, c) in g.counts.iter().enumerate() {
                writeln!(s, "{},{b},{:e},{:e},{c}", g.group, bin_edge(b), bin_edge(b + 1)).unwrap();
            }
        }
        s
    }
}

/// Trains the configured architecture for `epochs` passes over `dataset`,
/// then histograms the generator gradients of the next batch per group.
pub fn scan_variant(config: &RunConfig, dataset: &Dataset, epochs: u64, heads: bool) -> Result<GradScan> {
    let mut config = config.clone();
    config.arch.intermediate_heads = heads;
    let bs = config.train.batch_size.min(dataset.len());
    config.train.steps = epochs * dataset.len().div_ceil(bs) as u64;
    let mut trainer = Trainer::with_dataset(config, dataset.clone())?;
    while trainer.step < trainer.config.train.steps {
        trainer.train_step()?;
    }
    let (grads, _) = trainer.generator_gradients()?;
    let groups = trainer
        .generator
        .param_groups()
        .into_iter()
        .map(|group| {
            let values: Vec<f64> = group
                .indices
                .iter()
                .flat_map(|&i| match &grads[i] {
                    Some(g) => g.data().iter().map(|&v| v as f64).collect(),
                    None => vec![0.0; trainer.generator.store().params[i].value.numel()],
                })
                .collect();
            GroupHistogram::from_values(&group.name, &values)
        })
        .collect();
    Ok(GradScan {
        seed: trainer.config.train.seed,
        intermediate_heads: heads,
        groups,
    })
}

/// Heads-on and heads-off scans from identical seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct GradScanPair {
    pub heads_on: GradScan,
    pub heads_off: GradScan,
}

impl GradScanPair {
    pub fn earliest_group(&self) -> &str {
        "enc.L0"
    }

    /// Encoder group at the bottleneck and decoder group just above it.
    pub fn deepest_groups(&self) -> Vec<String> {
        let enc = self.heads_on.groups.iter().filter(|g| g.group.starts_with("enc.")).count();
        vec![format!("enc.L{}", enc - 1), format!("dec.L{}", enc - 2)]
    }

    pub fn earliest_median_gain(&self) -> bool {
        let g = self.earliest_group();
        self.heads_on.group(g).map(|h| h.median) > self.heads_off.group(g).map(|h| h.median)
    }

    /// Heads-off near-zero fraction is at least heads-on's in every deepest group.
    pub fn deep_near_zero_not_less(&self) -> bool {
        self.deepest_groups().iter().all(|g| {
            let on = self.heads_on.group(g).map_or(0.0, |h| h.near_zero);
            let off = self.heads_off.group(g).map_or(0.0, |h| h.near_zero);
            off >= on
        })
    }
}

pub fn scan_pair(config: &RunConfig, dataset: &Dataset, epochs: u64) -> Result<GradScanPair> {
    Ok(GradScanPair {
        heads_on: scan_variant(config, dataset, epochs, true)?,
        heads_off: scan_variant(config, dataset, epochs, false)?,
    })
}

pub fn summary_csv(pairs: &[GradScanPair]) -> String {
    let mut s = String::from("seed,variant,group,median_abs_grad,near_zero_fraction\n");
    for p in pairs {
        for scan in [&p.heads_on, &p.heads_off] {
            let variant = if scan.intermediate_heads { "heads_on" } else { "heads_off" };
            for g in &scan.groups {
                writeln!(s, "{},{variant},{},{:e},{}", scan.seed, g.group, g.median, g.near_zero).unwrap();
            }
        }
    }
    s
}

/// Writes `gradscan_<variant>_seed<s>.csv` per run and `gradscan_summary.csv`.
pub fn write_gradscan(dir: &Path, pairs: &[GradScanPair]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for p in pairs {
        for (name, scan) in [("heads_on", &p.heads_on), ("heads_off", &p.heads_off)] {
            fs::write(dir.join(format!("gradscan_{name}_seed{}.csv", scan.seed)), scan.to_csv())?;
        }
    }
    fs::write(dir.join("gradscan_summary.csv"), summary_csv(pairs))?;
    Ok(())
}
