use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::training::read_store;
use crate::data::{ablation_degrade, denormalize, load_dataset, make_pyramid, normalize, read_image, write_ppm, Dataset};
use crate::metrics::ssim;
use crate::nets::{MsgUNetGenerator, Resolution};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Rebuilds the generator stored in a training checkpoint.
pub fn load_generator(checkpoint: &Checkpoint) -> Result<(RunConfig, MsgUNetGenerator)> {
    let text = std::str::from_utf8(checkpoint.bytes("config")?)
        .map_err(|_| Error::Checkpoint("config record is not UTF-8".into()))?;
    let config = RunConfig::parse(text)?;
    let mut generator = MsgUNetGenerator::build(&config.arch, 0)?;
    let store = read_store(checkpoint, "generator", generator.store())?;
    generator.store_mut().assign(&store)?;
    Ok((config, generator))
}

/// Source pyramid of `image`, optionally degraded to `degrade`.
fn input_pyramid(image: &Tensor, scales: &[Resolution], degrade: Option<Resolution>) -> Result<Vec<Tensor>> {
    match degrade {
        Some(r) => ablation_degrade(image, r, scales),
        None => make_pyramid(image, scales),
    }
}

fn image_paths(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("ppm" | "png")
            )
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Dataset(format!("no .ppm or .png images in {}", input.display())));
    }
    Ok(out)
}

/// Translates one image or every image of a directory and writes
/// `<stem>_<H>x<W>.ppm` per head into `out_dir`. Batch-norm runs in eval mode.
pub fn infer(
    generator: &mut MsgUNetGenerator,
    input: &Path,
    degrade: Option<Resolution>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let scales = generator.config().scales.clone();
    let heads = generator.head_scales();
    let mut written = Vec::new();
    for path in image_paths(input)? {
        let image = normalize(&read_image(&path)?);
        let pyramid = input_pyramid(&image, &scales, degrade)?;
        let outputs = generator.generate(&pyramid)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        for (&k, out) in heads.iter().zip(&outputs) {
            let file = out_dir.join(format!("{stem}_{}.ppm", scales[k]));
            write_ppm(&file, &denormalize(out)?)?;
            written.push(file);
        }
    }
    Ok(written)
}

/// Mean SSIM of every head output against the target, for inputs degraded
/// to each resolution in `degrade_levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationGrid {
    pub inputs: Vec<Resolution>,
    pub outputs: Vec<Resolution>,
    /// `ssim[i][j]`: input degraded to `inputs[i]`, output at `outputs[j]`.
    pub ssim: Vec<Vec<f64>>,
}

impl AblationGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("input");
        for r in &self.outputs {
            write!(s, ",out_{r}").unwrap();
        }
        s.push('\n');
        for (r, row) in self.inputs.iter().zip(&self.ssim) {
            write!(s, "{r}").unwrap();
            for v in row {
                write!(s, ",{v:.6}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub fn ablate_dataset(
    generator: &mut MsgUNetGenerator,
    dataset: &Dataset,
    degrade_levels: &[Resolution],
) -> Result<AblationGrid> {
    let scales = generator.config().scales.clone();
    for r in degrade_levels {
        if !scales.contains(r) {
            return Err(Error::invalid("ablate", format!("degrade level {r} is not in the scale chain")));
        }
    }
    if dataset.is_empty() {
        return Err(Error::Dataset("ablation set is empty".into()));
    }
    let heads = generator.head_scales();
    let mut grid = vec![vec![0.0; heads.len()]; degrade_levels.len()];
    for sample in &dataset.samples {
        let targets = make_pyramid(&sample.target, &scales)?;
        for (i, &level) in degrade_levels.iter().enumerate() {
            let outputs = generator.generate(&input_pyramid(&sample.source, &scales, Some(level))?)?;
            for (j, (&k, out)) in heads.iter().zip(&outputs).enumerate() {
                grid[i][j] += ssim(&denormalize(&targets[k])?, &denormalize(out)?)?;
            }
        }
    }
    let n = dataset.len() as f64;
    grid.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(AblationGrid {
        inputs: degrade_levels.to_vec(),
        outputs: heads.iter().map(|&k| scales[k]).collect(),
        ssim: grid,
    })
}

/// Loads the checkpoint and `root/split`, then runs [`ablate_dataset`]
/// over every scale of the chain.
pub fn ablate(checkpoint: &Path, root: &Path, split: &str) -> Result<AblationGrid> {
    let (config, mut generator) = load_generator(&Checkpoint::load(checkpoint)?)?;
    let dataset = Dataset::load(load_dataset(root, split)?)?;
    ablate_dataset(&mut generator, &dataset, &config.arch.scales)
}
