use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image_io::{normalize, read_image};
use super::pyramid::{flip_horizontal, make_pyramid, ScalePyramid};
use crate::nets::Resolution;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub source: PathBuf,
    pub target: PathBuf,
}

/// Paired files of one split, in lexicographic order of identifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }
}

/// Source and target of one pair, both `[1, 3, H, W]` in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub source: Tensor,
    pub target: Tensor,
}

impl PairedSample {
    pub fn flipped(&self) -> Self {
        PairedSample {
            id: self.id.clone(),
            source: flip_horizontal(&self.source),
            target: flip_horizontal(&self.target),
        }
    }
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let read = fs::read_dir(dir).map_err(|e| Error::Dataset(format!("cannot read {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in read {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("ppm" | "png")) {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Dataset(format!("non UTF-8 file name {}", path.display())))?
            .to_owned();
        if let Some(prev) = out.insert(id.clone(), path.clone()) {
            return Err(Error::Dataset(format!(
                "identifier `{id}` appears twice: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Pairs `root/split/source/<id>.*` with `root/split/target/<id>.*` and
/// checks that every file decodes and each pair shares one resolution.
pub fn load_dataset(root: &Path, split: &str) -> Result<DatasetManifest> {
    let base = root.join(split);
    let sources = image_files(&base.join("source"))?;
    let targets = image_files(&base.join("target"))?;
    for (id, path) in &sources {
        if !targets.contains_key(id) {
            return Err(Error::Dataset(format!(
                "{} has no counterpart in {}",
                path.display(),
                base.join("target").display()
            )));
        }
    }
    for (id, path) in &targets {
        if !sources.contains_key(id) {
            return Err(Error::Dataset(format!(
                "{} has no counterpart in {}",
                path.display(),
                base.join("source").display()
            )));
        }
    }
    if sources.is_empty() {
        return Err(Error::Dataset(format!("no images under {}", base.display())));
    }
    let mut entries = Vec::with_capacity(sources.len());
    for (id, source) in sources {
        let target = targets[&id].clone();
        let (a, b) = (read_image(&source)?, read_image(&target)?);
        if (a.height, a.width) != (b.height, b.width) {
            return Err(Error::Dataset(format!(
                "pair `{id}`: source is {}x{}, target is {}x{}",
                a.height, a.width, b.height, b.width
            )));
        }
        entries.push(ManifestEntry { id, source, target });
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        split: split.to_owned(),
        entries,
    })
}

/// A fully decoded split held in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<PairedSample>,
}

impl Dataset {
    pub fn load(manifest: DatasetManifest) -> Result<Self> {
        let samples = manifest
            .entries
            .iter()
            .map(|e| {
                Ok(PairedSample {
                    id: e.id.clone(),
                    source: normalize(&read_image(&e.source)?),
                    target: normalize(&read_image(&e.target)?),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { manifest, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Source and target pyramids of the samples at `indices`, batched.
    pub fn batch(&self, indices: &[usize], scales: &[Resolution], flip: &[bool]) -> Result<(ScalePyramid, ScalePyramid)> {
        let mut xs: Vec<Vec<Tensor>> = vec![Vec::new(); scales.len()];
        let mut ys: Vec<Vec<Tensor>> = vec![Vec::new(); scales.len()];
        for (b, &i) in indices.iter().enumerate() {
            let s = &self.samples[i];
            let s = if flip.get(b).copied().unwrap_or(false) { s.flipped() } else { s.clone() };
            for (k, t) in make_pyramid(&s.source, scales)?.into_iter().enumerate() {
                xs[k].push(t);
            }
            for (k, t) in make_pyramid(&s.target, scales)?.into_iter().enumerate() {
                ys[k].push(t);
            }
        }
        let stack = |v: Vec<Vec<Tensor>>| v.iter().map(|t| Tensor::stack(t)).collect::<Result<Vec<_>>>();
        Ok((stack(xs)?, stack(ys)?))
    }
}

/// Sample order of `epoch`: a permutation that depends only on `seed`,
/// `epoch` and `len`.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}
