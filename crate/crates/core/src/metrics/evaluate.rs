use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{psnr, ssim, vif_p};
use crate::data::read_image;
use crate::nets::Resolution;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub vif: f64,
}

/// Per-image scores in identifier order plus their arithmetic means.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: MetricRow,
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Metric("no images to evaluate".into()));
        }
        let n = rows.len() as f64;
        let mean = MetricRow {
            id: "mean".into(),
            psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
            vif: rows.iter().map(|r| r.vif).sum::<f64>() / n,
        };
        Ok(MetricReport { rows, mean })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,psnr_db,ssim,vif\n");
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            writeln!(s, "{},{:.6},{:.6},{:.6}", r.id, r.psnr_db, r.ssim, r.vif).unwrap();
        }
        s
    }
}

fn images_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let read = fs::read_dir(dir).map_err(|e| Error::Metric(format!("cannot read {}: {e}", dir.display())))?;
    for entry in read {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("ppm" | "png")) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_owned(), path.clone());
        }
    }
    Ok(out)
}

/// Splits `name_HxW` into `("name", HxW)`.
fn split_scale_suffix(stem: &str) -> Option<(&str, Resolution)> {
    let (base, suffix) = stem.rsplit_once('_')?;
    Some((base, suffix.parse().ok()?))
}

/// Scores every image of `outputs` against the target of the same name.
///
/// Inference writes `<id>_<H>x<W>` for each head; such files are matched to
/// target `<id>` and only the ones at the target's resolution are scored.
pub fn evaluate_dataset(outputs: &Path, targets: &Path) -> Result<MetricReport> {
    let outs = images_by_stem(outputs)?;
    let tgts = images_by_stem(targets)?;
    let mut rows = Vec::new();
    for (stem, out_path) in &outs {
        let (id, scale) = match tgts.get(stem) {
            Some(_) => (stem.as_str(), None),
            None => match split_scale_suffix(stem) {
                Some((base, r)) if tgts.contains_key(base) => (base, Some(r)),
                _ => {
                    return Err(Error::Metric(format!(
                        "{} has no counterpart in {}",
                        out_path.display(),
                        targets.display()
                    )))
                }
            },
        };
        let target = read_image(&tgts[id])?;
        if let Some(r) = scale {
            if r != Resolution::new(target.height, target.width) {
                continue;
            }
        }
        let output = read_image(out_path)?;
        rows.push(MetricRow {
            id: stem.clone(),
            psnr_db: psnr(&target, &output)?,
            ssim: ssim(&target, &output)?,
            vif: vif_p(&target, &output)?.value,
        });
    }
    if rows.is_empty() {
        return Err(Error::Metric(format!(
            "no output in {} matches a target in {}",
            outputs.display(),
            targets.display()
        )));
    }
    MetricReport::from_rows(rows)
}
