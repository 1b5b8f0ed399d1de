//! Procedural paired data for smoke tests and demos: flat-coloured label
//! layouts as sources, shaded and textured renderings as targets.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{load_dataset, DatasetManifest};
use super::image_io::{write_ppm, RgbImage};
use crate::nets::Resolution;
use crate::Result;

const LABEL_COLORS: [[u8; 3]; 5] = [
    [128, 64, 128],
    [70, 70, 70],
    [107, 142, 35],
    [220, 220, 0],
    [0, 0, 142],
];

const TARGET_COLORS: [[u8; 3]; 5] = [
    [96, 96, 104],
    [178, 150, 120],
    [60, 120, 50],
    [230, 200, 60],
    [40, 60, 170],
];

/// Label map: road/sky split, blocks, discs, thin poles and small markers.
fn labels(res: Resolution, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (h, w) = (res.h, res.w);
    let mut map = vec![0u8; h * w];
    let horizon = rng.random_range(h / 3..2 * h / 3);
    for y in 0..horizon {
        map[y * w..(y + 1) * w].fill(1);
    }
    for _ in 0..3 {
        let bw = rng.random_range(w / 6..w / 3);
        let bh = rng.random_range(h / 8..h / 3);
        let x0 = rng.random_range(0..w - bw);
        let y0 = horizon.saturating_sub(bh / 2).min(h - bh);
        for y in y0..y0 + bh {
            map[y * w + x0..y * w + x0 + bw].fill(2);
        }
    }
    let r = (w / 10).max(2) as i64;
    for _ in 0..2 {
        let cy = rng.random_range(0..h) as i64;
        let cx = rng.random_range(0..w) as i64;
        for y in (cy - r).max(0)..(cy + r).min(h as i64) {
            for x in (cx - r).max(0)..(cx + r).min(w as i64) {
                if (y - cy).pow(2) + (x - cx).pow(2) <= r * r {
                    map[y as usize * w + x as usize] = 4;
                }
            }
        }
    }
    for _ in 0..3 {
        let x = rng.random_range(0..w);
        let top = rng.random_range(0..h / 2);
        for y in top..h.min(top + h / 3) {
            map[y * w + x] = 3;
        }
    }
    for _ in 0..4 {
        let y0 = rng.random_range(0..h - 2);
        let x0 = rng.random_range(0..w - 2);
        for y in y0..y0 + 2 {
            for x in x0..x0 + 2 {
                map[y * w + x] = 3;
            }
        }
    }
    map
}

/// Deterministic `(source, target)` pair at resolution `res`.
pub fn synthetic_pair(res: Resolution, seed: u64) -> (RgbImage, RgbImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = labels(res, &mut rng);
    let mut source = RgbImage::filled(res.h, res.w, [0, 0, 0]);
    let mut target = source.clone();
    for y in 0..res.h {
        let shade = 0.8 + 0.4 * y as f64 / res.h as f64;
        for x in 0..res.w {
            let class = map[y * res.w + x] as usize;
            source.put(y, x, LABEL_COLORS[class]);
            // Facade rows on blocks give the target some class-dependent texture.
            let texture = if class == 2 && y % 4 < 2 { 0.85 } else { 1.0 };
            let rgb = TARGET_COLORS[class].map(|c| (c as f64 * shade * texture).round().clamp(0.0, 255.0) as u8);
            target.put(y, x, rgb);
        }
    }
    (source, target)
}

/// Writes `count` synthetic pairs as PPM files under `root/split/{source,target}`.
pub fn write_synthetic_dataset(
    root: &Path,
    split: &str,
    count: usize,
    res: Resolution,
    seed: u64,
) -> Result<DatasetManifest> {
    let src_dir = root.join(split).join("source");
    let tgt_dir = root.join(split).join("target");
    fs::create_dir_all(&src_dir)?;
    fs::create_dir_all(&tgt_dir)?;
    for i in 0..count {
        let (s, t) = synthetic_pair(res, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let name = format!("pair{i:04}.ppm");
        write_ppm(&src_dir.join(&name), &s)?;
        write_ppm(&tgt_dir.join(&name), &t)?;
    }
    load_dataset(root, split)
}
