use msg_unet::data::synthetic::synthetic_pair;
use msg_unet::data::{write_ppm, RgbImage};
use msg_unet::metrics::{evaluate_dataset, psnr, ssim, vif_p, PSNR_CAP_DB};
use msg_unet::nets::Resolution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn test_image(seed: u64) -> RgbImage {
    synthetic_pair(Resolution::new(96, 96), seed).1
}

fn noise(h: usize, w: usize, seed: u64) -> RgbImage {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::new(h, w, (0..h * w * 3).map(|_| r.random()).collect()).unwrap()
}

/// `passes` rounds of a 3x3 box filter with edge replication.
fn blur(image: &RgbImage, passes: usize) -> RgbImage {
    let (h, w) = (image.height, image.width);
    let mut cur: Vec<f64> = image.pixels.iter().map(|&v| v as f64).collect();
    for _ in 0..passes {
        let mut next = cur.clone();
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut s = 0.0;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                            let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                            s += cur[(yy * w + xx) * 3 + c];
                        }
                    }
                    next[(y * w + x) * 3 + c] = s / 9.0;
                }
            }
        }
        cur = next;
    }
    RgbImage::new(h, w, cur.iter().map(|v| v.round() as u8).collect()).unwrap()
}

#[test]
fn psnr_cases() {
    let a = RgbImage::filled(16, 16, [100, 100, 100]);
    let b = RgbImage::filled(16, 16, [101, 101, 101]);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    let oracle = 10.0 * (255.0f64 * 255.0).log10();
    assert!((oracle - 48.1308).abs() < 1e-4);
    assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-3);

    let x = test_image(1);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let offsets: Vec<i16> = (0..x.pixels.len()).map(|_| r.random_range(-1..=1)).collect();
    let perturb = |amp: i16| {
        let px = x.pixels.iter().zip(&offsets).map(|(&p, &o)| (p as i16 + amp * o).clamp(0, 255) as u8).collect();
        RgbImage::new(x.height, x.width, px).unwrap()
    };
    let p: Vec<f64> = [2, 6, 18].iter().map(|&a| psnr(&x, &perturb(a)).unwrap()).collect();
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
}

#[test]
fn ssim_cases() {
    let x = test_image(3);
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);

    let (mu_a, mu_b, c1) = (100.0f64, 150.0f64, (0.01f64 * 255.0).powi(2));
    let luminance = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
    assert!((luminance - 0.92307).abs() < 1e-4);
    let a = RgbImage::filled(32, 32, [100, 100, 100]);
    let b = RgbImage::filled(32, 32, [150, 150, 150]);
    assert!((ssim(&a, &b).unwrap() - luminance).abs() < 1e-4);

    let y = blur(&x, 2);
    assert_eq!(ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
    assert!(ssim(&RgbImage::filled(8, 8, [0; 3]), &RgbImage::filled(8, 8, [0; 3])).is_err());
}

#[test]
fn vif_cases() {
    let x = test_image(5);
    let v = vif_p(&x, &x).unwrap();
    assert!((v.value - 1.0).abs() < 1e-6);
    assert!(v.levels >= 3);

    let n = noise(x.height, x.width, 6);
    assert!(vif_p(&x, &n).unwrap().value < 0.1);

    let mut last = f64::INFINITY;
    for passes in 0..6 {
        let v = vif_p(&x, &blur(&x, passes)).unwrap().value;
        assert!(v <= last, "{passes} passes: {v} > {last}");
        last = v;
    }
}

#[test]
fn evaluation_report() {
    let out = tempfile::tempdir().unwrap();
    let target = tempfile::tempdir().unwrap();
    for i in 0..3 {
        let img = test_image(10 + i);
        write_ppm(&target.path().join(format!("p{i}.ppm")), &img).unwrap();
        write_ppm(&out.path().join(format!("p{i}.ppm")), &img).unwrap();
    }
    let report = evaluate_dataset(out.path(), target.path()).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.mean.psnr_db, PSNR_CAP_DB);
    assert!((report.mean.ssim - 1.0).abs() < 1e-9);
    assert!((report.mean.vif - 1.0).abs() < 1e-6);
    let csv = report.to_csv();
    assert!(csv.starts_with("id,psnr_db,ssim,vif\n"));
    assert!(!csv.contains('\r'));

    // Blurred outputs: the mean row is the arithmetic mean of the rows.
    for i in 0..3 {
        write_ppm(&out.path().join(format!("p{i}.ppm")), &blur(&test_image(10 + i), i as usize + 1)).unwrap();
    }
    let report = evaluate_dataset(out.path(), target.path()).unwrap();
    let mean = report.rows.iter().map(|r| r.ssim).sum::<f64>() / 3.0;
    assert!((report.mean.ssim - mean).abs() < 1e-12);

    let empty = tempfile::tempdir().unwrap();
    assert!(evaluate_dataset(empty.path(), target.path()).is_err());
    std::fs::remove_file(target.path().join("p0.ppm")).unwrap();
    assert!(evaluate_dataset(out.path(), target.path()).is_err());
}
