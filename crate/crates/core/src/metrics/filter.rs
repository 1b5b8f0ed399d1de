/// Single-channel `f64` image.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zip(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Keeps rows and columns 0, 2, 4, …
    pub fn subsample2(&self) -> Plane {
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut data = Vec::with_capacity(h * w);
        for y in (0..self.h).step_by(2) {
            for x in (0..self.w).step_by(2) {
                data.push(self.data[y * self.w + x]);
            }
        }
        Plane { h, w, data }
    }
}

/// `n × n` Gaussian with standard deviation `sigma`, normalised to sum 1.
pub(crate) fn gaussian_window(n: usize, sigma: f64) -> Plane {
    let c = (n as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (dy, dx) = (y as f64 - c, x as f64 - c);
            data.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= total);
    Plane { h: n, w: n, data }
}

/// Correlation with `win` over positions where it fits entirely.
pub(crate) fn filter_valid(img: &Plane, win: &Plane) -> Plane {
    let (h, w) = (img.h + 1 - win.h, img.w + 1 - win.w);
    let mut data = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for i in 0..win.h {
                let row = &img.data[(y + i) * img.w + x..(y + i) * img.w + x + win.w];
                let wrow = &win.data[i * win.w..(i + 1) * win.w];
                acc += row.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
            }
            data[y * w + x] = acc;
        }
    }
    Plane { h, w, data }
}
