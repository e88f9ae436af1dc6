//! Gaussian matched filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::ImageGrid;

/// FWHM-to-σ conversion factor, `ħ = 2.355 σ`.
pub const FWHM_PER_SIGMA: f64 = 2.355;

/// Default filter FWHM in pixels (σ = 2).
pub const DEFAULT_FWHM: f64 = 4.71;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    fwhm: f64,
    sigma: f64,
    half_width: usize,
    /// Row-major `(2·half_width + 1)²` weights summing to one.
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(du, dv)` from the kernel center.
    pub fn weight(&self, du: i64, dv: i64) -> f64 {
        let h = self.half_width as i64;
        assert!(du.abs() <= h && dv.abs() <= h, "offset outside kernel support");
        self.weights[((dv + h) as usize) * self.side() + (du + h) as usize]
    }
}

/// Radially symmetric Gaussian with `σ = fwhm / 2.355`, truncated to a
/// square of half-width `⌈3σ⌉` and renormalized to unit sum.
pub fn make_kernel(fwhm: f64) -> Result<GaussianKernel> {
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return Err(Error::Parameter(format!("FWHM must be positive, got {fwhm}")));
    }
    let sigma = fwhm / FWHM_PER_SIGMA;
    let half_width = ((3.0 * sigma).ceil() as usize).max(1);
    let h = half_width as i64;
    let two_s2 = 2.0 * sigma * sigma;
    let mut weights = Vec::with_capacity((2 * half_width + 1).pow(2));
    for dv in -h..=h {
        for du in -h..=h {
            weights.push((-((du * du + dv * dv) as f64) / two_s2).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GaussianKernel {
        fwhm,
        sigma,
        half_width,
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Mirror about the edge pixel without repeating it (`… 2 1 | 0 1 2 …`).
    #[default]
    Reflect,
    /// Wrap around the opposite edge.
    Periodic,
}

impl Boundary {
    #[inline]
    fn index(self, i: i64, n: i64) -> usize {
        match self {
            Boundary::Reflect => {
                if n == 1 {
                    return 0;
                }
                let period = 2 * (n - 1);
                let m = i.rem_euclid(period);
                (if m < n { m } else { period - m }) as usize
            }
            Boundary::Periodic => i.rem_euclid(n) as usize,
        }
    }
}

/// Convolves `img` with the kernel using reflect boundary handling.
pub fn matched_filter(img: &ImageGrid, kernel: &GaussianKernel) -> Result<ImageGrid> {
    matched_filter_with(img, kernel, Boundary::Reflect)
}

pub fn matched_filter_with(img: &ImageGrid, kernel: &GaussianKernel, boundary: Boundary) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    if kernel.half_width >= w.min(h) {
        return Err(Error::Dimension(format!(
            "kernel half-width {} is not smaller than image {}x{}",
            kernel.half_width, w, h
        )));
    }
    let hw = kernel.half_width as i64;
    let side = kernel.side();
    let src = img.data();
    // precompute wrapped indices per axis
    let cols: Vec<Vec<usize>> = (0..w as i64)
        .map(|u| (-hw..=hw).map(|d| boundary.index(u + d, w as i64)).collect())
        .collect();
    let rows: Vec<Vec<usize>> = (0..h as i64)
        .map(|v| (-hw..=hw).map(|d| boundary.index(v + d, h as i64)).collect())
        .collect();
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for (kr, &sv) in rows[v].iter().enumerate() {
                let krow = &kernel.weights[kr * side..(kr + 1) * side];
                let srow = &src[sv * w..(sv + 1) * w];
                for (k, &su) in cols[u].iter().enumerate() {
                    acc += krow[k] * srow[su];
                }
            }
            out[v * w + u] = acc;
        }
    }
    ImageGrid::new(w, h, out)
}
