//! Optimal region extraction: the regularized volume criterion, its region
//! search, SNR feature extraction, multi-indication detection and
//! paired-hotspot merging.

mod features;
mod indications;
mod search;
mod volume;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RegionPair, Shape};

pub use features::extract_features;
pub use indications::{detect_indications, local_maxima, merge_pairs, MergeConfig};
pub use search::{optimize_ellipse, optimize_region};
pub use volume::{c_sigma, expected_volume, lambda_xi, volume, volume_rearranged};

/// Search settings for the volume maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumeConfig {
    /// Penalty weight on non-positive corrected intensities; must exceed 1.
    pub lambda: f64,
    pub a_min: f64,
    /// Upper bound on both half-extents; `None` means `min(width, height) / 2`.
    pub a_max: Option<f64>,
    pub grid_resolution: usize,
    pub short_runs: usize,
    pub short_iterations: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub shape: Shape,
    /// Pin θ = 0 (only meaningful for rectangles).
    pub axis_aligned: bool,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            a_min: 1.0,
            a_max: None,
            grid_resolution: 10,
            short_runs: 5,
            short_iterations: 10,
            tolerance: 1e-6,
            max_iterations: 200,
            shape: Shape::Ellipse,
            axis_aligned: false,
        }
    }
}

impl VolumeConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    /// Resolved `(a_min, a_max)` for a `width × height` image.
    pub fn bounds(&self, width: usize, height: usize) -> Result<(f64, f64)> {
        let a_max = self.a_max.unwrap_or(width.min(height) as f64 / 2.0);
        let limit = width.max(height) as f64;
        if !(self.lambda > 1.0) {
            return Err(Error::Parameter(format!("lambda must exceed 1, got {}", self.lambda)));
        }
        if !(self.a_min >= 0.5) {
            return Err(Error::Parameter(format!(
                "a_min must be at least 0.5, got {}",
                self.a_min
            )));
        }
        if !(a_max > self.a_min && a_max <= limit) {
            return Err(Error::Parameter(format!(
                "a_max must lie in ({}, {limit}], got {a_max}",
                self.a_min
            )));
        }
        if self.grid_resolution < 2 || self.short_runs == 0 {
            return Err(Error::Parameter(
                "grid resolution must be at least 2 and short runs at least 1".into(),
            ));
        }
        Ok((self.a_min, a_max))
    }
}

/// One candidate flaw with its regions and extracted features. Intensities
/// are bias-corrected by the mean outside the inner region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indication {
    pub id: usize,
    pub pair: RegionPair,
    /// Peak corrected intensity inside the inner region.
    pub peak: f64,
    /// Maximum corrected intensity in the annulus.
    pub noise_peak: f64,
    /// Mean corrected intensity in the annulus.
    pub noise_mean: f64,
    /// Background estimate subtracted from all three features.
    pub bias: f64,
    pub snr: f64,
    /// Uncorrected intensity at the anchor pixel.
    pub amplitude: f64,
    pub scaled_amplitude: f64,
    pub volume: Option<f64>,
    pub inner_pixels: usize,
    pub annulus_pixels: usize,
    /// Share of the inner region's pixel centers lying outside the image.
    pub clipped_fraction: f64,
    pub merged_from: Option<(usize, usize)>,
}

impl Indication {
    pub fn center(&self) -> (f64, f64) {
        self.pair.inner.center()
    }
}
