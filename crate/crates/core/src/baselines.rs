//! Comparison methods: the optimized rectangle (same criterion and search as
//! the ellipse, different membership) and the raw peak amplitude.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decision::Decision;
use crate::error::{Error, Result};
use crate::extraction::{optimize_region, VolumeConfig};
use crate::geometry::{Region, Shape};
use crate::imagery::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Ellipse,
    Rectangle,
    Peakamp,
}

impl MethodId {
    pub const ALL: [MethodId; 3] = [MethodId::Ellipse, MethodId::Rectangle, MethodId::Peakamp];

    /// Region shape for the SNR-based methods; `None` for peak amplitude.
    pub fn shape(self) -> Option<Shape> {
        match self {
            MethodId::Ellipse => Some(Shape::Ellipse),
            MethodId::Rectangle => Some(Shape::Rectangle),
            MethodId::Peakamp => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Ellipse => "ellipse",
            MethodId::Rectangle => "rectangle",
            MethodId::Peakamp => "peakamp",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ellipse" => Ok(MethodId::Ellipse),
            "rectangle" => Ok(MethodId::Rectangle),
            "peakamp" => Ok(MethodId::Peakamp),
            other => Err(Error::Parameter(format!("unknown method {other:?}"))),
        }
    }
}

/// Volume-maximizing rectangle anchored at `center`.
pub fn optimize_rectangle(img: &ImageGrid, center: (f64, f64), cfg: &VolumeConfig) -> Result<(Region, f64)> {
    optimize_region(img, center, Shape::Rectangle, cfg)
}

/// Maximum intensity of the raw (unfiltered) image.
pub fn peak_amplitude(raw: &ImageGrid) -> f64 {
    raw.max()
}

/// Peak-amplitude threshold giving the target false-alarm rate on noise
/// images: the `(1 − pfa)` empirical quantile of their peaks.
pub fn calibrate_zth(noise_peaks: &[f64], target_pfa: f64) -> Result<f64> {
    crate::decision::calibrate_quantile(noise_peaks, target_pfa)
}

/// Peak-amplitude decision: `D = log10 Z − log10 Z_th`, detected iff `Z > Z_th`.
pub fn decide_peak(z: f64, z_th: f64) -> Decision {
    if z > 0.0 && z_th > 0.0 {
        let d = z.log10() - z_th.log10();
        Decision {
            d_metric: d,
            detected: d > 0.0,
            e_th: z_th,
            linear_fallback: false,
        }
    } else {
        let margin = (z - z_th) / z_th.abs().max(f64::MIN_POSITIVE);
        Decision {
            d_metric: margin,
            detected: z > z_th,
            e_th: z_th,
            linear_fallback: true,
        }
    }
}
