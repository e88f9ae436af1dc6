//! Per-image processing shared by classification and simulation.

use serde::{Deserialize, Serialize};

use crate::baselines::{decide_peak, peak_amplitude, MethodId};
use crate::decision::{decide, Decision};
use crate::error::{Error, Result};
use crate::extraction::{detect_indications, merge_pairs, Indication, MergeConfig, VolumeConfig};
use crate::filtering::{make_kernel, matched_filter_with, Boundary, DEFAULT_FWHM};
use crate::geometry::Shape;
use crate::imagery::ImageGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Matched-filter FWHM in pixels.
    pub fwhm: f64,
    pub boundary: Boundary,
    pub volume: VolumeConfig,
    /// Minimum scaled amplitude for a candidate to be fitted.
    pub rho: f64,
    pub merge: MergeConfig,
    /// Rectangles keep θ = 0.
    pub rectangle_axis_aligned: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fwhm: DEFAULT_FWHM,
            boundary: Boundary::Reflect,
            volume: VolumeConfig::default(),
            rho: 0.9,
            merge: MergeConfig::default(),
            rectangle_axis_aligned: false,
        }
    }
}

/// Response of one image under one method.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    /// Highest-SNR indication plus every indication found.
    Snr {
        best: Box<Indication>,
        all: Vec<Indication>,
    },
    /// Raw peak amplitude.
    Peak(f64),
}

impl Response {
    pub fn decide(&self, threshold: f64) -> Decision {
        match self {
            Response::Snr { best, .. } => decide(best, threshold),
            Response::Peak(z) => decide_peak(*z, threshold),
        }
    }

    /// Statistic compared against the calibrated threshold: SNR or peak.
    pub fn statistic(&self) -> f64 {
        match self {
            Response::Snr { best, .. } => best.snr,
            Response::Peak(z) => *z,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Parameter(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.volume.lambda > 1.0) {
            return Err(Error::Parameter(format!(
                "lambda must exceed 1, got {}",
                self.volume.lambda
            )));
        }
        make_kernel(self.fwhm).map(|_| ())
    }

    pub fn volume_for(&self, shape: Shape) -> VolumeConfig {
        VolumeConfig {
            shape,
            axis_aligned: shape == Shape::Rectangle && self.rectangle_axis_aligned,
            ..self.volume.clone()
        }
    }

    pub fn filter(&self, raw: &ImageGrid) -> Result<ImageGrid> {
        matched_filter_with(raw, &make_kernel(self.fwhm)?, self.boundary)
    }

    /// filter → detect → merge, for the given region shape.
    pub fn indications(&self, raw: &ImageGrid, shape: Shape) -> Result<Vec<Indication>> {
        let filtered = self.filter(raw)?;
        self.indications_filtered(&filtered, shape)
    }

    pub fn indications_filtered(&self, filtered: &ImageGrid, shape: Shape) -> Result<Vec<Indication>> {
        let cfg = self.volume_for(shape);
        let found = detect_indications(filtered, &cfg, self.rho);
        Ok(merge_pairs(filtered, &found, &self.merge, &cfg))
    }

    /// Response of `raw` under `method`. SNR methods reduce to the
    /// highest-SNR indication and fail when no indication can be fitted.
    pub fn respond(&self, raw: &ImageGrid, method: MethodId) -> Result<Response> {
        match method.shape() {
            None => Ok(Response::Peak(peak_amplitude(raw))),
            Some(shape) => {
                let filtered = self.filter(raw)?;
                self.respond_filtered(&filtered, shape)
            }
        }
    }

    /// Like [`respond`](Self::respond) for an already filtered image.
    pub fn respond_filtered(&self, filtered: &ImageGrid, shape: Shape) -> Result<Response> {
        let all = self.indications_filtered(filtered, shape)?;
        let best = all
            .iter()
            .max_by(|a, b| a.snr.total_cmp(&b.snr).then(b.id.cmp(&a.id)))
            .cloned()
            .ok_or_else(|| Error::Extraction("no indication could be fitted".into()))?;
        Ok(Response::Snr {
            best: Box::new(best),
            all,
        })
    }
}
