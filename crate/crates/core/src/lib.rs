//! flawpod: automated flaw detection and probability-of-detection analysis
//! for nondestructive-evaluation (NDE) images.
//!
//! The pipeline stages are:
//!
//! 1. **Imagery** – image/manifest ingestion and background bias estimation.
//! 2. **Filtering** – Gaussian matched filter (FWHM parameterized).
//! 3. **Geometry** – elliptical/rectangular regions, rasterization and the
//!    equal-area outer frame.
//! 4. **Extraction** – regularized volume maximization, SNR features,
//!    multi-indication detection and paired-hotspot merging.
//! 5. **Decision** – PFA-calibrated thresholds and the `D` detection metric.
//! 6. **NIM** – noise-interference model fitting, POD curves and a90.
//! 7. **Baselines** – optimized rectangle and raw peak-amplitude methods.
//! 8. **Simkit** – seeded synthetic experiments comparing the three methods.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod decision;
pub mod error;
pub mod extraction;
pub mod filtering;
pub mod geometry;
pub mod imagery;
pub mod nim;
pub mod optim;
pub mod pipeline;
pub mod simkit;
pub mod stats;

pub use baselines::{calibrate_zth, optimize_rectangle, peak_amplitude, MethodId};
pub use decision::{calibrate_alpha, decide, Decision, DetectionPolicy, PolicySource};
pub use error::{Error, Result};
pub use extraction::{
    detect_indications, expected_volume, extract_features, lambda_xi, merge_pairs, optimize_ellipse, volume,
    Indication, VolumeConfig,
};
pub use filtering::{make_kernel, matched_filter, Boundary, GaussianKernel};
pub use geometry::{make_outer, Region, RegionPair, Shape};
pub use imagery::{estimate_bias, load_image, load_manifest, ImageFormat, ImageGrid, SpecimenRecord};
pub use nim::{a90, fit_nim, nim_loglik, pod, pod_peakamp, NimParams, PeakAmpParams};
pub use pipeline::PipelineConfig;
pub use simkit::{run_comparison, wilcoxon_signed_rank, ExperimentReport, SimConfig};
