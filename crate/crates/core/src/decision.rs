//! Detection thresholds calibrated to a target false-alarm probability and
//! the `D` metric decision rule.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::MethodId;
use crate::error::{Error, Result};
use crate::extraction::Indication;
use crate::imagery::{load_image, ImageFormat, SpecimenRecord};
use crate::pipeline::{PipelineConfig, Response};
use crate::stats::quantile;

/// Quantile convention used for every calibrated threshold.
pub const QUANTILE_CONVENTION: &str = "linear interpolation of order statistics, k-th smallest at p = (k-1)/(n-1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    Calibrated,
    Fixed,
}

/// Threshold for one method: the SNR criterion α for the region methods,
/// the peak threshold `Z_th` for peak amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPolicy {
    pub method: MethodId,
    pub threshold: f64,
    pub target_pfa: Option<f64>,
    pub source: PolicySource,
    pub quantile_convention: String,
}

impl DetectionPolicy {
    pub fn fixed(method: MethodId, threshold: f64) -> Result<Self> {
        Self::checked(method, threshold, None, PolicySource::Fixed)
    }

    /// Calibrates the threshold on the statistics (SNR or raw peak) of
    /// flawless images.
    pub fn calibrated(method: MethodId, noise_statistics: &[f64], target_pfa: f64) -> Result<Self> {
        let threshold = calibrate_quantile(noise_statistics, target_pfa)?;
        Self::checked(method, threshold, Some(target_pfa), PolicySource::Calibrated)
    }

    fn checked(method: MethodId, threshold: f64, target_pfa: Option<f64>, source: PolicySource) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::Calibration(format!("threshold {threshold} is not finite")));
        }
        if method != MethodId::Peakamp && threshold < 1.0 {
            return Err(Error::Calibration(format!(
                "SNR criterion must be at least 1, got {threshold}"
            )));
        }
        Ok(Self {
            method,
            threshold,
            target_pfa,
            source,
            quantile_convention: QUANTILE_CONVENTION.into(),
        })
    }
}

/// SNR criterion α giving the target false-alarm rate: the `(1 − pfa)`
/// empirical quantile of noise-image SNRs.
pub fn calibrate_alpha(noise_snrs: &[f64], target_pfa: f64) -> Result<f64> {
    calibrate_quantile(noise_snrs, target_pfa)
}

pub(crate) fn calibrate_quantile(values: &[f64], target_pfa: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Calibration("no noise observations to calibrate on".into()));
    }
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::Calibration(format!(
            "target PFA must lie in (0, 1), got {target_pfa}"
        )));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Calibration("non-finite noise statistic".into()));
    }
    Ok(quantile(values, 1.0 - target_pfa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub d_metric: f64,
    pub detected: bool,
    /// Noise threshold `α·ě + (1−α)·ē` (or `Z_th` for peak amplitude).
    pub e_th: f64,
    /// The log-domain metric was undefined; `d_metric` then holds the signed
    /// linear margin `(Ŷ − e_th)/(ě − ē)`.
    pub linear_fallback: bool,
}

/// `e_th = α·ě + (1−α)·ē`, `D = log10 Ŷ − log10 e_th`, detected iff `D > 0`.
pub fn decide(ind: &Indication, alpha: f64) -> Decision {
    decide_features(ind.peak, ind.noise_peak, ind.noise_mean, alpha)
}

pub fn decide_features(peak: f64, noise_peak: f64, noise_mean: f64, alpha: f64) -> Decision {
    let e_th = alpha * noise_peak + (1.0 - alpha) * noise_mean;
    if peak > 0.0 && e_th > 0.0 {
        let d = peak.log10() - e_th.log10();
        Decision {
            d_metric: d,
            detected: d > 0.0,
            e_th,
            linear_fallback: false,
        }
    } else {
        let spread = noise_peak - noise_mean;
        let scale = if spread > 0.0 {
            spread
        } else {
            e_th.abs().max(f64::MIN_POSITIVE)
        };
        Decision {
            d_metric: (peak - e_th) / scale,
            detected: peak > e_th,
            e_th,
            linear_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRow {
    pub specimen: String,
    pub flaw_size: Option<f64>,
    pub d: Option<f64>,
    /// SNR of the deciding indication; the raw peak for peak amplitude.
    pub snr: Option<f64>,
    pub detected: Option<bool>,
    pub linear_fallback: bool,
    pub error: Option<String>,
    /// Every indication found in the image (empty for peak amplitude).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub indications: Vec<Indication>,
}

fn load_specimen(base_dir: &Path, rec: &SpecimenRecord) -> Result<crate::imagery::ImageGrid> {
    let path = base_dir.join(&rec.image);
    load_image(&path, ImageFormat::from_path(&path))
}

/// Computes each specimen's method response; image paths are resolved
/// against `base_dir`. Output follows manifest order.
pub fn responses(
    records: &[SpecimenRecord],
    base_dir: &Path,
    pipeline: &PipelineConfig,
    method: MethodId,
) -> Vec<Result<Response>> {
    records
        .par_iter()
        .map(|rec| {
            let img = load_specimen(base_dir, rec)?;
            pipeline.respond(&img, method)
        })
        .collect()
}

/// Calibrates a policy on flawless specimens. Specimens whose response
/// cannot be computed are skipped; flawed records are ignored.
pub fn calibrate_dataset(
    records: &[SpecimenRecord],
    base_dir: &Path,
    pipeline: &PipelineConfig,
    method: MethodId,
    target_pfa: f64,
) -> Result<DetectionPolicy> {
    let noise: Vec<SpecimenRecord> = records.iter().filter(|r| !r.is_flawed).cloned().collect();
    let stats: Vec<f64> = responses(&noise, base_dir, pipeline, method)
        .into_iter()
        .filter_map(|r| r.ok().map(|resp| resp.statistic()))
        .collect();
    DetectionPolicy::calibrated(method, &stats, target_pfa)
}

/// Runs the full method pipeline on every specimen and decides on the
/// highest-SNR indication of each image. Failures mark the row and the run
/// continues.
pub fn classify_dataset(
    records: &[SpecimenRecord],
    base_dir: &Path,
    policy: &DetectionPolicy,
    pipeline: &PipelineConfig,
) -> Vec<ClassifyRow> {
    let resp = responses(records, base_dir, pipeline, policy.method);
    records
        .iter()
        .zip(resp)
        .map(|(rec, r)| match r {
            Ok(response) => {
                let dec = response.decide(policy.threshold);
                let indications = match &response {
                    Response::Snr { all, .. } => all.clone(),
                    Response::Peak(_) => Vec::new(),
                };
                ClassifyRow {
                    specimen: rec.image.clone(),
                    flaw_size: rec.flaw_size,
                    d: Some(dec.d_metric),
                    snr: Some(response.statistic()),
                    detected: Some(dec.detected),
                    linear_fallback: dec.linear_fallback,
                    error: None,
                    indications,
                }
            }
            Err(e) => ClassifyRow {
                specimen: rec.image.clone(),
                flaw_size: rec.flaw_size,
                d: None,
                snr: None,
                detected: None,
                linear_fallback: false,
                error: Some(e.to_string()),
                indications: Vec::new(),
            },
        })
        .collect()
}

/// Flawed `(D, size)` pairs and flawless `D` values.
pub type Observations = (Vec<(f64, f64)>, Vec<f64>);

/// Writes `specimen,flaw_size,D,snr,detected`; failed rows carry `error` in
/// the `detected` column.
pub fn write_classify_csv<W: std::io::Write>(rows: &[ClassifyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["specimen", "flaw_size", "D", "snr", "detected"])?;
    for row in rows {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let detected = match (row.detected, &row.error) {
            (Some(d), _) => d.to_string(),
            (None, _) => "error".to_string(),
        };
        w.write_record([
            row.specimen.clone(),
            opt(row.flaw_size),
            opt(row.d),
            opt(row.snr),
            detected,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<classify output>", e))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    specimen: String,
    flaw_size: Option<f64>,
    #[serde(rename = "D")]
    d: Option<f64>,
    detected: String,
}

/// Reads a classify CSV back into `(flawed (D, size), noise D)` for NIM
/// fitting, skipping rows marked `error`.
pub fn read_classify_csv<R: std::io::Read>(input: R) -> Result<Observations> {
    let mut r = csv::Reader::from_reader(input);
    let mut flawed = Vec::new();
    let mut noise = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row?;
        if row.detected == "error" {
            continue;
        }
        let Some(d) = row.d else {
            return Err(Error::Format {
                location: row.specimen,
                message: "missing D value".into(),
            });
        };
        match row.flaw_size {
            Some(s) => flawed.push((d, s)),
            None => noise.push(d),
        }
    }
    Ok((flawed, noise))
}
