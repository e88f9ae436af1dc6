//! Seeded synthetic experiments comparing the ellipse, rectangle and peak
//! amplitude methods.
//!
//! One experiment draws a fresh noise set and a fresh set of flawed images
//! (noise plus an injected Gaussian signature for every flaw size and
//! specimen), calibrates each method to the target false-alarm rate on the
//! noise set, fits a NIM per method and computes its POD curve and a90.
//! Experiments are repeated `replicates` times and the a90 lists are
//! compared pairwise with the Wilcoxon signed-rank test.
//!
//! # Random streams
//!
//! Every image is generated from its own ChaCha8 stream: the generator is
//! seeded with `seed` and switched to stream
//! `(experiment << 40) | (kind << 32) | index`, where `kind` is 0 for noise
//! images and 1 for flawed images and `index` numbers images within the
//! experiment. Results are therefore independent of thread scheduling.

mod wilcoxon;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use wilcoxon::{wilcoxon_signed_rank, EXACT_LIMIT};

use crate::baselines::{calibrate_zth, MethodId};
use crate::decision::{calibrate_alpha, decide, QUANTILE_CONVENTION};
use crate::error::{Error, Result};
use crate::filtering::FWHM_PER_SIGMA;
use crate::imagery::{load_image, ImageFormat, ImageGrid};
use crate::nim::{a90, fit_nim, pod, pod_peakamp, NimParams, PeakAmpParams, DEFAULT_A90_BRACKET};
use crate::pipeline::{PipelineConfig, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseSource {
    /// Gaussian noise with standard deviation `sigma`; with `ar1` set, each
    /// row is a stationary AR(1) sequence with that lag-1 coefficient.
    Synthetic { sigma: f64, ar1: Option<f64> },
    /// Flawless images drawn with replacement from a directory.
    Resample { pool: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    /// Flaw sizes in mils.
    pub flaw_sizes: Vec<f64>,
    /// Number of independent experiment repeats.
    pub replicates: usize,
    /// Flawed images per size within one experiment.
    pub specimens_per_size: usize,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Signature FWHM in pixels per mil.
    pub k: f64,
    pub noise: NoiseSource,
    pub n_noise_images: usize,
    pub target_pfa: f64,
    pub width: usize,
    pub height: usize,
    pub methods: Vec<MethodId>,
    /// Sizes at which POD curves are reported.
    pub pod_grid: Vec<f64>,
    pub pipeline: PipelineConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            flaw_sizes: log_spaced(15.0, 120.0, 12),
            replicates: 20,
            specimens_per_size: 8,
            gamma0: -7.0,
            gamma1: 1.22,
            k: 0.0785,
            noise: NoiseSource::Synthetic {
                sigma: DEFAULT_NOISE_SIGMA,
                ar1: None,
            },
            n_noise_images: 100,
            target_pfa: 0.03,
            width: 40,
            height: 40,
            methods: MethodId::ALL.to_vec(),
            pod_grid: log_spaced(10.0, 150.0, 40),
            pipeline: PipelineConfig::default(),
        }
    }
}

pub const DEFAULT_NOISE_SIGMA: f64 = 5e-6;

/// `n` sizes evenly spaced in `log10` between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.flaw_sizes.is_empty() || self.flaw_sizes.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("flaw sizes must be non-empty and positive".into());
        }
        if self.pod_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("POD grid sizes must be positive".into());
        }
        if self.replicates == 0 || self.specimens_per_size == 0 {
            return bad("replicates and specimens_per_size must be at least 1".into());
        }
        if self.n_noise_images < 2 {
            return bad("need at least 2 noise images".into());
        }
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return bad(format!("target PFA must lie in (0, 1), got {}", self.target_pfa));
        }
        if !(self.k > 0.0) || !self.gamma0.is_finite() || !self.gamma1.is_finite() {
            return bad("signal law parameters must be finite with k > 0".into());
        }
        if self.width < 8 || self.height < 8 {
            return bad(format!(
                "image must be at least 8x8, got {}x{}",
                self.width, self.height
            ));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if let NoiseSource::Synthetic { sigma, ar1 } = &self.noise {
            if !(*sigma > 0.0 && sigma.is_finite()) {
                return bad(format!("noise sigma must be positive, got {sigma}"));
            }
            if let Some(r) = ar1 {
                if !(r.abs() < 1.0) {
                    return bad(format!("AR(1) coefficient must lie in (-1, 1), got {r}"));
                }
            }
        }
        self.pipeline.validate()
    }

    /// Peak amplitude `10^(γ0 + γ1·log10 size)`.
    pub fn peak_for(&self, size: f64) -> f64 {
        signal_peak(size, self.gamma0, self.gamma1)
    }
}

pub fn signal_peak(size: f64, gamma0: f64, gamma1: f64) -> f64 {
    10f64.powf(gamma0 + gamma1 * size.log10())
}

/// Noise image source with any resampling pool loaded up front.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    width: usize,
    height: usize,
    kind: NoiseKind,
}

#[derive(Debug, Clone)]
enum NoiseKind {
    Synthetic { sigma: f64, ar1: Option<f64> },
    Pool(Vec<ImageGrid>),
}

impl NoiseGenerator {
    pub fn new(source: &NoiseSource, width: usize, height: usize) -> Result<Self> {
        let kind = match source {
            NoiseSource::Synthetic { sigma, ar1 } => NoiseKind::Synthetic {
                sigma: *sigma,
                ar1: *ar1,
            },
            NoiseSource::Resample { pool } => NoiseKind::Pool(load_pool(pool)?),
        };
        let (width, height) = match &kind {
            NoiseKind::Pool(images) => (images[0].width(), images[0].height()),
            NoiseKind::Synthetic { .. } => (width, height),
        };
        Ok(Self { width, height, kind })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn generate(&self, rng: &mut impl Rng) -> ImageGrid {
        match &self.kind {
            NoiseKind::Pool(images) => images[rng.random_range(0..images.len())].clone(),
            NoiseKind::Synthetic { sigma, ar1 } => {
                let (w, h) = (self.width, self.height);
                let mut data = Vec::with_capacity(w * h);
                for _ in 0..h {
                    let mut prev = 0.0;
                    for u in 0..w {
                        let e: f64 = StandardNormal.sample(rng);
                        let x = match ar1 {
                            Some(r) if u > 0 => r * prev + (1.0 - r * r).sqrt() * sigma * e,
                            _ => sigma * e,
                        };
                        data.push(x);
                        prev = x;
                    }
                }
                ImageGrid::new(w, h, data).expect("finite synthetic noise")
            }
        }
    }
}

fn load_pool(dir: &Path) -> Result<Vec<ImageGrid>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let images = paths
        .iter()
        .map(|p| load_image(p, ImageFormat::from_path(p)))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = images.first() else {
        return Err(Error::Config(format!("noise pool {} is empty", dir.display())));
    };
    if images
        .iter()
        .any(|img| img.width() != first.width() || img.height() != first.height())
    {
        return Err(Error::Config("noise pool images differ in size".into()));
    }
    Ok(images)
}

/// One noise image according to `cfg.noise`.
pub fn make_noise(cfg: &SimConfig, rng: &mut impl Rng) -> Result<ImageGrid> {
    Ok(NoiseGenerator::new(&cfg.noise, cfg.width, cfg.height)?.generate(rng))
}

/// Adds a Gaussian signature of peak `10^(γ0 + γ1·log10 size)` and FWHM
/// `k·size` to `noise`.
///
/// Without an explicit `location` the center is drawn uniformly among the
/// integer pixels of the central half of the grid whose 3σ footprint fits
/// inside the image.
pub fn inject_signal(
    noise: &ImageGrid,
    size: f64,
    gamma0: f64,
    gamma1: f64,
    k: f64,
    location: Option<(f64, f64)>,
    rng: &mut impl Rng,
) -> Result<ImageGrid> {
    if !(size > 0.0 && k > 0.0) {
        return Err(Error::Parameter(format!(
            "size and k must be positive, got {size} and {k}"
        )));
    }
    let sigma = k * size / FWHM_PER_SIGMA;
    let reach = 3.0 * sigma;
    let (w, h) = (noise.width() as f64, noise.height() as f64);
    let fits = |c: f64, n: f64| c - reach >= 0.0 && c + reach <= n - 1.0;
    let (cu, cv) = match location {
        Some((cu, cv)) => {
            if !(fits(cu, w) && fits(cv, h)) {
                return Err(Error::Placement(format!(
                    "signature of radius {reach:.2} at ({cu}, {cv}) leaves the {w}x{h} image"
                )));
            }
            (cu, cv)
        }
        None => (
            central_coordinate(noise.width(), reach, rng)?,
            central_coordinate(noise.height(), reach, rng)?,
        ),
    };
    let peak = signal_peak(size, gamma0, gamma1);
    let two_s2 = 2.0 * sigma * sigma;
    let bump = ImageGrid::from_fn(noise.width(), noise.height(), |u, v| {
        let r2 = (u as f64 - cu).powi(2) + (v as f64 - cv).powi(2);
        peak * (-r2 / two_s2).exp()
    })?;
    noise.add(&bump)
}

fn central_coordinate(n: usize, reach: f64, rng: &mut impl Rng) -> Result<f64> {
    let nf = n as f64;
    let lo = (nf / 4.0).ceil().max(reach.ceil());
    let hi = ((3.0 * nf / 4.0).ceil() - 1.0).min((nf - 1.0 - reach).floor());
    if lo > hi {
        return Err(Error::Placement(format!(
            "no central position keeps a signature of radius {reach:.2} inside {n} pixels"
        )));
    }
    Ok(rng.random_range(lo as i64..=hi as i64) as f64)
}

/// Per-method outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub experiment: usize,
    /// α for the region methods, `Z_th` for peak amplitude.
    pub threshold: Option<f64>,
    /// Fraction of calibration noise images called detected.
    pub observed_pfa: Option<f64>,
    pub nim: Option<NimParams>,
    pub peakamp: Option<PeakAmpParams>,
    /// POD at each size of the report's `pod_grid`.
    pub pod: Option<Vec<f64>>,
    pub a90: Option<f64>,
    pub flawed_used: usize,
    pub noise_used: usize,
    /// Images whose response failed or fell back to the linear margin.
    pub excluded: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodId,
    pub runs: Vec<MethodRun>,
    /// a90 per experiment; `None` where the fit or the a90 search failed.
    pub a90: Vec<Option<f64>>,
    pub median_a90: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: MethodId,
    pub second: MethodId,
    /// Experiments where both methods produced an a90.
    pub pairs: usize,
    /// Signed-rank sum of positive `first − second` differences.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub median_difference: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: SimConfig,
    pub notes: Vec<String>,
    pub pod_grid: Vec<f64>,
    pub methods: Vec<MethodSummary>,
    pub comparisons: Vec<PairComparison>,
}

impl ExperimentReport {
    pub fn method(&self, id: MethodId) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == id)
    }

    pub fn comparison(&self, first: MethodId, second: MethodId) -> Option<&PairComparison> {
        self.comparisons.iter().find(|c| c.first == first && c.second == second)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `pod_<method>.csv` (size column plus one column per
    /// experiment) and `a90.csv` into `dir`; returns the written paths.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for m in &self.methods {
            let path = dir.join(format!("pod_{}.csv", m.method));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["size".to_string()];
            header.extend(m.runs.iter().map(|r| format!("experiment_{}", r.experiment)));
            w.write_record(&header)?;
            for (i, size) in self.pod_grid.iter().enumerate() {
                let mut row = vec![size.to_string()];
                row.extend(
                    m.runs
                        .iter()
                        .map(|r| r.pod.as_ref().map_or_else(String::new, |p| p[i].to_string())),
                );
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        let path = dir.join("a90.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["experiment".to_string()];
        header.extend(self.methods.iter().map(|m| m.method.to_string()));
        w.write_record(&header)?;
        for e in 0..self.config.replicates {
            let mut row = vec![e.to_string()];
            row.extend(
                self.methods
                    .iter()
                    .map(|m| m.a90[e].map_or_else(String::new, |a| a.to_string())),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

const NOISE_STREAM: u64 = 0;
const FLAWED_STREAM: u64 = 1;

fn task_rng(seed: u64, experiment: usize, kind: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((experiment as u64) << 40) | (kind << 32) | index as u64);
    rng
}

/// Responses of one image under every configured method.
struct ImageResponses {
    size: Option<f64>,
    by_method: Vec<Result<Response>>,
}

fn respond_all(raw: &ImageGrid, size: Option<f64>, cfg: &SimConfig) -> ImageResponses {
    let filtered = cfg.pipeline.filter(raw);
    let by_method = cfg
        .methods
        .iter()
        .map(|&m| match (m.shape(), &filtered) {
            (None, _) => cfg.pipeline.respond(raw, m),
            (Some(shape), Ok(f)) => cfg.pipeline.respond_filtered(f, shape),
            (Some(_), Err(e)) => Err(Error::Extraction(e.to_string())),
        })
        .collect();
    ImageResponses { size, by_method }
}

/// Generates and processes the images of experiment `index`, returning one
/// [`MethodRun`] per configured method.
pub fn run_experiment(cfg: &SimConfig, generator: &NoiseGenerator, index: usize) -> Result<Vec<MethodRun>> {
    let noise: Vec<ImageResponses> = (0..cfg.n_noise_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(cfg.seed, index, NOISE_STREAM, i);
            respond_all(&generator.generate(&mut rng), None, cfg)
        })
        .collect();
    let jobs: Vec<f64> = cfg
        .flaw_sizes
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, cfg.specimens_per_size))
        .collect();
    let flawed: Vec<ImageResponses> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &size)| -> Result<ImageResponses> {
            let mut rng = task_rng(cfg.seed, index, FLAWED_STREAM, i);
            let base = generator.generate(&mut rng);
            let img = inject_signal(&base, size, cfg.gamma0, cfg.gamma1, cfg.k, None, &mut rng)?;
            Ok(respond_all(&img, Some(size), cfg))
        })
        .collect::<Result<_>>()?;

    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| summarize_method(cfg, index, method, m, &noise, &flawed))
        .collect())
}

fn summarize_method(
    cfg: &SimConfig,
    experiment: usize,
    method: MethodId,
    slot: usize,
    noise: &[ImageResponses],
    flawed: &[ImageResponses],
) -> MethodRun {
    let mut run = MethodRun {
        experiment,
        threshold: None,
        observed_pfa: None,
        nim: None,
        peakamp: None,
        pod: None,
        a90: None,
        flawed_used: 0,
        noise_used: 0,
        excluded: 0,
        error: None,
    };
    let noise_ok: Vec<&Response> = noise.iter().filter_map(|r| r.by_method[slot].as_ref().ok()).collect();
    run.excluded += noise.len() - noise_ok.len();
    let stats: Vec<f64> = noise_ok.iter().map(|r| r.statistic()).collect();
    let threshold = match method {
        MethodId::Peakamp => calibrate_zth(&stats, cfg.target_pfa),
        _ => calibrate_alpha(&stats, cfg.target_pfa),
    };
    let threshold = match threshold {
        Ok(t) => t,
        Err(e) => {
            run.error = Some(e.to_string());
            return run;
        }
    };
    run.threshold = Some(threshold);
    let noise_dec: Vec<_> = noise_ok.iter().map(|r| r.decide(threshold)).collect();
    run.observed_pfa = Some(noise_dec.iter().filter(|d| d.detected).count() as f64 / noise_dec.len() as f64);

    // Peak amplitude is modelled on log10 Z; the SNR methods on D.
    let value = |r: &Response| -> Option<f64> {
        match r {
            Response::Peak(z) => (*z > 0.0).then(|| z.log10()),
            Response::Snr { best, .. } => {
                let d = decide(best, threshold);
                (!d.linear_fallback).then_some(d.d_metric)
            }
        }
    };
    let noise_vals: Vec<f64> = noise_ok.iter().filter_map(|r| value(r)).collect();
    let flawed_vals: Vec<(f64, f64)> = flawed
        .iter()
        .filter_map(|img| {
            let r = img.by_method[slot].as_ref().ok()?;
            Some((value(r)?, img.size?))
        })
        .collect();
    run.excluded += (noise_ok.len() - noise_vals.len()) + (flawed.len() - flawed_vals.len());
    run.noise_used = noise_vals.len();
    run.flawed_used = flawed_vals.len();

    let fit = match fit_nim(&flawed_vals, &noise_vals) {
        Ok(f) => f,
        Err(e) => {
            run.error = Some(e.to_string());
            return run;
        }
    };
    let pod_fn: Box<dyn Fn(f64) -> f64> = if method == MethodId::Peakamp {
        let p = PeakAmpParams::from_log_peak_fit(&fit, threshold);
        run.peakamp = Some(p);
        Box::new(move |s| pod_peakamp(&p, s))
    } else {
        Box::new(move |s| pod(&fit, s))
    };
    run.nim = Some(fit);
    run.pod = Some(cfg.pod_grid.iter().map(|&s| pod_fn(s)).collect());
    match a90(&pod_fn, DEFAULT_A90_BRACKET) {
        Ok(a) => run.a90 = Some(a),
        Err(e) => run.error = Some(e.to_string()),
    }
    run
}

/// Runs `cfg.replicates` experiments and compares the methods' a90 values.
pub fn run_comparison(cfg: &SimConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let generator = NoiseGenerator::new(&cfg.noise, cfg.width, cfg.height)?;
    let experiments: Vec<Vec<MethodRun>> = (0..cfg.replicates)
        .map(|e| run_experiment(cfg, &generator, e))
        .collect::<Result<_>>()?;

    let methods: Vec<MethodSummary> = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let runs: Vec<MethodRun> = experiments.iter().map(|e| e[m].clone()).collect();
            let a90: Vec<Option<f64>> = runs.iter().map(|r| r.a90).collect();
            let finite: Vec<f64> = a90.iter().flatten().copied().collect();
            MethodSummary {
                method,
                median_a90: (!finite.is_empty()).then(|| crate::stats::median(&finite)),
                runs,
                a90,
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    for (first, second) in [
        (MethodId::Ellipse, MethodId::Rectangle),
        (MethodId::Rectangle, MethodId::Peakamp),
    ] {
        let (Some(x), Some(y)) = (
            methods.iter().find(|m| m.method == first),
            methods.iter().find(|m| m.method == second),
        ) else {
            continue;
        };
        comparisons.push(compare(first, &x.a90, second, &y.a90));
    }

    let generator_note = match &cfg.noise {
        NoiseSource::Synthetic { ar1: None, .. } => "synthetic i.i.d. Gaussian noise".to_string(),
        NoiseSource::Synthetic { ar1: Some(r), .. } => format!("synthetic row-wise AR(1) noise, coefficient {r}"),
        NoiseSource::Resample { pool } => format!("noise resampled with replacement from {}", pool.display()),
    };
    let notes = vec![
        generator_note,
        "thresholds calibrated once per experiment on that experiment's noise images; all methods share them".into(),
        format!("threshold quantile: {QUANTILE_CONVENTION}"),
        "noise response of an SNR method is the D of its highest-SNR indication".into(),
        "images whose response failed or whose D fell back to the linear margin are excluded from NIM fits".into(),
        "Wilcoxon signed-rank: zero differences dropped, ties given midranks, exact null for up to 20 pairs".into(),
        "random streams: ChaCha8 seeded with `seed`, stream (experiment << 40) | (kind << 32) | image index".into(),
    ];

    Ok(ExperimentReport {
        config: cfg.clone(),
        notes,
        pod_grid: cfg.pod_grid.clone(),
        methods,
        comparisons,
    })
}

fn compare(first: MethodId, x: &[Option<f64>], second: MethodId, y: &[Option<f64>]) -> PairComparison {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).unzip();
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a - b).collect();
    let mut out = PairComparison {
        first,
        second,
        pairs: xs.len(),
        statistic: None,
        p_value: None,
        median_difference: (!diffs.is_empty()).then(|| crate::stats::median(&diffs)),
        error: None,
    };
    match wilcoxon_signed_rank(&xs, &ys) {
        Ok((w, p)) => {
            out.statistic = Some(w);
            out.p_value = Some(p);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::peak_amplitude;

    #[test]
    fn signal_law_examples() {
        let p = signal_peak(50.0, -7.0, 1.22);
        assert!((p - 10f64.powf(-7.0 + 1.22 * 50f64.log10())).abs() < 1e-18);
        assert!((p / 1.183e-5 - 1.0).abs() < 1e-3);
        assert!((0.0785 * 50.0 - 3.925f64).abs() < 1e-12);
        let ratio = signal_peak(100.0, -7.0, 1.22) / p;
        assert!((ratio - 2f64.powf(1.22)).abs() < 1e-12);
        assert!((ratio - 2.329).abs() < 1e-3);
    }

    #[test]
    fn injection_into_zero_image() {
        let zero = ImageGrid::zeros(40, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for size in [15.0, 50.0, 120.0] {
            let img = inject_signal(&zero, size, -7.0, 1.22, 0.0785, None, &mut rng).unwrap();
            assert!((peak_amplitude(&img) - signal_peak(size, -7.0, 1.22)).abs() < 1e-9);
        }
    }

    #[test]
    fn random_location_is_central() {
        let zero = ImageGrid::zeros(40, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let img = inject_signal(&zero, 30.0, 0.0, 1.0, 0.0785, None, &mut rng).unwrap();
            let idx = img
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            let (u, v) = (idx % 40, idx / 40);
            assert!((10..30).contains(&u) && (10..30).contains(&v), "({u}, {v})");
        }
    }

    #[test]
    fn footprint_outside_is_rejected() {
        let zero = ImageGrid::zeros(20, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = inject_signal(&zero, 50.0, -7.0, 1.22, 0.0785, Some((2.0, 10.0)), &mut rng);
        assert!(matches!(r, Err(Error::Placement(_))));
        let r = inject_signal(&zero, 200.0, -7.0, 1.22, 0.0785, None, &mut rng);
        assert!(matches!(r, Err(Error::Placement(_))));
    }

    #[test]
    fn synthetic_noise_moments_and_determinism() {
        let cfg = SimConfig {
            noise: NoiseSource::Synthetic { sigma: 1.0, ar1: None },
            width: 30,
            height: 30,
            ..SimConfig::default()
        };
        let a = make_noise(&cfg, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let b = make_noise(&cfg, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert_eq!(a, b);
        assert!(a.mean().abs() < 3.0 / 30.0);
    }

    #[test]
    fn ar1_lag_one_correlation() {
        let cfg = SimConfig {
            noise: NoiseSource::Synthetic {
                sigma: 1.0,
                ar1: Some(0.5),
            },
            width: 30,
            height: 30,
            ..SimConfig::default()
        };
        let gen = NoiseGenerator::new(&cfg.noise, 30, 30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..100 {
            let img = gen.generate(&mut rng);
            for row in img.rows() {
                for u in 0..row.len() {
                    den += row[u] * row[u];
                    if u + 1 < row.len() {
                        num += row[u] * row[u + 1];
                    }
                }
            }
        }
        let rho = num / den * 30.0 / 29.0;
        assert!((rho - 0.5).abs() < 0.1, "{rho}");
    }

    #[test]
    fn empty_pool_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = NoiseSource::Resample {
            pool: dir.path().to_path_buf(),
        };
        assert!(matches!(NoiseGenerator::new(&src, 10, 10), Err(Error::Config(_))));
    }

    #[test]
    fn pool_resampling_draws_pool_images() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            let img = ImageGrid::filled(12, 10, i as f64).unwrap();
            fs::write(dir.path().join(format!("n{i}.txt")), img.to_matrix_text()).unwrap();
        }
        let gen = NoiseGenerator::new(
            &NoiseSource::Resample {
                pool: dir.path().to_path_buf(),
            },
            40,
            40,
        )
        .unwrap();
        assert_eq!((gen.width(), gen.height()), (12, 10));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [false; 3];
        for _ in 0..50 {
            let img = gen.generate(&mut rng);
            seen[img.get(0, 0) as usize] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            flaw_sizes: vec![10.0, -1.0],
            ..SimConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SimConfig {
            replicates: 0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SimConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SimConfig>(&text).unwrap(), cfg);
        let partial: SimConfig = serde_json::from_str(r#"{"seed": 9, "replicates": 2}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.flaw_sizes, cfg.flaw_sizes);
    }

    #[test]
    fn log_spacing() {
        let s = log_spaced(15.0, 120.0, 12);
        assert_eq!(s.len(), 12);
        assert!((s[0] - 15.0).abs() < 1e-12 && (s[11] - 120.0).abs() < 1e-9);
        let r = s[1] / s[0];
        assert!(s.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }

    #[test]
    fn high_contrast_saturates() {
        let cfg = SimConfig {
            flaw_sizes: log_spaced(15.0, 120.0, 6),
            replicates: 1,
            specimens_per_size: 3,
            n_noise_images: 30,
            noise: NoiseSource::Synthetic { sigma: 1e-7, ar1: None },
            width: 36,
            height: 36,
            ..SimConfig::default()
        };
        let report = run_comparison(&cfg).unwrap();
        for m in &report.methods {
            let run = &m.runs[0];
            let pod = run
                .pod
                .as_ref()
                .unwrap_or_else(|| panic!("{}: {:?}", m.method, run.error));
            let largest = report.pod_grid.iter().position(|&s| s >= 120.0).unwrap();
            assert!(pod[largest] > 0.99, "{}: {}", m.method, pod[largest]);
            assert!(pod.iter().all(|p| (0.0..=1.0).contains(p)));
            assert!(run.a90.is_some(), "{}: {:?}", m.method, run.error);
        }
    }
}
