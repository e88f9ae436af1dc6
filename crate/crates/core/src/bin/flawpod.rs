use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use flawpod::decision::{calibrate_dataset, classify_dataset, read_classify_csv, write_classify_csv};
use flawpod::geometry::Region;
use flawpod::nim::{fit_nim_detailed, pod_peakamp, DEFAULT_A90_BRACKET};
use flawpod::{
    a90, load_image, load_manifest, pod, run_comparison, DetectionPolicy, Error, ImageFormat, ImageGrid, MethodId,
    NimParams, PeakAmpParams, PipelineConfig, Result, Shape, SimConfig,
};

#[derive(Parser)]
#[command(
    name = "flawpod",
    version,
    about = "Flaw detection and POD estimation for NDE images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter an image and extract indications as JSON.
    Extract(ExtractArgs),
    /// Calibrate a detection threshold on the flawless images of a manifest.
    Calibrate(CalibrateArgs),
    /// Classify every image of a manifest; writes `specimen,flaw_size,D,snr,detected`.
    Classify(ClassifyArgs),
    /// Fit the noise-interference model to a classify CSV.
    FitNim(FitNimArgs),
    /// Evaluate a POD curve on a size grid.
    Pod(PodArgs),
    /// Print the flaw size reaching 90% POD.
    A90(A90Args),
    /// Run a seeded simulation comparing the methods.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Matched-filter FWHM in pixels.
    #[arg(long)]
    fwhm: Option<f64>,
    /// Penalty weight on negative corrected intensities.
    #[arg(long)]
    lambda: Option<f64>,
    /// Minimum amplitude relative to the hottest candidate.
    #[arg(long)]
    rho: Option<f64>,
    /// Maximum center distance for merging paired hotspots.
    #[arg(long)]
    merge_distance: Option<f64>,
    /// SNR below which indications may be merged.
    #[arg(long)]
    merge_snr: Option<f64>,
    /// Keep rectangles axis-aligned.
    #[arg(long)]
    axis_aligned: bool,
}

impl PipelineArgs {
    fn apply(&self, mut cfg: PipelineConfig) -> Result<PipelineConfig> {
        if let Some(v) = self.fwhm {
            cfg.fwhm = v;
        }
        if let Some(v) = self.lambda {
            cfg.volume.lambda = v;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.merge_distance {
            cfg.merge.closeness = v;
        }
        if let Some(v) = self.merge_snr {
            cfg.merge.snr_threshold = v;
        }
        cfg.rectangle_axis_aligned |= self.axis_aligned;
        cfg.validate()?;
        Ok(cfg)
    }

    fn config(&self) -> Result<PipelineConfig> {
        self.apply(PipelineConfig::default())
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Image in matrix-text or PGM format.
    image: PathBuf,
    #[arg(long, default_value = "ellipse")]
    shape: ShapeArg,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// JSON output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the filtered image with region outlines as PGM.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Write the filtered image in matrix-text format.
    #[arg(long)]
    filtered: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ShapeArg {
    Ellipse,
    Rectangle,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Ellipse => Shape::Ellipse,
            ShapeArg::Rectangle => Shape::Rectangle,
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Manifest CSV with header `image,flaw_size,flawed`.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.03)]
    pfa: f64,
    #[arg(long, default_value = "ellipse")]
    method: MethodId,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "ellipse")]
    method: MethodId,
    /// Fixed threshold (α, or Z_th for peakamp).
    #[arg(long, conflicts_with_all = ["policy", "pfa"])]
    threshold: Option<f64>,
    /// Policy JSON written by `calibrate`.
    #[arg(long, conflicts_with = "pfa")]
    policy: Option<PathBuf>,
    /// Calibrate on the manifest's flawless images to this PFA.
    #[arg(long)]
    pfa: Option<f64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitNimArgs {
    /// CSV written by `classify`.
    #[arg(long)]
    input: PathBuf,
    /// JSON output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include the starting point, log-likelihood and residuals.
    #[arg(long)]
    details: bool,
}

#[derive(Args)]
struct PodArgs {
    /// NIM or peak-amplitude parameter JSON.
    #[arg(long)]
    params: PathBuf,
    /// `lo:hi:n`, sizes spaced evenly.
    #[arg(long, default_value = "1:200:200")]
    size_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct A90Args {
    #[arg(long)]
    params: PathBuf,
    /// `lo:hi` search bracket.
    #[arg(long)]
    bracket: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON document mirroring the simulation configuration; defaults apply
    /// to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict the run to these methods.
    #[arg(long, value_delimiter = ',')]
    method: Vec<MethodId>,
    /// Directory for per-curve CSVs (next to the report when omitted).
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ModelParams {
    Nim(NimParams),
    PeakAmp(PeakAmpParams),
}

impl ModelParams {
    fn pod(&self, size: f64) -> f64 {
        match self {
            ModelParams::Nim(p) => pod(p, size),
            ModelParams::PeakAmp(p) => pod_peakamp(p, size),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(args) => extract(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Classify(args) => classify(args),
        Command::FitNim(args) => fit(args),
        Command::Pod(args) => pod_curve(args),
        Command::A90(args) => print_a90(args),
        Command::Simulate(args) => simulate(args),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = output(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| io_err(path.unwrap_or(Path::new("<stdout>")), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_range(text: &str, parts: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = text.split(':').collect();
    let bad = || Error::Parameter(format!("expected {parts} ':'-separated numbers, got {text:?}"));
    if fields.len() != parts {
        return Err(bad());
    }
    fields
        .iter()
        .map(|f| f.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn extract(args: ExtractArgs) -> Result<()> {
    let cfg = args.pipeline.config()?;
    let raw = load_image(&args.image, ImageFormat::from_path(&args.image))?;
    let filtered = cfg.filter(&raw)?;
    let found = cfg.indications_filtered(&filtered, args.shape.into())?;
    if let Some(path) = &args.filtered {
        filtered.save(path, ImageFormat::MatrixText)?;
    }
    if let Some(path) = &args.overlay {
        let regions: Vec<&Region> = found.iter().flat_map(|i| [&i.pair.inner, &i.pair.outer]).collect();
        burn_outlines(&filtered, &regions)?.save(path, ImageFormat::Pgm)?;
    }
    write_text(args.out.as_deref(), &(serde_json::to_string_pretty(&found)? + "\n"))
}

/// Sets boundary pixels of each region to the image maximum.
fn burn_outlines(img: &ImageGrid, regions: &[&Region]) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    let hot = img.max() + (img.max() - img.min()).max(f64::MIN_POSITIVE) * 0.25;
    let mut data = img.data().to_vec();
    for region in regions {
        region.for_each_pixel(w, h, |u, v| {
            let (ui, vi) = (u as i64, v as i64);
            let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|(du, dv)| !region.contains(ui + du, vi + dv));
            if edge {
                data[v * w + u] = hot;
            }
        });
    }
    ImageGrid::new(w, h, data)
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let cfg = args.pipeline.config()?;
    let records = load_manifest(&args.manifest)?;
    let policy = calibrate_dataset(&records, &manifest_dir(&args.manifest), &cfg, args.method, args.pfa)?;
    write_text(None, &(serde_json::to_string_pretty(&policy)? + "\n"))
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let cfg = args.pipeline.config()?;
    let records = load_manifest(&args.manifest)?;
    let base = manifest_dir(&args.manifest);
    let policy = match (args.threshold, &args.policy, args.pfa) {
        (Some(t), _, _) => DetectionPolicy::fixed(args.method, t)?,
        (_, Some(path), _) => {
            let p: DetectionPolicy = read_json(path)?;
            if p.method != args.method {
                return Err(Error::Parameter(format!(
                    "policy is for method {} but {} was requested",
                    p.method, args.method
                )));
            }
            p
        }
        (_, _, pfa) => calibrate_dataset(&records, &base, &cfg, args.method, pfa.unwrap_or(0.03))?,
    };
    let rows = classify_dataset(&records, &base, &policy, &cfg);
    for row in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {}: {}",
            row.specimen,
            row.error.as_deref().unwrap_or_default()
        );
    }
    write_classify_csv(&rows, output(args.out.as_deref())?)
}

fn fit(args: FitNimArgs) -> Result<()> {
    let file = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
    let (flawed, noise) = read_classify_csv(file)?;
    let fit = fit_nim_detailed(&flawed, &noise)?;
    let text = if args.details {
        serde_json::to_string_pretty(&fit)?
    } else {
        serde_json::to_string_pretty(&fit.params)?
    };
    write_text(args.out.as_deref(), &(text + "\n"))
}

fn pod_curve(args: PodArgs) -> Result<()> {
    let params: ModelParams = read_json(&args.params)?;
    let g = parse_range(&args.size_grid, 3)?;
    let (lo, hi, n) = (g[0], g[1], g[2]);
    if !(lo > 0.0 && hi >= lo && n >= 1.0 && n.fract() == 0.0) {
        return Err(Error::Parameter(format!("invalid size grid {:?}", args.size_grid)));
    }
    let n = n as usize;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["size", "pod"])?;
    for i in 0..n {
        let s = if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        };
        w.write_record([s.to_string(), params.pod(s).to_string()])?;
    }
    w.flush().map_err(|e| io_err(Path::new("<output>"), e))
}

fn print_a90(args: A90Args) -> Result<()> {
    let params: ModelParams = read_json(&args.params)?;
    let bracket = match &args.bracket {
        Some(b) => {
            let r = parse_range(b, 2)?;
            (r[0], r[1])
        }
        None => DEFAULT_A90_BRACKET,
    };
    let a = a90(|s| params.pod(s), bracket)?;
    write_text(None, &format!("{a}\n"))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.method.is_empty() {
        cfg.methods = MethodId::ALL.into_iter().filter(|m| args.method.contains(m)).collect();
    }
    let report = run_comparison(&cfg)?;
    write_text(Some(&args.out), &report.to_json()?)?;
    let dir = args
        .csv_dir
        .clone()
        .unwrap_or_else(|| args.out.parent().map(Path::to_path_buf).unwrap_or_default());
    report.write_csvs(&dir)?;
    for m in &report.methods {
        let median = m.median_a90.map_or_else(|| "n/a".to_string(), |a| format!("{a:.2}"));
        eprintln!("{}: median a90 {median}", m.method);
    }
    for c in &report.comparisons {
        let p = c.p_value.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
        eprintln!("{} vs {}: Wilcoxon p {p} over {} pairs", c.first, c.second, c.pairs);
    }
    Ok(())
}
