//! `gmm-augment` command-line front end.
//!
//! stdout carries only machine-readable output (JSON or CSV); diagnostics go
//! to stderr through `env_logger` (default level `warn`, override with
//! `RUST_LOG`). Exit codes: 0 success, 2 usage or input error, 3 numerical
//! failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use gmm_augment::augment::{AugmentConfig, PreparedVolume, RemapOptions};
use gmm_augment::population::estimate_population_with;
use gmm_augment::preprocess::{NormalizeMode, Preprocessing};
use gmm_augment::{
    foreground_mask, generate_phantom, load_stats, overlap, read_volume, save_stats, write_volume, EmConfig, Error,
    LabelVolume, PhantomSpec, Result, Volume,
};

mod hist;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "gmm-augment",
    version,
    about = "GMM-based tissue intensity augmentation for brain MRI"
)]
struct Cli {
    /// Print the resolved run configuration as JSON and exit without running.
    #[arg(long, global = true)]
    #[serde(skip)]
    print_config: bool,

    #[command(subcommand)]
    #[serde(flatten)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
enum Command {
    /// Fit a K-component mixture to one volume and write its parameters as JSON.
    Fit(FitArgs),
    /// Estimate population spread of mixture parameters over every *.nii in a directory.
    Stats(StatsArgs),
    /// Write N augmented copies of a volume plus provenance sidecars.
    Augment(AugmentArgs),
    /// Histogram of masked intensities as CSV (bin_center,count) over [0, 1].
    Hist(HistArgs),
    /// Per-label Dice, sensitivity and precision between two label volumes.
    Metrics(MetricsArgs),
    /// Generate a synthetic three-tissue phantom and its label volume.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args, Serialize)]
struct EmArgs {
    /// Relative log-likelihood change at which EM stops.
    #[arg(long, default_value_t = EmConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = EmConfig::default().max_iter)]
    max_iter: usize,
    /// Fit on at most this many randomly chosen voxels; 0 disables subsampling.
    #[arg(long, default_value_t = EmConfig::default().subsample_cap.unwrap_or(0))]
    subsample_cap: usize,
    #[arg(long, default_value_t = EmConfig::default().subsample_seed)]
    subsample_seed: u64,
}

impl EmArgs {
    fn config(&self) -> EmConfig {
        EmConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            subsample_cap: (self.subsample_cap > 0).then_some(self.subsample_cap),
            subsample_seed: self.subsample_seed,
            ..EmConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Normalize {
    Minmax01,
    None,
}

#[derive(Debug, Args, Serialize)]
struct PrepArgs {
    /// Lower clipping percentile.
    #[arg(long, default_value_t = 1.0)]
    clip_lo: f64,
    /// Upper clipping percentile.
    #[arg(long, default_value_t = 99.0)]
    clip_hi: f64,
    #[arg(long, value_enum, default_value_t = Normalize::Minmax01)]
    normalize: Normalize,
}

impl PrepArgs {
    fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            clip_lo_pct: self.clip_lo,
            clip_hi_pct: self.clip_hi,
            normalize: match self.normalize {
                Normalize::Minmax01 => NormalizeMode::MinMax01,
                Normalize::None => NormalizeMode::None,
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Label volume whose nonzero voxels form the foreground; default is intensity > 0.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    prep: PrepArgs,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    /// Directory scanned for *.nii files, read in lexicographic order.
    #[arg(long)]
    input_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    prep: PrepArgs,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args, Serialize)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Population statistics JSON; its preprocessing block is applied to the input.
    #[arg(long)]
    stats: PathBuf,
    /// Draw i uses seed + i.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Outputs are written to <prefix>_<i>.nii and <prefix>_<i>.json.
    #[arg(long)]
    out_prefix: PathBuf,
    /// Map each voxel through its most probable component only.
    #[arg(long)]
    hard_assign: bool,
    /// Redraw perturbations that change the order of the component means.
    #[arg(long)]
    reject_order_inversion: bool,
    /// Leave remapped values unclipped instead of clipping to [0, 1].
    #[arg(long)]
    no_clip_output: bool,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args, Serialize)]
struct HistArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clip-normalize the masked intensities before binning.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Labels to score; default is every nonzero label present in either volume.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<u16>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct PhantomArgs {
    /// PhantomSpec JSON; its seed is replaced by --seed.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Grid edge length for the built-in spec (ignored with --spec).
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.print_config {
        return match serde_json::to_string_pretty(&cli) {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e.into()),
        };
    }
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_numerical() { 3 } else { 2 })
}

fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Hist(a) => cmd_hist(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Phantom(a) => cmd_phantom(a),
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, body)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<LabelVolume> {
    LabelVolume::from_volume(&read_volume(path)?)
}

fn load_mask(vol: &Volume, mask: Option<&Path>) -> Result<Option<LabelVolume>> {
    let Some(p) = mask else { return Ok(None) };
    let labels = read_labels(p)?;
    // geometry is checked by foreground_mask
    foreground_mask(vol, Some(&labels))?;
    Ok(Some(labels))
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let vol = read_volume(&a.input)?;
    let mask = load_mask(&vol, a.mask.as_deref())?;
    let prep = a.prep.preprocessing();
    prep.validate()?;
    let prepared = PreparedVolume::new(&vol, mask.as_ref(), a.k, &prep, &a.em.config())?;
    info!(
        "{}: converged in {} iterations",
        a.input.display(),
        prepared.fit.iterations
    );
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&prepared.fit)? + "\n"))
}

fn nii_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "nii"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let prep = a.prep.preprocessing();
    prep.validate()?;
    let mut volumes = Vec::new();
    for path in nii_files(&a.input_dir)? {
        match read_volume(&path) {
            Ok(v) => volumes.push(v),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if volumes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} readable volumes in {}; at least 2 are needed",
            volumes.len(),
            a.input_dir.display()
        )));
    }
    let fit = estimate_population_with(&volumes, a.k, &prep, &a.em.config())?;
    info!(
        "population from {} images, {} skipped",
        fit.stats.n_images,
        fit.skipped.len()
    );
    match &a.out {
        Some(p) => save_stats(&fit.stats, p),
        None => emit(None, &(serde_json::to_string_pretty(&fit.stats)? + "\n")),
    }
}

fn indexed(prefix: &Path, i: usize, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{i}.{ext}"));
    PathBuf::from(name)
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let stats = load_stats(&a.stats)?;
    let vol = read_volume(&a.input)?;
    let mask = load_mask(&vol, a.mask.as_deref())?;
    let cfg = AugmentConfig {
        em: a.em.config(),
        remap: RemapOptions {
            hard_assign: a.hard_assign,
            clip_output: !a.no_clip_output,
        },
        reject_order_inversion: a.reject_order_inversion,
        ..AugmentConfig::default()
    };
    let prepared = PreparedVolume::new(&vol, mask.as_ref(), stats.k, &stats.preprocessing, &cfg.em)?;
    for i in 0..a.n {
        let seed = a.seed.wrapping_add(i as u64);
        let out = prepared.draw(&stats, seed, &cfg)?;
        write_volume(&out.volume, indexed(&a.out_prefix, i, "nii"))?;
        let sidecar = serde_json::to_string_pretty(&out.provenance())? + "\n";
        fs::write(indexed(&a.out_prefix, i, "json"), sidecar)?;
    }
    info!("wrote {} augmented volumes", a.n);
    Ok(())
}

fn cmd_hist(a: &HistArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(Error::InvalidArgument("--bins must be positive".into()));
    }
    let vol = read_volume(&a.input)?;
    let labels = load_mask(&vol, a.mask.as_deref())?;
    let mask = foreground_mask(&vol, labels.as_ref())?;
    let vol = if a.normalize {
        Preprocessing::default().apply(&vol, &mask)?
    } else {
        vol
    };
    let counts = hist::histogram(&vol.masked_values(&mask)?, a.bins);
    let mut buf = Vec::new();
    hist::write_csv(&counts, &mut buf)?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let pred = read_labels(&a.pred)?;
    let reference = read_labels(&a.reference)?;
    let labels = if a.labels.is_empty() {
        let mut all: Vec<u16> = pred
            .labels()
            .iter()
            .chain(reference.labels())
            .copied()
            .filter(|&l| l != 0)
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    } else {
        a.labels.clone()
    };
    let report = overlap(&pred, &reference, &labels)?;
    match a.format {
        Format::Json => emit(a.out.as_deref(), &(report.to_json()? + "\n")),
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))
        }
    }
}

fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => serde_json::from_str::<PhantomSpec>(&fs::read_to_string(p)?)
            .map_err(|e| Error::InvalidSpec(format!("{}: {e}", p.display())))?
            .with_seed(a.seed),
        None => PhantomSpec::scaled(a.size, a.seed),
    };
    let (vol, labels) = generate_phantom(&spec)?;
    write_volume(&vol, &a.out)?;
    write_volume(&labels.to_volume(), &a.out_labels)?;
    Ok(())
}
