//! Command-line front end for `wsdist`.
//!
//! Each subcommand maps to a function returning a process exit code:
//! 0 on success, 1 on runtime errors, 2 on usage errors.

pub mod bench;
pub mod phantom;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wsdist::io::{self, Metadata};
use wsdist::metrics::REPORT_SCHEMA;
use wsdist::{
    AbsentClassPolicy, Connectivity, DistanceKind, Engine, LossConfig, MetricReport,
    PointAnnotationConfig, RasterConfig, TransformConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "WSDIST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wsdist", version, about = "Intensity-aware distance maps for weakly supervised segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one signed distance map per foreground class.
    Distmap(DistmapArgs),
    /// Generate elliptic point annotations from full labels.
    Points(PointsArgs),
    /// Evaluate cross-entropy plus boundary loss on stored volumes.
    Loss(LossArgs),
    /// Dice and HD95 over matching files in two directories.
    Metrics(MetricsArgs),
    /// Time signed-map computation on synthetic phantoms.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Euc,
    Geo,
    Int,
    Mbd,
}

impl From<KindArg> for DistanceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Euc => DistanceKind::Euclidean,
            KindArg::Geo => DistanceKind::Geodesic,
            KindArg::Int => DistanceKind::Intensity,
            KindArg::Mbd => DistanceKind::Mbd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Exact,
    Raster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConnectivityArg {
    Faces,
    Full,
}

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Faces => Connectivity::FacesOnly,
            ConnectivityArg::Full => Connectivity::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DimsArg {
    #[value(name = "2d")]
    TwoD,
    #[value(name = "3d")]
    ThreeD,
}

fn parse_absent(s: &str) -> Result<AbsentClassPolicy, String> {
    let policy = match s {
        "zeros" => AbsentClassPolicy::Zeros,
        "ones" => AbsentClassPolicy::Ones,
        _ => {
            let v = s
                .strip_prefix("const:")
                .ok_or_else(|| format!("expected zeros, ones or const:<value>, got {s:?}"))?;
            let v: f64 = v.parse().map_err(|e| format!("bad constant {v:?}: {e}"))?;
            AbsentClassPolicy::Constant(v)
        }
    };
    policy.validate().map_err(|e| e.to_string())?;
    Ok(policy)
}

fn parse_axes(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated semi-axes, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad semi-axis {t:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Debug, Args)]
pub struct DistmapArgs {
    /// Intensity volume (.npy with sidecar).
    #[arg(long)]
    pub image: PathBuf,
    /// Weak label volume (.npy with sidecar).
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory for `class_<k>.npy` maps.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "euc")]
    pub kind: KindArg,
    /// Intensity weight of the step cost; defaults per kind.
    #[arg(long)]
    pub mix: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    pub engine: EngineArg,
    /// Raster passes; iterate to convergence when omitted.
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long, value_enum, default_value = "full")]
    pub connectivity: ConnectivityArg,
    #[arg(long, value_enum, default_value = "3d")]
    pub dims: DimsArg,
    /// zeros, ones or const:<value>.
    #[arg(long, value_parser = parse_absent, default_value = "zeros")]
    pub absent: AbsentClassPolicy,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Skip rescaling the channel to [0, 255].
    #[arg(long)]
    pub no_rescale: bool,
    /// Print a JSON summary on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PointsArgs {
    /// Full label volume.
    #[arg(long)]
    pub labels: PathBuf,
    /// Output weak label volume.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Ellipse semi-axes in voxels, along columns then rows.
    #[arg(long, value_parser = parse_axes, default_value = "4,2")]
    pub axes: (f64, f64),
    /// One annotation per class for the whole volume instead of per slice.
    #[arg(long)]
    pub whole_volume: bool,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Probability volume with one plane per class.
    #[arg(long)]
    pub probs: PathBuf,
    /// Weak label volume.
    #[arg(long)]
    pub labels: PathBuf,
    /// Directory holding `class_<k>.npy` signed maps.
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of ground-truth label volumes.
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory of predictions with the same file names.
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<wsdist::Error> for Failure {
    fn from(e: wsdist::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    let result = match cli.command {
        Command::Distmap(a) => cmd_distmap(&a),
        Command::Points(a) => cmd_points(&a),
        Command::Loss(a) => cmd_loss(&a),
        Command::Metrics(a) => cmd_metrics(&a),
        Command::Bench(a) => bench::cmd_bench(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    // A pool that already exists (e.g. a second call in-process) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn class_map_path(dir: &Path, class_id: u32) -> PathBuf {
    dir.join(format!("class_{class_id}.npy"))
}

#[derive(Debug, Serialize)]
struct DistmapSummary {
    schema: u32,
    transform: TransformConfig,
    dims: &'static str,
    outputs: Vec<PathBuf>,
}

pub fn cmd_distmap(args: &DistmapArgs) -> CmdResult {
    let kind = DistanceKind::from(args.kind);
    let engine = match (args.engine, kind) {
        (EngineArg::Raster, DistanceKind::Mbd) => {
            return Err(Failure::Usage(
                "the raster engine does not support --kind mbd; use --engine exact".into(),
            ))
        }
        (EngineArg::Raster, _) => {
            let rcfg = match args.passes {
                Some(n) => RasterConfig::with_passes(n),
                None => RasterConfig::fixed_point(),
            };
            rcfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            Engine::Raster(rcfg)
        }
        (EngineArg::Exact, _) => {
            if args.passes.is_some() {
                return Err(Failure::Usage("--passes requires --engine raster".into()));
            }
            Engine::Exact
        }
    };
    let mut cfg = TransformConfig::new(kind)
        .with_connectivity(args.connectivity.into())
        .with_channel(args.channel)
        .with_rescale(!args.no_rescale);
    if let Some(mix) = args.mix {
        cfg = cfg.with_mix(mix);
    }

    let image = io::read_scalar(&args.image)
        .with_context(|| format!("reading image {}", args.image.display()))?;
    let weak = io::read_labels(&args.labels)
        .with_context(|| format!("reading labels {}", args.labels.display()))?;
    let maps = match args.dims {
        DimsArg::TwoD => wsdist::signed_maps_per_slice(&image, &weak, &cfg, &engine, &args.absent)?,
        DimsArg::ThreeD => {
            wsdist::signed_maps_for_all_classes(&image, &weak, &cfg, &engine, &args.absent)?
        }
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let metadata = Metadata {
        transform_config: Some(serde_json::to_value(&cfg).map_err(anyhow::Error::from)?),
        ..Metadata::default()
    };
    let mut outputs = Vec::with_capacity(maps.len());
    for map in &maps {
        let path = class_map_path(&args.out, map.class_id());
        io::write_signed_map(map, &path, &metadata)
            .with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path);
    }
    if args.json {
        let summary = DistmapSummary {
            schema: REPORT_SCHEMA,
            transform: cfg,
            dims: match args.dims {
                DimsArg::TwoD => "2d",
                DimsArg::ThreeD => "3d",
            },
            outputs,
        };
        print_json(&summary)?;
    }
    Ok(())
}

pub fn cmd_points(args: &PointsArgs) -> CmdResult {
    let cfg = PointAnnotationConfig {
        ellipse_semi_axes: args.axes,
        rng_seed: args.seed,
        per_slice: !args.whole_volume,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let full = io::read_labels(&args.labels)
        .with_context(|| format!("reading labels {}", args.labels.display()))?;
    let weak = wsdist::generate_points(&full, &cfg)?;
    ensure_parent(&args.out)?;
    let metadata = Metadata {
        seed: Some(args.seed),
        ..Metadata::default()
    };
    io::write_labels(&weak, &args.out, &metadata)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

pub fn cmd_loss(args: &LossArgs) -> CmdResult {
    let cfg = LossConfig::default().with_alpha(args.alpha);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let probs = io::read_probabilities(&args.probs)
        .with_context(|| format!("reading probabilities {}", args.probs.display()))?;
    let weak = io::read_labels(&args.labels)
        .with_context(|| format!("reading labels {}", args.labels.display()))?;
    let maps = (1..probs.num_classes() as u32)
        .map(|k| {
            let path = class_map_path(&args.maps, k);
            io::read_signed_map(&path).with_context(|| format!("reading {}", path.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let objective = wsdist::combined_objective(&probs, &weak, &maps, &cfg)?;
    if args.json {
        print_json(&serde_json::json!({
            "schema": REPORT_SCHEMA,
            "alpha": cfg.alpha,
            "total": objective.total,
            "ce_term": objective.ce_term,
            "bl_term": objective.bl_term,
        }))?;
    } else {
        println!("total   {:.10e}", objective.total);
        println!("ce      {:.10e}", objective.ce_term);
        println!("bl      {:.10e}", objective.bl_term);
    }
    Ok(())
}

fn npy_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "npy") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn cmd_metrics(args: &MetricsArgs) -> CmdResult {
    let gt_files = npy_files(&args.gt)?;
    if gt_files.is_empty() {
        return Err(anyhow!("no .npy files in {}", args.gt.display()).into());
    }
    let mut reports = Vec::with_capacity(gt_files.len());
    for gt_path in &gt_files {
        let name = gt_path.file_name().expect("listed files have names");
        let pred_path = args.pred.join(name);
        if !pred_path.exists() {
            return Err(anyhow!("no prediction {} for {}", pred_path.display(), gt_path.display()).into());
        }
        let gt = io::read_labels(gt_path).with_context(|| format!("reading {}", gt_path.display()))?;
        let pred =
            io::read_labels(&pred_path).with_context(|| format!("reading {}", pred_path.display()))?;
        reports.push(
            wsdist::evaluate(&gt, &pred).with_context(|| format!("evaluating {}", gt_path.display()))?,
        );
    }
    let report = MetricReport::aggregate(&reports);
    match &args.out {
        Some(path) => {
            ensure_parent(path)?;
            io::write_json(&report, path).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print_json(&report)?,
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    Ok(())
}

pub(crate) fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub(crate) fn runtime(msg: impl std::fmt::Display) -> Failure {
    Failure::Runtime(anyhow!("{msg}"))
}
