//! Wall-clock timing of signed-map computation for every distance kind.
//!
//! Additive kinds use the raster engine by default and MBD always uses the
//! exact interval engine. Each sample covers all foreground classes of one
//! phantom, 2D or 3D.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use wsdist::metrics::REPORT_SCHEMA;
use wsdist::{
    generate_points, signed_maps_for_all_classes, AbsentClassPolicy, DistanceKind, Engine,
    PointAnnotationConfig, RasterConfig, Result, TransformConfig,
};

use crate::phantom::phantom;
use crate::{runtime, usage, CmdResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditiveEngine {
    Raster,
    Exact,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    /// Repetitions per kind and dimensionality.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// 2D phantom size as rows,cols.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub size_2d: Vec<usize>,
    /// 3D phantom size as rows,cols,slabs.
    #[arg(long, value_delimiter = ',', default_value = "64,64,32")]
    pub size_3d: Vec<usize>,
    /// 3D voxel spacing.
    #[arg(long, value_delimiter = ',', default_value = "2.07,2.07,8.0")]
    pub spacing_3d: Vec<f64>,
    #[arg(long, value_enum, default_value = "raster")]
    pub additive_engine: AdditiveEngine,
    /// Raster passes for the additive kinds.
    #[arg(long, default_value_t = 4)]
    pub passes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for BenchArgs {
    fn default() -> Self {
        Self {
            reps: 3,
            size_2d: vec![256, 256],
            size_3d: vec![64, 64, 32],
            spacing_3d: vec![2.07, 2.07, 8.0],
            additive_engine: AdditiveEngine::Raster,
            passes: 4,
            seed: 0,
            json: false,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kind: String,
    pub mean_2d_s: f64,
    pub mean_3d_s: f64,
    pub samples_2d_s: Vec<f64>,
    pub samples_3d_s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub reps: usize,
    pub additive_engine: AdditiveEngine,
    pub passes: usize,
    pub size_2d: Vec<usize>,
    pub size_3d: Vec<usize>,
    pub spacing_3d: Vec<f64>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, kind: DistanceKind) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.kind == kind.short_name())
    }

    /// Plain-text table: one row per kind, one column per dimensionality.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6}{:>14}{:>14}", "kind", "2D [s]", "3D [s]");
        for row in &self.rows {
            let _ = writeln!(out, "{:<6}{:>14.6}{:>14.6}", row.kind, row.mean_2d_s, row.mean_3d_s);
        }
        out
    }
}

fn validate(args: &BenchArgs) -> std::result::Result<(), String> {
    if args.reps == 0 {
        return Err("--reps must be ≥ 1".into());
    }
    if args.size_2d.len() != 2 {
        return Err(format!("--size-2d needs 2 values, got {}", args.size_2d.len()));
    }
    if args.size_3d.len() != 3 || args.spacing_3d.len() != 3 {
        return Err("--size-3d and --spacing-3d need 3 values each".into());
    }
    if args.passes == 0 {
        return Err("--passes must be ≥ 1".into());
    }
    Ok(())
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Runs the timing matrix.
pub fn run_bench(args: &BenchArgs) -> Result<BenchReport> {
    validate(args).map_err(wsdist::Error::InvalidConfig)?;
    let points = PointAnnotationConfig::new(args.seed);
    let (image_2d, full_2d) = phantom(&args.size_2d, &[1.0, 1.0], args.seed)?;
    let (image_3d, full_3d) = phantom(&args.size_3d, &args.spacing_3d, args.seed)?;
    let weak_2d = generate_points(&full_2d, &points)?;
    let weak_3d = generate_points(&full_3d, &points)?;
    let absent = AbsentClassPolicy::Zeros;

    let mut rows = Vec::with_capacity(DistanceKind::ALL.len());
    for kind in DistanceKind::ALL {
        let cfg = TransformConfig::new(kind);
        let engine = match (kind, args.additive_engine) {
            (DistanceKind::Mbd, _) | (_, AdditiveEngine::Exact) => Engine::Exact,
            (_, AdditiveEngine::Raster) => Engine::Raster(RasterConfig::with_passes(args.passes)),
        };
        let time = |image, weak| -> Result<Vec<f64>> {
            (0..args.reps)
                .map(|_| {
                    let start = Instant::now();
                    let maps = signed_maps_for_all_classes(image, weak, &cfg, &engine, &absent)?;
                    let elapsed = start.elapsed().as_secs_f64();
                    std::hint::black_box(maps);
                    Ok(elapsed)
                })
                .collect()
        };
        let samples_2d_s = time(&image_2d, &weak_2d)?;
        let samples_3d_s = time(&image_3d, &weak_3d)?;
        rows.push(BenchRow {
            kind: kind.short_name().to_string(),
            mean_2d_s: mean(&samples_2d_s),
            mean_3d_s: mean(&samples_3d_s),
            samples_2d_s,
            samples_3d_s,
        });
    }
    Ok(BenchReport {
        schema: REPORT_SCHEMA,
        reps: args.reps,
        additive_engine: args.additive_engine,
        passes: args.passes,
        size_2d: args.size_2d.clone(),
        size_3d: args.size_3d.clone(),
        spacing_3d: args.spacing_3d.clone(),
        rows,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> CmdResult {
    validate(args).map_err(usage)?;
    let report = run_bench(args).map_err(runtime)?;
    if let Some(path) = &args.out {
        wsdist::io::write_json(&report, path).map_err(runtime)?;
    }
    if args.json {
        let text = serde_json::to_string_pretty(&report).map_err(runtime)?;
        println!("{text}");
    } else {
        print!("{}", report.table());
    }
    Ok(())
}
