//! `bssrdf` command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bssrdf_core::pbd::{BUILD_BEAM_SAMPLES, REFERENCE_BEAM_SAMPLES};
use bssrdf_core::table::{build_table_on, FitCensus, TableMetadata};
use bssrdf_core::{BeamOracle, BssrdfTable, MediumParams, SignConvention, TableGrids};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::error::{io_err, HarnessError, Result};
use crate::heatmap::{centroid, emit_heatmap, HeatmapSpec};
use crate::image::{write_json, ToneMap};
use crate::rng;
use crate::stats::{relative_errors, ErrorStats, Histogram};
use crate::trace::{channel_centroids, channel_energy, trace_beam, SlabScene};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_THRESHOLD: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "bssrdf",
    version,
    about = "Tabulated BSSRDF for oblique incidence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a table from beam-diffusion evaluations.
    Build(BuildArgs),
    /// Evaluate the model at one exit point.
    Eval(EvalArgs),
    /// Draw importance-sampled exit points.
    Sample(SampleArgs),
    /// Compare the model to the beam oracle at sampled points.
    Validate(ValidateArgs),
    /// Render the beam oracle over a patch of the surface.
    Heatmap(HeatmapArgs),
    /// Histogram of signed relative error at sampled points.
    Histogram(HistogramArgs),
    /// Trace a cone of light hitting a slab.
    TraceBeam(TraceArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long, default_value_t = 1.33)]
    eta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    g: f64,
    /// Depth samples per beam evaluation.
    #[arg(long, default_value_t = BUILD_BEAM_SAMPLES)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
    /// Use the alternative sign of the extrapolated boundary offset.
    #[arg(long)]
    flip_zb: bool,
    /// Use the alternative sign of the virtual-source flux term.
    #[arg(long)]
    flip_virtual_flux: bool,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    rho: f64,
    /// Incidence angle in radians.
    #[arg(long)]
    theta: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    at: PointArgs,
    #[arg(long)]
    r: f64,
    #[arg(long, allow_negative_numbers = true)]
    phi: f64,
    /// Also evaluate the beam oracle.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = REFERENCE_BEAM_SAMPLES)]
    oracle_samples: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    at: PointArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output with columns r, phi, pdf.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    at: PointArgs,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
    /// Exit with status 2 if the mean relative error (%) exceeds this.
    #[arg(long)]
    max_mean_rel_error: Option<f64>,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[arg(long, default_value_t = 1.33)]
    eta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    g: f64,
    #[arg(long, default_value_t = 0.95)]
    rho: f64,
    /// Incidence angle in radians.
    #[arg(long)]
    theta: f64,
    /// Side of the square patch in mean free paths.
    #[arg(long, default_value_t = 8.0)]
    extent: f64,
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// PNG path; the PFM and JSON sidecar are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HistogramArgs {
    #[command(flatten)]
    at: PointArgs,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Half-width of the binned range, percent.
    #[arg(long, default_value_t = 1.0)]
    range: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SVG path; the JSON data is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Prebuilt table; built on the fly when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Overrides the particle count of the scene file.
    #[arg(long)]
    particles: Option<u64>,
    /// Overrides the seed of the scene file.
    #[arg(long)]
    seed: Option<u64>,
    /// PNG path; the PFM and JSON sidecar are written next to it.
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_ERROR
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Build(a) => build(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Sample(a) => sample(a, out),
        Command::Validate(a) => validate(a, out),
        Command::Heatmap(a) => heatmap(a, out),
        Command::Histogram(a) => histogram(a, out),
        Command::TraceBeam(a) => trace(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|source| HarnessError::Io {
            path: "<stdout>".into(),
            source,
        })
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let s =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    emit(out, &format!("{s}\n"))
}

pub fn load_table(path: &Path) -> Result<BssrdfTable> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(BssrdfTable::from_bytes(&bytes)?)
}

#[derive(Serialize)]
struct BuildReport {
    #[serde(flatten)]
    metadata: TableMetadata,
    build_samples: usize,
    fit_census: FitCensus,
}

fn build(a: BuildArgs, out: &mut dyn Write) -> Result<i32> {
    let convention = SignConvention {
        flip_zb: a.flip_zb,
        flip_virtual_flux: a.flip_virtual_flux,
    };
    let (table, census) =
        build_table_on(TableGrids::standard(), a.eta, a.g, a.samples, convention)?;
    std::fs::write(&a.out, table.to_bytes()).map_err(io_err(&a.out))?;
    let report = BuildReport {
        metadata: table.metadata(),
        build_samples: a.samples,
        fit_census: census,
    };
    write_json(&a.out.with_extension("json"), &report)?;
    emit(
        out,
        &format!(
            "wrote {} ({} bytes, {} clamped cells, max rho_eff {:.4})\n",
            a.out.display(),
            report.metadata.file_bytes,
            report.metadata.clamped_cells,
            report.metadata.max_rho_eff
        ),
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EvalReport {
    model: f64,
    oracle: Option<f64>,
    rel_error: Option<f64>,
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let table = load_table(&a.at.table)?;
    let model = table.evaluate(a.at.rho, a.at.theta, a.r, a.phi)?;
    let oracle = if a.oracle {
        let params = MediumParams::from_albedo(table.eta(), table.g(), a.at.rho)?;
        let o = BeamOracle::new(&params, a.at.theta, table.convention())?;
        Some(o.eval(a.r, a.phi, a.oracle_samples)?)
    } else {
        None
    };
    let report = EvalReport {
        model,
        oracle,
        rel_error: oracle.filter(|o| *o > 0.0).map(|o| (model - o) / o),
    };
    if a.json {
        emit_json(out, &report)?;
    } else {
        let mut s = format!("model      {model:.9e}\n");
        if let Some(o) = oracle {
            s += &format!("oracle     {o:.9e}\n");
        }
        if let Some(e) = report.rel_error {
            s += &format!("rel_error  {:+.6}%\n", e * 100.0);
        }
        emit(out, &s)?;
    }
    Ok(EXIT_OK)
}

fn sample(a: SampleArgs, out: &mut dyn Write) -> Result<i32> {
    if a.n == 0 {
        return Err(HarnessError::Invalid("--n must be positive".into()));
    }
    let table = load_table(&a.at.table)?;
    let dist = table.exit_distribution(a.at.rho, a.at.theta)?;
    let mut csv = String::from("r,phi,pdf\n");
    for i in 0..a.n as u64 {
        let mut rng = rng::stream(a.seed, i);
        let s = dist.sample(rng.random(), rng.random())?;
        csv += &format!("{:.17e},{:.17e},{:.17e}\n", s.r, s.phi, s.pdf);
    }
    std::fs::write(&a.out, csv).map_err(io_err(&a.out))?;
    if a.json {
        emit_json(
            out,
            &serde_json::json!({ "out": a.out, "n": a.n, "seed": a.seed, "rho_eff": dist.total_energy() }),
        )?;
    } else {
        emit(
            out,
            &format!("wrote {} samples to {}\n", a.n, a.out.display()),
        )?;
    }
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let table = load_table(&a.at.table)?;
    let errors = relative_errors(&table, a.at.rho, a.at.theta, a.n, a.seed)?;
    let stats = ErrorStats::from_errors(&errors)?;
    let pass = a
        .max_mean_rel_error
        .is_none_or(|m| stats.mean_rel_error <= m);
    if a.json {
        emit_json(
            out,
            &serde_json::json!({ "stats": stats, "threshold": a.max_mean_rel_error, "pass": pass }),
        )?;
    } else {
        emit(
            out,
            &format!(
                "rho {} theta {} n {} (excluded {})\nmean {:.4}%  p50 {:.4}%  p95 {:.4}%  p99 {:.4}%  max {:.4}%\n",
                a.at.rho,
                a.at.theta,
                stats.n_samples,
                stats.excluded,
                stats.mean_rel_error,
                stats.p50,
                stats.p95,
                stats.p99,
                stats.max
            ),
        )?;
        if let Some(m) = a.max_mean_rel_error {
            emit(
                out,
                &format!("threshold {m}%: {}\n", if pass { "pass" } else { "FAIL" }),
            )?;
        }
    }
    Ok(if pass { EXIT_OK } else { EXIT_THRESHOLD })
}

fn heatmap(a: HeatmapArgs, out: &mut dyn Write) -> Result<i32> {
    let params = MediumParams::from_albedo(a.eta, a.g, a.rho)?;
    let spec = HeatmapSpec {
        theta: a.theta,
        extent: a.extent,
        resolution: a.resolution,
        beam_samples: a.samples,
    };
    let img = emit_heatmap(&params, SignConvention::LITERAL, &spec)?;
    let tone = ToneMap::log(img.channel_max(0) as f64, 6.0);
    img.write_pfm(&a.out.with_extension("pfm"))?;
    img.write_png(&a.out, &tone)?;
    let (cx, cy) = centroid(&img, &spec);
    write_json(
        &a.out.with_extension("json"),
        &serde_json::json!({
            "eta": a.eta, "g": a.g, "rho": a.rho, "theta": a.theta,
            "extent": a.extent, "resolution": a.resolution, "beam_samples": a.samples,
            "tone_map": tone, "centroid": [cx, cy],
        }),
    )?;
    emit(
        out,
        &format!("wrote {} (centroid {cx:.4}, {cy:.4})\n", a.out.display()),
    )?;
    Ok(EXIT_OK)
}

fn histogram(a: HistogramArgs, out: &mut dyn Write) -> Result<i32> {
    if a.n == 0 {
        return Err(HarnessError::Invalid("--n must be positive".into()));
    }
    let table = load_table(&a.at.table)?;
    let errors = relative_errors(&table, a.at.rho, a.at.theta, a.n, a.seed)?;
    let hist = Histogram::from_errors(&errors.errors, a.bins, a.range)?;
    let title = format!(
        "relative error (%), rho {} theta {:.4}",
        a.at.rho, a.at.theta
    );
    std::fs::write(&a.out, hist.to_svg(&title)).map_err(io_err(&a.out))?;
    write_json(
        &a.out.with_extension("json"),
        &serde_json::json!({ "config": errors.config, "excluded": errors.excluded, "histogram": hist }),
    )?;
    emit(
        out,
        &format!(
            "wrote {} ({} inside ±{}%, {} below, {} above)\n",
            a.out.display(),
            hist.counts.iter().sum::<u64>(),
            a.range,
            hist.below,
            hist.above
        ),
    )?;
    Ok(EXIT_OK)
}

fn trace(a: TraceArgs, out: &mut dyn Write) -> Result<i32> {
    let mut scene = SlabScene::load(&a.scene)?;
    if let Some(p) = a.particles {
        scene.particles = p;
    }
    if let Some(s) = a.seed {
        scene.seed = s;
    }
    scene.validate()?;
    let table = match &a.table {
        Some(p) => load_table(p)?,
        None => {
            build_table_on(
                TableGrids::standard(),
                scene.eta,
                scene.g,
                BUILD_BEAM_SAMPLES,
                SignConvention::LITERAL,
            )?
            .0
        }
    };
    let img = trace_beam(&scene, [&table, &table, &table])?;
    let white = (0..3)
        .map(|c| img.channel_max(c) as f64)
        .fold(0.0, f64::max);
    let tone = ToneMap::linear(white);
    img.write_pfm(&a.out.with_extension("pfm"))?;
    img.write_png(&a.out, &tone)?;
    write_json(
        &a.out.with_extension("json"),
        &serde_json::json!({
            "scene": scene,
            "tone_map": tone,
            "channel_energy": channel_energy(&img, &scene),
            "channel_centroid": channel_centroids(&img, &scene),
        }),
    )?;
    emit(out, &format!("wrote {}\n", a.out.display()))?;
    Ok(EXIT_OK)
}
