#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mmxr::array::ArrayGeometry;
use mmxr::codebook::{
    generate_sector_codebook, quasi_omni_range, synthesize_quasi_omni_report, write_codebook, QuasiOmniParams,
    DEFAULT_SECTOR_ANGLES,
};
use mmxr::geometry::Quaternion;
use mmxr::macsim::format_event_log;
use mmxr::metrics::{format_cdf, format_summary, read_frames, summarize, write_outputs, OutputPaths, RunSummary};
use mmxr::mobility::{
    generate_rotation_trace, generate_walk, write_trace, Room, RotationTraceParams, TraceLabel, TraceSample, TraceSet,
    WalkParams, HMD_HEIGHT,
};
use mmxr::scenario::{
    apply_config_text, format_sweep_csv, parse_sweep, run_sweep_with, simulate, AssetCache,
    ScenarioConfig, PRESETS,
};

const OUT_DIR_VAR: &str = "MMXR_OUT_DIR";

#[derive(Parser)]
#[command(name = "mmxr", version, about = "mmWave VR link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a quasi-omni pattern and write a sector codebook.
    GenerateCodebook(CodebookArgs),
    /// Write a synthetic head-rotation or walking trace.
    GenerateMobility(MobilityArgs),
    /// Run one scenario.
    Simulate(SimulateArgs),
    /// Run a parameter sweep or a named preset.
    Sweep(SweepArgs),
    /// Summarize per-frame CSVs from earlier runs.
    Report(ReportArgs),
}

#[derive(Args)]
struct CodebookArgs {
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Element pitch in wavelengths.
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    /// Carrier frequency, Hz.
    #[arg(long, default_value_t = 60e9)]
    freq: f64,
    /// Directions in the quasi-omni objective.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Coordinate sweeps per start; defaults to 200, or 1 above 256 elements.
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MobilityKind {
    Rotation,
    Walk,
}

#[derive(Args)]
struct MobilityArgs {
    #[arg(long, value_enum)]
    kind: MobilityKind,
    /// Peak angular speed for rotation traces, deg/s.
    #[arg(long, default_value_t = 300.0)]
    peak_dps: f64,
    /// Walking speed, m/s.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Seconds.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    /// Samples per second.
    #[arg(long, default_value_t = 1000.0)]
    rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Horizon of the on-device prediction written with rotation traces, s.
    #[arg(long, default_value_t = 0.1)]
    device_horizon: f64,
    #[arg(long, default_value_t = 0.5)]
    step_interval: f64,
    #[arg(long, default_value_t = 20.0)]
    room_width: f64,
    #[arg(long, default_value_t = 10.0)]
    room_depth: f64,
    /// Also write angular speed over a 100 ms window to this CSV.
    #[arg(long)]
    velocity_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set data_rate=7e9`. Repeatable.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory; falls back to $MMXR_OUT_DIR, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Named matrix to run instead of, or underneath, a sweep file.
    #[arg(long)]
    preset: Option<String>,
    /// Skip the per-cell output directories.
    #[arg(long)]
    summary_only: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    frames: Vec<PathBuf>,
    /// Write the merged CDF here.
    #[arg(long)]
    cdf_out: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Failure::Config(e.into())
    }

    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::GenerateCodebook(a) => generate_codebook(a),
        Command::GenerateMobility(a) => generate_mobility(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep_cmd(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn generate_codebook(a: CodebookArgs) -> Outcome {
    let geometry = ArrayGeometry {
        spacing: a.spacing,
        carrier_frequency: a.freq,
        ..ArrayGeometry::new(a.rows, a.cols)
    };
    geometry.validate().map_err(Failure::config)?;
    let params = QuasiOmniParams {
        n_samples: a.samples,
        seed: a.seed,
        max_iters: a
            .max_iters
            .unwrap_or(if geometry.element_count() > 256 { 1 } else { 200 }),
        ..QuasiOmniParams::default()
    };
    let report = synthesize_quasi_omni_report(&geometry, &params).map_err(Failure::config)?;
    let zero = quasi_omni_range(&geometry, &mmxr::array::Awv::zeros(geometry.element_count()), &params)
        .map_err(Failure::runtime)?;
    let codebook = generate_sector_codebook(&geometry, &DEFAULT_SECTOR_ANGLES, &DEFAULT_SECTOR_ANGLES, report.awv)
        .map_err(Failure::runtime)?;
    write_codebook(&codebook, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::runtime)?;
    println!(
        "{}x{} codebook, {} candidates, quasi-omni range {:.2} dB (zero phase {:.2} dB) -> {}",
        a.rows,
        a.cols,
        codebook.candidate_count(),
        report.range_db,
        zero,
        a.out.display()
    );
    Ok(())
}

fn generate_mobility(a: MobilityArgs) -> Outcome {
    let trace = match a.kind {
        MobilityKind::Rotation => generate_rotation_trace(&RotationTraceParams {
            peak_velocity: a.peak_dps,
            duration: a.duration,
            sample_rate: a.rate,
            seed: a.seed,
            device_horizon: a.device_horizon,
            ..RotationTraceParams::default()
        })
        .map_err(Failure::config)?,
        MobilityKind::Walk => {
            if !(a.rate > 0.0) {
                return Err(Failure::config(anyhow!("rate must be positive")));
            }
            let walk = generate_walk(&WalkParams {
                room: Room::centered(a.room_width, a.room_depth),
                speed: a.speed,
                step_interval: a.step_interval,
                duration: a.duration,
                seed: a.seed,
            })
            .map_err(Failure::config)?;
            let n = (a.duration * a.rate).round() as usize + 1;
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / a.rate;
                    let [x, y] = walk.position_at(t);
                    TraceSample {
                        t,
                        orientation: Quaternion::IDENTITY,
                        device_predicted: None,
                        position: Some([x, y, HMD_HEIGHT]),
                    }
                })
                .collect();
            TraceSet::new(samples, TraceLabel::Synthetic).map_err(Failure::runtime)?
        }
    };
    write_trace(&trace, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::runtime)?;
    if let Some(path) = &a.velocity_out {
        let mut text = String::from("t,deg_per_s\n");
        for (t, v) in trace.angular_speed_series(0.1) {
            text.push_str(&format!("{t},{v}\n"));
        }
        fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::runtime)?;
    }
    println!("{} samples over {} s -> {}", trace.samples.len(), trace.duration(), a.out.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::config)
}

fn apply_sets(config: &mut ScenarioConfig, sets: &[String]) -> Outcome {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::config(anyhow!("--set expects KEY=VALUE, got {s:?}")))?;
        config
            .set(k.trim(), v.trim())
            .with_context(|| format!("--set {s}"))
            .map_err(Failure::config)?;
    }
    Ok(())
}

fn out_dir(flag: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = flag
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::runtime)?;
    Ok(dir)
}

fn summary_line(s: &RunSummary) -> String {
    let ms = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.3}", x * 1e3));
    format!(
        "frames {} delivered {} reliability {:.2}% p50 {} ms p99 {} ms max {} ms",
        s.frame_count,
        s.delivered_count,
        s.reliability * 100.0,
        ms(s.delivered_quantile(0.5)),
        ms(s.delivered_quantile(0.99)),
        ms(s.max_latency),
    )
}

fn run_simulate(a: SimulateArgs) -> Outcome {
    let mut config = ScenarioConfig::default();
    if let Some(path) = &a.overrides.config {
        apply_config_text(&mut config, &read_text(path)?)
            .with_context(|| path.display().to_string())
            .map_err(Failure::config)?;
    }
    apply_sets(&mut config, &a.overrides.sets)?;
    config.validate().map_err(Failure::config)?;
    let dir = out_dir(&a.overrides.out)?;
    let result = simulate(&config, &mut AssetCache::new()).map_err(Failure::runtime)?;
    write_outputs(&result.summary, &result.output.frames, &OutputPaths::in_dir(&dir), &config.echo())
        .map_err(Failure::runtime)?;
    if config.event_log {
        fs::write(dir.join("events.csv"), format_event_log(&result.output.log)).map_err(Failure::runtime)?;
    }
    println!("{}", summary_line(&result.summary));
    println!("outputs in {}", dir.display());
    Ok(())
}

fn cell_dir_name(key: &str) -> String {
    key.chars()
        .map(|c| match c {
            ',' => '+',
            c if c.is_ascii_alphanumeric() || ".-_=".contains(c) => c,
            _ => '_',
        })
        .collect()
}

fn run_sweep_cmd(a: SweepArgs) -> Outcome {
    if a.preset.is_none() && a.overrides.config.is_none() {
        return Err(Failure::config(anyhow!(
            "sweep needs --config <file> or --preset <name> (presets: {})",
            PRESETS.join(", ")
        )));
    }
    let mut text = a.preset.as_ref().map(|p| format!("preset = {p}\n")).unwrap_or_default();
    if let Some(path) = &a.overrides.config {
        text.push_str(&read_text(path)?);
    }
    let mut spec = parse_sweep(&text).map_err(Failure::config)?;
    apply_sets(&mut spec.base, &a.overrides.sets)?;
    let cells = spec.cells().map_err(Failure::config)?;
    let dir = out_dir(&a.overrides.out)?;
    eprintln!("running {} cells", cells.len());
    let mut cache = AssetCache::new();
    let rows = run_sweep_with(&spec, &mut cache, |cell, result| {
        eprintln!("{}: {}", cell.key, summary_line(&result.summary));
        if a.summary_only {
            return Ok(());
        }
        let cell_dir = dir.join(cell_dir_name(&cell.key));
        fs::create_dir_all(&cell_dir)?;
        write_outputs(&result.summary, &result.output.frames, &OutputPaths::in_dir(&cell_dir), &cell.config.echo())
    })
    .map_err(Failure::runtime)?;
    for row in &rows {
        if let Err(e) = &row.outcome {
            eprintln!("{}: failed: {e}", row.cell.key);
        }
    }
    let path = dir.join("sweep.csv");
    fs::write(&path, format_sweep_csv(&spec, &rows))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::runtime)?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    println!("{} cells, {} failed -> {}", rows.len(), failed, path.display());
    Ok(())
}

fn report(a: ReportArgs) -> Outcome {
    let mut all = Vec::new();
    for path in &a.frames {
        let frames = read_frames(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::runtime)?;
        let s = summarize(&frames).map_err(Failure::runtime)?;
        println!("{}: {}", path.display(), summary_line(&s));
        all.extend(frames);
    }
    let merged = summarize(&all).map_err(Failure::runtime)?;
    if a.frames.len() > 1 {
        println!("all: {}", summary_line(&merged));
    }
    if let Some(path) = &a.cdf_out {
        fs::write(path, format_cdf(&merged))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::runtime)?;
    }
    if a.frames.len() == 1 {
        print!("{}", format_summary(&merged, &[]));
    }
    Ok(())
}
