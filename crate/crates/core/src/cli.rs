//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures including adaptive filter divergence.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::metrics::{lsd, segmental_snr, MetricParams};
use crate::pipeline::csv::format_sig6;
use crate::pipeline::{run_benchmark, run_pipeline, BenchConfig, PipelineConfig, Scenario};
use crate::signal::read_wav;
use crate::stft::FrameParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "aecpost", version, about = "Echo cancellation and postfilter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesise (or load) a scenario, process it and report metrics.
    Run(Common),
    /// Run a variant x environment x seed grid and write a CSV table.
    Bench(Common),
    /// Only write the scenario signals as WAV files.
    Synth(Common),
    /// Compare a processed WAV file with a reference.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed (first seed for `bench`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Postfilter stages, e.g. `NS,RS,REVS` or `none`.
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    reference: PathBuf,
    processed: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Outcome of a command before it is turned into an exit status.
enum Failure {
    Config(Error),
    Runtime(Error),
}

fn classify(e: Error) -> Failure {
    match e.root() {
        Error::Config(_) | Error::InvalidParameter(_) => Failure::Config(e),
        _ => Failure::Runtime(e),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    let outcome = match cli.command {
        Command::Run(c) => cmd_run(&c, &mut out),
        Command::Bench(c) => cmd_bench(&c, &mut out),
        Command::Synth(c) => cmd_synth(&c, &mut out),
        Command::Metrics(m) => cmd_metrics(&m, &mut out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("aecpost: configuration error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("aecpost: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(c: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::from_file(p).map_err(Failure::Config)?,
        None => PipelineConfig::default(),
    };
    apply_overrides(&mut cfg, c).map_err(Failure::Config)?;
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut PipelineConfig, c: &Common) -> crate::Result<()> {
    if let Some(seed) = c.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(s) = &c.stages {
        cfg.set("postfilter.stages", s)?;
    }
    if let Some(v) = &c.variant {
        cfg.set("aec.variant", v)?;
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Runtime(Error::Io {
        path: PathBuf::from("<stdout>"),
        message: e.to_string(),
    })
}

fn cmd_run(c: &Common, out: &mut impl Write) -> Result<i32, Failure> {
    let mut cfg = load_config(c)?;
    if let Some(dir) = &c.out {
        cfg.output.dir = Some(dir.clone());
    }
    let (res, files) = run_pipeline(&cfg).map_err(classify)?;
    let row = res.csv_row(&cfg);
    let names = crate::pipeline::csv::COLUMNS;
    for (name, v) in names[3..].iter().zip(row.values()) {
        writeln!(out, "{name} = {}", format_sig6(v)).map_err(io_err)?;
    }
    if let Some(m) = &res.t60 {
        writeln!(out, "t60_s = {} ({:?})", format_sig6(m.t60_s), res.t60_source).map_err(io_err)?;
    }
    if let Some(f) = files {
        writeln!(out, "wrote {}", f.metrics_csv.display()).map_err(io_err)?;
    }
    if let Some(at) = res.diverged_at {
        eprintln!("aecpost: adaptive filter diverged at sample {at}");
        return Ok(EXIT_RUNTIME);
    }
    Ok(EXIT_OK)
}

fn cmd_bench(c: &Common, out: &mut impl Write) -> Result<i32, Failure> {
    let mut bench = match &c.config {
        Some(p) => BenchConfig::from_file(p).map_err(Failure::Config)?,
        None => BenchConfig::default(),
    };
    if let Some(seed) = c.seed {
        bench.reseed(seed);
    }
    if let Some(s) = &c.stages {
        bench.base.set("postfilter.stages", s).map_err(Failure::Config)?;
    }
    if let Some(v) = &c.variant {
        bench.variants = vec![v.parse().map_err(Failure::Config)?];
    }
    if let Some(dir) = &c.out {
        bench.output = Some(dir.join("bench.csv"));
    }
    let res = run_benchmark(&bench).map_err(classify)?;
    match &bench.output {
        Some(p) => writeln!(out, "wrote {} rows to {}", res.rows.len() + res.summary.len(), p.display()),
        None => write!(out, "{}", res.csv()),
    }
    .map_err(io_err)?;
    if res.diverged > 0 {
        eprintln!("aecpost: {} benchmark cells diverged", res.diverged);
        return Ok(EXIT_RUNTIME);
    }
    Ok(EXIT_OK)
}

fn cmd_synth(c: &Common, out: &mut impl Write) -> Result<i32, Failure> {
    let cfg = load_config(c)?;
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| Failure::Config(Error::Config("synth needs --out or output.dir".into())))?;
    let scenario = Scenario::build(&cfg.scenario, cfg.postfilter.early_ms).map_err(classify)?;
    let files = scenario.write_wavs(&dir, cfg.output.encoding).map_err(classify)?;
    for f in files {
        writeln!(out, "{}", dir.join(f).display()).map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_metrics(m: &MetricsArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let cfg = match &m.config {
        Some(p) => PipelineConfig::from_file(p).map_err(Failure::Config)?,
        None => PipelineConfig::default(),
    };
    let reference = read_wav(&m.reference).map_err(classify)?;
    let processed = read_wav(&m.processed).map_err(classify)?;
    let params: &MetricParams = &cfg.metrics;
    let frame: FrameParams = cfg.stft;
    let snr = segmental_snr(&reference, &processed, params).map_err(classify)?;
    let d = lsd(&reference, &processed, frame, params.activity_threshold_db).map_err(classify)?;
    writeln!(out, "seg_snr_db = {}", format_sig6(snr)).map_err(io_err)?;
    writeln!(out, "lsd_db = {}", format_sig6(d)).map_err(io_err)?;
    Ok(EXIT_OK)
}
