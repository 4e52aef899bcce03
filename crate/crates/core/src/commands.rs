//! The `analyze`, `generate` and `bench` commands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{AnalysisConfig, CONFIG_ENV_VAR};
use crate::engine::{run, scaling_benchmark, AnalysisJob, ScalingResult};
use crate::error::Error;
use crate::io::{load_bundle, Format, IngestOptions, Strictness, TraceBundle};
use crate::report::{scaling_csv, AnalysisReport, SCALING_FILE};
use crate::synth::{generate, write_fixture, FixtureManifest, GeneratorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Ndjson,
}

impl From<InputFormat> for Format {
    fn from(f: InputFormat) -> Format {
        match f {
            InputFormat::Csv => Format::Csv,
            InputFormat::Ndjson => Format::Ndjson,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tracegrind", version, about = "Characterize cluster-scheduler traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every analysis over a trace directory and write the report.
    Analyze(AnalyzeArgs),
    /// Write a synthetic fixture from a generator spec.
    Generate(GenerateArgs),
    /// Time the analyses at several worker counts.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory holding the four table files.
    pub input: PathBuf,
    /// Analysis config (TOML); falls back to $TRACEGRIND_CONFIG, then defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: InputFormat,
    /// Fail on the first malformed line or window-spanning usage record.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Directory for report.json and the CSV files.
    pub output: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Generator spec, JSON or TOML (by extension).
    pub spec: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated ascending worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Directory for fig9_scaling.csv.
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
}

/// Explicit path, then the environment variable, then defaults.
pub fn resolve_config(explicit: Option<&Path>) -> Result<AnalysisConfig, Error> {
    let from_env = std::env::var_os(CONFIG_ENV_VAR).filter(|v| !v.is_empty());
    match explicit.map(Path::to_path_buf).or(from_env.map(PathBuf::from)) {
        Some(path) => Ok(AnalysisConfig::load(&path)?),
        None => Ok(AnalysisConfig::default()),
    }
}

fn strictness(strict: bool) -> Strictness {
    if strict {
        Strictness::Strict
    } else {
        Strictness::Permissive
    }
}

fn load(args: &InputArgs) -> Result<(TraceBundle, AnalysisConfig), Error> {
    let config = resolve_config(args.config.as_deref())?;
    let options = IngestOptions::new(args.format.into(), strictness(args.strict));
    let (bundle, log) = load_bundle(&args.input, &options)?;
    if log.total() > 0 {
        eprintln!("skipped {} malformed lines", log.total());
    }
    Ok((bundle, config))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalysisReport, Error> {
    if args.workers == 0 {
        return Err(Error::Usage("--workers must be at least 1".into()));
    }
    let (bundle, config) = load(&args.input)?;
    let job = AnalysisJob::new(&bundle, config)
        .workers(args.workers)
        .strictness(strictness(args.input.strict));
    let report = run(&job)?;
    report.write_outputs(&args.output).map_err(|source| Error::Io {
        path: args.output.clone(),
        source,
    })?;
    Ok(report)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<FixtureManifest, Error> {
    let spec = GeneratorSpec::load(&args.spec)?;
    let trace = generate(&spec)?;
    Ok(write_fixture(&trace, &args.output)?)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<ScalingResult, Error> {
    if args.workers.contains(&0) || !args.workers.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Usage(
            "worker counts must be at least 1 and strictly ascending".into(),
        ));
    }
    let (bundle, config) = load(&args.input)?;
    let job = AnalysisJob::new(&bundle, config).strictness(strictness(args.input.strict));
    let result = scaling_benchmark(&job, &args.workers, args.reps)?;
    let path = args.output.join(SCALING_FILE);
    let io_err = |source| Error::Io {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(&args.output).map_err(io_err)?;
    fs::write(&path, scaling_csv(&result).map_err(io_err)?).map_err(io_err)?;
    Ok(result)
}

pub fn execute(command: &Command) -> Result<(), Error> {
    match command {
        Command::Analyze(a) => {
            let report = cmd_analyze(a)?;
            println!("{}", report.digest);
        }
        Command::Generate(g) => {
            let manifest = cmd_generate(g)?;
            println!("{}", manifest.bundle_digest);
        }
        Command::Bench(b) => {
            for row in cmd_bench(b)?.rows {
                println!("{} {:.6} {}", row.worker_count, row.median_seconds, row.digest);
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
