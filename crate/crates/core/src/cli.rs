//! Command-line front end of the `ahs` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::experiment::dataset::MANIFEST_FILE;
use crate::experiment::spec::StftProfile;
use crate::experiment::{
    cmd_evaluate, cmd_export_features, cmd_gen_rir, cmd_stream, gen_dataset, load_scenario, ExperimentError,
    ExperimentSpec, MatrixFormat, RunManifest, SuppressorSpec, EXIT_OK, EXIT_USAGE,
};
use crate::io::{read_json, read_wav, write_json};
use crate::sim::{detect_howling, GainSchedule};
use crate::suppress::plugin::{serve, PeerMode};

#[derive(Debug, Parser)]
#[command(name = "ahs", version, about = "Acoustic howling simulation and suppression toolkit")]
pub struct Cli {
    /// Experiment spec (JSON). `gen-dataset` also accepts a run manifest.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample room impulse response sets.
    GenRir {
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Generate train/val/test scenarios and a manifest.
    GenDataset(GenDatasetArgs),
    /// Run one scenario through the closed loop.
    Stream(StreamArgs),
    /// Score estimates against references under a directory tree.
    Evaluate {
        dir: PathBuf,
        #[arg(long)]
        stft: Option<StftProfile>,
    },
    /// Write network input features of a dataset scenario as tensors.
    ExportFeatures {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 2)]
        context: usize,
    },
    /// Report howling in a recording.
    DetectHowl {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        stft: Option<StftProfile>,
    },
    /// Reference plugin peer on stdin/stdout.
    PluginPeer {
        /// echo, negate, echo-ch2, bad-magic, truncate:N, stall:N, nan:N
        #[arg(long, default_value = "echo")]
        mode: PeerMode,
    },
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Directory of utterance WAVs.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Scenario JSON file or generated scenario directory.
    #[arg(long)]
    pub scenario: PathBuf,
    /// none, kalman, notch[:F,..], gain-limiter[:DB], oracle, external, hybrid
    #[arg(long)]
    pub suppressor: Option<String>,
    /// Command line of an external plugin.
    #[arg(long = "cmd")]
    pub command: Option<String>,
    #[arg(long)]
    pub deadline_ms: Option<u64>,
    /// Constant amplifier gain, overrides the scenario.
    #[arg(long, conflicts_with = "gain_schedule")]
    pub gain: Option<f64>,
    /// Step schedule `t0:g0,t1:g1,...` in seconds.
    #[arg(long)]
    pub gain_schedule: Option<String>,
    #[arg(long, default_value = "ahsf")]
    pub matrices: String,
}

fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Usage(msg.into())
}

/// Loads an experiment spec, or the spec embedded in a run manifest.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    match read_json::<ExperimentSpec>(path) {
        Ok(spec) => Ok(spec),
        Err(spec_err) => match read_json::<RunManifest>(path) {
            Ok(m) => Ok(m.spec),
            Err(_) => Err(spec_err.into()),
        },
    }
}

fn parse_schedule(s: &str) -> Result<GainSchedule, ExperimentError> {
    let points = s
        .split(',')
        .map(|p| {
            let (t, g) = p
                .split_once(':')
                .ok_or_else(|| usage(format!("gain schedule entry {p:?} is not t:g")))?;
            let t: f64 = t.trim().parse().map_err(|e| usage(format!("time {t:?}: {e}")))?;
            let g: f64 = g.trim().parse().map_err(|e| usage(format!("gain {g:?}: {e}")))?;
            Ok((t, g))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let sched = GainSchedule::steps(points);
    sched.validate().map_err(|e| usage(e.to_string()))?;
    Ok(sched)
}

fn require_output(cli: &Cli) -> Result<&Path, ExperimentError> {
    cli.output.as_deref().ok_or_else(|| usage("--output is required"))
}

fn check_fresh(dir: &Path, marker: &str, force: bool) -> Result<(), ExperimentError> {
    if !force && dir.join(marker).exists() {
        return Err(ExperimentError::Data(format!(
            "{} already holds results; pass --force to overwrite",
            dir.display()
        )));
    }
    Ok(())
}

fn stft_profile(cli: &Cli, explicit: Option<StftProfile>) -> Result<StftProfile, ExperimentError> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    Ok(match &cli.config {
        Some(path) => load_spec(path)?.stft,
        None => StftProfile::default(),
    })
}

fn base_spec(cli: &Cli) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = match &cli.config {
        Some(path) => load_spec(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn run_stream(cli: &Cli, args: &StreamArgs) -> Result<(), ExperimentError> {
    let out = require_output(cli)?;
    check_fresh(out, "metrics.json", cli.force)?;
    let mut spec = match (&args.suppressor, &cli.config) {
        (Some(s), _) => SuppressorSpec::parse(s, args.command.as_deref()).map_err(usage)?,
        (None, Some(path)) => load_spec(path)?.suppressor,
        (None, None) => SuppressorSpec::Kalman,
    };
    if let (Some(ms), SuppressorSpec::External { deadline_ms, .. } | SuppressorSpec::Hybrid { deadline_ms, .. }) =
        (args.deadline_ms, &mut spec)
    {
        *deadline_ms = ms;
    }
    let matrices = match args.matrices.as_str() {
        "ahsf" => MatrixFormat::Ahsf,
        "csv" => MatrixFormat::Csv,
        other => return Err(usage(format!("--matrices {other:?}: expected ahsf or csv"))),
    };
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(g) = args.gain {
        cfg.gain = GainSchedule::constant(g);
    }
    if let Some(s) = &args.gain_schedule {
        cfg.gain = parse_schedule(s)?;
    }
    let report = cmd_stream(&cfg, &spec, out, matrices)?;
    log::info!(
        "{}: howling={} si-sdr={:.2} dB",
        report.method,
        report.metrics.howling.detected,
        report.metrics.si_sdr_db
    );
    Ok(())
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<(), ExperimentError> {
    match &cli.command {
        Command::GenRir { count } => {
            let out = require_output(cli)?;
            check_fresh(out, "rir-00000", cli.force)?;
            cmd_gen_rir(&base_spec(cli)?, *count, out)
        }
        Command::GenDataset(a) => {
            let out = require_output(cli)?;
            let mut spec = base_spec(cli)?;
            if let Some(n) = a.train {
                spec.counts.train = n;
            }
            if let Some(n) = a.val {
                spec.counts.val = n;
            }
            if let Some(n) = a.test {
                spec.counts.test = n;
            }
            if a.corpus.is_some() {
                spec.corpus = a.corpus.clone();
            }
            spec.validate().map_err(usage)?;
            let m = gen_dataset(&spec, out, cli.jobs, cli.force)?;
            log::info!("wrote {} scenarios and {}", m.scenarios.len(), out.join(MANIFEST_FILE).display());
            Ok(())
        }
        Command::Stream(a) => run_stream(cli, a),
        Command::Evaluate { dir, stft } => {
            let out = cli.output.clone().unwrap_or_else(|| dir.clone());
            let profile = stft_profile(cli, *stft)?;
            let run = || cmd_evaluate(dir, &out, &profile.config());
            match cli.jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| usage(format!("worker pool: {e}")))?
                    .install(run)?,
                None => run()?,
            };
            Ok(())
        }
        Command::ExportFeatures { scenario, context } => {
            let out = require_output(cli)?;
            check_fresh(out, "features.json", cli.force)?;
            cmd_export_features(scenario, out, *context).map(|_| ())
        }
        Command::DetectHowl { input, stft } => {
            let sig = read_wav(input)?;
            let report = detect_howling(&sig, &stft_profile(cli, *stft)?.config());
            match &cli.output {
                Some(path) => write_json(path, &report)?,
                None => {
                    let text = serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?;
                    println!("{text}");
                }
            }
            Ok(())
        }
        Command::PluginPeer { mode } => {
            let stdin = std::io::stdin().lock();
            let mut stdout = std::io::stdout().lock();
            serve(stdin, &mut stdout, *mode).map_err(|e| ExperimentError::Data(format!("peer: {e}")))?;
            stdout.flush().ok();
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
