//! The `gareg` command-line tool.
//!
//! Every failure ends with one diagnostic line on stderr,
//! `gareg: error[<kind>]: <message>`, and a fixed exit code:
//!
//! | code | kind |
//! |------|------|
//! | 0 | success |
//! | 2 | `usage`: bad flags or configuration |
//! | 3 | `io`: a file could not be read or written |
//! | 4 | `parse`: malformed or non-finite input |
//! | 5 | `degenerate`: empty clouds, too few or collinear correspondences |
//! | 6 | `internal`: an invariant of the optimizer was violated |

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gareg_core::icp::{fit_rigid, icp_refine, IcpConfig};
use gareg_core::io::{
    format_correspondences, load_correspondences, save_cloud, sibling_path, write_atomic,
    CloudFormat,
};
use gareg_core::report::{
    format_record, format_timing, result_csv_row, trace_csv, RunManifest, RESULT_CSV_HEADER,
};
use gareg_core::synth::{
    format_summary, make_pair, run_trials, summarize, trials_to_csv, PairSpec, SurfaceShape,
    TrialMode,
};
use gareg_core::{
    apply_motion, load_cloud, register, CorrespondencePair, EulerAngles, Error, FitnessKind, Point3,
    PointCloud, RegistrationConfig, RigidMotion, SearchMode,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_DEGENERATE: i32 = 5;
pub const EXIT_INTERNAL: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "gareg", version, about = "Rigid point-cloud registration with a two-stage genetic algorithm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register SOURCE onto TARGET.
    Register(RegisterArgs),
    /// Fit a motion to marked correspondences and refine it with ICP.
    GroundTruth(GroundTruthArgs),
    /// Run both search modes on seeded synthetic pairs.
    Bench(BenchArgs),
    /// Write a synthetic scan pair and its ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct OptimizerArgs {
    /// TOML file with a registration configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_fitness)]
    fitness: Option<FitnessKind>,
    /// Overlap distance in mm (default: twice the target's median spacing).
    #[arg(long, value_name = "MM")]
    overlap_threshold: Option<f64>,
    /// Points kept per cloud for the optimizer.
    #[arg(long, value_name = "N")]
    downsample: Option<usize>,
    #[arg(long, value_name = "N")]
    coarse_gens: Option<usize>,
    #[arg(long, value_name = "N")]
    fine_gens: Option<usize>,
    /// Worker threads for fitness evaluation; results do not depend on it.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    source: PathBuf,
    target: PathBuf,
    /// Known rotation in degrees; only the translation is searched.
    #[arg(long, num_args = 3, value_names = ["ALPHA", "BETA", "PSI"], allow_negative_numbers = true)]
    known_rotation: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Result record path; printed to stdout when omitted. Wall time goes
    /// to `<out>.timing.toml`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the source cloud moved by the estimated motion.
    #[arg(long, value_name = "PATH")]
    transformed: Option<PathBuf>,
    /// Write the per-generation best fitness of both stages as CSV.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Print the result as a CSV row instead of a record.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct GroundTruthArgs {
    source: PathBuf,
    target: PathBuf,
    /// Lines of `sx sy sz tx ty tz`, at least three.
    correspondences: PathBuf,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Ignore ICP matches farther apart than this, mm.
    #[arg(long, value_name = "MM")]
    cutoff: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the source cloud moved by the refined motion.
    #[arg(long, value_name = "PATH")]
    transformed: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long, value_parser = parse_shape)]
    shape: Option<SurfaceShape>,
    /// Points sampled on the whole surface before carving the two views.
    #[arg(long, value_name = "N")]
    points: Option<usize>,
    /// Overlap fraction of each view, in (0, 1].
    #[arg(long)]
    overlap: Option<f64>,
    /// Noise standard deviation in mm.
    #[arg(long, value_name = "MM")]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Comma-separated subset of `full,reduced`.
    #[arg(long, value_delimiter = ',', default_values = ["full", "reduced"], value_parser = parse_trial_mode)]
    modes: Vec<TrialMode>,
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Per-trial CSV path.
    #[arg(long, value_name = "PATH")]
    trials: Option<PathBuf>,
    /// Summary table path; printed to stdout as well.
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_name = "PATH")]
    source: PathBuf,
    #[arg(long, value_name = "PATH")]
    target: PathBuf,
    /// Ground-truth motion as TOML.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
    /// Also write this many exact correspondences from the shared region.
    #[arg(long, value_name = "PATH")]
    correspondences: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    marks: usize,
}

fn parse_fitness(s: &str) -> Result<FitnessKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_shape(s: &str) -> Result<SurfaceShape, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_trial_mode(s: &str) -> Result<TrialMode, String> {
    match s {
        "full" => Ok(TrialMode::Full),
        "reduced" => Ok(TrialMode::Reduced),
        other => Err(format!("unknown mode `{other}` (expected full or reduced)")),
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidConfig(_) => (EXIT_USAGE, "usage"),
            Error::Io { .. } => (EXIT_IO, "io"),
            Error::Parse { .. } | Error::NonFiniteCoordinate { .. } => (EXIT_PARSE, "parse"),
            Error::EmptyCloud
            | Error::DegenerateCloud(_)
            | Error::TooFewPairs { .. }
            | Error::DegenerateConfiguration(_) => (EXIT_DEGENERATE, "degenerate"),
            Error::EmptyPopulation => (EXIT_INTERNAL, "internal"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    /// The one-line diagnostic.
    pub fn diagnostic(&self) -> String {
        let flat: Vec<&str> = self.message.split_whitespace().collect();
        format!("gareg: error[{}]: {}", self.kind, flat.join(" "))
    }
}

type CliResult<T> = Result<T, Failure>;

/// Runs the tool and returns its exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let message = first.strip_prefix("error: ").unwrap_or(first);
            let _ = writeln!(stderr, "{}", Failure::usage(message).diagnostic());
            return EXIT_USAGE;
        }
    };
    let outcome = match cli.command {
        Command::Register(a) => cmd_register(a, stdout, stderr),
        Command::GroundTruth(a) => cmd_ground_truth(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.diagnostic());
            f.code
        }
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::Io { path: "<stdout>".into(), source: e }.into())
}

fn load(path: &Path) -> CliResult<PointCloud> {
    Ok(load_cloud(path, CloudFormat::from_path(path))?)
}

fn save(cloud: &PointCloud, path: &Path) -> CliResult<()> {
    Ok(save_cloud(cloud, path, CloudFormat::from_path(path))?)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| Failure {
        code: EXIT_INTERNAL,
        kind: "internal",
        message: format!("serializing output: {e}"),
    })
}

impl OptimizerArgs {
    fn config(&self, seed: u64) -> CliResult<RegistrationConfig> {
        if self.threads == Some(0) {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                toml::from_str(&text).map_err(|e| Failure {
                    code: EXIT_PARSE,
                    kind: "parse",
                    message: format!("{}: {}", path.display(), e.message()),
                })?
            }
            None => RegistrationConfig::default(),
        };
        if let Some(f) = self.fitness {
            config.fitness = f;
        }
        if let Some(t) = self.overlap_threshold {
            config.overlap_threshold = Some(t);
        }
        if let Some(n) = self.downsample {
            config.downsample = n;
        }
        if let Some(n) = self.coarse_gens {
            config.ga.coarse_generations = n;
        }
        if let Some(n) = self.fine_gens {
            config.ga.fine_generations = n;
        }
        config.ga.seed = seed;
        config.validate()?;
        Ok(config)
    }

    /// Runs `f` on a pool capped at `--threads` workers.
    fn with_threads<T>(&self, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T>
    where
        T: Send,
    {
        match self.threads {
            None => f(),
            Some(0) => Err(Failure::usage("--threads must be at least 1")),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure {
                    code: EXIT_INTERNAL,
                    kind: "internal",
                    message: format!("thread pool: {e}"),
                })?
                .install(f),
        }
    }
}

impl PairArgs {
    fn spec(&self, seed: u64) -> CliResult<PairSpec> {
        let mut spec = PairSpec::benchmark(seed)?;
        if let Some(shape) = self.shape {
            spec.surface.shape = shape;
        }
        if let Some(n) = self.points {
            spec.surface.point_count = n;
        }
        if let Some(f) = self.overlap {
            spec.overlap_fraction = f;
        }
        if let Some(s) = self.noise {
            spec.noise_sigma = s;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn cmd_register(args: RegisterArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let config = args.optimizer.config(args.seed)?;
    let mode = match &args.known_rotation {
        Some(a) => SearchMode::ReducedTranslationOnly(EulerAngles::new(a[0], a[1], a[2])),
        None => SearchMode::Full6Dof,
    };
    let source = load(&args.source)?;
    let target = load(&args.target)?;
    let manifest = RunManifest::new(&[&args.source, &args.target], &config)?;
    let run = args
        .optimizer
        .with_threads(|| Ok(register(&source, &target, mode, &config)?))?;

    if let Some(path) = &args.transformed {
        save(&apply_motion(&run.result.motion, &source)?, path)?;
    }
    if let Some(path) = &args.trace {
        write_text(path, &trace_csv(&run.coarse_trace, &run.fine_trace))?;
    }
    let record = format_record(&run.result, Some(&manifest));
    let timing = format_timing(&run.result.timing);
    match &args.out {
        Some(path) => {
            write_text(path, &record)?;
            write_text(&sibling_path(path, ".timing.toml"), &timing)?;
        }
        None if !args.csv => emit(stdout, &record)?,
        None => {}
    }
    if args.csv {
        emit(stdout, &format!("{RESULT_CSV_HEADER}\n{}\n", result_csv_row(&run.result)))?;
    }
    let _ = writeln!(stderr, "wall_time_s={}", run.result.timing.wall_time_s);
    Ok(())
}

#[derive(Serialize)]
struct GroundTruthReport {
    correspondences: usize,
    /// RMS residual of the marked pairs under the fitted motion, mm.
    fitted_rms: f64,
    /// Final ICP RMS over all source points, mm.
    rms: f64,
    iterations: usize,
    fitted: RigidMotion,
    refined: RigidMotion,
}

fn cmd_ground_truth(args: GroundTruthArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let source = load(&args.source)?;
    let target = load(&args.target)?;
    let pairs = load_correspondences(&args.correspondences)?;
    let fitted = fit_rigid(&pairs)?;
    let mapper = fitted.mapper();
    let fitted_rms = (pairs
        .iter()
        .map(|p| (mapper.apply(&p.source_point) - p.target_point).norm_squared())
        .sum::<f64>()
        / pairs.len() as f64)
        .sqrt();
    let icp = IcpConfig {
        max_iterations: args.max_iterations,
        convergence_epsilon: args.epsilon,
        correspondence_cutoff: args.cutoff,
    };
    let refined = icp_refine(&source, &target, &fitted, &icp)?;
    if let Some(path) = &args.transformed {
        save(&apply_motion(&refined.motion, &source)?, path)?;
    }
    let text = to_toml(&GroundTruthReport {
        correspondences: pairs.len(),
        fitted_rms,
        rms: refined.rms,
        iterations: refined.iterations,
        fitted,
        refined: refined.motion,
    })?;
    match &args.out {
        Some(path) => write_text(path, &text),
        None => emit(stdout, &text),
    }
}

fn cmd_bench(args: BenchArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if args.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let config = args.optimizer.config(args.seed)?;
    let spec = args.pair.spec(args.seed)?;
    let mut modes = args.modes.clone();
    modes.dedup();
    let outcomes = args
        .optimizer
        .with_threads(|| Ok(run_trials(&spec, &modes, &config, args.repeats)?))?;
    let csv = trials_to_csv(&outcomes);
    let summary = format_summary(&summarize(&outcomes));
    if let Some(path) = &args.trials {
        write_text(path, &csv)?;
    }
    if let Some(path) = &args.summary {
        write_text(path, &summary)?;
    }
    emit(stdout, &summary)
}

#[derive(Serialize)]
struct TruthDocument {
    ground_truth: RigidMotion,
    spec: PairSpec,
}

fn cmd_synth(args: SynthArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let spec = args.pair.spec(args.seed)?;
    let pair = make_pair(&spec)?;
    save(&pair.source, &args.source)?;
    save(&pair.target, &args.target)?;
    if let Some(path) = &args.truth {
        write_text(
            path,
            &to_toml(&TruthDocument {
                ground_truth: pair.ground_truth,
                spec,
            })?,
        )?;
    }
    if let Some(path) = &args.correspondences {
        let marks = shared_marks(&spec, &pair.source, args.marks);
        if marks.len() < args.marks {
            return Err(Error::DegenerateConfiguration(format!(
                "only {} source points lie in the shared region",
                marks.len()
            ))
            .into());
        }
        let mapper = pair.ground_truth.mapper();
        let lines: Vec<_> = marks
            .iter()
            .map(|p| CorrespondencePair::new(*p, mapper.apply(p)))
            .collect();
        write_text(path, &format_correspondences(&lines))?;
    }
    emit(
        stdout,
        &format!(
            "source={} target={}\n",
            pair.source.len(),
            pair.target.len()
        ),
    )?;
    Ok(())
}

/// Evenly spaced source points from the region both views share.
fn shared_marks(spec: &PairSpec, source: &PointCloud, count: usize) -> Vec<Point3> {
    let shared: Vec<_> = source
        .iter()
        .filter(|p| spec.in_target_window(p))
        .copied()
        .collect();
    if shared.len() <= count || count == 0 {
        return shared.into_iter().take(count).collect();
    }
    (0..count).map(|i| shared[i * shared.len() / count]).collect()
}
