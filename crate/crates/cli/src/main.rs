use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use tensegrity_core::ablation::{render_table, run_ablation, AblationConfig};
use tensegrity_core::calibrate::{
    fit_stiffness, per_cable, tied_by_layer, tied_uniform, CalibrationProblem, Observation,
};
use tensegrity_core::io::{emit_estimate, read_frames, read_truth};
use tensegrity_core::kinematics::node_positions;
use tensegrity_core::model::validate_spec;
use tensegrity_core::report::SummaryBuilder;
use tensegrity_core::stream::{
    run_solver, serve_ingest, track_lines, LatestSlot, Tracker, TrackerConfig,
};
use tensegrity_core::{
    make_trajectory, Error, Estimator, EstimatorConfig, InclinationFrame, NoiseModel, Optimizer,
    Scenario, ShapeEstimate, StructureSpec,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_SPEC_INVALID: u8 = 3;
const EXIT_INGEST: u8 = 4;
const EXIT_DEGENERATE: u8 = 5;

#[derive(Parser)]
#[command(
    name = "tensegrity",
    version,
    about = "Tensegrity shape reconstruction from strut inclinations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a structure file and list every problem found.
    Validate { spec: PathBuf },
    /// Generate a noisy inclination stream and its ground-truth sidecar.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "stationary")]
        scenario: Scenario,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Per-strut constant offsets, radians, space separated.
        #[arg(long, allow_hyphen_values = true)]
        bias: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Solve for one set of inclinations and print the estimate record.
    Estimate {
        #[arg(long)]
        spec: PathBuf,
        /// Inclinations, radians, space separated.
        #[arg(long)]
        phi: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Estimate every frame of a stream file or a TCP client.
    Track {
        #[arg(long)]
        spec: PathBuf,
        #[arg(
            long = "in",
            conflicts_with = "listen",
            required_unless_present = "listen"
        )]
        input: Option<PathBuf>,
        /// host:port to accept one client on.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the run summary; stderr when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        warm_steps: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compare the optimizers on noisy readings of the spec's equilibrium.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value = "all")]
        optimizer: OptimizerChoice,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit cable stiffnesses to a stream with known node positions.
    Calibrate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 32)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "layer")]
        groups: GroupChoice,
        #[arg(long, default_value_t = 1.0)]
        k_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        k_max: f64,
        /// Frames used, evenly spaced over the stream.
        #[arg(long, default_value_t = 5)]
        observations: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerChoice {
    Gd,
    Sgdm,
    Adam,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupChoice {
    Uniform,
    Layer,
    Cable,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Yaw learning rate.
    #[arg(long, default_value_t = 1e-4)]
    alpha: f64,
    /// Center learning rate.
    #[arg(long, default_value_t = 5e-4)]
    beta: f64,
    #[arg(long, default_value = "gd")]
    optimizer: Optimizer,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient norm below which a solve stops, for both blocks.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

impl SolverArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            steps: self.steps,
            lr_theta: self.alpha,
            lr_p: self.beta,
            optimizer: self.optimizer,
            restarts: self.restarts,
            seed: self.seed,
            grad_tol_p: self.tolerance,
            grad_tol_theta: self.tolerance,
            ..EstimatorConfig::default()
        }
    }
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidSpec(_) | Error::SpecFile(_) => EXIT_SPEC_INVALID,
            Error::Parse { .. } => EXIT_INGEST,
            Error::AllDegenerate { .. } | Error::OracleDegenerate { .. } => EXIT_DEGENERATE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn fail<T>(code: u8, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code,
        message: message.into(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { spec } => validate(&spec),
        Command::Simulate {
            spec,
            scenario,
            duration,
            rate,
            sigma,
            bias,
            seed,
            out,
            truth,
        } => simulate(
            &spec,
            scenario,
            duration,
            rate,
            sigma,
            bias.as_deref(),
            seed,
            &out,
            &truth,
        ),
        Command::Estimate { spec, phi, solver } => estimate(&spec, &phi, &solver),
        Command::Track {
            spec,
            input,
            listen,
            truth,
            out,
            summary,
            warm_steps,
            solver,
        } => track(TrackArgs {
            spec,
            input,
            listen,
            truth,
            out,
            summary,
            warm_steps,
            solver,
        }),
        Command::Bench {
            spec,
            trials,
            optimizer,
            sigma,
            restarts,
            seed,
        } => bench(&spec, trials, optimizer, sigma, restarts, seed),
        Command::Calibrate {
            spec,
            input,
            truth,
            budget,
            refine,
            seed,
            groups,
            k_min,
            k_max,
            observations,
            restarts,
            out,
        } => calibrate(CalibrateArgs {
            spec,
            input,
            truth,
            budget,
            refine,
            seed,
            groups,
            k_min,
            k_max,
            observations,
            restarts,
            out,
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_spec(path: &Path) -> Result<StructureSpec, Failure> {
    let text = fs::read_to_string(path)
        .or_else(|e| fail(EXIT_SPEC_INVALID, format!("{}: {e}", path.display())))?;
    let spec = StructureSpec::from_toml_str(&text)?;
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations).into());
    }
    Ok(spec)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split_ascii_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .or_else(|e| fail(EXIT_FAILURE, format!("{what}: {e}")))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .or_else(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .or_else(|e| fail(EXIT_INGEST, format!("{}: {e}", path.display())))
}

fn validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .or_else(|e| fail(EXIT_SPEC_INVALID, format!("{}: {e}", path.display())))?;
    let spec = StructureSpec::from_toml_str(&text)?;
    let violations = validate_spec(&spec);
    if violations.is_empty() {
        println!(
            "ok: {} struts, {} nodes, {} cables",
            spec.strut_count(),
            spec.node_count(),
            spec.cable_count()
        );
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    fail(
        EXIT_SPEC_INVALID,
        format!("{} violation(s)", violations.len()),
    )
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    spec: &Path,
    scenario: Scenario,
    duration: f64,
    rate: f64,
    sigma: f64,
    bias: Option<&str>,
    seed: u64,
    out: &Path,
    truth: &Path,
) -> Result<(), Failure> {
    let spec = load_spec(spec)?;
    let bias = match bias {
        Some(b) => parse_list(b, "--bias")?,
        None => Vec::new(),
    };
    let noise = NoiseModel::new(sigma, bias, seed);
    let trajectory = make_trajectory(&spec, scenario, duration, rate, &noise)?;
    let mut stream = create(out)?;
    let mut side = create(truth)?;
    trajectory.write(&mut stream, &mut side)?;
    stream.flush()?;
    side.flush()?;
    eprintln!("{} frames of scenario {scenario}", trajectory.len());
    Ok(())
}

fn estimate(spec: &Path, phi: &str, solver: &SolverArgs) -> Result<(), Failure> {
    let spec = load_spec(spec)?;
    let phis = parse_list(phi, "--phi")?;
    let estimator = Estimator::new(spec, solver.config())?;
    let est = estimator.estimate(&phis, None)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    emit_estimate(&mut out, 0.0, &est)?;
    out.flush()?;
    Ok(())
}

struct TrackArgs {
    spec: PathBuf,
    input: Option<PathBuf>,
    listen: Option<String>,
    truth: Option<PathBuf>,
    out: PathBuf,
    summary: Option<PathBuf>,
    warm_steps: usize,
    solver: SolverArgs,
}

fn track(args: TrackArgs) -> Result<(), Failure> {
    let spec = load_spec(&args.spec)?;
    let truth = match &args.truth {
        Some(path) => Some(read_truth(open(path)?, spec.strut_count()).map_err(ingest_failure)?),
        None => None,
    };
    let estimator = Estimator::new(spec.clone(), args.solver.config())?;
    let mut tracker = Tracker::new(
        estimator,
        TrackerConfig {
            warm_steps: args.warm_steps,
        },
    );
    let mut builder = SummaryBuilder::new(spec.clone(), truth);
    let mut out = create(&args.out)?;
    let start = Instant::now();

    let mut sink = |frame: &InclinationFrame, est: Option<&ShapeEstimate>| {
        if let Some(est) = est {
            emit_estimate(&mut out, frame.timestamp, est)?;
            builder.add(frame.timestamp, est)?;
        }
        Ok(())
    };
    let (stats, overwritten) = match (&args.input, &args.listen) {
        (Some(path), _) => (track_lines(open(path)?, &mut tracker, &mut sink)?, 0),
        (None, Some(addr)) => {
            let listener = TcpListener::bind(addr)
                .or_else(|e| fail(EXIT_INGEST, format!("bind {addr}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let slot = Arc::new(LatestSlot::new());
            let ingest = {
                let slot = Arc::clone(&slot);
                let arity = spec.strut_count();
                thread::spawn(move || serve_ingest(listener, arity, slot))
            };
            let solved = run_solver(&mut tracker, &slot, &mut sink);
            let stats = ingest
                .join()
                .map_err(|_| Failure {
                    code: EXIT_INGEST,
                    message: "ingest thread panicked".into(),
                })?
                .map_err(ingest_failure)?;
            solved?;
            (stats, slot.overwritten())
        }
        (None, None) => unreachable!("clap requires --in or --listen"),
    };
    out.flush()?;

    let ts = tracker.stats();
    let mut summary = builder.finish();
    summary.frames_accepted = stats.accepted;
    summary.rejected_malformed = stats.malformed;
    summary.rejected_out_of_order = stats.out_of_order;
    summary.frames_overwritten = overwritten;
    summary.cold_starts = ts.cold_starts;
    summary.degenerate_frames = ts.degenerate;
    summary.wall_time_s = start.elapsed().as_secs_f64();
    let text = summary.to_toml()?;
    match &args.summary {
        Some(path) => fs::write(path, text)?,
        None => eprint!("{text}"),
    }
    if ts.estimated == 0 && ts.degenerate > 0 {
        return fail(
            EXIT_DEGENERATE,
            "every frame produced a degenerate estimate",
        );
    }
    Ok(())
}

fn ingest_failure(e: Error) -> Failure {
    Failure {
        code: EXIT_INGEST,
        message: e.to_string(),
    }
}

fn bench(
    spec: &Path,
    trials: usize,
    choice: OptimizerChoice,
    sigma: f64,
    restarts: usize,
    seed: u64,
) -> Result<(), Failure> {
    let spec = load_spec(spec)?;
    let optimizers: Vec<Optimizer> = match choice {
        OptimizerChoice::Gd => vec![Optimizer::Gd],
        OptimizerChoice::Sgdm => vec![Optimizer::Sgdm],
        OptimizerChoice::Adam => vec![Optimizer::Adam],
        OptimizerChoice::All => vec![Optimizer::Gd, Optimizer::Sgdm, Optimizer::Adam],
    };
    let config = AblationConfig {
        trials,
        sigma_phi: sigma,
        restarts,
        seed,
        ..AblationConfig::default()
    };
    let reports = run_ablation(&spec, &optimizers, &config)?;
    print!("{}", render_table(&reports));
    Ok(())
}

struct CalibrateArgs {
    spec: PathBuf,
    input: PathBuf,
    truth: PathBuf,
    budget: usize,
    refine: usize,
    seed: u64,
    groups: GroupChoice,
    k_min: f64,
    k_max: f64,
    observations: usize,
    restarts: usize,
    out: PathBuf,
}

fn calibrate(args: CalibrateArgs) -> Result<(), Failure> {
    let spec = load_spec(&args.spec)?;
    let m = spec.strut_count();
    let frames: Vec<InclinationFrame> = read_frames(open(&args.input)?, m)
        .map_err(ingest_failure)?
        .into_iter()
        .filter_map(|f| f.ok())
        .collect();
    let truth = read_truth(open(&args.truth)?, m).map_err(ingest_failure)?;
    let mut matched = Vec::new();
    for frame in &frames {
        if let Some(t) = truth
            .iter()
            .find(|t| t.timestamp.to_bits() == frame.timestamp.to_bits())
        {
            matched.push(Observation {
                phis: frame.phis.clone(),
                reference_nodes: node_positions(&t.state, &spec)?,
            });
        }
    }
    if matched.is_empty() {
        return fail(
            EXIT_INGEST,
            "no frame has a ground-truth record with the same timestamp",
        );
    }
    let wanted = args.observations.clamp(1, matched.len());
    let observations = (0..wanted)
        .map(|i| matched[i * matched.len() / wanted].clone())
        .collect();
    let groups = match args.groups {
        GroupChoice::Uniform => tied_uniform(&spec, args.k_min, args.k_max),
        GroupChoice::Layer => tied_by_layer(&spec, args.k_min, args.k_max),
        GroupChoice::Cable => per_cable(&spec, args.k_min, args.k_max),
    };
    let problem = CalibrationProblem {
        spec: spec.clone(),
        observations,
        groups,
        budget: args.budget,
        refine: args.refine,
        seed: args.seed,
        estimator: EstimatorConfig {
            restarts: args.restarts,
            seed: args.seed,
            ..EstimatorConfig::tuned(Optimizer::Adam)
        },
    };
    let result = fit_stiffness(&problem)?;
    let mut fitted = spec.with_stiffnesses(&result.stiffness)?;
    fitted.name = format!("{} (calibrated)", fitted.name);
    fs::write(&args.out, fitted.to_toml_string()?)?;
    eprintln!(
        "objective {:.4} mm after {} evaluations; group values {:?}",
        result.objective * 1e3,
        result.evaluations,
        result.group_values
    );
    Ok(())
}
