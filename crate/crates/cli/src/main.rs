use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::json;

use regq_core::agents::{AgentKind, AgentParams, StepSchedule};
use regq_core::bellman::{self, OperatorSet};
use regq_core::checks::{self, CheckOutcome, Recipe};
use regq_core::envs::{self, EnvSpec};
use regq_core::harness::{self, ExperimentConfig};
use regq_core::mdp::{self, MdpDocument};
use regq_core::{eta, exact, ode, Error, Exec};

const EXIT_VALIDATION: u8 = 2;
const EXIT_CHECK: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "regq", version, about = "Regularized Q-learning with linear features: solvers, bounds and experiments")]
struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for replicas and enumeration; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print or dump a built-in environment as an MDP document.
    Env {
        #[arg(long)]
        name: String,
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Tabular optimal Q-function and the reward bound.
    Exact {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Solve the regularized projected Bellman equation.
    Solve {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        eta: f64,
        #[arg(long, value_enum, default_value_t = Method::Fixed)]
        method: Method,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
        /// Step size of the deterministic iteration.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Error bound of the regularized solution against Q*.
    Bound {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        eta: f64,
    },
    /// Regularization thresholds, optionally evaluated at a given eta.
    Thresholds {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Integrate the upper, original and lower ODE systems.
    Ode {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        /// Initial state of the original system, shifted by theta_e.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
        /// Offset of the upper and lower initial states.
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run agents on an environment and write traces.
    Run(RunArgs),
    /// Reproduce a named experiment and evaluate its checks.
    Repro {
        #[arg(value_enum, required_unless_present = "all", conflicts_with = "all")]
        recipe: Option<RecipeArg>,
        #[arg(long)]
        all: bool,
    },
}

#[derive(Args)]
struct MdpArg {
    /// MDP document path or built-in environment name.
    #[arg(long = "mdp")]
    source: String,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    env: String,
    #[arg(long = "agent", value_enum, required = true)]
    agents: Vec<AgentArg>,
    /// Overrides the regularization weight (regq, qtarget).
    #[arg(long)]
    eta: Option<f64>,
    /// Overrides the constant step size.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = 100)]
    record_every: u64,
    /// Half-width of uniform reward noise.
    #[arg(long, default_value_t = 0.0)]
    reward_noise: f64,
    /// Trace CSV; aggregate and sidecar files are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fixed,
    Iter,
    Enum,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Regq,
    Qlearn,
    Qtarget,
    Ggq,
    Cql,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Regq => AgentKind::Regq,
            AgentArg::Qlearn => AgentKind::Qlearn,
            AgentArg::Qtarget => AgentKind::Qtarget,
            AgentArg::Ggq => AgentKind::Ggq,
            AgentArg::Cql => AgentKind::Cql,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeArg {
    Example1,
    Ode,
    Theta2theta,
    Baird,
}

impl From<RecipeArg> for Recipe {
    fn from(r: RecipeArg) -> Self {
        match r {
            RecipeArg::Example1 => Recipe::Example1,
            RecipeArg::Ode => Recipe::Ode,
            RecipeArg::Theta2theta => Recipe::Theta2Theta,
            RecipeArg::Baird => Recipe::Baird,
        }
    }
}

enum Failure {
    Core(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Singular(_) | Error::IntegrationBlowUp { .. } => {
            EXIT_NONCONVERGENCE
        }
        Error::Io(_) => 1,
        _ => EXIT_VALIDATION,
    }
}

fn emit(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    emit(&serde_json::to_string_pretty(value)?)
}

/// A readable file wins over a built-in name.
fn load_env(source: &str) -> Result<EnvSpec, Error> {
    if Path::new(source).is_file() {
        EnvSpec::from_document(source, MdpDocument::load(Path::new(source))?)
    } else {
        envs::by_name(source)
    }
}

fn load_validated(source: &str) -> Result<(EnvSpec, OperatorSet), Error> {
    let env = load_env(source)?;
    mdp::validate(&env.mdp, &env.features).into_result()?;
    let ops = bellman::build_operators(&env.mdp, &env.features)?;
    Ok((env, ops))
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn setup_exec(jobs: Option<usize>) -> Result<Exec, Error> {
    match jobs {
        Some(0) => Err(Error::InvalidInput("--jobs must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Exec::Sequential),
        None => Ok(Exec::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = setup_exec(cli.jobs)?;
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Env { name, dump } => {
            let doc = envs::by_name(&name)?.document();
            match dump {
                Some(path) => {
                    let path = resolve(&out_dir, &path);
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent).map_err(Error::from)?;
                    }
                    doc.save(&path)?;
                }
                None => print_json(&doc)?,
            }
        }
        Command::Exact { mdp, tol } => {
            let (env, _) = load_validated(&mdp.source)?;
            let q = exact::optimal_q(&env.mdp, tol);
            print_json(&json!({ "q_star": q.values, "q_bound": exact::q_bound(&env.mdp) }))?;
        }
        Command::Solve { mdp, eta, method, tol, max_iter, step } => {
            let (_, ops) = load_validated(&mdp.source)?;
            match method {
                Method::Fixed => print_json(&bellman::solve_fixed_point(&ops, eta, tol, max_iter)?)?,
                Method::Iter => print_json(&bellman::solve_deterministic_iter(&ops, eta, step, tol, max_iter)?)?,
                Method::Enum => {
                    let branches = bellman::solve_policy_enum(&ops, eta, exec)?;
                    let unique = bellman::unique_consistent(&branches);
                    print_json(&json!({ "theta_e": unique, "branches": branches }))?;
                }
            }
        }
        Command::Bound { mdp, eta } => {
            let (env, ops) = load_validated(&mdp.source)?;
            let q_star = exact::optimal_q(&env.mdp, 1e-12);
            let theta_e = bellman::solve_fixed_point(&ops, eta, 1e-12, 1_000_000)?.theta();
            print_json(&bellman::error_bound(&ops, eta, env.mdp.r_max(), &q_star, &theta_e)?)?;
        }
        Command::Thresholds { mdp, eta } => {
            let (env, ops) = load_validated(&mdp.source)?;
            print_json(&eta::report(&env.mdp, &ops, eta, exec))?;
        }
        Command::Ode { mdp, eta, t_end, dt, y0, margin, out } => {
            let (_, ops) = load_validated(&mdp.source)?;
            let h = ops.dim();
            let y0 = match y0 {
                Some(v) if v.len() == h => DVector::from_vec(v),
                Some(v) => {
                    return Err(Error::InvalidInput(format!("--y0 has {} entries, expected {h}", v.len())).into())
                }
                None => DVector::from_fn(h, |i, _| if i % 2 == 0 { 10.0 } else { -10.0 }),
            };
            if !(margin > 0.0) {
                return Err(Error::InvalidInput("--margin must be positive".into()).into());
            }
            let theta_e = bellman::solve_fixed_point(&ops, eta, 1e-12, 1_000_000)?.theta();
            let shift = DVector::from_element(h, margin);
            let report =
                ode::sandwich_check(&ops, eta, &theta_e, &(&y0 + &shift), &y0, &(&y0 - &shift), t_end, dt, exec)?;
            let path = resolve(&out_dir, &out);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(Error::from)?;
            }
            checks::write_ode_csv(&path, &theta_e, &report)?;
            print_json(&json!({
                "theta_e": theta_e.as_slice(),
                "max_violation": report.max_violation,
                "violation_time": report.violation_time,
                "terminal": {
                    "upper": report.terminal_upper,
                    "original": report.terminal_original,
                    "lower": report.terminal_lower,
                },
            }))?;
        }
        Command::Run(args) => run_agents(args, cli.seed, &out_dir, exec)?,
        Command::Repro { recipe, all } => {
            let recipe = if all { Recipe::All } else { recipe.expect("clap enforces a recipe").into() };
            let outcomes = checks::run_recipe(recipe, &out_dir, cli.seed, exec)?;
            report_checks(&outcomes)?;
        }
    }
    Ok(())
}

fn run_agents(args: RunArgs, seed: u64, out_dir: &Path, exec: Exec) -> Result<(), Failure> {
    let env = load_env(&args.env)?;
    let agents: Vec<AgentParams> = args
        .agents
        .iter()
        .map(|&a| {
            let mut p = AgentParams::defaults(a.into());
            if let (Some(e), AgentKind::Regq | AgentKind::Qtarget) = (args.eta, p.kind) {
                p.eta = e;
            }
            if let Some(alpha) = args.alpha {
                p.schedule = StepSchedule::Constant { alpha };
            }
            p
        })
        .collect();
    let mut config = ExperimentConfig::new(&args.env, agents, args.steps, args.runs, seed);
    config.record_every = args.record_every;
    config.reward_noise = args.reward_noise;
    let output = harness::run_experiment_on(&env, &config, exec)?;

    let path = resolve(out_dir, &args.out);
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").to_string();
    let stems: Vec<String> = if config.agents.len() == 1 {
        vec![base]
    } else {
        config.agent_stems().iter().map(|s| format!("{base}-{s}")).collect()
    };
    let written = harness::write_outputs_as(&dir, &stems, &config, &output)?;

    let summary: Vec<_> = output
        .results
        .iter()
        .map(|r| {
            json!({
                "agent": stems[r.agent],
                "run": r.run,
                "final_theta": r.final_theta,
                "max_abs_theta": r.max_abs_theta,
                "diverged_at": r.diverged_at,
            })
        })
        .collect();
    print_json(&json!({
        "config_hash": output.config_hash,
        "theta_e": output.theta_e,
        "files": written,
        "runs": summary,
    }))?;
    Ok(())
}

fn report_checks(outcomes: &[CheckOutcome]) -> Result<(), Failure> {
    for o in outcomes {
        emit(&o.to_string())?;
    }
    match outcomes.iter().filter(|o| !o.passed).count() {
        0 => Ok(()),
        n => Err(Failure::Checks(n)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Checks(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
