//! Command-line front end: reads a problem file, runs one command and
//! prints a JSON [`RunReport`] on standard output. Logs go to standard error.
//!
//! Exit codes: 0 when the result is feasible, 2 when it is infeasible, 1 on
//! errors (including a failed `--check`).

pub mod parse;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tnsolve::oracle;
use tnsolve::problems::{build, BuildContext, ProblemKind};
use tnsolve::solver::Escalation;
use tnsolve::{count_solutions, solve, Error, ProblemSpec, SolverConfig};

pub use parse::{emit_spec, parse_spec, parse_spec_str, ParseError};
pub use report::RunReport;
use report::{
    ConfigReport, Mode, OracleMethod, OracleReport, SpecSummary, Timings, VerificationReport,
};

#[derive(Debug, Parser)]
#[command(
    name = "tnsolve",
    version,
    about = "Exact combinatorial solving with tensor-network circuits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a solution variable by variable.
    Solve { spec: PathBuf },
    /// Count the feasible assignments of a constraint-only instance.
    Count { spec: PathBuf },
    /// Check one assignment against the instance.
    Verify {
        spec: PathBuf,
        /// Comma-separated variable values, e.g. `1,0,2`.
        #[arg(long, value_delimiter = ',', required = true)]
        assignment: Vec<usize>,
    },
    /// Solve by brute force (dynamic programming for large knapsacks).
    Oracle { spec: PathBuf },
    /// Time repeated solves of a file, or of a random instance.
    Bench {
        #[arg(required_unless_present = "random")]
        spec: Option<PathBuf>,
        /// Generate an instance of this family from `--seed` instead.
        #[arg(long, conflicts_with = "spec")]
        random: Option<String>,
        /// State-space bound for generated instances.
        #[arg(long, default_value_t = 1 << 12)]
        max_states: u128,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Imaginary-time constant; defaults to the inverse cost scale.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Phase vectors on traced variables instead of plus vectors.
    #[arg(long, global = true)]
    pub humbucker: bool,
    /// Run once at the starting tau.
    #[arg(long, global = true)]
    pub no_escalate: bool,
    /// At most this many filter layers per iteration.
    #[arg(long, global = true)]
    pub layer_limit: Option<usize>,
    /// Compare the solver result with the brute-force oracle.
    #[arg(long, global = true)]
    pub check: bool,
    /// Largest state space the oracle will enumerate.
    #[arg(long, global = true, default_value_t = 1 << 20)]
    pub oracle_budget: u128,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the first iteration's network on standard error.
    #[arg(long, global = true)]
    pub plan_debug: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tau: None,
            humbucker: false,
            no_escalate: false,
            layer_limit: None,
            check: false,
            oracle_budget: 1 << 20,
            seed: None,
            plan_debug: false,
        }
    }
}

impl Options {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tau: self.tau,
            humbucker: self.humbucker,
            layer_limit: self.layer_limit,
            escalation: Escalation {
                enabled: !self.no_escalate,
                ..Escalation::default()
            },
            ..SolverConfig::default()
        }
    }

    fn report(&self, spec: &ProblemSpec, tau_final: Option<f64>) -> ConfigReport {
        let config = self.solver_config();
        ConfigReport {
            tau_requested: self.tau,
            tau_final,
            mode: if config.humbucker && spec.uses_tau() {
                Mode::Phase
            } else {
                Mode::Plus
            },
            escalation: config.escalation.enabled && spec.uses_tau(),
            layer_limit: self.layer_limit,
            tolerance: config.tolerance,
            oracle_budget: self.oracle_budget,
            seed: self.seed,
        }
    }
}

/// Parses the command line, runs it and prints the report. Returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                report::EXIT_ERROR
            } else {
                0
            };
        }
    };
    match run(&cli.command, &cli.options) {
        Ok(report) => {
            use std::io::Write;
            // A closed pipe (`| head`) is not worth a panic.
            let _ = writeln!(std::io::stdout().lock(), "{}", report.to_json());
            let code = report.exit_code();
            if code == report::EXIT_ERROR {
                log::error!("the solver result disagrees with the oracle");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            report::EXIT_ERROR
        }
    }
}

pub fn run(command: &Command, options: &Options) -> Result<RunReport> {
    let start = Instant::now();
    let (name, spec) = match command {
        Command::Solve { spec } => ("solve", parse_spec(spec)?),
        Command::Count { spec } => ("count", parse_spec(spec)?),
        Command::Verify { spec, .. } => ("verify", parse_spec(spec)?),
        Command::Oracle { spec } => ("oracle", parse_spec(spec)?),
        Command::Bench {
            spec: Some(path), ..
        } => ("bench", parse_spec(path)?),
        Command::Bench {
            spec: None,
            random: Some(family),
            max_states,
            ..
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed.unwrap_or(0));
            (
                "bench",
                tnsolve::random::instance(family, &mut rng, *max_states)?,
            )
        }
        Command::Bench { .. } => bail!("bench needs a spec file or --random"),
    };
    log::info!(
        "{name}: {} with {} states",
        spec.family(),
        spec.state_count()
    );
    if options.plan_debug {
        let tau = options.tau.unwrap_or_else(|| spec.default_tau());
        let built = build(&spec, &BuildContext::with_tau(tau))?;
        eprintln!("{}", built.network.to_text());
    }
    let mut report = RunReport {
        command: name.to_string(),
        summary: SpecSummary::of(&spec),
        config: options.report(&spec, None),
        spec,
        solution: None,
        count: None,
        verification: None,
        oracle: None,
        timings: Timings::default(),
    };
    let spec = &report.spec;
    match command {
        Command::Solve { .. } => {
            let solution = solve(spec, &options.solver_config())?;
            if spec.uses_tau() && !solution.converged && !options.no_escalate {
                log::warn!("escalation stopped before two runs agreed at a certified tau");
            }
            report.config.tau_final = spec.uses_tau().then_some(solution.tau_used);
            report.timings.iterations = solution.step_seconds.clone();
            if options.check {
                let mut o = run_oracle(spec, options.oracle_budget)?;
                if o.status == report::OracleStatus::Ran {
                    o.agrees = Some(agrees(spec, &solution, &o));
                } else {
                    log::warn!("state space over the oracle budget; result not checked");
                }
                report.oracle = Some(o);
            }
            report.solution = Some(solution);
        }
        Command::Count { .. } => {
            report.count = Some(count_solutions(spec)?);
        }
        Command::Verify { assignment, .. } => {
            let eval = oracle::verify(spec, assignment)?;
            report.verification = Some(VerificationReport {
                assignment: assignment.clone(),
                feasible: eval.feasible,
                cost: eval.feasible.then_some(eval.cost),
            });
        }
        Command::Oracle { .. } => {
            let o = run_oracle(spec, options.oracle_budget)?;
            if o.status == report::OracleStatus::BudgetExceeded {
                bail!(Error::BudgetExceeded {
                    states: spec.state_count(),
                    budget: options.oracle_budget,
                });
            }
            report.oracle = Some(o);
        }
        Command::Bench { repeats, .. } => {
            let config = options.solver_config();
            let mut last = None;
            for _ in 0..(*repeats).max(1) {
                let t = Instant::now();
                let solution = solve(spec, &config)?;
                report.timings.iterations.push(t.elapsed().as_secs_f64());
                last = Some(solution);
            }
            let solution = last.expect("at least one repetition");
            report.config.tau_final = spec.uses_tau().then_some(solution.tau_used);
            report.solution = Some(solution);
        }
    }
    report.timings.total_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Enumerates within `budget`; knapsacks over budget fall back to the
/// dynamic program.
fn run_oracle(spec: &ProblemSpec, budget: u128) -> Result<OracleReport> {
    match oracle::enumerate(spec, budget) {
        Ok(r) => Ok(OracleReport::ran(OracleMethod::Enumerate, &r)),
        Err(Error::BudgetExceeded { .. }) => {
            if matches!(spec, ProblemSpec::Knapsack(_)) {
                let r = oracle::knapsack_dp(spec).context("knapsack dynamic program")?;
                Ok(OracleReport::ran(OracleMethod::KnapsackDp, &r))
            } else {
                Ok(OracleReport::budget_exceeded())
            }
        }
        Err(e) => Err(e.into()),
    }
}

/// Optimization results must match the oracle's best cost exactly; other
/// kinds must match on feasibility.
fn agrees(spec: &ProblemSpec, solution: &tnsolve::Solution, o: &OracleReport) -> bool {
    let oracle_feasible = o.feasible == Some(true);
    if solution.feasible != oracle_feasible {
        return false;
    }
    match spec.kind() {
        ProblemKind::Optimization => solution.cost == o.best_cost,
        _ => true,
    }
}
