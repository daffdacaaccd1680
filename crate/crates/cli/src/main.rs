//! `optpool`: coalition costs, games, core analysis, proof-chain checks and
//! simulation for spare-parts pooling situations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use optpool::core_solver::{analyze_core, enumerate_minimal_balanced, CoreReport};
use optpool::game::{build_game, CharacteristicGame};
use optpool::mdp::{average_cost, AverageCostResult, SolveOptions};
use optpool::oracle::{simulate, SimulationResult};
use optpool::proof_chain::{verify_chain, LemmaReport};
use optpool::{parse_situation, Coalition, Error, SparePartsSituation};

#[derive(Parser, Debug)]
#[command(name = "optpool", version, about = "Optimized spare-parts pooling games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal long-run cost of one coalition.
    Value {
        input: PathBuf,
        /// Comma-separated player ids, or "all".
        #[arg(long)]
        coalition: String,
        #[command(flatten)]
        common: Common,
    },
    /// Costs of every coalition.
    Game {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Least core, core membership and balancedness.
    Core {
        input: Option<PathBuf>,
        /// Analyze this game document instead of solving the situation.
        #[arg(long, conflicts_with = "input")]
        game_file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the value-function chain for minimal balanced collections.
    Verify {
        input: PathBuf,
        /// "all", or a 1-based index into the enumeration order.
        #[arg(long, default_value = "all")]
        collection: String,
        #[arg(long, default_value_t = 200)]
        t_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a coalition under its optimal policy.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        coalition: String,
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

enum Failure {
    Input(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(e) => match e {
                Error::NonConvergence { .. } | Error::Lp(_) | Error::ReducibleChain(_) => 3,
                Error::SizeCap { .. } => 4,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Input(m) => m.clone(),
            Failure::Solver(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_situation(path: &Path) -> CliResult<SparePartsSituation> {
    let situation = parse_situation(&read(path)?)?;
    for w in situation.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(situation)
}

fn check_tol(tol: f64) -> CliResult<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Failure::Input(format!("--tol must be a positive number, got {tol}")))
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn cmd_value(input: &Path, coalition: &str, tol: f64) -> CliResult<AverageCostResult> {
    let situation = load_situation(input)?;
    let s = Coalition::parse_selector(coalition, situation.n())?;
    Ok(average_cost(&situation, s, &SolveOptions::with_tol(tol))?)
}

fn value_table(r: &AverageCostResult) -> String {
    let mut out = String::new();
    let rows = [
        ("coalition", format!("{:?}", r.coalition)),
        ("capacity", r.policy.capacity().to_string()),
        ("cost per time unit", format!("{:.12}", r.c_per_time_unit)),
        ("cost per epoch", format!("{:.12}", r.g_per_epoch)),
        ("certified gap", format!("{:.3e}", r.certified_gap)),
        ("bracket", format!("[{:.12}, {:.12}]", r.lower_bound, r.upper_bound)),
        ("iterations", r.iterations.to_string()),
        ("state spread", format!("{:.3e}", r.state_spread)),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<20} {v}");
    }
    for line in r.policy.summary().split("; ") {
        let _ = writeln!(out, "{:<20} {line}", "policy");
    }
    out
}

fn game_table(game: &CharacteristicGame) -> String {
    let mut out = format!("{:<16} {:>20} {:>12}\n", "coalition", "cost", "gap");
    for (s, c) in game.entries() {
        let _ = writeln!(out, "{:<16} {:>20.12} {:>12.3e}", format!("{s:?}"), c, game.gap(s));
    }
    out
}

fn cmd_core(input: Option<&Path>, game_file: Option<&Path>, tol: f64) -> CliResult<CoreReport> {
    let game = match (game_file, input) {
        (Some(path), _) => CharacteristicGame::from_json(&read(path)?)?,
        (None, Some(path)) => build_game(&load_situation(path)?, tol)?,
        (None, None) => {
            return Err(Failure::Input(
                "core needs a situation file or --game-file".to_string(),
            ))
        }
    };
    Ok(analyze_core(&game, tol)?)
}

fn core_table(r: &CoreReport) -> String {
    let mut out = String::new();
    let lc = &r.least_core;
    let alloc: Vec<String> = lc.allocation.iter().map(|x| format!("{x:.9}")).collect();
    let _ = writeln!(out, "least-core epsilon   {:.12}", lc.epsilon);
    let _ = writeln!(out, "allocation           ({})", alloc.join(", "));
    let _ = writeln!(out, "tolerance            {:.3e}", r.tolerance);
    let _ = writeln!(
        out,
        "core                 {}",
        if r.core_nonempty { "nonempty" } else { "EMPTY" }
    );
    let _ = writeln!(
        out,
        "allocation in core   {}",
        if r.allocation_check.in_core { "yes" } else { "no" }
    );
    match &r.balancedness {
        None => {
            let _ = writeln!(out, "balancedness         not enumerated for n > 5");
        }
        Some(b) => {
            let _ = writeln!(
                out,
                "balanced             {}",
                if b.balanced { "yes" } else { "NO" }
            );
            let _ = writeln!(
                out,
                "\n{:>4}  {:<36} {:>16} {:>16} {:>12}  result",
                "#", "collection", "sum b_S c(S)", "alpha c(N)", "slack"
            );
            for c in &b.checks {
                let _ = writeln!(
                    out,
                    "{:>4}  {:<36} {:>16.9} {:>16.9} {:>12.3e}  {}",
                    c.index + 1,
                    c.collection.describe(),
                    c.lhs,
                    c.rhs,
                    c.slack,
                    if c.pass { "pass" } else { "FAIL" }
                );
            }
        }
    }
    out
}

fn cmd_verify(input: &Path, collection: &str, t_max: usize, tol: f64) -> CliResult<Vec<LemmaReport>> {
    let situation = load_situation(input)?;
    let all = enumerate_minimal_balanced(situation.n())?;
    let chosen: Vec<_> = if collection == "all" {
        all
    } else {
        let idx: usize = collection
            .parse()
            .ok()
            .filter(|&i| i >= 1 && i <= all.len())
            .ok_or_else(|| {
                Failure::Input(format!(
                    "--collection must be \"all\" or an index in 1..={}, got \"{collection}\"",
                    all.len()
                ))
            })?;
        vec![all[idx - 1].clone()]
    };
    chosen
        .iter()
        .map(|b| verify_chain(&situation, b, t_max, tol).map_err(Failure::from))
        .collect()
}

fn verify_table(reports: &[LemmaReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(
            out,
            "collection {}  (alpha {}, {} copies, {} product states, T = {})",
            r.collection.describe(),
            r.collection.alpha,
            r.labeled_copies,
            r.product_states,
            r.horizon
        );
        for c in &r.checks {
            let _ = writeln!(
                out,
                "  {:<18} {:>11.3e} <= {:<8.0e} {}{}",
                c.id,
                c.max_violation,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" },
                c.witness.as_ref().map(|w| format!("  at {w}")).unwrap_or_default()
            );
        }
        if let Some(rate) = &r.rate {
            let _ = writeln!(
                out,
                "  rate at T: copies {:.9}, grand {:.9}, limit {}, drift {}",
                rate.copies_rate,
                rate.grand_rate,
                rate.limit.map_or("n/a".into(), |l| format!("{l:.9}")),
                rate.drift.map_or("n/a".into(), |d| format!("{d:.3e}"))
            );
        }
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    let _ = writeln!(
        out,
        "{} of {} collections pass",
        reports.len() - failed,
        reports.len()
    );
    out
}

/// Simulation result next to the solver's value.
#[derive(Debug, Serialize, Deserialize)]
struct SimulationReport {
    #[serde(flatten)]
    simulation: SimulationResult,
    coalition: Coalition,
    mdp_value: f64,
    covered: bool,
}

fn cmd_simulate(input: &Path, coalition: &str, events: u64, seed: u64, tol: f64) -> CliResult<SimulationReport> {
    let situation = load_situation(input)?;
    let s = Coalition::parse_selector(coalition, situation.n())?;
    let solved = average_cost(&situation, s, &SolveOptions::with_tol(tol))?;
    let simulation = simulate(&situation, s, &solved.policy, events, seed)?;
    Ok(SimulationReport {
        covered: simulation.covers(solved.c_per_time_unit),
        simulation,
        coalition: s,
        mdp_value: solved.c_per_time_unit,
    })
}

fn simulate_table(r: &SimulationReport) -> String {
    format!(
        "coalition            {:?}\nestimate             {:.9} +/- {:.3e} (95%)\nevents               {}\nseed                 {}\nmdp value            {:.9}\ncovered              {}\n",
        r.coalition,
        r.simulation.estimate,
        r.simulation.half_width,
        r.simulation.events,
        r.simulation.seed,
        r.mdp_value,
        if r.covered { "yes" } else { "no" }
    )
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as success.
fn write_out(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: writing output: {e}");
        }
    }
}

fn emit<T: Serialize>(format: Format, value: &T, table: impl Fn(&T) -> String) {
    match format {
        Format::Json => write_out(&(json(value) + "\n")),
        Format::Table => write_out(&table(value)),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Value { input, coalition, common } => {
            check_tol(common.tol)?;
            let r = cmd_value(&input, &coalition, common.tol)?;
            emit(common.format, &r, value_table);
        }
        Command::Game { input, common } => {
            check_tol(common.tol)?;
            let game = build_game(&load_situation(&input)?, common.tol)?;
            match common.format {
                Format::Json => write_out(&(game.to_json() + "\n")),
                Format::Table => write_out(&game_table(&game)),
            }
        }
        Command::Core { input, game_file, common } => {
            check_tol(common.tol)?;
            let r = cmd_core(input.as_deref(), game_file.as_deref(), common.tol)?;
            emit(common.format, &r, core_table);
        }
        Command::Verify { input, collection, t_max, common } => {
            check_tol(common.tol)?;
            let reports = cmd_verify(&input, &collection, t_max, common.tol)?;
            emit(common.format, &reports, |r| verify_table(r));
        }
        Command::Simulate { input, coalition, events, seed, common } => {
            check_tol(common.tol)?;
            let r = cmd_simulate(&input, &coalition, events, seed, common.tol)?;
            emit(common.format, &r, simulate_table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
