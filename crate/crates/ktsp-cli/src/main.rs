//! Command-line front end for the ktsp solver.
//!
//! Subcommands: `run` an instance file through the solver, `gen` seeded
//! test instances, query the exact `oracle` on small inputs, and
//! `validate-tour` against an instance. Exit codes: 0 success, 2 no tour
//! at the current solver parameters, 3 bad input or arguments, 4
//! internal error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ktsp::dp::DpLimits;
use ktsp::gen;
use ktsp::geometry::{parse_instance, write_instance, RawInstance};
use ktsp::oracle::exact_k_tsp;
use ktsp::report::RunReport;
use ktsp::solve::{solve, validate_tour, Mode};
use ktsp::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Read;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "ktsp", version, about = "Euclidean k-TSP approximation solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and print a run report.
    Run(RunArgs),
    /// Generate a seeded instance in the plain-text format.
    Gen(GenArgs),
    /// Exact optimum by brute force (small instances only).
    Oracle(OracleArgs),
    /// Check a visiting order against an instance.
    ValidateTour(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Randomized,
    Derandomized,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// Coarse portal scheme sized for interactive runs.
    Desk,
    /// Full derived portal densities; can be very slow.
    Full,
}

#[derive(Args)]
struct RunArgs {
    /// Instance file (`-` for stdin).
    instance: String,
    /// Override the instance's visit target.
    #[arg(long)]
    k: Option<usize>,
    /// Approximation parameter.
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Derandomized)]
    mode: ModeArg,
    /// Seed for randomized mode.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the exact optimum and the ratio (needs <= 16 points).
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_enum, default_value_t = EmitArg::Json)]
    emit: EmitArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<String>,
    /// Include wall-clock timing in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// Override the portal density cap.
    #[arg(long)]
    m_tilde_cap: Option<u64>,
    /// Override the per-facet crossing budget cap.
    #[arg(long)]
    grid_cap: Option<u64>,
    /// Override the per-facet crossing count cap.
    #[arg(long)]
    facet_cap: Option<u32>,
    /// Override the boundary-pair cap per DP state.
    #[arg(long)]
    max_open_pairs: Option<usize>,
    /// Override the per-cell working-table cap.
    #[arg(long)]
    max_states_per_cell: Option<usize>,
    /// Override the per-cell crossing-set cap.
    #[arg(long)]
    max_fine_sets: Option<usize>,
    /// Override the snap-pitch multiplier.
    #[arg(long)]
    rho_scale: Option<f64>,
    /// Override the per-axis quadtree shift count.
    #[arg(long)]
    shift_axis_cap: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Uniform,
    Clustered,
    Collinear,
    Grid,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Point count (for `grid`: points per side, total is n^d).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Visit target written into the instance.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bounding box side.
    #[arg(long, default_value_t = 100.0)]
    side: f64,
    /// Cluster count (`clustered` only).
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    /// Per-coordinate jitter around cluster centers (`clustered` only).
    #[arg(long, default_value_t = 2.0)]
    spread: f64,
    /// Lattice pitch (`grid` only).
    #[arg(long, default_value_t = 1.0)]
    pitch: f64,
    /// Write the instance here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance file (`-` for stdin).
    instance: String,
    /// Override the instance's visit target.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Instance file (`-` for stdin).
    instance: String,
    /// Visiting order as comma-separated point indices.
    #[arg(long)]
    order: String,
    /// Cost the order is claimed to have, checked to 1e-9 relative.
    #[arg(long)]
    claimed_cost: Option<f64>,
    /// Override the instance's visit target.
    #[arg(long)]
    k: Option<usize>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::ValidateTour(a) => cmd_validate(a),
    };
    if let Err(e) = result {
        eprintln!("ktsp: {e}");
        std::process::exit(e.exit_code());
    }
}

fn read_instance(path: &str) -> Result<RawInstance, Error> {
    let text = if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| Error::InvalidInstance(format!("stdin: {e}")))?;
        buf
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInstance(format!("{path}: {e}")))?
    };
    parse_instance(&text)
}

fn write_out(out: Option<&str>, content: &str) -> Result<(), Error> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::InvalidArgument(format!("{path}: {e}"))),
    }
}

fn cmd_run(a: RunArgs) -> Result<(), Error> {
    let mut raw = read_instance(&a.instance)?;
    if let Some(k) = a.k {
        raw.k = k;
    }
    let mode = match a.mode {
        ModeArg::Randomized => Mode::Randomized { seed: a.seed },
        ModeArg::Derandomized => Mode::Derandomized,
    };
    let mut limits = match a.profile {
        ProfileArg::Desk => DpLimits::desk_profile(),
        ProfileArg::Full => DpLimits::default(),
    };
    if a.m_tilde_cap.is_some() {
        limits.m_tilde_cap = a.m_tilde_cap;
    }
    if a.grid_cap.is_some() {
        limits.grid_cap_eff = a.grid_cap;
    }
    if a.facet_cap.is_some() {
        limits.facet_cap_eff = a.facet_cap;
    }
    if let Some(v) = a.max_open_pairs {
        limits.max_open_pairs = v;
    }
    if let Some(v) = a.max_states_per_cell {
        limits.max_states_per_cell = v;
    }
    if let Some(v) = a.max_fine_sets {
        limits.max_fine_sets = v;
    }
    if let Some(v) = a.rho_scale {
        limits.rho_scale = v;
    }
    if let Some(v) = a.shift_axis_cap {
        limits.shift_axis_cap = v;
    }

    let oracle_cost = if a.oracle {
        if raw.points.len() > 16 {
            return Err(Error::InvalidArgument(format!(
                "--oracle needs at most 16 points, instance has {}",
                raw.points.len()
            )));
        }
        exact_k_tsp(&raw.points, raw.k).map(|(c, _)| c)
    } else {
        None
    };

    let t0 = Instant::now();
    let sol = solve(&raw, a.epsilon, mode, &limits)?;
    let wall_ms = a.timing.then(|| t0.elapsed().as_millis() as u64);

    let label = if a.instance == "-" { "<stdin>" } else { &a.instance };
    let report = RunReport::new(label, &raw, a.epsilon, mode, &sol, oracle_cost, wall_ms);
    let content = match a.emit {
        EmitArg::Json => report.to_json(),
        EmitArg::Csv => format!("{}\n{}\n", RunReport::csv_header(), report.to_csv_row()),
    };
    write_out(a.out.as_deref(), &content)
}

fn cmd_gen(a: GenArgs) -> Result<(), Error> {
    if a.d < 2 {
        return Err(Error::InvalidArgument(format!("d must be >= 2, got {}", a.d)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let points = match a.kind {
        KindArg::Uniform => gen::uniform(&mut rng, a.n, a.d, a.side),
        KindArg::Clustered => gen::clustered(&mut rng, a.n, a.d, a.side, a.clusters, a.spread),
        KindArg::Collinear => gen::collinear(&mut rng, a.n, a.d, a.side),
        KindArg::Grid => gen::grid(a.n, a.d, a.pitch),
    };
    if a.k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the {} generated points",
            a.k,
            points.len()
        )));
    }
    let raw = RawInstance {
        points,
        d: a.d,
        k: a.k,
    };
    write_out(a.out.as_deref(), &write_instance(&raw))
}

fn cmd_oracle(a: OracleArgs) -> Result<(), Error> {
    let mut raw = read_instance(&a.instance)?;
    if let Some(k) = a.k {
        raw.k = k;
    }
    if raw.points.len() > 16 {
        return Err(Error::InvalidArgument(format!(
            "exact oracle needs at most 16 points, instance has {}",
            raw.points.len()
        )));
    }
    let (cost, order) = exact_k_tsp(&raw.points, raw.k).ok_or_else(|| {
        Error::InvalidInstance(format!(
            "k = {} exceeds the {} points",
            raw.k,
            raw.points.len()
        ))
    })?;
    let payload = serde_json::json!({ "cost": cost, "order": order });
    println!("{payload:#}");
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Error> {
    let mut raw = read_instance(&a.instance)?;
    if let Some(k) = a.k {
        raw.k = k;
    }
    let mut order = Vec::new();
    for part in a.order.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        order.push(part.parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!("bad tour index `{part}`"))
        })?);
    }
    let cost = validate_tour(&raw, &order, raw.k, a.claimed_cost)?;
    println!("{cost}");
    Ok(())
}
