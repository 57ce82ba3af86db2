use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedpe::design::{load_problem, solve_design, Mode, SolverConfig};
use fedpe::env::{load_instance, save_instance, synth_instance, SynthParams};
use fedpe::harness::{run_experiment, Algo, ExperimentSpec, InstanceSource};
use fedpe::protocol::ScheduleKind;
use fedpe::trace::CommMode;
use fedpe::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "fedpe", version, about = "Federated phased elimination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic instance and write it as JSON.
    Synth(SynthArgs),
    /// Run algorithms over seeds and write trace, phase and summary CSVs.
    Run(RunArgs),
    /// Solve one multi-client design problem and print the solution as CSV.
    Design(DesignArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long = "M")]
    num_clients: usize,
    #[arg(long = "K")]
    num_arms: usize,
    #[arg(long = "d")]
    dim: usize,
    #[arg(long, default_value_t = 0.2)]
    gap_min: f64,
    #[arg(long, default_value_t = 0.4)]
    gap_max: f64,
    #[arg(long, default_value_t = 0.5)]
    ell: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    big_l: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// One parameter vector shared by all arms.
    #[arg(long)]
    shared: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated: fed-pe, enhanced, shared, local-ucb, collaborative.
    #[arg(long, value_delimiter = ',', required = true)]
    algo: Vec<Algo>,
    #[arg(long = "T")]
    horizon: u64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// uniform, greedy or exp:c,n.
    #[arg(long, default_value = "exp:1,2")]
    schedule: ScheduleKind,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "naive")]
    comm_mode: CommMode,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_sweeps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Design(a) => design(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type CliResult = Result<(), (u8, String)>;

fn config_err(e: Error) -> (u8, String) {
    (EXIT_CONFIG, e.to_string())
}

fn synth(a: SynthArgs) -> CliResult {
    let params = SynthParams {
        num_clients: a.num_clients,
        num_arms: a.num_arms,
        dim: a.dim,
        gap_min: a.gap_min,
        gap_max: a.gap_max,
        ell: a.ell,
        big_l: a.big_l,
        noise_std: a.noise_std,
        mode: if a.shared { Mode::Shared } else { Mode::Disjoint },
    };
    let env = synth_instance(&params, &mut ChaCha8Rng::seed_from_u64(a.seed)).map_err(config_err)?;
    save_instance(&env, &a.out).map_err(|e| (EXIT_RUNTIME, e.to_string()))
}

fn run(a: RunArgs) -> CliResult {
    let env = load_instance(&a.instance).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", a.instance.display())))?;
    for w in env.warnings() {
        eprintln!("warning: {w}");
    }
    let spec = ExperimentSpec {
        instance: InstanceSource::Given(Box::new(env)),
        algos: a.algo,
        horizon: a.horizon,
        delta: a.delta,
        schedule: a.schedule,
        seeds: a.seeds,
        out_dir: a.out,
        comm_mode: a.comm_mode,
        jobs: a.jobs,
    };
    spec.validate().map_err(config_err)?;
    let report = run_experiment(&spec).map_err(|e| match e {
        Error::InvalidConfig(_) => config_err(e),
        e => (EXIT_RUNTIME, e.to_string()),
    })?;
    for (algo, seed, msg) in &report.failures {
        eprintln!("cell {algo}/{seed} failed: {msg}");
    }
    for r in &report.summary {
        println!(
            "{}: final regret {} (std {}), comm {}",
            r.algo, r.final_regret_mean, r.final_regret_std, r.total_comm_mean
        );
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err((EXIT_RUNTIME, format!("{} cell(s) failed", report.failures.len())))
    }
}

fn design(a: DesignArgs) -> CliResult {
    let problem = load_problem(&a.problem).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", a.problem.display())))?;
    let cfg = SolverConfig {
        epsilon: a.epsilon,
        max_sweeps: a.max_sweeps,
        ..SolverConfig::default()
    };
    let sol = solve_design(&problem, &cfg).map_err(|e| match e {
        Error::InvalidConfig(_) | Error::InvalidInput(_) => config_err(e),
        e => (EXIT_RUNTIME, e.to_string()),
    })?;
    println!("kind,client,arm,value");
    for (i, w) in sol.pi.iter().enumerate() {
        for (&arm, x) in problem.arms(i).iter().zip(w) {
            println!("pi,{i},{arm},{x}");
        }
    }
    match problem.mode() {
        Mode::Disjoint => {
            for (arm, r) in sol.ranks.iter().enumerate() {
                println!("rank,,{arm},{r}");
            }
        }
        Mode::Shared => println!("rank,,,{}", sol.ranks[0]),
    }
    println!("G,,,{}", sol.objective_g);
    println!("F,,,{}", sol.objective_f);
    println!("sweeps,,,{}", sol.sweeps);
    println!("certified,,,{}", sol.certified);
    Ok(())
}
