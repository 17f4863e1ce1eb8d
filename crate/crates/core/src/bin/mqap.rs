use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mqap::experiment::{
    cmd_compare, cmd_enumerate, cmd_gen, cmd_hv, cmd_run, format_front, read_front, write_text, ExperimentConfig,
    ExperimentError, InstanceSource,
};
use mqap::instance::InstanceSpec;

#[derive(Parser)]
#[command(name = "mqap", version, about = "Multi-objective QAP island-model solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent trials and write front files plus manifest.json
    Run(RunArgs),
    /// Compare result directories by normalised hypervolume
    Compare(CompareArgs),
    /// Exact Pareto front by exhaustive enumeration (n <= 10)
    Enumerate(EnumerateArgs),
    /// Generate a uniform random instance
    Gen(GenArgs),
    /// Hypervolume of a single front file
    Hv(HvArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file, or gen:n=..,m=..,correlation=..,seed=..
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    islands: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial t uses seed + t
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<usize>,
    /// Per-island wall budget in seconds ("none" disables it)
    #[arg(long)]
    time_budget_secs: Option<String>,
    #[arg(long, value_parser = ["memetic", "nsga2"])]
    algorithm: Option<String>,
    #[arg(long)]
    epoch: Option<usize>,
    #[arg(long)]
    migrants: Option<usize>,
    /// Crossover probability
    #[arg(long)]
    pc: Option<f64>,
    /// Per-individual swap mutation probability
    #[arg(long)]
    pm: Option<f64>,
    /// Local search budget per generation, in seconds
    #[arg(long)]
    ls_secs: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Population per island (default: derived from the island count)
    #[arg(long)]
    population: Option<usize>,
    /// Run trials concurrently
    #[arg(long)]
    parallel_trials: bool,
    /// Any config key, e.g. --set island.2.epoch=3 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result directories written by `run`
    #[arg(required = true, num_args = 2..)]
    dirs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the instance x configuration mean table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write pairwise tests as CSV
    #[arg(long)]
    pairs_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Instance file, or gen:n=..,m=..,correlation=..,seed=..
    #[arg(long)]
    instance: String,
    /// Front file to write (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Target correlation between flow 1 and every other flow
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    correlation: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest matrix entry
    #[arg(long, default_value_t = 100)]
    max: i64,
    /// Instance file to write (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HvArgs {
    front: PathBuf,
    /// Raw reference point, comma separated; omit for self-normalised hypervolume
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    reference: Option<Vec<f64>>,
}

fn run(args: RunArgs) -> Result<(), ExperimentError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let mut flags: Vec<(&str, String)> = Vec::new();
    macro_rules! flag {
        ($field:ident, $key:literal) => {
            if let Some(v) = &args.$field {
                flags.push(($key, v.to_string()));
            }
        };
    }
    flag!(instance, "instance");
    flag!(islands, "islands");
    flag!(trials, "trials");
    flag!(seed, "seed");
    flag!(generations, "generations");
    flag!(time_budget_secs, "time_budget_secs");
    flag!(algorithm, "algorithm");
    flag!(epoch, "epoch");
    flag!(migrants, "migrants");
    flag!(pc, "pc");
    flag!(pm, "pm");
    flag!(ls_secs, "ls_secs");
    flag!(population, "population");
    if let Some(out) = &args.out {
        flags.push(("out", out.display().to_string()));
    }
    if args.parallel_trials {
        flags.push(("parallel_trials", "true".into()));
    }
    for (k, v) in flags {
        cfg.set(k, &v)?;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| ExperimentError::InvalidValue {
            key: "--set".into(),
            value: kv.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }

    let (manifest, results) = cmd_run(&cfg)?;
    for r in &results {
        println!(
            "trial {:>3} seed {:>6}: {} solutions, {:.2}s",
            r.trial,
            r.seed,
            r.front.len(),
            r.wall_secs
        );
    }
    println!(
        "{} trial(s) of {} with {} island(s) on {} written to {}",
        manifest.trials,
        manifest.algorithm,
        manifest.islands,
        manifest.instance,
        cfg.out.display()
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), ExperimentError> {
    let report = cmd_compare(&args.dirs, args.alpha)?;
    print!("{}", report.render());
    if let Some(path) = &args.csv {
        write_text(path, &report.table_csv())?;
    }
    if let Some(path) = &args.pairs_csv {
        write_text(path, &report.pairs_csv())?;
    }
    Ok(())
}

fn load_source(text: &str) -> Result<mqap::instance::Instance, ExperimentError> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("instance", text)?;
    cfg.instance.as_ref().map_or_else(|| unreachable!("instance was just set"), InstanceSource::load)
}

fn enumerate(args: EnumerateArgs) -> Result<(), ExperimentError> {
    let instance = load_source(&args.instance)?;
    let front = cmd_enumerate(&instance)?;
    let text = format_front(
        &[("instance", instance.name().to_string()), ("source", "enumerate".to_string())],
        &front,
    );
    match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            println!("{} Pareto-optimal objective vectors written to {}", front.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(args: GenArgs) -> Result<(), ExperimentError> {
    let spec = InstanceSpec {
        max_value: args.max,
        ..InstanceSpec::new(args.n, args.m, args.correlation, args.seed)
    };
    let text = cmd_gen(&spec)?;
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn hv(args: HvArgs) -> Result<(), ExperimentError> {
    let front = read_front(&args.front)?;
    let value = cmd_hv(&front, args.reference.as_deref())?;
    println!("{value:.6}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Gen(a) => generate(a),
        Command::Hv(a) => hv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
