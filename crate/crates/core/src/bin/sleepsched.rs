use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sleepsched::harness::{preset_name, run_sweep, ExperimentConfig, SweepSpec};
use sleepsched::{
    fit_channel_from_trace, make_got_a, make_got_b, DelayTrace, Error, ProcessSpace, ProcessState, Result, RngSeed,
};

#[derive(Parser)]
#[command(name = "sleepsched", version, about = "Deep-sleep scheduling simulator for satellite IoT devices")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one episode.
    Run { config: PathBuf },
    /// Run the parameter sweep in the config's [sweep] section.
    Sweep { config: PathBuf },
    /// Fit a channel chain to a delay trace and print it as JSON.
    FitChannel {
        trace: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        bin_ms: f64,
        /// Data erasure rate attached to every fitted state.
        #[arg(long, default_value_t = 0.0)]
        erasure: f64,
    },
    /// Generate a GoT tensor and print it as JSON.
    GenGot(GenGot),
}

#[derive(Clone, Copy, ValueEnum)]
enum GotKind {
    A,
    B,
}

#[derive(Args)]
struct GenGot {
    kind: GotKind,
    #[arg(long, default_value_t = 8)]
    n_states: usize,
    #[arg(long, default_value_t = sleepsched::DEFAULT_AGE_CAP)]
    cap: u32,
    /// Critical states (GoT-A).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    critical: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.001)]
    beta: f64,
    /// Variability (GoT-B).
    #[arg(long, default_value_t = 0.1)]
    v: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn load_config(path: &Path, g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(g: &Global) -> PathBuf {
    g.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn emit(g: &Global, file: &str, text: &str) -> Result<()> {
    println!("{text}");
    if let Some(dir) = &g.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(file), format!("{text}\n"))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(config, g)?;
            let prepared = cfg.prepare()?;
            let sim = prepared.sim_config(cfg.strategy, RngSeed::new(cfg.seed, 0), true);
            let ledger = sleepsched::run_episode(sim)?;
            let dir = out_dir(g);
            std::fs::create_dir_all(&dir)?;
            ledger.write_csv_file(&dir.join("ledger.csv"))?;
            ledger.write_summary_json(&dir.join("summary.json"))?;
            println!("{}", serde_json::to_string_pretty(&ledger.summary())?);
            Ok(())
        }
        Command::Sweep { config } => {
            let cfg = load_config(config, g)?;
            let spec = SweepSpec::from_config(&cfg)?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(j) = g.jobs {
                pool = pool.num_threads(j.max(1));
            }
            let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
            if !g.quiet {
                eprintln!(
                    "sweeping {} over {} values, {} strategies, {} repetitions ({} episodes)",
                    spec.parameter.as_str(),
                    spec.values.len(),
                    spec.strategies.len(),
                    spec.repetitions,
                    spec.n_cells()
                );
            }
            let results = pool.install(|| run_sweep(&spec))?;
            let dir = out_dir(g);
            results.write_all(&dir, preset_name(spec.repetitions))?;
            if !g.quiet {
                for s in results.summary() {
                    eprintln!("{:>10.6} {:<10} mean {:.5} [{:.5}, {:.5}]", s.value, s.strategy, s.mean, s.q25, s.q75);
                }
                eprintln!("wrote {}", dir.display());
            }
            Ok(())
        }
        Command::FitChannel { trace, bin_ms, erasure } => {
            let trace = DelayTrace::load(trace)?;
            let chain = fit_channel_from_trace(&trace, *bin_ms, *erasure).map_err(to_config)?;
            emit(g, "channel.json", &chain.to_json()?)
        }
        Command::GenGot(args) => {
            let space = ProcessSpace::new(args.n_states).map_err(to_config)?;
            let tensor = match args.kind {
                GotKind::A => {
                    let critical: Vec<ProcessState> = args.critical.iter().map(|c| ProcessState(*c)).collect();
                    make_got_a(&space, &critical, args.alpha, args.beta, args.cap)
                }
                GotKind::B => {
                    let mut rng = RngSeed::new(g.seed.unwrap_or(1), 0).rng();
                    make_got_b(&space, args.v, args.cap, &mut rng).map(|r| r.tensor)
                }
            }
            .map_err(to_config)?;
            emit(g, "got.json", &serde_json::to_string(&tensor)?)
        }
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}
