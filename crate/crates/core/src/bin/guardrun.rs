use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;

use clap::{Parser, Subcommand, ValueEnum};

use guardrun::net::{run_client_episode, serve, ServerConfig, SleepController};
use guardrun::report::{compare_runs, load_reports, summary_table, write_run};
use guardrun::sim::{parse_scenario_file, simulate_scenario, LatencyModel};
use guardrun::{analyze_trace, EpisodeConfig, GuardMode, Mode, SchedulerConfig};

#[derive(Parser)]
#[command(name = "guardrun", version, about = "Overlapped inference and execution for action-chunk navigators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Blocking,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of simulated episodes from a scenario file.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's episode count.
        #[arg(long)]
        episodes: Option<u64>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the inference-server stub.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Injected compute delay, e.g. `constant:0.3` or `gaussian:0.97,0.05`.
        #[arg(long, default_value = "constant:0.3")]
        latency_model: LatencyModel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        /// Predicted duration of each emitted unit.
        #[arg(long, default_value = "constant:0.5")]
        action_duration: LatencyModel,
        #[arg(long)]
        stop_after_round: Option<u64>,
        #[arg(long)]
        stop_after_units: Option<u64>,
    },
    /// Run one episode against a server.
    Client {
        #[arg(long)]
        connect: String,
        #[arg(long, value_enum)]
        mode: CliMode,
        #[arg(long, default_value_t = 20)]
        max_rounds: u64,
        /// `adaptive` or `fixed:N`.
        #[arg(long, default_value = "adaptive")]
        guard: GuardMode,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        initial_estimate: f64,
        #[arg(long, default_value_t = 0.5)]
        pause_threshold: f64,
        #[arg(long, default_value_t = 1)]
        max_backups: u32,
        #[arg(long, default_value_t = 2.0)]
        stall_timeout: f64,
        /// Where to write the episode's trace log.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Compute an episode report from a trace log.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        pause_threshold: f64,
    },
    /// Compare two runs (directories or `reports.jsonl` files).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Sim {
            scenario,
            episodes,
            seed,
            out,
        } => {
            let mut sc = parse_scenario_file(&scenario).map_err(|e| format!("{}: {e}", scenario.display()))?;
            if let Some(n) = episodes {
                sc.episodes = n;
            }
            if let Some(s) = seed {
                sc.seed = s;
            }
            sc.validate().map_err(|e| e.to_string())?;
            let outcomes = simulate_scenario(&sc);
            write_run(&out, &outcomes).map_err(|e| e.to_string())?;
            let reports: Vec<_> = outcomes.iter().map(|o| o.report.clone()).collect();
            print!("{}", summary_table(&reports));
            let aborted = outcomes.iter().filter(|o| o.report.aborted).count();
            println!("{} episodes written to {}", outcomes.len(), out.display());
            if aborted > 0 {
                return Err(format!("{aborted} episode(s) aborted"));
            }
            Ok(())
        }
        Command::Serve {
            bind,
            latency_model,
            seed,
            horizon,
            action_duration,
            stop_after_round,
            stop_after_units,
        } => {
            if horizon == 0 {
                return Err("horizon must be >= 1".into());
            }
            let cfg = ServerConfig {
                latency: latency_model,
                seed,
                horizon,
                action_duration,
                stop_after_round,
                stop_after_units,
            };
            let never = AtomicBool::new(false);
            serve(&bind, cfg, &never).map_err(|e| format!("serving on {bind}: {e}"))
        }
        Command::Client {
            connect,
            mode,
            max_rounds,
            guard,
            alpha,
            delta,
            initial_estimate,
            pause_threshold,
            max_backups,
            stall_timeout,
            trace_out,
        } => {
            let scheduler = SchedulerConfig {
                alpha,
                delta,
                initial_estimate,
                pause_threshold,
                max_consecutive_backups: max_backups,
                stall_timeout,
            };
            let mode = match mode {
                CliMode::Blocking => Mode::Blocking,
                CliMode::Live => Mode::Live,
            };
            let cfg = EpisodeConfig::new(mode, max_rounds, scheduler).with_guard(guard);
            cfg.validate().map_err(|e| e.to_string())?;
            let out = run_client_episode(connect.as_str(), cfg, SleepController);
            if let Some(path) = trace_out {
                out.trace
                    .write_to(&path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            println!("{}", serde_json::to_string_pretty(&out.report).expect("report serializes"));
            match out.abort_reason {
                Some(reason) => Err(format!("episode aborted: {reason}")),
                None => Ok(()),
            }
        }
        Command::Analyze {
            trace,
            pause_threshold,
        } => {
            let report = analyze_trace(&trace, pause_threshold).map_err(|e| format!("{}: {e}", trace.display()))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Compare { a, b, format } => {
            let ra = load_reports(&a).map_err(|e| e.to_string())?;
            let rb = load_reports(&b).map_err(|e| e.to_string())?;
            let c = compare_runs(&ra, &rb);
            let text = match format {
                Format::Json => c.to_json() + "\n",
                Format::Csv => c.to_csv(),
                Format::Table => c.to_table(),
            };
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
