use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use fasthla_core::sim::{load_config, NetScenario, PowerModel};
use fasthla_core::NetInterface;
use fasthla_service::agent::{transfer, AgentConfig};
use fasthla_service::bench::{parse_class, sweep, to_csv};
use fasthla_service::exit::{ExitClass, Failure};
use url::Url;

/// Device-side transfer agent.
#[derive(Parser)]
#[command(name = "agent", version)]
struct Cli {
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Interface {
    Wifi,
    Cellular,
}

#[derive(Subcommand)]
enum Command {
    /// Download URLs into a directory with tuned settings.
    Transfer {
        /// Analysis server base URL.
        #[arg(long)]
        server: Option<Url>,
        #[arg(long)]
        dest: PathBuf,
        /// Total connection budget.
        #[arg(long, default_value_t = 32)]
        limit: u32,
        /// Model, cache and unsent logs; defaults to DEST/.fasthla.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "wifi")]
        net_if: Interface,
        /// Link bandwidth estimate, Mbps.
        #[arg(long, default_value_t = 100.0)]
        bw: f64,
        #[arg(long, default_value = "generic")]
        device_model: String,
        #[arg(long, default_value_t = 2)]
        cpu_class: u32,
        /// Power readings (`t,watts` per line) covering the transfer.
        #[arg(long)]
        power_trace: Option<PathBuf>,
        /// Base power for --power-trace, W.
        #[arg(long, default_value_t = 0.0)]
        power_base: f64,
        /// Per-read and connect timeout, s.
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
        #[arg(required = true)]
        urls: Vec<String>,
    },
    /// Print the simulated throughput and energy of every setting as CSV.
    Bench {
        /// Scenario file; built-in defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        grid: Grid,
        /// Dataset class: html, image or video_small.
        #[arg(long, default_value = "video_small")]
        class: String,
    },
}

fn bench(scenario: Option<PathBuf>, class: &str) -> Result<(), Failure> {
    let (scn, pm) = match &scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::new(ExitClass::Io, format!("{}: {e}", p.display())))?;
            load_config(&text).map_err(|e| Failure::new(ExitClass::Config, format!("{}: {e}", p.display())))?
        }
        None => (NetScenario::default(), PowerModel::default()),
    };
    let class = parse_class(class).ok_or_else(|| Failure::new(ExitClass::Usage, format!("unknown class `{class}`")))?;
    let rows = sweep(&scn, &pm, class).map_err(|e| Failure::new(ExitClass::Config, e))?;
    std::io::stdout()
        .write_all(to_csv(&rows).as_bytes())
        .map_err(|e| Failure::new(ExitClass::Io, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Bench { scenario, grid: Grid::Full, class } => bench(scenario, &class),
        Command::Transfer {
            server,
            dest,
            limit,
            state,
            net_if,
            bw,
            device_model,
            cpu_class,
            power_trace,
            power_base,
            timeout,
            urls,
        } => {
            if !(timeout.is_finite() && timeout > 0.0) {
                return Err(Failure::new(ExitClass::Usage, "--timeout must be positive"));
            }
            let mut cfg = AgentConfig::new(dest);
            if let Some(s) = state {
                cfg.state_dir = s;
            }
            cfg.server = server;
            cfg.limit = limit;
            cfg.net_if = match net_if {
                Interface::Wifi => NetInterface::Wifi,
                Interface::Cellular => NetInterface::Cellular,
            };
            cfg.bw = bw;
            cfg.device.model = device_model;
            cfg.device.cpu_class = cpu_class;
            cfg.power_trace = power_trace;
            cfg.p_base = power_base;
            cfg.io_timeout = Duration::from_secs_f64(timeout);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(ExitClass::Io, e))?;
            let summary = rt.block_on(transfer(&cfg, &urls))?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable summary"));
            if summary.all_completed() {
                Ok(())
            } else {
                Err(Failure::new(
                    ExitClass::Network,
                    format!("{} of {} files failed", summary.files - summary.completed, summary.files),
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose { tracing::Level::DEBUG } else { tracing::Level::WARN })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("agent: {f}");
            ExitCode::from(f.class.code())
        }
    }
}
