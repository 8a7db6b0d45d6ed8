use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fasthla_core::learn::{deserialize, serialize};
use fasthla_core::optimize::Objective;
use fasthla_service::exit::{ExitClass, Failure};
use fasthla_service::pipeline::{run_pipeline, PipelineConfig};
use fasthla_service::server::{serve, ServiceConfig};

/// Transfer-log analysis server.
#[derive(Parser)]
#[command(name = "hla", version)]
struct Cli {
    /// More log output on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Analyse a JSONL log file once and write the model blob.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Objective::Efficiency)]
        objective: Objective,
        /// Continue training from this model.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the per-cluster table as JSON.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn analyze(
    logs: PathBuf,
    out: PathBuf,
    objective: Objective,
    prior: Option<PathBuf>,
    seed: u64,
    table: Option<PathBuf>,
) -> Result<(), Failure> {
    let io = |p: &PathBuf, e: std::io::Error| Failure::new(ExitClass::Io, format!("{}: {e}", p.display()));
    let text = std::fs::read_to_string(&logs).map_err(|e| io(&logs, e))?;
    let prior = match &prior {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| io(p, e))?;
            Some(deserialize(&bytes).map_err(|e| Failure::new(ExitClass::Parse, format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    cfg.optimizer.objective = objective;
    let result = run_pipeline(&text, prior.as_ref(), &cfg)?;
    std::fs::write(&out, serialize(&result.model)).map_err(|e| io(&out, e))?;
    if let Some(t) = &table {
        let json = serde_json::to_string_pretty(&result.table).expect("serializable table");
        std::fs::write(t, json).map_err(|e| io(t, e))?;
    }
    for s in &result.skipped {
        eprintln!("skipped cluster {}/{} ({} logs): {}", s.device_model, s.net_if, s.logs, s.reason);
    }
    println!(
        "model v{} from {} logs ({} rejected lines), {} clusters, {:.2} s",
        result.model.version(),
        result.usable_logs,
        result.rejected_lines,
        result.table.len(),
        result.wall_time
    );
    for row in &result.table {
        println!(
            "  {}  theta={}  th={:.2} Mbps  e={:.2} J/100MiB",
            row.key, row.theta, row.th, row.e
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve { config } => {
            let cfg = ServiceConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(ExitClass::Io, e))?;
            rt.block_on(serve(cfg))
        }
        Command::Analyze {
            logs,
            out,
            objective,
            prior,
            seed,
            table,
        } => analyze(logs, out, objective, prior, seed, table),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose { tracing::Level::DEBUG } else { tracing::Level::INFO })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hla: {f}");
            ExitCode::from(f.class.code())
        }
    }
}
