use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lemsim_cli::{compare, runner, scenarios, serve};

#[derive(Parser)]
#[command(name = "lemsim", version, about = "Local energy market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Stdio,
    Socket,
}

#[derive(Subcommand)]
enum Command {
    /// Run zero-intelligence episodes for one or more seeds.
    Run {
        /// Scenario file, or a bundled name (no_battery, strategic_battery).
        #[arg(long)]
        config: String,
        /// Seed count N (seeds 0..N), a range a..b, or a list a,b,c.
        /// Defaults to the seeds in the scenario.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Omit the timestamp line from CSV outputs.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Compare batch directories against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the environment protocol (one JSON request per line).
    Serve {
        #[arg(long)]
        config: String,
        #[arg(long, value_enum, default_value = "stdio")]
        transport: Transport,
        /// Listen address for the socket transport.
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            no_timestamp,
        } => {
            let scenario = scenarios::load(&config)?;
            let seeds = match seeds {
                Some(spec) => scenarios::parse_seeds(&spec)?,
                None => scenario.seeds.clone(),
            };
            let stamp = (!no_timestamp).then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
            let agg = runner::run_batch(&scenario, &seeds, &out, stamp.as_deref())?;
            println!(
                "{}: {} seeds, mean reward {:.3}, p2p ratio {:.3}, dso net {:.3} -> {}",
                agg.scenario,
                agg.seeds.len(),
                agg.mean_total_reward,
                agg.mean_p2p_ratio,
                agg.mean_dso_net,
                out.display()
            );
        }
        Command::Compare { dirs, out } => {
            let rows = compare::compare_dirs(&dirs)?;
            compare::write_comparison(&rows, &out)?;
            print!("{}", compare::render_text(&rows));
        }
        Command::Serve {
            config,
            transport,
            addr,
        } => {
            let scenario = scenarios::load(&config)?;
            scenario.validate().context("invalid scenario")?;
            match transport {
                Transport::Stdio => serve::serve_stdio(&scenario)?,
                Transport::Socket => {
                    let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    serve::serve_tcp(&scenario, listener, None)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
