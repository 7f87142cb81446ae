use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "routing-lqr", version, about = "Routing games on parallel networks as simplex-constrained LQR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Nash flow and equilibrium latencies of the network.
    Nash,
    /// Optimal horizon plan at x0 and the unconstrained Riccati baseline.
    Solve,
    /// Critical regions of the explicit control law.
    Regions,
    /// Closed-loop or learning trajectory.
    Simulate,
    /// Link flows and path probabilities of a road network.
    Markov,
    /// Explicit law against the online solver on sampled states.
    Verify,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run configuration (or road network for `markov`) as JSON.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration, e.g. fig2 or diamond.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Directory for output artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's control mode.
    #[arg(long, global = true, value_name = "MODE", value_parser = ["mpc", "explicit", "open-loop", "mirror-descent"])]
    pub mode: Option<String>,
    /// Tikhonov regularization of the condensed Hessian.
    #[arg(long, global = true, value_name = "RHO")]
    pub reg: Option<f64>,
    /// Riccati gains from the terminal weight at every step.
    #[arg(long, global = true, alias = "dare-paper-variant")]
    pub dare_terminal_weighted: bool,
    /// Source term of the Markov flow equation.
    #[arg(long, global = true, value_enum, default_value_t = NetDemand::D)]
    pub net_demand: NetDemand,
    /// Sample count for `verify`.
    #[arg(long, global = true, value_name = "N")]
    pub samples: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetDemand {
    /// Outgoing demand of each node.
    D,
    /// Outgoing minus incoming demand.
    Dminus,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result: Result<(), CliError> = match cli.command {
        Command::Nash => commands::nash(&cli.common),
        Command::Solve => commands::solve(&cli.common),
        Command::Regions => commands::regions(&cli.common),
        Command::Simulate => commands::simulate(&cli.common),
        Command::Markov => commands::markov(&cli.common),
        Command::Verify => commands::verify(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
