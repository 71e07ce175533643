//! `distevo` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files: exit 1.
    Input(String),
    /// The numerics failed on valid input: exit 2.
    Numerical(String),
}

impl From<distevo::Error> for CliError {
    fn from(e: distevo::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "distevo", version, about = "Evolve SDE distributions on a grid and price options from them")]
pub struct Cli {
    /// Flat TOML file whose keys are the long flag names; flags override it [path]
    #[arg(long, global = true, env = "DISTEVO_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evolve a built-in price process from a point mass and summarise the terminal law
    Simulate(SimulateArgs),
    /// Price a European payoff, optionally with a knock-out barrier
    Price(PriceArgs),
    /// Finite-difference Greeks against the Black-Scholes closed form
    Greeks(GreeksArgs),
    /// Grid price next to a Monte Carlo estimate and the closed form
    CompareMc(CompareMcArgs),
    /// Price under Heston or SABR with the volatility-mixture step
    StochvolPrice(StochVolArgs),
    /// Write a terminal distribution as CSV (1-D x,cdf,pdf or 2-D x1,x2,pdf)
    Export(ExportArgs),
}

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    /// Grid spacing in the simulation coordinate (log-price units for lognormal models) [default: 1e-3]
    #[arg(long, value_name = "H")]
    pub spacing: Option<f64>,
    /// Number of equal time steps over the horizon [count, default: 365]
    #[arg(long, value_name = "N")]
    pub steps: Option<u64>,
    /// CDF tail threshold below which grid tails are dropped [probability, default: 1e-12]
    #[arg(long, value_name = "EPS")]
    pub threshold: Option<f64>,
    /// Order of the operators within a step: drift-first or diffusion-first [default: drift-first]
    #[arg(long, value_name = "ORDER")]
    pub ordering: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct MarketArgs {
    /// Spot price of the underlying [price units]
    #[arg(long, value_name = "S")]
    pub spot: Option<f64>,
    /// Strike [price units]
    #[arg(long, value_name = "K")]
    pub strike: Option<f64>,
    /// Risk-free rate [per year, continuously compounded]
    #[arg(long, value_name = "R")]
    pub rate: Option<f64>,
    /// Volatility [per square-root year]
    #[arg(long, value_name = "SIGMA")]
    pub vol: Option<f64>,
    /// Time to expiry [years]
    #[arg(long, value_name = "T")]
    pub expiry: Option<f64>,
    /// Continuous dividend yield [per year, default: 0]
    #[arg(long, value_name = "Q")]
    pub dividend_yield: Option<f64>,
    /// Payoff: call, put, digital-call, digital-put, power-call or power-put [default: call]
    #[arg(long, value_name = "KIND")]
    pub payoff: Option<String>,
    /// Exponent of power payoffs [dimensionless, default: 1]
    #[arg(long, value_name = "ALPHA")]
    pub exponent: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Process: samuelson, squared-drift, constant-drift or squared-variable [default: samuelson]
    #[arg(long, value_name = "NAME")]
    pub process: Option<String>,
    /// Drift parameter mu of the price SDE [per year]
    #[arg(long, value_name = "MU")]
    pub mu: Option<f64>,
    /// Diffusion parameter sigma of the price SDE [per square-root year]
    #[arg(long, value_name = "SIGMA")]
    pub sigma: Option<f64>,
    /// Initial price [price units]
    #[arg(long, value_name = "S")]
    pub spot: Option<f64>,
    /// Simulated time span [years, default: 1]
    #[arg(long, value_name = "T")]
    pub horizon: Option<f64>,
    /// Coordinate of the summary and export: transformed (constant-diffusion) or price [default: transformed]
    #[arg(long, value_name = "COORDS")]
    pub coords: Option<String>,
    /// Write the terminal distribution to this CSV file (x,cdf,pdf) [path]
    #[arg(long, value_name = "PATH")]
    pub export: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct PriceArgs {
    /// Price model; only bs (geometric Brownian motion) here, see stochvol-price [default: bs]
    #[arg(long, value_name = "MODEL")]
    pub model: Option<String>,
    #[command(flatten)]
    pub market: MarketArgs,
    /// Knock-out barrier level [price units]
    #[arg(long, value_name = "B")]
    pub barrier: Option<f64>,
    /// Barrier direction: up or down [default: up]
    #[arg(long, value_name = "DIR")]
    pub barrier_direction: Option<String>,
    /// Monitor the barrier every this many steps [steps, default: 1]
    #[arg(long, value_name = "N")]
    pub barrier_every: Option<u64>,
    /// Append a JSON line with the price record to this file [path]
    #[arg(long, value_name = "PATH")]
    pub record: Option<PathBuf>,
    /// Write the terminal log-price distribution to this CSV file (x,cdf,pdf) [path]
    #[arg(long, value_name = "PATH")]
    pub export: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct GreeksArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Finite-difference step, in the units of the bumped input [default: 1e-3]
    #[arg(long, value_name = "H")]
    pub fd_step: Option<f64>,
    /// Difference scheme: central or forward [default: central]
    #[arg(long, value_name = "SCHEME")]
    pub scheme: Option<String>,
    /// Bump style for spot and volatility: absolute or relative [default: absolute]
    #[arg(long, value_name = "STYLE")]
    pub bump: Option<String>,
    /// Comma-separated subset of delta, gamma, rho, theta, vega [default: all]
    #[arg(long, value_name = "LIST")]
    pub greeks: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct CompareMcArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Monte Carlo paths, even for antithetic pairs [count, default: 1000000]
    #[arg(long, value_name = "N")]
    pub paths: Option<u64>,
    /// Seed of the ChaCha8 generator [integer, default: 42]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct StochVolArgs {
    /// Stochastic-volatility model: heston or sabr [name, required]
    #[arg(long, value_name = "MODEL")]
    pub model: Option<String>,
    /// Spot price of the underlying [price units]
    #[arg(long, value_name = "S")]
    pub spot: Option<f64>,
    /// Strike [price units]
    #[arg(long, value_name = "K")]
    pub strike: Option<f64>,
    /// Risk-free rate [per year, continuously compounded]
    #[arg(long, value_name = "R")]
    pub rate: Option<f64>,
    /// Time to expiry [years]
    #[arg(long, value_name = "T")]
    pub expiry: Option<f64>,
    /// Continuous dividend yield [per year, default: 0]
    #[arg(long, value_name = "Q")]
    pub dividend_yield: Option<f64>,
    /// Payoff: call, put, digital-call, digital-put, power-call or power-put [default: call]
    #[arg(long, value_name = "KIND")]
    pub payoff: Option<String>,
    /// Exponent of power payoffs [dimensionless, default: 1]
    #[arg(long, value_name = "ALPHA")]
    pub exponent: Option<f64>,
    /// Heston mean-reversion speed of the variance [per year]
    #[arg(long, value_name = "KAPPA")]
    pub kappa: Option<f64>,
    /// Heston long-run variance [variance per year]
    #[arg(long, value_name = "THETA")]
    pub theta: Option<f64>,
    /// Heston volatility of variance [per square-root year]
    #[arg(long, value_name = "XI")]
    pub xi: Option<f64>,
    /// Heston initial variance [variance per year]
    #[arg(long, value_name = "V0")]
    pub v0: Option<f64>,
    /// Price/volatility correlation; SABR requires 0 [dimensionless, default: 0]
    #[arg(long, value_name = "RHO")]
    pub rho: Option<f64>,
    /// SABR volatility of volatility [per square-root year]
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
    /// SABR elasticity beta in [0, 1) [dimensionless, default: 0]
    #[arg(long, value_name = "BETA")]
    pub beta: Option<f64>,
    /// SABR initial forward [price units, default: spot grown at rate minus yield]
    #[arg(long, value_name = "F0")]
    pub f0: Option<f64>,
    /// SABR initial volatility [per square-root year in the forward coordinate]
    #[arg(long, value_name = "SIGMA0")]
    pub sigma0: Option<f64>,
    /// Number of volatility states in each mixture step [count, default: 64]
    #[arg(long, value_name = "N")]
    pub vol_states: Option<u64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Number of assets: 1 (x,cdf,pdf) or 2 (x1,x2,pdf over log prices) [default: 1]
    #[arg(long, value_name = "D")]
    pub dims: Option<u64>,
    #[command(flatten)]
    pub market: MarketArgs,
    /// Coordinate of a 1-D export: log or price [default: log]
    #[arg(long, value_name = "COORDS")]
    pub coords: Option<String>,
    /// Spot of the second asset, 2-D only [price units]
    #[arg(long, value_name = "S")]
    pub spot2: Option<f64>,
    /// Volatility of the second asset, 2-D only [per square-root year]
    #[arg(long, value_name = "SIGMA")]
    pub vol2: Option<f64>,
    /// Correlation of the two Brownian drivers, 2-D only [dimensionless, default: 0]
    #[arg(long, value_name = "RHO")]
    pub rho: Option<f64>,
    /// Output CSV file [path]
    #[arg(long, value_name = "PATH")]
    pub export: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
