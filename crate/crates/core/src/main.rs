use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cubic_density::characters::Weight;
use cubic_density::cli::{self, resolve_threads, RunConfig, SelftestOptions};
use cubic_density::density::PhiKind;
use cubic_density::Result;

#[derive(Parser)]
#[command(
    name = "cubic-density",
    version,
    about = "One-level density of cubic Dirichlet L-functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the family with 1 < q <= m X to chars.csv
    Enumerate(RunArgs),
    /// Compute zeros up to height T for every family member
    Zeros(RunArgs),
    /// Weighted empirical density D*(phi; X)
    Density(RunArgs),
    /// Theorem, ratios and expansion predictions
    Predict(RunArgs),
    /// Empirical density against the predictions
    Compare(RunArgs),
    /// Fast consistency battery; exits nonzero on failure
    Selftest {
        /// Negate the Bernoulli number B_{2k+2} used by Euler-Maclaurin
        #[arg(long, value_name = "K")]
        corrupt_bernoulli: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PhiArg {
    Fejer,
    Bump,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Gaussian,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long = "x", short = 'X', value_name = "X")]
    x: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    phi: Option<PhiArg>,
    #[arg(long, value_enum)]
    weight: Option<WeightArg>,
    /// Height T for zeros
    #[arg(long = "T", short = 'T', value_name = "T")]
    height: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    cutoff_multiplier: Option<f64>,
    #[arg(long)]
    corollary_order: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for cached zero sets
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.x {
            c.x = v;
        }
        if let Some(v) = self.sigma {
            c.sigma = v;
        }
        if let Some(v) = self.phi {
            c.phi = match v {
                PhiArg::Fejer => PhiKind::Fejer,
                PhiArg::Bump => PhiKind::Bump,
            };
        }
        if let Some(WeightArg::Gaussian) = self.weight {
            c.weight = Weight::Gaussian;
        }
        if let Some(v) = self.height {
            c.height = v;
        }
        if let Some(v) = self.grid_step {
            c.grid_step = v;
        }
        if let Some(v) = self.cutoff_multiplier {
            c.cutoff_multiplier = v;
        }
        if let Some(v) = self.corollary_order {
            c.corollary_order = v;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if self.cache.is_some() {
            c.cache = self.cache.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        c.threads = resolve_threads(c.threads)?;
        c.validate()?;
        Ok(c)
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Selftest {
            corrupt_bernoulli,
            threads,
        } => {
            init_threads(resolve_threads(threads)?);
            let report = cli::selftest(&SelftestOptions {
                bernoulli_fault: corrupt_bernoulli,
            });
            for c in &report.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {} ({:.1} s): {}", c.name, c.seconds, c.detail);
            }
            return Ok(report.passed);
        }
        Command::Enumerate(ref a) => {
            let c = a.config()?;
            println!("{}", cli::cmd_enumerate(&c)?.display());
        }
        Command::Zeros(ref a) => {
            let c = a.config()?;
            init_threads(c.threads);
            println!("{}", cli::cmd_zeros(&c)?.display());
        }
        Command::Density(ref a) => {
            let c = a.config()?;
            init_threads(c.threads);
            let (csv, json) = cli::cmd_density(&c)?;
            println!("{}\n{}", csv.display(), json.display());
        }
        Command::Predict(ref a) => {
            let c = a.config()?;
            init_threads(c.threads);
            println!("{}", cli::cmd_predict(&c)?.display());
        }
        Command::Compare(ref a) => {
            let c = a.config()?;
            init_threads(c.threads);
            let (path, report) = cli::cmd_compare(&c)?;
            println!("{}", path.display());
            println!(
                "D* = {:.10}  theorem = {:.10}  difference = {:.3e}  within bound: {}",
                report.empirical.d_star, report.predictions.theorem.total, report.difference, report.within_bound
            );
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
