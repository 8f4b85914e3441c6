//! perclap: Laplacians on Bernoulli bond-percolation boxes.
//!
//! Subcommands: `ids` (integrated density of states), `walk` (annealed
//! return probability of the continuous-time walk), `spectrum` (full
//! diagonalization of one configuration), `mechanism` (targeted checks of
//! the asymptotic mechanisms) and `verify` (self-test suites).  Exit codes:
//! 0 success, 1 at least one check failed, 2 configuration or runtime
//! error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use perclap_cli::commands;
use perclap_cli::config::{self, CommandKind, ConfigPatch};
use perclap_cli::verify::Suite;

#[derive(Parser)]
#[command(
    name = "perclap",
    version,
    about = "Laplacians on percolation graphs: spectra, state counts, random walks"
)]
struct Cli {
    /// Worker threads for the sampling loops; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the integrated density of states of a percolation Laplacian.
    Ids(RunArgs),
    /// Simulate the continuous-time walk; report annealed return probabilities.
    Walk(RunArgs),
    /// Diagonalize one sampled configuration and dump the spectrum.
    Spectrum(RunArgs),
    /// Run one mechanism check (monotonicity, linearization, ...) or all.
    Mechanism(MechanismArgs),
    /// Run a self-test suite with one machine-readable verdict per check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter set: subcritical-d2, supercritical-d2,
    /// supercritical-d3 or fullLattice-d2.
    #[arg(long)]
    preset: Option<String>,
    /// Lattice dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Box side length.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Boundary topology: free or periodic.
    #[arg(long)]
    topology: Option<String>,
    /// Probability that an edge is open.
    #[arg(long)]
    p: Option<f64>,
    /// Boundary condition: neumann, pseudo_dirichlet or dirichlet.
    #[arg(long)]
    bc: Option<String>,
    /// Restriction scheme: graph_restriction or neumann_boundary.
    #[arg(long)]
    scheme: Option<String>,
    /// Spectral part for ids: full, percolating or finite.
    #[arg(long)]
    part: Option<String>,
    /// Energies to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    energy_grid: Option<Vec<f64>>,
    /// Times to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    t_grid: Option<Vec<f64>>,
    /// Configurations to sample.
    #[arg(long)]
    samples: Option<usize>,
    /// Walks per configuration.
    #[arg(long)]
    walks: Option<usize>,
    /// Master seed; the PERCLAP_SEED environment variable is the fallback.
    #[arg(long)]
    seed: Option<u64>,
    /// Energy window LO,HI for the van Hove fit.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    window: Option<Vec<f64>>,
    /// Time window LO,HI for the heat-decay fit.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    t_window: Option<Vec<f64>>,
    /// Output base path; .csv and .json are appended.
    #[arg(long)]
    output: Option<PathBuf>,
    /// What to write: csv, json or both.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct MechanismArgs {
    /// One of monotonicity, linearization, large-deviation, implication,
    /// cube-scaling, tauberian, heaviside, finite-cluster-tail, all.
    #[arg(long, default_value = "all")]
    check: String,
    /// Slope threshold for the large-deviation check (default 0.9 (1 - p))
    /// and the implication check (default 0.08).
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// quick: small-box invariants (seconds).  full: adds production-size
    /// ensembles and d = 3 (minutes).
    #[arg(long, default_value = "quick")]
    suite: String,
    /// Master seed; the PERCLAP_SEED environment variable is the fallback.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the JSON report.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Corrupt one assembled operator on purpose; the duality check must
    /// then fail.  Exists to prove the suite can fail.
    #[arg(long, hide = true)]
    tamper: bool,
}

impl RunArgs {
    fn patches(&self) -> Result<Vec<ConfigPatch>, String> {
        let mut out = Vec::new();
        if let Some(name) = &self.preset {
            out.push(config::preset(name)?);
        }
        if let Some(path) = &self.config {
            out.push(config::load_patch(path)?);
        }
        out.push(self.flag_patch()?);
        Ok(out)
    }

    fn flag_patch(&self) -> Result<ConfigPatch, String> {
        let mut q = ConfigPatch::default();
        q.d = self.d;
        q.l = self.l;
        if let Some(s) = &self.topology {
            q.topology = Some(config::parse_keyword(s, "topology")?);
        }
        q.p = self.p;
        if let Some(s) = &self.bc {
            q.bc = Some(config::parse_keyword(s, "boundary condition")?);
        }
        if let Some(s) = &self.scheme {
            q.scheme = Some(config::parse_keyword(s, "restriction scheme")?);
        }
        if let Some(s) = &self.part {
            q.part = Some(config::parse_keyword(s, "spectral part")?);
        }
        q.energy_grid = self.energy_grid.clone();
        q.t_grid = self.t_grid.clone();
        q.samples = self.samples;
        q.walks = self.walks;
        q.master_seed = self.seed;
        if let Some(w) = &self.window {
            q.fit_window = Some(window_pair(w, "--window")?);
        }
        if let Some(w) = &self.t_window {
            q.t_window = Some(window_pair(w, "--t-window")?);
        }
        q.output_path = self.output.clone();
        if let Some(s) = &self.format {
            q.format = Some(config::parse_keyword(s, "output format")?);
        }
        Ok(q)
    }
}

fn window_pair(values: &[f64], flag: &str) -> Result<[f64; 2], String> {
    match values {
        [lo, hi] => Ok([*lo, *hi]),
        _ => Err(format!("{flag} needs exactly two values LO,HI")),
    }
}

fn dispatch(command: Command) -> Result<usize, String> {
    match command {
        Command::Ids(args) => {
            let cfg = config::resolve(CommandKind::Ids, &args.patches()?)?;
            commands::cmd_ids(&cfg)
        }
        Command::Walk(args) => {
            let cfg = config::resolve(CommandKind::Walk, &args.patches()?)?;
            commands::cmd_walk(&cfg)
        }
        Command::Spectrum(args) => {
            let cfg = config::resolve(CommandKind::Spectrum, &args.patches()?)?;
            commands::cmd_spectrum(&cfg)
        }
        Command::Mechanism(args) => {
            let cfg = config::resolve(CommandKind::Mechanism, &args.run.patches()?)?;
            commands::cmd_mechanism(&cfg, &args.check, args.alpha)
        }
        Command::Verify(args) => {
            let suite = match args.suite.as_str() {
                "quick" => Suite::Quick,
                "full" => Suite::Full,
                other => return Err(format!("unknown suite {other:?}; use quick or full")),
            };
            let seed = match args.seed {
                Some(s) => s,
                None => config::env_seed()?,
            };
            commands::cmd_verify(suite, seed, args.tamper, args.output.as_deref())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // A failure here would mean the pool was already built, which
        // cannot happen this early in the binary.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(0) => {}
        Ok(_) => std::process::exit(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
