//! `dtdlab`: command-line driver for distributed TD(λ) experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dtd_lab::analysis::mixing::tau_from_c;
use dtd_lab::harness::experiment::{analyse, Instance};
use dtd_lab::harness::{compare_schedules, run_experiment, RunConfig};
use dtd_lab::linalg::fmt17;
use dtd_lab::mdp;
use dtd_lab::Result;

#[derive(Parser)]
#[command(name = "dtdlab", version, about = "Distributed TD(lambda) policy-evaluation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the built-in desk instance when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for trajectory seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSVs and the summary.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trace-decay values (repeat or comma-separate).
    #[arg(long, global = true, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Number of iterations per trajectory.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (lambda, seed) trajectory and check the bounds.
    Run,
    /// Constant against diminishing step sizes at log-spaced iterations.
    Compare,
    /// Validate the instance and the exact fixed point for each lambda.
    Validate,
    /// Print A, b and theta* for each lambda.
    Oracle,
    /// Print the mixing-time table.
    Mixing,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::desk(),
    };
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    if !common.lambda.is_empty() {
        cfg.lambdas = common.lambda.clone();
    }
    if let Some(n) = common.steps {
        cfg.num_steps = n;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool> {
    let cfg = load(&cli.common)?;
    match cli.command {
        Command::Run => {
            let outcome = run_experiment(&cfg)?;
            print!("{}", outcome.summary);
            Ok(!outcome.theorem_failure())
        }
        Command::Compare => {
            for table in compare_schedules(&cfg)? {
                println!("{}", table.render());
            }
            Ok(true)
        }
        Command::Validate => {
            let instance = Instance::from_config(&cfg)?;
            let pi = mdp::stationary_distribution(instance.mdp.chain())?;
            println!("{}", instance.mdp);
            println!("stationary residual {}", fmt17(pi.residual(instance.mdp.chain())));
            println!("sigma2 {}", fmt17(instance.consensus.sigma2()));
            let mut ok = true;
            for &lambda in &cfg.lambdas {
                let la = analyse(&instance, lambda)?;
                println!("lambda {lambda}: sigma_min {} residual {}", fmt17(la.consts.sigma_min), fmt17(la.oracle.residual()));
                match &la.quality {
                    Ok(q) => println!("  sandwich {} <= {} <= {}", fmt17(q.lower), fmt17(q.actual), fmt17(q.upper)),
                    Err(e) => {
                        ok = false;
                        println!("  FAIL {e}");
                    }
                }
                match &la.norms {
                    Ok(n) => println!("  |A| {} <= {}  |b| {} <= {}", fmt17(n.a_norm), fmt17(n.a_bound), fmt17(n.b_norm), fmt17(n.b_bound)),
                    Err(e) => {
                        ok = false;
                        println!("  FAIL {e}");
                    }
                }
            }
            Ok(ok)
        }
        Command::Oracle => {
            let instance = Instance::from_config(&cfg)?;
            for &lambda in &cfg.lambdas {
                let la = analyse(&instance, lambda)?;
                let dump = la.oracle.dump();
                match &cfg.output_dir {
                    Some(dir) => {
                        std::fs::create_dir_all(dir)?;
                        std::fs::write(dir.join(format!("oracle_lambda_{lambda}.txt")), dump)?;
                    }
                    None => println!("{dump}"),
                }
            }
            Ok(true)
        }
        Command::Mixing => {
            let instance = Instance::from_config(&cfg)?;
            let profile = instance.mixing_profile()?;
            let (_, c) = instance.mixing(0.01)?;
            println!("C {}", fmt17(c));
            println!("alpha,tau,tau_model");
            for alpha in [0.5, 0.2, 0.1, 0.05, 0.02, 0.01] {
                let tau = profile.tau(alpha).expect("profile scanned past 0.01");
                println!("{},{tau},{}", fmt17(alpha), tau_from_c(c, alpha));
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("theorem-level check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
