use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qsched::cli::commands;
use qsched::cli::verify::cmd_verify;
use qsched::cli::{Overrides, RunConfig};

/// Quarantine scheduling for the SIR epidemic model: given a transmission
/// rate that can be reduced for a fixed total time, find and analyze the
/// schedule minimizing the final epidemic size.
#[derive(Debug, Parser)]
#[command(name = "qsched", version, about)]
struct Cli {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (env QSCHED_OUT overrides).
    #[arg(long, global = true, value_name = "DIR", default_value = "qsched-out")]
    out: PathBuf,

    #[command(flatten)]
    params: ParamFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ParamFlags {
    /// Normal transmission rate (1/day); mutually exclusive with --r0n/--r0q.
    #[arg(long, global = true)]
    beta_n: Option<f64>,

    /// Quarantine transmission rate (1/day).
    #[arg(long, global = true)]
    beta_q: Option<f64>,

    /// Recovery rate (1/day).
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Basic reproduction number under normal transmission.
    #[arg(long, global = true)]
    r0n: Option<f64>,

    /// Basic reproduction number under quarantine.
    #[arg(long, global = true)]
    r0q: Option<f64>,

    /// Initial infectious fraction.
    #[arg(long, global = true)]
    i0: Option<f64>,

    /// Total quarantine length in days.
    #[arg(long = "T", global = true)]
    window: Option<f64>,

    /// Integrator step size in days.
    #[arg(long, global = true)]
    step: Option<f64>,

    /// Worker threads for sweeps and enumeration (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for the randomized verification suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trajectories with and without the optimal quarantine window.
    Simulate {
        /// Integration horizon in days.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Locate the window minimizing the final epidemic size.
    Optimize,
    /// Final size of a window started at each point of a grid.
    Scan {
        #[arg(long)]
        t0_min: Option<f64>,
        #[arg(long)]
        t0_max: Option<f64>,
        #[arg(long)]
        t0_step: Option<f64>,
    },
    /// Optimal final size over a (r0n, r0q/r0n) parameter grid.
    Sweep {
        #[arg(long)]
        r0n_min: Option<f64>,
        #[arg(long)]
        r0n_max: Option<f64>,
        #[arg(long)]
        r0n_step: Option<f64>,
        #[arg(long)]
        ratio_min: Option<f64>,
        #[arg(long)]
        ratio_max: Option<f64>,
        #[arg(long)]
        ratio_step: Option<f64>,
    },
    /// Run the full check battery; exits nonzero on any failure.
    Verify {
        /// Interval count for the brute-force dominance check (2 or 3).
        #[arg(long)]
        m: Option<usize>,
        /// Start/length lattice for the brute-force check, in days.
        #[arg(long)]
        grid_step: Option<f64>,
        /// Shift size for the shift-lemma checks, in days.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Phase-plane level curves in the S-I plane.
    Phase {
        /// Explicit level values (comma separated); default is an even fan.
        #[arg(long, value_delimiter = ',')]
        c: Option<Vec<f64>>,
        /// Emit the levels realized by the optimally windowed run instead.
        #[arg(long)]
        trajectory_curves: bool,
    },
    /// Construct the witness showing the order-preserving property needs
    /// its hypothesis.
    Counterexample,
}

fn overrides_from(cli: &Cli) -> Overrides {
    let mut layer = Overrides {
        beta_n: cli.params.beta_n,
        beta_q: cli.params.beta_q,
        gamma: cli.params.gamma,
        r0n: cli.params.r0n,
        r0q: cli.params.r0q,
        i0: cli.params.i0,
        window: cli.params.window,
        step: cli.params.step,
        threads: cli.params.threads,
        seed: cli.params.seed,
        ..Overrides::default()
    };
    match &cli.command {
        Command::Simulate { horizon } => layer.horizon = *horizon,
        Command::Scan {
            t0_min,
            t0_max,
            t0_step,
        } => {
            layer.t0_min = *t0_min;
            layer.t0_max = *t0_max;
            layer.t0_step = *t0_step;
        }
        Command::Sweep {
            r0n_min,
            r0n_max,
            r0n_step,
            ratio_min,
            ratio_max,
            ratio_step,
        } => {
            layer.r0n_min = *r0n_min;
            layer.r0n_max = *r0n_max;
            layer.r0n_step = *r0n_step;
            layer.ratio_min = *ratio_min;
            layer.ratio_max = *ratio_max;
            layer.ratio_step = *ratio_step;
        }
        Command::Verify {
            m,
            grid_step,
            delta,
        } => {
            layer.m = *m;
            layer.brute_grid_step = *grid_step;
            layer.delta = *delta;
        }
        Command::Phase { c, .. } => layer.c_values = c.clone(),
        Command::Optimize | Command::Counterexample => {}
    }
    layer
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let config = match RunConfig::resolve(cli.config.as_deref(), overrides_from(&cli)) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };

    if let Some(threads) = config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("config error: cannot set up {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let out = match std::env::var_os("QSCHED_OUT") {
        Some(dir) => PathBuf::from(dir),
        None => cli.out.clone(),
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("config error: cannot create {}: {e}", out.display());
        return ExitCode::from(2);
    }

    let outcome = match &cli.command {
        Command::Simulate { .. } => {
            commands::cmd_simulate(&config, &out).map(|files| (files, true))
        }
        Command::Optimize => commands::cmd_optimize(&config, &out).map(|files| (files, true)),
        Command::Scan { .. } => commands::cmd_scan(&config, &out).map(|files| (files, true)),
        Command::Sweep { .. } => commands::cmd_sweep(&config, &out).map(|files| (files, true)),
        Command::Verify { .. } => {
            cmd_verify(&config, &out).map(|(report, files)| (files, report.passed))
        }
        Command::Phase {
            trajectory_curves, ..
        } => commands::cmd_phase(&config, &out, *trajectory_curves).map(|files| (files, true)),
        Command::Counterexample => {
            commands::cmd_counterexample(&config, &out).map(|files| (files, true))
        }
    };

    match outcome {
        Ok((files, passed)) => {
            for file in files {
                println!("wrote {}", file.display());
            }
            if passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
