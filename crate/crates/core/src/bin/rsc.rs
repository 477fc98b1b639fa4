use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsc_core::experiments::{accounting_table, run, CommandKind, RunConfig, SweepProblem};
use rsc_core::rsc::AccountingBound;

#[derive(Parser)]
#[command(
    name = "rsc",
    version,
    about = "Private interior point, learners and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long)]
    seed: u64,
    /// Universe bits L (domain [0, 2^L)).
    #[arg(long, default_value_t = 32)]
    bits: u32,
    /// Write the JSON record here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Interior point of a newline-delimited dataset.
    Ipp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Threshold learning from `x,label` rows.
    LearnThreshold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        xi: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
    },
    /// Rectangle learning from `c_1,...,c_d,label` rows.
    LearnRect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Reject inputs whose points do not have this many coordinates.
        #[arg(long)]
        dims: Option<usize>,
    },
    /// Quasi-concave optimization over `y,score` rows.
    QcOpt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        constant_c: f64,
    },
    /// Exact checks of the synchronization mapping.
    AuditSync {
        #[command(flatten)]
        common: Common,
    },
    /// Holder-call counts of the simulator on an adversarial instance.
    AuditSim {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 16)]
        tau: usize,
        /// Dataset is {1..n} with the extra element 0.
        #[arg(long, default_value_t = 300)]
        n: u64,
    },
    /// Minimal sample size for a success target, by bisection.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Problem::Ipp)]
        problem: Problem,
        /// Universe bits (ipp, threshold) or dimensions (rect).
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 16, 32, 64])]
        values: Vec<u32>,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        /// CSV table path (default: output path with .csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Explicit privacy bound of the slicing engine.
    Accounting {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        tau: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1e-6)]
        delta_hat: f64,
        #[arg(long, default_value_t = 1)]
        applications: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Ipp,
    Threshold,
    Rect,
}

fn with_common(kind: CommandKind, c: Common) -> RunConfig {
    let mut cfg = RunConfig::new(kind);
    cfg.epsilon = c.epsilon;
    cfg.delta = c.delta;
    cfg.seed = c.seed;
    cfg.bits = c.bits;
    cfg.output = c.output;
    cfg
}

fn config(cmd: Command) -> RunConfig {
    match cmd {
        Command::Ipp { common, input } => {
            let mut cfg = with_common(CommandKind::Ipp, common);
            cfg.input = Some(input);
            cfg
        }
        Command::LearnThreshold {
            common,
            input,
            xi,
            beta,
        } => {
            let mut cfg = with_common(CommandKind::LearnThreshold, common);
            cfg.input = Some(input);
            cfg.xi = xi;
            cfg.beta = beta;
            cfg
        }
        Command::LearnRect {
            common,
            input,
            dims,
        } => {
            let mut cfg = with_common(CommandKind::LearnRect, common);
            cfg.input = Some(input);
            cfg.dims = dims;
            cfg
        }
        Command::QcOpt {
            common,
            input,
            constant_c,
        } => {
            let mut cfg = with_common(CommandKind::QcOpt, common);
            cfg.input = Some(input);
            cfg.constant_c = constant_c;
            cfg
        }
        Command::AuditSync { common } => with_common(CommandKind::AuditSync, common),
        Command::AuditSim {
            common,
            trials,
            tau,
            n,
        } => {
            let mut cfg = with_common(CommandKind::AuditSim, common);
            cfg.trials = trials;
            cfg.tau = tau;
            cfg.sim_n = n;
            cfg
        }
        Command::Sweep {
            common,
            problem,
            values,
            trials,
            target,
            csv,
        } => {
            let mut cfg = with_common(CommandKind::Sweep, common);
            cfg.sweep_problem = match problem {
                Problem::Ipp => SweepProblem::Ipp,
                Problem::Threshold => SweepProblem::Threshold,
                Problem::Rect => SweepProblem::Rectangle,
            };
            cfg.sweep_values = values;
            cfg.trials = trials;
            cfg.target = target;
            cfg.csv = csv;
            cfg
        }
        Command::Accounting {
            epsilon,
            delta,
            tau,
            k,
            delta_hat,
            applications,
            output,
        } => {
            let mut cfg = RunConfig::new(CommandKind::Accounting);
            cfg.epsilon = epsilon;
            cfg.delta = delta;
            cfg.tau = tau;
            cfg.k = k;
            cfg.delta_hat = delta_hat;
            cfg.applications = applications;
            cfg.output = output;
            cfg
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = config(cli.command);
    let record = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cfg.command == CommandKind::Accounting {
        if let Ok(bound) = serde_json::from_value::<AccountingBound>(record.payload.clone()) {
            eprint!("{}", accounting_table(&bound));
        }
    }
    if let Some(err) = &record.error {
        eprintln!("error: {err}");
    }
    if cfg.output.is_none() {
        // a closed pipe is not worth a panic
        let _ = writeln!(std::io::stdout(), "{}", record.to_json());
    }
    if record.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
