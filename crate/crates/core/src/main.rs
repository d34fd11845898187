use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pexstab::control::corollary_coefficients;
use pexstab::harness::selftest::{selftest, SelftestOptions};
use pexstab::harness::{self, ExperimentConfig, HarnessError, EXIT_CONFIG, EXIT_OK, EXIT_SELFTEST_FAILED};

/// Fixed-point stability experiments for the K-averaged Pexider equation.
#[derive(Parser)]
#[command(name = "pexstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration end to end and write the JSON report.
    Stabilize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the solution-space bases for a configuration's carrier and K.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the invariant suite and the acceptance scenarios.
    Selftest {
        /// Exponent for the β-norm axiom check (default: several valid β).
        #[arg(long)]
        norm_exponent: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the power-control bound coefficients.
    Coeffs {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        beta: f64,
        /// Order of K.
        #[arg(long = "K")]
        order: usize,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("PEXSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("PEXSTAB_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("PEXSTAB_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn fail(e: impl std::fmt::Display, code: i32) -> i32 {
    eprintln!("error: {e}");
    code
}

fn exec(cmd: Command) -> i32 {
    match cmd {
        Command::Stabilize { config, out } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e, e.exit_code()),
            };
            let report = harness::run(&cfg);
            if let Err(e) = std::fs::write(&out, report.to_json() + "\n") {
                return fail(HarnessError::Io(format!("{}: {e}", out.display())), EXIT_CONFIG);
            }
            match &report.status.error {
                Some(e) => fail(e, report.status.exit_code),
                None => {
                    if let Some(s) = &report.stability {
                        println!(
                            "L = {}, strategy {:?}, min bound margin {:e}, report {}",
                            s.lipschitz,
                            s.strategy,
                            s.bounds.min_margin(),
                            out.display()
                        );
                    }
                    EXIT_OK
                }
            }
        }
        Command::Oracle { config } => match ExperimentConfig::load(&config).and_then(|c| harness::oracle_dump(&c)) {
            Ok(dump) => {
                println!("{}", serde_json::to_string_pretty(&dump).expect("dump serializes"));
                EXIT_OK
            }
            Err(e) => fail(&e, e.exit_code()),
        },
        Command::Selftest { norm_exponent, seed } => {
            let summary = selftest(&SelftestOptions {
                norm_exponent,
                seed,
                ..Default::default()
            });
            for line in summary.lines() {
                println!("{line}");
            }
            if summary.passed() {
                println!("selftest passed");
                EXIT_OK
            } else {
                println!("selftest FAILED");
                EXIT_SELFTEST_FAILED
            }
        }
        Command::Coeffs { theta, p, beta, order } => match corollary_coefficients(theta, p, beta, order) {
            Ok(c) => {
                println!("{}", serde_json::to_string_pretty(&c).expect("coefficients serialize"));
                EXIT_OK
            }
            Err(e) => fail(e, EXIT_CONFIG),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = configure_threads() {
        return ExitCode::from(fail(e, EXIT_CONFIG) as u8);
    }
    ExitCode::from(exec(cli.command) as u8)
}
