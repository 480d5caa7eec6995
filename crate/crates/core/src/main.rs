use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ks_particles::runner::{self, Command};

/// Keller–Segel particle experiments with reproducible run manifests.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set simulation.n_particles=128`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory [default: $KSP_OUTPUT_DIR/<command> or runs/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: $KSP_WORKERS or all cores].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Kernel norm scaling and time-integral oracle checks.
    KernelCheck {
        #[command(flatten)]
        common: Common,
        /// Only check these exponents.
        #[arg(long)]
        p: Vec<f64>,
    },
    /// Simulate the particle system and write a path dump.
    Simulate(Common),
    /// Solve the Keller–Segel PDE and write snapshots.
    Pde(Common),
    /// Propagation-of-chaos study against the PDE density.
    Chaos(Common),
    /// Monte Carlo estimators: window scaling, exponential moments, Girsanov weights.
    Stochastic(Common),
    /// Drift cost with and without the far-field cutoff.
    Bench(Common),
    /// Print the default configuration of a command.
    DefaultConfig { command: String },
    /// Re-run a manifest and compare output checksums.
    Verify {
        run_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn execute(cmd: Command, common: Common, extra: Vec<String>) -> Result<i32, ks_particles::Error> {
    let text = common.config.as_ref().map(std::fs::read_to_string).transpose()?;
    let mut overrides = common.overrides;
    overrides.extend(extra);
    let table = runner::effective_config(cmd, text.as_deref(), &overrides)?;
    let dir = runner::resolve_output_dir(common.out, cmd);
    let outcome = runner::run(cmd, &table, &dir, runner::resolve_workers(common.workers))?;
    print!("{}", outcome.summary);
    println!("{}: {:?}, outputs in {}", cmd.name(), outcome.status, dir.display());
    Ok(outcome.status.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::KernelCheck { common, p } => {
            let extra = if p.is_empty() {
                Vec::new()
            } else {
                let list: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
                vec![format!("p_values=[{}]", list.join(","))]
            };
            execute(Command::KernelCheck, common, extra)
        }
        Cmd::Simulate(c) => execute(Command::Simulate, c, Vec::new()),
        Cmd::Pde(c) => execute(Command::Pde, c, Vec::new()),
        Cmd::Chaos(c) => execute(Command::Chaos, c, Vec::new()),
        Cmd::Stochastic(c) => execute(Command::Stochastic, c, Vec::new()),
        Cmd::Bench(c) => execute(Command::Bench, c, Vec::new()),
        Cmd::DefaultConfig { command } => match Command::from_name(&command) {
            Some(cmd) => {
                print!("{}", toml::to_string(&cmd.default_config()).expect("default config serialises"));
                Ok(0)
            }
            None => Err(ks_particles::Error::Config(format!("unknown command `{command}`"))),
        },
        Cmd::Verify { run_dir, workers } => {
            let scratch = run_dir.join(".verify");
            let report = runner::verify_run(&run_dir, &scratch, runner::resolve_workers(workers));
            let _ = std::fs::remove_dir_all(&scratch);
            report.map(|r| {
                for (path, ok) in &r.files {
                    println!("{} {path}", if *ok { "same" } else { "DIFFERENT" });
                }
                i32::from(!r.all_match())
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::error_exit_code(&e) as u8)
        }
    }
}
