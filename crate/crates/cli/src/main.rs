use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use tango_cli::fig1::{self, Fig1Options};
use tango_cli::suite::{self, SuiteOptions};
use tango_cli::{registry, resolve_config, seed_override, sweep};

#[derive(Parser)]
#[command(
    name = "tango",
    version,
    about = "Two-timescale natural gradient experiments and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file or built-in name.
    Run {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the Gaussian figure: four trajectories and plot data.
    Fig1 {
        #[arg(long, default_value = "fig1")]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
        #[arg(long, default_value_t = 20_000)]
        sgd_steps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a (gamma, delta_t, seed) grid against the reference flow.
    Sweep {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Run verification checks: prop2, lemma6, lemma7, lemma11, martingale,
    /// rate, fixed-point, fisher, reductions, or all.
    Verify {
        #[arg(required = true)]
        selector: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Run the velocity-bound checks at gamma = F / R^2 only.
        #[arg(long)]
        gamma_factor: Option<f64>,
        #[arg(long, default_value = "verify")]
        out: PathBuf,
    },
    /// List the built-in configs.
    List,
    /// Print a built-in config as TOML.
    Show { name: String },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = resolve_config(&config)?;
            let dir = tango_cli::output_dir(&cfg, out);
            let done = tango_cli::run_experiment(&cfg, &dir)?;
            print!("{}", done.summary.key_values().render());
            println!("[ok] wrote {}", done.csv.display());
        }
        Command::Fig1 {
            out,
            horizon,
            sgd_steps,
            seed,
        } => {
            let mut opts = Fig1Options {
                horizon,
                sgd_steps,
                ..Fig1Options::default()
            };
            if let Some(s) = seed.or(seed_override()?) {
                opts.seed = s;
            }
            let result = fig1::run_fig1(&opts)?;
            fig1::write_fig1(&result, &out)?;
            print!("{}", result.key_values().render());
            println!(
                "[{}] wrote {}",
                if result.passed() { "ok" } else { "fail" },
                out.display()
            );
            if !result.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Sweep { config, out, jobs } => {
            let cfg = resolve_config(&config)?;
            let dir = tango_cli::output_dir(&cfg, out);
            let result = sweep::run_sweep(&cfg, jobs)?;
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.sweep.csv", cfg.name));
            sweep::write_sweep_csv(&path, &result)?;
            for (gamma, dt, err) in result.mean_errors() {
                println!("gamma = {gamma:e}  delta_t = {dt:e}  mean_endpoint_error = {err:e}");
            }
            let diverged = result.rows.iter().filter(|r| r.diverged).count();
            println!(
                "[ok] {} cells, {diverged} diverged; wrote {}",
                result.rows.len(),
                path.display()
            );
        }
        Command::Verify {
            selector,
            seed,
            jobs,
            gamma_factor,
            out,
        } => {
            let names = suite::resolve(&selector)?;
            let opts = SuiteOptions {
                seed: seed.or(seed_override()?).unwrap_or_default(),
                gamma_factor,
            };
            let results = suite::run_suite(&names, &opts, jobs)?;
            suite::write_reports(&out, &results)?;
            print!("{}", suite::render_table(&results));
            let passed = results.iter().all(|c| c.passed);
            println!(
                "[{}] reports in {}",
                if passed { "pass" } else { "fail" },
                out.display()
            );
            if !passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::List => {
            for name in registry::NAMES {
                println!("{name}");
            }
        }
        Command::Show { name } => {
            let cfg = registry::builtin(&name)
                .ok_or_else(|| anyhow::anyhow!("no built-in config `{name}`"))?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
