use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relaybf::harness::{preset, run_bounds_lab, run_scenario, selftest, RunOutput, Scenario, PRESET_NAMES};
use relaybf::Error;

/// Relay beamforming scenario runner.
#[derive(Parser)]
#[command(name = "relaybf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a scenario file and write CSV and SVG output.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sample the tail-bound events around relaxation solutions of the scenario's network.
    Bounds {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print a built-in scenario file.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        name: String,
    },
    /// Run quick built-in checks.
    Selftest,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tol_gamma: Option<f64>,
}

impl Overrides {
    fn load(&self, path: &PathBuf) -> Result<Scenario, Error> {
        let mut s = Scenario::load(path)?;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.trials {
            s.trials = v;
        }
        if let Some(v) = self.candidates {
            s.candidates = v;
        }
        if let Some(v) = &self.out {
            s.out_dir = v.clone();
        }
        if let Some(v) = self.tol_gamma {
            s.tol_gamma = v;
        }
        s.validate().map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        Ok(s)
    }

    fn pool(&self) -> Result<(), Error> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(Error::InvalidArgument("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        Ok(())
    }
}

fn usage_error(e: &Error) -> bool {
    matches!(e, Error::Config { .. } | Error::InvalidArgument(_))
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if usage_error(&e) { 1 } else { 2 })
}

fn report(out: &RunOutput) {
    match out {
        RunOutput::Sweep(res, path) => {
            let failures: usize = res.points.iter().map(|p| p.failures).sum();
            println!("wrote {} ({} points, {failures} failed trials)", path.display(), res.points.len());
        }
        RunOutput::Bounds(res, paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            let violated: usize = res
                .instances
                .iter()
                .flat_map(|i| i.lemma1.iter().chain(std::iter::once(&i.lemma2)))
                .map(|r| r.violations().len())
                .sum();
            println!("{} instances, {violated} grid points above bound plus 3 sigma", res.instances.len());
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match cli.command {
        Command::Run { config, overrides } => {
            let s = match overrides.pool().and_then(|_| overrides.load(&config)) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match run_scenario(&s) {
                Ok(out) => {
                    report(&out);
                    ExitCode::SUCCESS
                }
                Err(e) => fail_runtime(e),
            }
        }
        Command::Bounds { config, overrides } => {
            let s = match overrides.pool().and_then(|_| overrides.load(&config)) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match run_bounds_lab(&s).and_then(|res| {
                let paths = res.write(&s.out_dir)?;
                Ok(RunOutput::Bounds(res, paths))
            }) {
                Ok(out) => {
                    report(&out);
                    ExitCode::SUCCESS
                }
                Err(e) => fail_runtime(e),
            }
        }
        Command::Preset { name } => {
            print!("{}", preset(&name).expect("name validated by clap").to_toml());
            ExitCode::SUCCESS
        }
        Command::Selftest => {
            let checks = selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn fail_runtime(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}
