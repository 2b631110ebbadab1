//! Command-line runner for the multi-particle localization experiments.
//!
//! Every subcommand reads the same configuration, runs one experiment and
//! writes `<subcommand>.csv` and `<subcommand>.summary.json` into the output
//! directory. Exit codes: 0 success, 1 I/O, 2 configuration or usage,
//! 3 numeric failure, 4 resource limit.

pub mod config;
mod experiments;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::json;

use crate::config::{FlagOverrides, LoadedConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Resource(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Resource(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric error: {m}"),
            Failure::Resource(m) => write!(f, "resource error: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<msalab_core::Error> for Failure {
    fn from(e: msalab_core::Error) -> Self {
        use msalab_core::Error;
        let msg = e.to_string();
        match e {
            Error::Domain(_) | Error::Config(_) => Failure::Config(msg),
            Error::Numeric { .. } | Error::SpectralCollision { .. } => Failure::Numeric(msg),
            Error::Resource(_) => Failure::Resource(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// One realisation of the random field on the cube's field box.
    SampleField,
    /// Mixing, log-Hölder and independence diagnostics of the field.
    Mixing,
    /// Lowest eigenvalues of one sampled Hamiltonian.
    Spectrum,
    /// (E, m)-nonsingularity verdicts for one sampled cube.
    NsTest,
    /// Resolvent decay against the Combes–Thomas envelope.
    CombesThomas,
    /// Large-deviation probabilities of the field average.
    Ldp,
    /// Monte Carlo probability of a low ground energy.
    McEdge,
    /// Monte Carlo probability of an (E, m)-singular cube.
    McSingular,
    /// Exponential decay fits of the lowest eigenvectors.
    DecayFit,
    /// Position moments of spectrally filtered wave packets over time.
    Dynamics,
    /// Singularity probabilities along the scale sequence.
    ScalingRun,
}

impl Subcommand {
    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "msalab", version, about = "Multi-scale analysis experiments for correlated multi-particle Anderson models")]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Override a configuration key, e.g. `--set mc.trials=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Master seed (mc.master_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (output.directory).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker threads (mc.workers); results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also write the sampled Hamiltonian in MatrixMarket format.
    #[arg(long, global = true)]
    export_matrix: bool,
}

/// Parses `args` (including the program name), runs the experiment and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("MSALAB_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(f) => {
            eprintln!("msalab: {f}");
            f.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, Failure> {
    let flags = FlagOverrides {
        sets: cli.sets.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        workers: cli.workers,
    };
    let loaded = config::load(cli.config.as_deref(), &flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(loaded.config.mc.workers)
        .build()
        .map_err(|e| Failure::Resource(format!("cannot start worker pool: {e}")))?;
    let artifacts = pool.install(|| experiments::run(cli.command, &loaded.config))?;
    write_outputs(cli, &loaded, artifacts)
}

fn write_outputs(cli: &Cli, loaded: &LoadedConfig, artifacts: experiments::Artifacts) -> Result<Vec<PathBuf>, Failure> {
    let c = &loaded.config;
    let dir = Path::new(&c.output.directory);
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let name = cli.command.name();
    let mut written = Vec::new();
    let mut write = |file: String, contents: &str| -> Result<(), Failure> {
        let path = dir.join(file);
        std::fs::write(&path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };
    if c.output.wants("csv") {
        write(format!("{name}.csv"), &artifacts.csv)?;
    }
    if c.output.wants("json") {
        let summary = json!({
            "tool": "msalab",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": name,
            "master_seed": c.mc.master_seed,
            "config": c,
            "results": artifacts.results,
        });
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serialises to JSON");
        text.push('\n');
        write(format!("{name}.summary.json"), &text)?;
    }
    if cli.export_matrix {
        match &artifacts.matrix {
            Some(m) => write(format!("{name}.mtx"), m)?,
            None => log::warn!("{name} builds no single Hamiltonian; --export-matrix ignored"),
        }
    }
    Ok(written)
}
