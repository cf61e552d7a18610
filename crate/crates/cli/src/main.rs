use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rte_cli::config::{ExperimentConfig, Overrides};
use rte_cli::experiment::{self, Outputs, SeriesReport, Timings};
use rte_cli::verify;
use rte_core::grid::{GridSpec, ScalarField};
use rte_core::pipeline::Solver;
use rte_core::rawio::{self, write_json};
use rte_core::scene::{add_noise, make_phantom};
use rte_core::visibility::visibility_map;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rte", version, about = "Partial-data radiative transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON), or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.apply(&self.overrides);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured phantom.
    Phantom(Common),
    /// Solve the forward problem and write the boundary data.
    Forward {
        #[command(flatten)]
        common: Common,
        /// Source field to use instead of the configured phantom.
        #[arg(long)]
        phantom: Option<PathBuf>,
    },
    /// Add relative Gaussian noise to boundary data.
    Noise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Apply the adjoint to boundary data, or the full normal operator to a source.
    Normal {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "phantom")]
        data: Option<PathBuf>,
        #[arg(long)]
        phantom: Option<PathBuf>,
    },
    /// Compute the visibility map of the configured medium and cutoff.
    Visibility(Common),
    /// Compare the fast solvers against the oracles.
    Verify {
        #[arg(long, default_value_t = 128)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        nd: usize,
    },
    /// Run the whole pipeline and write a manifest.
    Run(Common),
}

/// Input files fix the grid; a differing config grid is replaced.
fn adopt_grid(config: &mut ExperimentConfig, spec: GridSpec, path: &Path) {
    if (config.grid.n_x, config.grid.n_d) != (spec.n_x, spec.n_d) {
        eprintln!("using grid {}x{} from {}", spec.n_x, spec.n_d, path.display());
        config.grid.n_x = spec.n_x;
        config.grid.n_d = spec.n_d;
    }
}

fn load_phantom(config: &mut ExperimentConfig, path: Option<&Path>) -> Result<ScalarField> {
    match path {
        Some(p) => {
            let f = rawio::load_scalar(p).with_context(|| format!("loading {}", p.display()))?;
            adopt_grid(config, f.spec, p);
            Ok(f)
        }
        None => Ok(make_phantom(&config.phantom.spec()?, config.grid_spec()?)?),
    }
}

#[derive(Serialize)]
struct StageReport<'a> {
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    forward: Option<SeriesReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adjoint: Option<SeriesReport>,
    artifacts: &'a [experiment::Artifact],
    timings_seconds: Timings,
}

fn report(out: &Outputs, name: &str, config: &ExperimentConfig, stage: StageParts) -> Result<()> {
    let r = StageReport {
        config,
        forward: stage.forward,
        adjoint: stage.adjoint,
        artifacts: &out.artifacts,
        timings_seconds: stage.timings,
    };
    write_json(&out.dir().join(format!("{name}.json")), &r)?;
    for a in &out.artifacts {
        println!("{}", out.dir().join(&a.file).display());
    }
    Ok(())
}

#[derive(Default)]
struct StageParts {
    forward: Option<SeriesReport>,
    adjoint: Option<SeriesReport>,
    timings: Timings,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Phantom(common) => {
            let mut config = common.resolve()?;
            let f = load_phantom(&mut config, None)?;
            let mut out = Outputs::create(&config.outputs)?;
            out.scalar("phantom", &f)?;
            report(&out, "phantom", &config, StageParts::default())?;
        }
        Command::Forward { common, phantom } => {
            let mut config = common.resolve()?;
            let f = load_phantom(&mut config, phantom.as_deref())?;
            let mut parts = StageParts::default();
            let medium = parts.timings.time("medium", || config.build_medium())?;
            let solver = parts.timings.time("setup", || Ok(Solver::new(&medium, &config.cutoff)?))?;
            let fwd = parts.timings.time("forward", || Ok(solver.forward(&f, config.truncation.m1)?))?;
            let mut out = Outputs::create(&config.outputs)?;
            experiment::write_forward(&mut out, &fwd)?;
            parts.forward = Some((&fwd).into());
            report(&out, "forward", &config, parts)?;
        }
        Command::Noise { common, data } => {
            let mut config = common.resolve()?;
            let b = rawio::load_boundary(&data).with_context(|| format!("loading {}", data.display()))?;
            adopt_grid(&mut config, b.spec, &data);
            let noisy = add_noise(&b, &config.noise)?;
            let mut out = Outputs::create(&config.outputs)?;
            out.boundary("noisy", &noisy)?;
            report(&out, "noise", &config, StageParts::default())?;
        }
        Command::Normal { common, data, phantom } => {
            let mut config = common.resolve()?;
            let mut parts = StageParts::default();
            let b = match &data {
                Some(p) => {
                    let b = rawio::load_boundary(p).with_context(|| format!("loading {}", p.display()))?;
                    adopt_grid(&mut config, b.spec, p);
                    Some(b)
                }
                None => None,
            };
            let f = if b.is_none() { Some(load_phantom(&mut config, phantom.as_deref())?) } else { None };
            let medium = parts.timings.time("medium", || config.build_medium())?;
            let solver = parts.timings.time("setup", || Ok(Solver::new(&medium, &config.cutoff)?))?;
            let b = match (b, f) {
                (Some(b), _) => b,
                (None, Some(f)) => {
                    let fwd = parts.timings.time("forward", || Ok(solver.forward(&f, config.truncation.m1)?))?;
                    parts.forward = Some((&fwd).into());
                    fwd.data
                }
                (None, None) => bail!("normal needs --data or a phantom"),
            };
            let n = parts.timings.time("adjoint", || Ok(solver.adjoint(&b, config.truncation.m2)?))?;
            let mut out = Outputs::create(&config.outputs)?;
            out.scalar("normal", &n.image)?;
            parts.adjoint = Some((&n).into());
            report(&out, "normal", &config, parts)?;
        }
        Command::Visibility(common) => {
            let config = common.resolve()?;
            let mut parts = StageParts::default();
            let medium = config.build_medium()?;
            let grid = config.grid_spec()?;
            let map = parts
                .timings
                .time("visibility", || Ok(visibility_map(grid, &medium, &config.cutoff, config.visibility.n_xi)?))?;
            let mut out = Outputs::create(&config.outputs)?;
            out.visibility("visibility", &map)?;
            report(&out, "visibility", &config, parts)?;
        }
        Command::Verify { nx, nd } => {
            let checks = verify::run_checks(GridSpec::new(nx, nd)?)?;
            print!("{}", verify::format_table(&checks));
            return Ok(checks.iter().all(verify::Check::passed));
        }
        Command::Run(common) => {
            let config = common.resolve()?;
            let manifest = experiment::run_experiment(&config)?;
            let dir = &config.outputs.directory;
            println!("{}", dir.join(experiment::MANIFEST_FILE).display());
            for a in &manifest.artifacts {
                println!("{}", dir.join(&a.file).display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
