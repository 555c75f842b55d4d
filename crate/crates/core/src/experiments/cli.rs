//! Command-line driver: one experiment run, CSV and SVG outputs, printed rates.

use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;
use thiserror::Error;

use crate::adaptivity::{adapt_loop_with, AdaptConfig, AdaptError};
use crate::assembly::AssemblyMode;
use crate::experiments::{
    convergence_svg, experiment, mesh_svg, rate, write_csv_file, Axis, ProblemError, Quantity, RunRecord, Series,
};
use crate::mesh::{Mesh, Scaling};
use crate::solver::{SolverKind, SolverOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Uniform,
    #[default]
    Adaptive,
}

fn lower<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

/// Run settings; every field may also come from the config file.
#[derive(Debug, Parser)]
#[command(name = "heat-dpg", about = "Space-time DPG solver for the 1D heat equation", version)]
pub struct Args {
    /// Experiment number (1: smooth, 2: checkerboard load, 3: jump initial data, 4: singular load).
    #[arg(long)]
    pub experiment: Option<u32>,
    /// Exponent of the singular load of experiment 4.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Direction of the singular load: space or time.
    #[arg(long, value_parser = lower::<Axis>)]
    pub axis: Option<Axis>,
    /// Refinement rule: equal or parabolic.
    #[arg(long, value_parser = lower::<Scaling>)]
    pub scaling: Option<Scaling>,
    /// uniform or adaptive.
    #[arg(long, value_parser = lower::<Mode>)]
    pub mode: Option<Mode>,
    /// Dörfler parameter.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Stop once the trace dimension exceeds this value.
    #[arg(long)]
    pub ndof_max: Option<usize>,
    /// Mark by the residual alone.
    #[arg(long)]
    pub residual_only_marking: bool,
    /// Linear solver: cholesky or pcg.
    #[arg(long, value_parser = lower::<SolverKind>)]
    pub solver: Option<SolverKind>,
    /// Solve the trace-only system obtained by static condensation.
    #[arg(long)]
    pub condensed: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` file with defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<u32>,
    pub alpha: Option<f64>,
    pub axis: Option<Axis>,
    pub scaling: Option<Scaling>,
    pub mode: Option<Mode>,
    pub theta: Option<f64>,
    pub ndof_max: Option<usize>,
    pub residual_only_marking: Option<bool>,
    pub solver: Option<SolverKind>,
    pub condensed: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing --experiment (or `experiment = N` in the config file)")]
    MissingExperiment,
    #[error("cannot read config file {path}: {source}")]
    ConfigRead { path: PathBuf, source: std::io::Error },
    #[error("invalid config file {path}: {source}")]
    ConfigParse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("cannot write to {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Run(#[from] AdaptError),
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub experiment: u32,
    pub alpha: f64,
    pub axis: Axis,
    pub mode: Mode,
    pub config: AdaptConfig,
    pub out: PathBuf,
}

impl RunSettings {
    pub fn resolve(args: &Args) -> Result<RunSettings, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| CliError::ConfigRead { path: path.clone(), source })?;
                toml::from_str::<ConfigFile>(&text)
                    .map_err(|e| CliError::ConfigParse { path: path.clone(), source: Box::new(e) })?
            }
            None => ConfigFile::default(),
        };
        let experiment = args.experiment.or(file.experiment).ok_or(CliError::MissingExperiment)?;
        let mode = args.mode.or(file.mode).unwrap_or_default();
        let defaults = AdaptConfig::default();
        let solver = SolverOptions { kind: args.solver.or(file.solver).unwrap_or_default(), ..defaults.solver };
        let config = AdaptConfig {
            scaling: args.scaling.or(file.scaling).unwrap_or(defaults.scaling),
            theta: args.theta.or(file.theta).unwrap_or(defaults.theta),
            uniform: mode == Mode::Uniform,
            ndof_max: args.ndof_max.or(file.ndof_max).unwrap_or(defaults.ndof_max),
            residual_only: args.residual_only_marking || file.residual_only_marking.unwrap_or(false),
            solver,
            assembly: if args.condensed || file.condensed.unwrap_or(false) {
                AssemblyMode::Condensed
            } else {
                AssemblyMode::Full
            },
        };
        Ok(RunSettings {
            experiment,
            alpha: args.alpha.or(file.alpha).unwrap_or(0.0),
            axis: args.axis.or(file.axis).unwrap_or(Axis::Space),
            mode,
            config,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn stem(&self) -> String {
        let scaling = match self.config.scaling {
            Scaling::Equal => "equal",
            Scaling::Parabolic => "parabolic",
        };
        let mode = match self.mode {
            Mode::Uniform => "uniform",
            Mode::Adaptive => "adaptive",
        };
        let mut stem = format!("exp{}", self.experiment);
        if self.experiment == 4 {
            stem.push_str(&format!("_{}_alpha{}", self.axis, self.alpha));
        }
        format!("{stem}_{scaling}_{mode}")
    }
}

pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub final_mesh: Mesh,
    pub regularized: bool,
}

pub fn execute(settings: &RunSettings) -> Result<RunOutput, CliError> {
    let problem = experiment(settings.experiment, settings.alpha, settings.axis)?;
    let mut final_mesh = None;
    let mut regularized = false;
    let records = adapt_loop_with(&problem, &settings.config, Mesh::new_uniform(2, 2).map_err(AdaptError::from)?, |s| {
        final_mesh = Some(s.mesh.clone());
        regularized |= s.indicator.regularized;
    })?;
    Ok(RunOutput { records, final_mesh: final_mesh.expect("at least one iteration"), regularized })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

/// Runs one configured experiment and writes its outputs; returns the report printed to stdout.
pub fn run_settings(settings: &RunSettings) -> Result<String, CliError> {
    experiment(settings.experiment, settings.alpha, settings.axis)?;
    std::fs::create_dir_all(&settings.out)
        .map_err(|source| CliError::Output { path: settings.out.clone(), source })?;
    let out = execute(settings)?;
    let stem = settings.stem();
    let csv_path = settings.out.join(format!("{stem}.csv"));
    write_csv_file(&out.records, &csv_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Output { path: csv_path.clone(), source },
        kind => CliError::Csv(csv::Error::from(std::io::Error::other(format!("{kind:?}")))),
    })?;

    let series: Vec<Series> = Quantity::ALL
        .iter()
        .map(|q| Series { label: q.name(), points: q.series(&out.records) })
        .filter(|s| !s.points.is_empty())
        .collect();
    let guides = [(-1.0, "ndof^-1"), (-2.0 / 3.0, "ndof^-2/3")];
    write(&settings.out.join(format!("{stem}.svg")), &convergence_svg(&stem, &series, &guides))?;
    let dump = out.final_mesh.dump();
    write(&settings.out.join(format!("{stem}_mesh.txt")), &dump)?;
    let reread = Mesh::from_dump(&dump).map_err(AdaptError::from)?;
    write(&settings.out.join(format!("{stem}_mesh.svg")), &mesh_svg(&reread))?;

    let mut report = format!("{stem}: {} solves, final ndof {}\n", out.records.len(), out.records.last().map_or(0, |r| r.ndof));
    for q in Quantity::ALL {
        if let Ok(r) = rate(&out.records, q) {
            report.push_str(&format!("rate {:<10} {r:.3}\n", q.name()));
        }
    }
    if out.regularized {
        report.push_str("note: load not square integrable; oscillation terms are quadrature-regularized\n");
    }
    report.push_str(&format!("wrote {}\n", csv_path.display()));
    Ok(report)
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = RunSettings::resolve(&args).and_then(|s| run_settings(&s));
    match result {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(CliError::MissingExperiment) => {
            eprintln!("error: {}", CliError::MissingExperiment);
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
