//! The `mmlab` experiment runner.

pub mod config;
mod experiments;
pub mod report;

use std::fmt;

pub use config::{ExperimentConfig, ExperimentKind, FieldName, FieldSpec, MolecularSource};
pub use report::{Check, Report, Table};

use crate::exec::Executor;
use crate::paths::Sampling;
use crate::weights::{
    make_hydrogenic_field, make_molecular_field, make_ou_field, ConstantField, MolecularSpec, Nucleus, SlaterProductProvider, WeightField,
};

/// Exit status for a run whose checks all passed.
pub const EXIT_OK: i32 = 0;
/// Exit status for configuration and setup errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status when at least one check failed.
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Model(crate::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Model(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Everything an experiment needs besides the raw config.
pub struct Setup {
    pub field: Box<dyn WeightField>,
    /// Geometry of the singular set, when the field has one.
    pub sigma: Option<MolecularSpec>,
    pub sampling: Sampling,
    pub start: Vec<f64>,
}

fn integer_param(spec: &FieldSpec, key: &str, default: usize) -> Result<usize, CliError> {
    let v = spec.param(key, default as f64);
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e6 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!("field parameter {key} must be a positive integer, got {v}")))
    }
}

/// Electron `i` sits at distance `1 + i` from nucleus `i mod m` along axis `i mod 3`.
fn default_start(spec: &MolecularSpec) -> Vec<f64> {
    let m = spec.nuclei.len();
    let mut x = Vec::with_capacity(spec.dim());
    for i in 0..spec.electrons {
        let mut p = spec.nuclei[i % m].position;
        p[i % 3] += 1.0 + i as f64;
        x.extend_from_slice(&p);
    }
    x
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    cfg.validate()?;
    let (field, sigma): (Box<dyn WeightField>, Option<MolecularSpec>) = match cfg.field.name {
        FieldName::Hydrogenic => {
            let z = cfg.field.param("z", 1.0);
            let spec = if z.fract() == 0.0 && z >= 1.0 && z <= u32::MAX as f64 {
                MolecularSpec::hydrogen_like(z as u32)
            } else {
                MolecularSpec::hydrogen_like(1)
            };
            (Box::new(make_hydrogenic_field(z)?), Some(spec))
        }
        FieldName::Ou => {
            let dim = integer_param(&cfg.field, "dim", 1)?;
            (Box::new(make_ou_field(cfg.field.param("kappa", 1.0), dim)?), None)
        }
        FieldName::Zero => {
            let dim = integer_param(&cfg.field, "dim", 3)?;
            let sigma = (dim % 3 == 0).then(|| MolecularSpec {
                nuclei: vec![Nucleus { position: [0.0; 3], charge: 1 }],
                electrons: dim / 3,
            });
            (Box::new(ConstantField::zero(dim)), sigma)
        }
        FieldName::Molecular => {
            let spec = cfg
                .molecular()
                .cloned()
                .ok_or_else(|| CliError::Config("field 'molecular' needs an inline or resolved molecular_spec".into()))?;
            let provider = SlaterProductProvider { spec: spec.clone() };
            (Box::new(make_molecular_field(spec.clone(), provider)?), Some(spec))
        }
    };
    let sigma = match (cfg.molecular(), sigma) {
        (Some(spec), _) if spec.dim() == field.dim() => Some(spec.clone()),
        (_, s) => s,
    };
    let start = match &cfg.start {
        Some(x) => x.clone(),
        None => sigma.as_ref().map_or_else(|| vec![0.0; field.dim()], default_start),
    };
    if start.len() != field.dim() {
        return Err(CliError::Config(format!("start has {} coordinates, field dimension is {}", start.len(), field.dim())));
    }
    if let Some(p) = cfg.probes.iter().find(|p| p.len() != field.dim()) {
        return Err(CliError::Config(format!("probe {p:?} does not have {} coordinates", field.dim())));
    }
    let exec = match cfg.workers {
        Some(n) => Executor::with_workers(n)?,
        None => Executor::parallel(),
    };
    let sampling = Sampling::new(cfg.n_paths, cfg.dt, cfg.seed).with_escape_radius(cfg.escape_radius).with_exec(exec);
    Ok(Setup { field, sigma, sampling, start })
}

/// Runs the configured experiment without writing anything.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(cfg)?;
    experiments::dispatch(cfg, &s)
}

/// Runs the experiment, writes `summary.json` and `detail.csv`, and maps the
/// outcome to an exit status.
pub fn execute(cfg: &ExperimentConfig) -> (i32, Result<Report, CliError>) {
    match run(cfg).and_then(|r| {
        r.write(cfg)?;
        Ok(r)
    }) {
        Ok(r) if r.passed() => (EXIT_OK, Ok(r)),
        Ok(r) => (EXIT_VIOLATION, Ok(r)),
        Err(e) => (EXIT_CONFIG, Err(e)),
    }
}
