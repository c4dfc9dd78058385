//! Euler–Maruyama paths of `dX = -grad Phi(X) dt + dW` and of Brownian
//! motion, with explosion detection and reproducible per-path noise.

use std::io::Write;

use serde::Serialize;

use crate::error::{parameter, require_positive, Error, Result};
use crate::exec::Executor;
use crate::rng::{Channel, SeedTag, VariateStream};
use crate::stats::Estimate;
use crate::weights::{norm, ConstantField, WeightField, HARD_FLOOR};

pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e3;
pub const DEFAULT_DT: f64 = 1e-3;

/// A discretised trajectory on the uniform grid `t_k = k * dt`, `k = 0..=K`.
///
/// After `exploded_at` the state is frozen at its last admissible value.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    dt: f64,
    /// `(K + 1) * dim` coordinates, row-major by step.
    states: Vec<f64>,
    /// `K * dim` Brownian increments `W_{t_{k+1}} - W_{t_k}`.
    increments: Vec<f64>,
    pub exploded_at: Option<usize>,
    pub seed_tag: SeedTag,
}

impl Path {
    /// The zero-length path at `x0` (horizon 0).
    pub fn single_point(x0: &[f64], seed_tag: SeedTag) -> Self {
        Path { dim: x0.len(), dt: 0.0, states: x0.to_vec(), increments: Vec::new(), exploded_at: None, seed_tag }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.increments.len() / self.dim.max(1)
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn start(&self) -> &[f64] {
        self.state(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.steps())
    }

    pub fn survived(&self) -> bool {
        self.exploded_at.is_none()
    }

    /// Alive at step `k`, i.e. not exploded at or before `k`.
    pub fn alive_at(&self, k: usize) -> bool {
        self.exploded_at.map_or(true, |e| k < e)
    }
}

fn step_grid(t: f64, dt: f64) -> Result<(usize, f64)> {
    require_positive("t", t)?;
    require_positive("dt", dt)?;
    if dt > t * (1.0 + 1e-12) {
        return Err(parameter("dt", format!("step {dt} exceeds horizon {t}")));
    }
    let k = ((t / dt).round() as usize).max(1);
    Ok((k, t / k as f64))
}

/// Checks inputs shared by every simulation entry point and returns `(K, dt)`.
/// The step is `t / K` with `K = round(t / dt)`, so it equals `dt` whenever
/// `dt` divides `t`.
pub fn validate_start<W: WeightField + ?Sized>(field: &W, x0: &[f64], t: f64, dt: f64, escape_radius: f64) -> Result<(usize, f64)> {
    if x0.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: x0.len() });
    }
    let grid = step_grid(t, dt)?;
    if !(escape_radius > norm(x0)) {
        return Err(parameter("escape_radius", format!("must exceed |x0| = {}", norm(x0))));
    }
    if let Some(d) = field.sigma_distance(x0) {
        if d < HARD_FLOOR {
            return Err(parameter("x0", format!("start lies on the singular set (distance {d:e})")));
        }
    }
    Ok(grid)
}

/// Euler–Maruyama path on a validated grid.
pub(crate) fn simulate_on_grid<W: WeightField + ?Sized>(
    field: &W,
    x0: &[f64],
    steps: usize,
    dt: f64,
    seed_tag: SeedTag,
    escape_radius: f64,
) -> Path {
    let dim = x0.len();
    let mut stream = VariateStream::new(seed_tag, Channel::Increments);
    let mut increments = vec![0.0; steps * dim];
    stream.fill_normal(&mut increments);
    let sq = dt.sqrt();
    increments.iter_mut().for_each(|z| *z *= sq);

    let mut states = Vec::with_capacity((steps + 1) * dim);
    states.extend_from_slice(x0);
    let mut exploded_at = None;
    let mut grad = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    for k in 0..steps {
        let cur = &states[k * dim..(k + 1) * dim];
        if exploded_at.is_none() {
            match field.grad_into(cur, &mut grad) {
                Ok(()) => {
                    let dw = &increments[k * dim..(k + 1) * dim];
                    for i in 0..dim {
                        next[i] = cur[i] - grad[i] * dt + dw[i];
                    }
                    let escaped = !(norm(&next) <= escape_radius);
                    let singular = field.sigma_distance(&next).is_some_and(|d| d < HARD_FLOOR);
                    if escaped || singular {
                        exploded_at = Some(k + 1);
                        if next.iter().any(|v| !v.is_finite()) {
                            next.copy_from_slice(cur);
                        }
                    }
                }
                Err(_) => {
                    exploded_at = Some(k);
                    next.copy_from_slice(cur);
                }
            }
        } else {
            next.copy_from_slice(cur);
        }
        states.extend_from_slice(&next);
    }
    Path { dim, dt, states, increments, exploded_at, seed_tag }
}

/// One Euler–Maruyama path of the drift equation started at `x0`.
pub fn simulate_path<W: WeightField + ?Sized>(
    field: &W,
    x0: &[f64],
    t: f64,
    dt: f64,
    seed_tag: SeedTag,
    escape_radius: f64,
) -> Result<Path> {
    let (steps, dt) = validate_start(field, x0, t, dt, escape_radius)?;
    Ok(simulate_on_grid(field, x0, steps, dt, seed_tag, escape_radius))
}

/// Brownian motion from `x0`: the drift equation for `Phi == 0`.
pub fn simulate_bm_path(x0: &[f64], t: f64, dt: f64, seed_tag: SeedTag, escape_radius: f64) -> Result<Path> {
    simulate_path(&ConstantField::zero(x0.len()), x0, t, dt, seed_tag, escape_radius)
}

/// Ensemble parameters shared by every Monte Carlo estimator.
#[derive(Debug, Clone)]
pub struct Sampling {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub escape_radius: f64,
    pub exec: Executor,
}

impl Sampling {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        Sampling { n_paths, dt, seed, escape_radius: DEFAULT_ESCAPE_RADIUS, exec: Executor::parallel() }
    }

    pub fn with_escape_radius(mut self, escape_radius: f64) -> Self {
        self.escape_radius = escape_radius;
        self
    }

    pub fn with_exec(mut self, exec: Executor) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn tag(&self, path: usize) -> SeedTag {
        SeedTag::new(self.seed, path as u64)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(parameter("n_paths", "must be at least 1"));
        }
        Ok(())
    }
}

/// Simulates `n_paths` drift paths and maps each through `job`, in path order.
pub fn map_paths<W, T, F>(field: &W, x0: &[f64], t: f64, s: &Sampling, job: F) -> Result<Vec<T>>
where
    W: WeightField + ?Sized,
    T: Send,
    F: Fn(&Path) -> T + Sync + Send,
{
    s.validate()?;
    let (steps, dt) = validate_start(field, x0, t, s.dt, s.escape_radius)?;
    Ok(s.exec.map(s.n_paths, |i| job(&simulate_on_grid(field, x0, steps, dt, s.tag(i), s.escape_radius))))
}

/// Same as [`map_paths`] for Brownian motion.
pub fn map_bm_paths<T, F>(x0: &[f64], t: f64, s: &Sampling, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Path) -> T + Sync + Send,
{
    map_paths(&ConstantField::zero(x0.len()), x0, t, s, job)
}

/// `E^x[f(X_t); t < zeta]` under the drift diffusion: exploded paths
/// contribute zero.
pub fn killed_expectation<W, F>(field: &W, f: F, x0: &[f64], t: f64, s: &Sampling) -> Result<Estimate>
where
    W: WeightField + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let samples = map_paths(field, x0, t, s, |p| if p.survived() { f(p.terminal()) } else { 0.0 })?;
    Ok(Estimate::from_samples(&samples, s.seed))
}

/// Fraction of paths that did not explode before `t`, the Monte Carlo
/// surrogate for `P^x{t < zeta}`. Computed as the killed expectation of 1.
pub fn survival_fraction<W: WeightField + ?Sized>(field: &W, x0: &[f64], t: f64, s: &Sampling) -> Result<Estimate> {
    killed_expectation(field, |_| 1.0, x0, t, s)
}

/// Summary of an ensemble of terminal states.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub exploded: usize,
    pub terminal_mean: Vec<Estimate>,
}

pub fn ensemble_stats<W: WeightField + ?Sized>(field: &W, x0: &[f64], t: f64, s: &Sampling) -> Result<EnsembleStats> {
    let terminals = map_paths(field, x0, t, s, |p| (p.survived(), p.terminal().to_vec()))?;
    let exploded = terminals.iter().filter(|(ok, _)| !ok).count();
    let terminal_mean = (0..x0.len())
        .map(|i| {
            let xs: Vec<f64> = terminals.iter().map(|(_, x)| x[i]).collect();
            Estimate::from_samples(&xs, s.seed)
        })
        .collect();
    Ok(EnsembleStats { n_paths: s.n_paths, exploded, terminal_mean })
}

/// Path dump with columns `path_id, step, t, x_1..x_dim, exploded`.
pub fn write_paths_csv<W: Write>(paths: &[Path], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = paths.first().map_or(0, Path::dim);
    let mut header = vec!["path_id".to_string(), "step".into(), "t".into()];
    header.extend((1..=dim).map(|i| format!("x_{i}")));
    header.push("exploded".into());
    w.write_record(&header)?;
    for p in paths {
        for k in 0..=p.steps() {
            let mut row = vec![p.seed_tag.path.to_string(), k.to_string(), (k as f64 * p.dt).to_string()];
            row.extend(p.state(k).iter().map(f64::to_string));
            row.push(u8::from(!p.alive_at(k)).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
