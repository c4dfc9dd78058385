//! Semigroup action, the ground-state Feynman–Kac identity, Lipschitz
//! smoothing, the damped derivative flow (Q-process) and the
//! Bismut–Elworthy–Li gradient estimator.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{parameter, require_positive, Error, Result};
use crate::geometry::{operator_norm, ricci, spectral_norm};
use crate::paths::{killed_expectation, map_bm_paths, map_paths, simulate_on_grid, validate_start, Path, Sampling};
use crate::stats::{combined_stderr, Estimate};
use crate::stochcalc::{kato_sweep, time_integral, TimeRule};
use crate::weights::{coulomb_potential, norm, MolecularSpec, WeightField};

/// Largest `1/2 |Ric| h` allowed in one explicit Euler substep of the Q-process.
pub const Q_SUBSTEP_CAP: f64 = 0.1;

/// `e^{t Delta_Phi / 2} f (x) = E^x[f(X_t); t < zeta]`.
pub fn semigroup_apply<W, F>(field: &W, f: F, t: f64, x: &[f64], s: &Sampling) -> Result<Estimate>
where
    W: WeightField + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    killed_expectation(field, f, x, t, s)
}

/// Both algebraic forms of the ground-state Feynman–Kac identity:
/// form A `E^x[exp(-int V) psi(X_t)] = e^{-t lambda} psi(x)` and
/// form B `E^x[exp(-int V) / psi(X_t)] = e^{-t lambda} / psi(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeynmanKacReport {
    pub lhs_a: Estimate,
    pub rhs_a: f64,
    pub lhs_b: Estimate,
    pub rhs_b: f64,
    /// Paths excluded because they reached the singular set of `V`.
    pub excluded: usize,
}

impl FeynmanKacReport {
    pub fn rel_error_a(&self) -> f64 {
        (self.lhs_a.value - self.rhs_a).abs() / self.rhs_a.abs()
    }

    pub fn rel_error_b(&self) -> f64 {
        (self.lhs_b.value - self.rhs_b).abs() / self.rhs_b.abs()
    }

    /// Form A agrees within `k` standard errors.
    pub fn a_holds(&self, k: f64) -> bool {
        self.lhs_a.within(self.rhs_a, k)
    }

    pub fn b_holds(&self, k: f64) -> bool {
        self.lhs_b.within(self.rhs_b, k)
    }
}

/// Feynman–Kac check for a general potential over Brownian paths.
pub fn feynman_kac_check_with<W, V>(potential: V, field: &W, x: &[f64], t: f64, s: &Sampling, rule: TimeRule) -> Result<FeynmanKacReport>
where
    W: WeightField + ?Sized,
    V: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    let lambda = field
        .ground_energy()
        .ok_or_else(|| parameter("field", "Feynman-Kac check needs a field with an exact ground-state energy"))?;
    validate_start(field, x, t, s.dt, s.escape_radius)?;
    potential(x)?;
    let v = |y: &[f64]| potential(y).unwrap_or(f64::NAN);
    let rows: Vec<Option<(f64, f64)>> = map_bm_paths(x, t, s, |p| {
        if !p.survived() {
            return None;
        }
        let ti = time_integral(p, &v, rule);
        if ti.clipped > 0 {
            return None;
        }
        let psi = field.ground_state(p.terminal()).ok()?;
        let damp = (-ti.total()).exp();
        Some((damp * psi, damp / psi))
    })?;
    let excluded = rows.iter().filter(|r| r.is_none()).count();
    let a: Vec<f64> = rows.iter().flatten().map(|r| r.0).collect();
    let b: Vec<f64> = rows.iter().flatten().map(|r| r.1).collect();
    let psi_x = field.ground_state(x)?;
    let growth = (-t * lambda).exp();
    Ok(FeynmanKacReport {
        lhs_a: Estimate::from_samples(&a, s.seed),
        rhs_a: growth * psi_x,
        lhs_b: Estimate::from_samples(&b, s.seed),
        rhs_b: growth / psi_x,
        excluded,
    })
}

/// Feynman–Kac check with the Coulomb potential of `spec`.
pub fn feynman_kac_check<W: WeightField + ?Sized>(spec: &MolecularSpec, field: &W, x: &[f64], t: f64, s: &Sampling) -> Result<FeynmanKacReport> {
    if spec.dim() != field.dim() {
        return Err(Error::Dimension { expected: spec.dim(), got: field.dim() });
    }
    feynman_kac_check_with(|y| coulomb_potential(spec, y), field, x, t, s, TimeRule::default())
}

/// Semigroup values at two points from common random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedDifference {
    pub at_x: Estimate,
    pub at_y: Estimate,
    /// `P_t f(x) - P_t f(y)` from paired samples.
    pub difference: Estimate,
}

/// `P_t f(x)` and `P_t f(y)` driven by the same Brownian increments.
pub fn paired_semigroup<W, F>(field: &W, f: F, t: f64, x: &[f64], y: &[f64], s: &Sampling) -> Result<PairedDifference>
where
    W: WeightField + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    s.validate()?;
    let (steps, dt) = validate_start(field, x, t, s.dt, s.escape_radius)?;
    validate_start(field, y, t, s.dt, s.escape_radius)?;
    let eval = |p: &Path| if p.survived() { f(p.terminal()) } else { 0.0 };
    let rows: Vec<(f64, f64)> = s.exec.map(s.n_paths, |i| {
        let px = simulate_on_grid(field, x, steps, dt, s.tag(i), s.escape_radius);
        let py = simulate_on_grid(field, y, steps, dt, s.tag(i), s.escape_radius);
        (eval(&px), eval(&py))
    });
    let fx: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fy: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    Ok(PairedDifference {
        at_x: Estimate::from_samples(&fx, s.seed),
        at_y: Estimate::from_samples(&fy, s.seed),
        difference: Estimate::from_samples(&d, s.seed),
    })
}

/// Central difference `[P_t f(x + h v) - P_t f(x - h v)] / 2h` with common
/// random numbers.
pub fn finite_difference_gradient<W, F>(field: &W, f: F, t: f64, x: &[f64], v: &[f64], h: f64, s: &Sampling) -> Result<Estimate>
where
    W: WeightField + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    require_positive("h", h)?;
    let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let d = paired_semigroup(field, f, t, &xp, &xm, s)?.difference;
    Ok(Estimate { value: d.value / (2.0 * h), stderr: d.stderr / (2.0 * h), ..d })
}

/// Exponential-moment rate from a Kato norm: with `alpha = sup_x int_0^{t0}
/// E^x[k(X_s)] ds < 1`, `E^x[exp(int_0^t k)] <= (1/(1-alpha))^{t/t0} = e^{C t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpMomentRate {
    pub t0: f64,
    pub alpha: f64,
    pub rate: f64,
}

/// Picks the horizon in `horizons` with the smallest rate `C = -ln(1-alpha)/t0`.
pub fn khasminskii_rate<W, K>(field: &W, k: K, probes: &[Vec<f64>], horizons: &[f64], s: &Sampling) -> Result<ExpMomentRate>
where
    W: WeightField + ?Sized,
    K: Fn(&[f64]) -> f64 + Sync + Send,
{
    let sweep = kato_sweep(field, k, horizons, probes, s, TimeRule::default())?;
    sweep
        .iter()
        .filter(|e| e.sup_value < 1.0)
        .map(|e| ExpMomentRate { t0: e.horizon, alpha: e.sup_value, rate: -(1.0 - e.sup_value).ln() / e.horizon })
        .min_by(|a, b| a.rate.total_cmp(&b.rate))
        .ok_or_else(|| parameter("horizons", "no horizon has Kato norm below 1"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pair: PairedDifference,
    pub distance: f64,
    /// `|P_t f(x) - P_t f(y)| / |x - y|`.
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// `t^{-1/2} e^{C t} |f|_inf`.
    pub bound: f64,
    pub rate: f64,
    pub t: f64,
}

impl LipschitzReport {
    pub fn scaled_ratio(&self) -> f64 {
        self.ratio * self.t.sqrt()
    }

    pub fn within_bound(&self) -> bool {
        self.ratio <= self.bound
    }
}

/// Difference quotient of the semigroup between `x` and `y` against the
/// smoothing bound `t^{-1/2} e^{rate t} sup|f|`.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_ratio<W, F>(field: &W, f: F, sup_f: f64, t: f64, x: &[f64], y: &[f64], rate: f64, s: &Sampling) -> Result<LipschitzReport>
where
    W: WeightField + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let distance = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if distance == 0.0 {
        return Err(parameter("y", "must differ from x"));
    }
    let pair = paired_semigroup(field, f, t, x, y, s)?;
    Ok(LipschitzReport {
        ratio: pair.difference.value.abs() / distance,
        ratio_stderr: pair.difference.stderr / distance,
        bound: t.powf(-0.5) * (rate * t).exp() * sup_f,
        pair,
        distance,
        rate,
        t,
    })
}

/// Solution of `dQ = -1/2 Q Ric(X) dt`, `Q_0 = I` along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct QProcessState {
    pub matrices: Vec<DMatrix<f64>>,
    /// `1/2 int_0^{t_k} k(X_r) dr` (left-point).
    pub k_integral: Vec<f64>,
    pub substeps: Vec<usize>,
}

fn substeps_for(ric_norm: f64, dt: f64) -> usize {
    ((0.5 * ric_norm * dt / Q_SUBSTEP_CAP).ceil() as usize).max(1)
}

/// Explicit Euler `Q_{k+1} = Q_k (I - Ric(X_{t_k}) h / 2)` with `h = dt/m`
/// repeated `m` times, `m` chosen so that `|Ric| h / 2 <= Q_SUBSTEP_CAP`.
/// Fails if `|Q_{t_k}|` exceeds `exp(k_integral[k])` at any step.
pub fn q_process<W, K>(path: &Path, field: &W, k_fn: K) -> Result<QProcessState>
where
    W: WeightField + ?Sized,
    K: Fn(&[f64]) -> f64,
{
    if let Some(e) = path.exploded_at {
        return Err(Error::Exploded(e));
    }
    let dim = path.dim();
    let dt = path.dt();
    let mut q = DMatrix::<f64>::identity(dim, dim);
    let mut matrices = vec![q.clone()];
    let mut k_integral = vec![0.0];
    let mut substeps = Vec::with_capacity(path.steps());
    for k in 0..path.steps() {
        let x = path.state(k);
        let ric = ricci(field, x)?;
        let m = substeps_for(operator_norm(&ric), dt);
        let step = DMatrix::<f64>::identity(dim, dim) - &ric * (0.5 * dt / m as f64);
        for _ in 0..m {
            q = &q * &step;
        }
        let bound = k_integral[k] + 0.5 * k_fn(x) * dt;
        let qn = spectral_norm(&q);
        if qn > bound.exp() * (1.0 + 1e-12) {
            return Err(Error::Gronwall { step: k + 1, norm: qn, bound: bound.exp() });
        }
        matrices.push(q.clone());
        k_integral.push(bound);
        substeps.push(m);
    }
    Ok(QProcessState { matrices, k_integral, substeps })
}

/// Estimate of `d P_t f(x) v` with its BDG-type cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub value: f64,
    pub stderr: f64,
    /// `t^{-1/2} sup|f| |v| (E[exp(int_0^t k)])^{1/2}`.
    pub bdg_cap: f64,
    pub exp_moment: Estimate,
    pub failures: usize,
}

impl GradientEstimate {
    pub fn estimate(&self, seed: u64, n: usize) -> Estimate {
        Estimate { value: self.value, stderr: self.stderr, n_samples: n, seed }
    }

    pub fn respects_cap(&self) -> bool {
        self.value.abs() <= self.bdg_cap + 3.0 * self.stderr
    }
}

/// Per-path Bismut weight `(1/t) sum_k (Q_{t_k}^T v, dW_k)` and `int_0^t k`.
///
/// `Q_{t_k}^T v` is carried as a vector: it obeys
/// `w_{k+1} = (I - Ric(X_{t_k}) dt / 2) w_k` (substepped like [`q_process`]).
fn bismut_path_weight<W, K>(path: &Path, field: &W, v: &[f64], k_fn: &K) -> Result<(f64, f64)>
where
    W: WeightField + ?Sized,
    K: Fn(&[f64], &DMatrix<f64>) -> f64,
{
    let dt = path.dt();
    let mut w = DVector::from_column_slice(v);
    let mut weight = 0.0;
    let mut k_int = 0.0;
    for k in 0..path.steps() {
        let x = path.state(k);
        weight += w.iter().zip(path.increment(k)).map(|(a, b)| a * b).sum::<f64>();
        let ric = ricci(field, x)?;
        let ric_norm = operator_norm(&ric);
        k_int += k_fn(x, &ric).max(ric_norm) * dt;
        let m = substeps_for(ric_norm, dt);
        let h = 0.5 * dt / m as f64;
        for _ in 0..m {
            w -= &ric * &w * h;
        }
    }
    Ok((weight / path.horizon(), k_int))
}

/// `d P_t f(x) v = -E[f(X_t) int_0^t (Q_s^T l'_s, dW_s)]` with
/// `l_s = (t - s) v / t`, so `l' = -v/t`.
///
/// `k_fn(x, Ric(x))` is the Gronwall function entering the cap; it is never
/// allowed below `|Ric(x)|`. Pass `|_, _| 0.0` to use `|Ric|` itself.
#[allow(clippy::too_many_arguments)]
pub fn bismut_gradient<W, F, K>(field: &W, f: F, sup_f: f64, t: f64, x: &[f64], v: &[f64], k_fn: K, s: &Sampling) -> Result<GradientEstimate>
where
    W: WeightField + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
    K: Fn(&[f64], &DMatrix<f64>) -> f64 + Sync + Send,
{
    if v.len() != x.len() {
        return Err(Error::Dimension { expected: x.len(), got: v.len() });
    }
    let rows = map_paths(field, x, t, s, |p| {
        if !p.survived() {
            return Some((0.0, 0.0));
        }
        let (weight, k_int) = bismut_path_weight(p, field, v, &k_fn).ok()?;
        Some((f(p.terminal()) * weight, k_int.exp()))
    })?;
    let failures = rows.iter().filter(|r| r.is_none()).count();
    let g: Vec<f64> = rows.iter().map(|r| r.map_or(0.0, |r| r.0)).collect();
    let m: Vec<f64> = rows.iter().flatten().map(|r| r.1).collect();
    let est = Estimate::from_samples(&g, s.seed);
    let exp_moment = Estimate::from_samples(&m, s.seed);
    Ok(GradientEstimate {
        value: est.value,
        stderr: est.stderr,
        bdg_cap: t.powf(-0.5) * sup_f * norm(v) * exp_moment.value.sqrt(),
        exp_moment,
        failures,
    })
}

/// Whether two gradient-type estimates agree within `k` combined errors.
pub fn agree(a: &Estimate, b: &Estimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * combined_stderr(a, b)
}
