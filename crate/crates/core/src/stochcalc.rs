//! Stochastic integrals along simulated paths: Itô sums, Girsanov weights,
//! Novikov moments, Kato norms and Khasminskii exponential moments.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{parameter, require_positive, Error, Result};
use crate::paths::{map_bm_paths, map_paths, validate_start, Path, Sampling};
use crate::rng::{Channel, VariateStream};
use crate::stats::Estimate;
use crate::weights::{MolecularSpec, WeightField, HARD_FLOOR};

/// Integrand values are clipped to `[-CLIP, CLIP]`.
pub const CLIP: f64 = 1.0 / HARD_FLOOR;

/// How `int_0^t v(X_s) ds` is discretised along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeRule {
    /// `dt * sum_k v(X_{t_k})`.
    LeftPoint,
    /// `dt * sum_k v(Y_k)` with `Y_k` drawn from the Brownian bridge of the
    /// continuous Euler interpolant over `[t_k, t_{k+1}]` at a uniform time.
    /// Unbiased for the interpolant's integral, and finite when the path
    /// starts on the singular set of `v`.
    #[default]
    BridgeSample,
}

/// Running values `int_0^{t_k} v(X_s) ds`, frozen after an explosion.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeIntegral {
    pub cumulative: Vec<f64>,
    pub clipped: usize,
}

impl TimeIntegral {
    pub fn total(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }
}

#[inline]
fn clip(v: f64, clipped: &mut usize) -> f64 {
    if v.abs() <= CLIP {
        v
    } else {
        *clipped += 1;
        if v < 0.0 {
            -CLIP
        } else {
            CLIP
        }
    }
}

pub fn time_integral<F: Fn(&[f64]) -> f64 + ?Sized>(path: &Path, v: &F, rule: TimeRule) -> TimeIntegral {
    let steps = path.steps();
    let dt = path.dt();
    let dim = path.dim();
    let mut cumulative = Vec::with_capacity(steps + 1);
    cumulative.push(0.0);
    let mut clipped = 0;
    let mut acc = 0.0;
    match rule {
        TimeRule::LeftPoint => {
            for k in 0..steps {
                if path.alive_at(k + 1) {
                    acc += dt * clip(v(path.state(k)), &mut clipped);
                }
                cumulative.push(acc);
            }
        }
        TimeRule::BridgeSample => {
            let mut stream = VariateStream::new(path.seed_tag, Channel::Quadrature);
            let mut y = vec![0.0; dim];
            for k in 0..steps {
                let u = stream.uniform();
                let spread = (u * (1.0 - u) * dt).sqrt();
                let (a, b) = (path.state(k), path.state(k + 1));
                for i in 0..dim {
                    y[i] = a[i] + u * (b[i] - a[i]) + spread * stream.normal();
                }
                if path.alive_at(k + 1) {
                    acc += dt * clip(v(&y), &mut clipped);
                }
                cumulative.push(acc);
            }
        }
    }
    TimeIntegral { cumulative, clipped }
}

/// Left-point Itô sum `sum_k (vf(X_{t_k}), X_{t_{k+1}} - X_{t_k})`.
pub fn ito_integral<F>(path: &Path, vf: F) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    if let Some(e) = path.exploded_at {
        return Err(Error::Exploded(e));
    }
    let mut g = vec![0.0; path.dim()];
    let mut acc = 0.0;
    for k in 0..path.steps() {
        vf(path.state(k), &mut g)?;
        let (a, b) = (path.state(k), path.state(k + 1));
        acc += g.iter().zip(a.iter().zip(b)).map(|(gi, (ai, bi))| gi * (bi - ai)).sum::<f64>();
    }
    Ok(acc)
}

/// Density of the drift `-grad(q Psi)` law with respect to Brownian motion on
/// one path: `value = exp(ito_term - quadratic_term)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GirsanovWeight {
    pub value: f64,
    /// `-q int (grad Psi, dX)`.
    pub ito_term: f64,
    /// `q^2/2 int |grad Psi|^2 dr`.
    pub quadratic_term: f64,
}

pub fn girsanov_weight<W: WeightField + ?Sized>(path: &Path, field: &W, q: f64) -> Result<GirsanovWeight> {
    if let Some(e) = path.exploded_at {
        return Err(Error::Exploded(e));
    }
    let mut g = vec![0.0; path.dim()];
    let (mut ito, mut quad) = (0.0, 0.0);
    for k in 0..path.steps() {
        field.grad_into(path.state(k), &mut g)?;
        let (a, b) = (path.state(k), path.state(k + 1));
        for i in 0..g.len() {
            ito += g[i] * (b[i] - a[i]);
            quad += g[i] * g[i];
        }
    }
    let ito_term = -q * ito;
    let quadratic_term = 0.5 * q * q * quad * path.dt();
    Ok(GirsanovWeight { value: (ito_term - quadratic_term).exp(), ito_term, quadratic_term })
}

/// Samples of `M_t` over Brownian paths from `x`; failed paths are `None`.
pub fn girsanov_samples<W: WeightField + ?Sized>(field: &W, q: f64, x: &[f64], t: f64, s: &Sampling) -> Result<Vec<Option<GirsanovWeight>>> {
    map_bm_paths(x, t, s, |p| girsanov_weight(p, field, q).ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NovikovReport {
    /// `E^x[exp(1/2 int_0^t |grad(q Psi)|^2 dr)]` over Brownian paths.
    pub estimate: Estimate,
    /// `exp(q^2 C^2 t / 2)` when the field has a gradient bound `C`.
    pub analytic_cap: Option<f64>,
    pub failures: usize,
}

pub fn novikov_check<W: WeightField + ?Sized>(field: &W, q: f64, x: &[f64], t: f64, s: &Sampling) -> Result<NovikovReport> {
    let samples = map_bm_paths(x, t, s, |p| {
        let mut g = vec![0.0; p.dim()];
        let mut quad = 0.0;
        for k in 0..p.steps() {
            field.grad_into(p.state(k), &mut g).ok()?;
            quad += g.iter().map(|v| v * v).sum::<f64>();
        }
        Some((0.5 * q * q * quad * p.dt()).exp())
    })?;
    let failures = samples.iter().filter(|v| v.is_none()).count();
    let vals: Vec<f64> = samples.into_iter().flatten().collect();
    Ok(NovikovReport {
        estimate: Estimate::from_samples(&vals, s.seed),
        analytic_cap: field.grad_sup_bound().map(|c| (0.5 * q * q * c * c * t).exp()),
        failures,
    })
}

/// `E^x_Phi[F]` by importance sampling over Brownian paths and by direct
/// simulation of the drift equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedExpectation {
    pub girsanov: Estimate,
    pub direct: Estimate,
    /// Paths on which the weight or `F` could not be evaluated (contribute 0).
    pub girsanov_failures: usize,
    pub direct_failures: usize,
}

impl WeightedExpectation {
    pub fn consistent(&self, k: f64) -> bool {
        self.girsanov.agrees_with(&self.direct, k)
    }
}

pub fn weighted_expectation<W, F>(field: &W, functional: F, x: &[f64], t: f64, s: &Sampling) -> Result<WeightedExpectation>
where
    W: WeightField + ?Sized,
    F: Fn(&Path) -> Result<f64> + Sync + Send,
{
    validate_start(field, x, t, s.dt, s.escape_radius)?;
    let girsanov: Vec<Option<f64>> = map_bm_paths(x, t, s, |p| {
        if !p.survived() {
            return Some(0.0);
        }
        let m = girsanov_weight(p, field, 1.0).ok()?;
        Some(m.value * functional(p).ok()?)
    })?;
    let direct: Vec<Option<f64>> = map_paths(field, x, t, s, |p| if p.survived() { functional(p).ok() } else { Some(0.0) })?;
    let reduce = |v: Vec<Option<f64>>| {
        let failures = v.iter().filter(|x| x.is_none()).count();
        let vals: Vec<f64> = v.into_iter().map(|x| x.unwrap_or(0.0)).collect();
        (Estimate::from_samples(&vals, s.seed), failures)
    };
    let (girsanov, girsanov_failures) = reduce(girsanov);
    let (direct, direct_failures) = reduce(direct);
    Ok(WeightedExpectation { girsanov, direct, girsanov_failures, direct_failures })
}

/// Configurations on the singular set of a molecule: electron 0 on each
/// nucleus, the remaining electrons parked far above it.
pub fn sigma_anchors(spec: &MolecularSpec) -> Vec<Vec<f64>> {
    spec.nuclei
        .iter()
        .map(|nuc| {
            let mut y = Vec::with_capacity(spec.dim());
            y.extend_from_slice(&nuc.position);
            for i in 1..spec.electrons {
                y.extend_from_slice(&[nuc.position[0], nuc.position[1], nuc.position[2] + 10.0 * i as f64]);
            }
            y
        })
        .collect()
}

pub const AUTO_PROBE_DISTANCES: [f64; 3] = [0.01, 0.1, 1.0];

/// Points `anchor ± d e_a` for every anchor, distance `d` and the first three
/// coordinate axes (the coordinates of electron 0).
pub fn automatic_probes(anchors: &[Vec<f64>], distances: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for anchor in anchors {
        for &d in distances {
            for axis in 0..anchor.len().min(3) {
                for sign in [1.0, -1.0] {
                    let mut p = anchor.clone();
                    p[axis] += sign * d;
                    out.push(p);
                }
            }
        }
    }
    out
}

/// `int_0^t E^x_Phi[|v|(X_s)] ds` at each probe, and its supremum.
#[derive(Debug, Clone, Serialize)]
pub struct KatoEstimate {
    pub horizon: f64,
    pub probes: Vec<Vec<f64>>,
    pub values: Vec<Estimate>,
    pub sup_value: f64,
    pub argmax: usize,
    pub clipped: usize,
}

impl KatoEstimate {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.probes.first().map_or(0, Vec::len);
        let mut header = vec!["horizon".to_string()];
        header.extend((1..=dim).map(|i| format!("x_{i}")));
        header.extend(["value".into(), "stderr".into()]);
        w.write_record(&header)?;
        for (p, e) in self.probes.iter().zip(&self.values) {
            let mut row = vec![self.horizon.to_string()];
            row.extend(p.iter().map(f64::to_string));
            row.extend([e.value.to_string(), e.stderr.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Kato functionals for several horizons from a single ensemble per probe:
/// each horizon reads the running integral of the same paths, so the values
/// are nondecreasing in the horizon path by path.
pub fn kato_sweep<W, V>(field: &W, v: V, horizons: &[f64], probes: &[Vec<f64>], s: &Sampling, rule: TimeRule) -> Result<Vec<KatoEstimate>>
where
    W: WeightField + ?Sized,
    V: Fn(&[f64]) -> f64 + Sync + Send,
{
    if probes.is_empty() {
        return Err(parameter("probes", "at least one probe is required"));
    }
    if horizons.is_empty() {
        return Err(parameter("horizons", "at least one horizon is required"));
    }
    for &h in horizons {
        require_positive("t", h)?;
    }
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let (steps, dt) = validate_start(field, &probes[0], t_max, s.dt, s.escape_radius)?;
    let index_of = |h: f64| ((h / dt).round() as usize).clamp(1, steps);
    let abs_v = |y: &[f64]| v(y).abs();

    // per probe: per horizon (samples), clipped
    let mut per_probe: Vec<(Vec<Estimate>, usize)> = Vec::with_capacity(probes.len());
    for p in probes {
        let rows = map_paths(field, p, t_max, s, |path| {
            let ti = time_integral(path, &abs_v, rule);
            let vals: Vec<f64> = horizons.iter().map(|&h| ti.cumulative[index_of(h)]).collect();
            (vals, ti.clipped)
        })?;
        let clipped = rows.iter().map(|r| r.1).sum();
        let ests = (0..horizons.len())
            .map(|j| {
                let col: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
                Estimate::from_samples(&col, s.seed)
            })
            .collect();
        per_probe.push((ests, clipped));
    }
    debug_assert_eq!(steps, index_of(t_max));
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let values: Vec<Estimate> = per_probe.iter().map(|(e, _)| e[j]).collect();
            let (argmax, sup_value) = values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, e)| if e.value > best.1 { (i, e.value) } else { best });
            KatoEstimate {
                horizon: index_of(h) as f64 * dt,
                probes: probes.to_vec(),
                values,
                sup_value,
                argmax,
                clipped: per_probe.iter().map(|p| p.1).sum(),
            }
        })
        .collect())
}

pub fn kato_norm<W, V>(field: &W, v: V, t: f64, probes: &[Vec<f64>], s: &Sampling) -> Result<KatoEstimate>
where
    W: WeightField + ?Sized,
    V: Fn(&[f64]) -> f64 + Sync + Send,
{
    Ok(kato_sweep(field, v, &[t], probes, s, TimeRule::default())?.remove(0))
}

/// `(1/(1-alpha))^{t/t0}`: the exponential-moment bound implied by a Kato
/// norm `alpha < 1` at horizon `t0`.
pub fn khasminskii_bound(alpha: f64, t0: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(parameter("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    require_positive("t0", t0)?;
    if !(t >= 0.0) {
        return Err(parameter("t", "must be nonnegative"));
    }
    Ok((1.0 / (1.0 - alpha)).powf(t / t0))
}

/// `E^x_Phi[exp(int_0^t k(X_s) ds); t < zeta]` by direct simulation.
pub fn khasminskii_empirical<W, K>(field: &W, k: K, x: &[f64], t: f64, s: &Sampling) -> Result<Estimate>
where
    W: WeightField + ?Sized,
    K: Fn(&[f64]) -> f64 + Sync + Send,
{
    let samples = map_paths(field, x, t, s, |p| {
        if p.survived() {
            time_integral(p, &k, TimeRule::default()).total().exp()
        } else {
            0.0
        }
    })?;
    Ok(Estimate::from_samples(&samples, s.seed))
}
