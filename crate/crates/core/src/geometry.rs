//! Distance to the Coulomb singular set, the Bakry–Emery Ricci tensor
//! `Ric = 2 hess Phi`, and pointwise diagnostics of the ground state.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{parameter, require_positive, Error, Result};
use crate::quadrature::ball_points;
use crate::weights::{MolecularSpec, WeightField};

/// Relative slack when testing `|Ric| <= A1 + A2/|x - Sigma|`, absorbing the
/// rounding of the eigenvalue solver.
pub const ENVELOPE_REL_TOL: f64 = 1e-9;

/// `min{ |y_i - R_j|, |y_k - y_l| / sqrt(2) : k < l }`.
pub fn distance_to_sigma(spec: &MolecularSpec, y: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..spec.electrons {
        let yi = &y[3 * i..3 * i + 3];
        for nuc in &spec.nuclei {
            let d = ((yi[0] - nuc.position[0]).powi(2)
                + (yi[1] - nuc.position[1]).powi(2)
                + (yi[2] - nuc.position[2]).powi(2))
            .sqrt();
            best = best.min(d);
        }
        for k in 0..i {
            let yk = &y[3 * k..3 * k + 3];
            let d = ((yi[0] - yk[0]).powi(2) + (yi[1] - yk[1]).powi(2) + (yi[2] - yk[2]).powi(2)).sqrt();
            best = best.min(d / std::f64::consts::SQRT_2);
        }
    }
    best
}

/// `Ric_Phi(x) = 2 hess Phi(x)`, formed as `H + H^T` so that it is exactly
/// symmetric even when the Hessian evaluator rounds asymmetrically.
pub fn ricci<W: WeightField + ?Sized>(field: &W, x: &[f64]) -> Result<DMatrix<f64>> {
    let h = field.hessian(x)?;
    Ok(&h + h.transpose())
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(0.0, |acc: f64, l| acc.max(l.abs()))
}

/// Largest singular value of a general square matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().svd(false, false).singular_values.max()
}

#[derive(Debug, Clone, Serialize)]
pub struct RicciBoundReport {
    pub probes: Vec<Vec<f64>>,
    pub ricci_norms: Vec<f64>,
    /// `|x - Sigma|`, infinite for fields without a singular set.
    pub sigma_distances: Vec<f64>,
    pub a1: f64,
    pub a2: f64,
    /// Whether `(a1, a2)` were fitted to the probes or supplied.
    pub fitted: bool,
    pub violations: usize,
}

impl RicciBoundReport {
    pub fn envelope(&self, distance: f64) -> f64 {
        self.a1 + if distance.is_finite() { self.a2 / distance } else { 0.0 }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let dim = self.probes.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
        header.extend(["ricci_norm".into(), "sigma_distance".into(), "envelope".into()]);
        w.write_record(&header)?;
        for ((p, r), d) in self.probes.iter().zip(&self.ricci_norms).zip(&self.sigma_distances) {
            let mut row: Vec<String> = p.iter().map(f64::to_string).collect();
            row.extend([r.to_string(), d.to_string(), self.envelope(*d).to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ricci_samples<W: WeightField + ?Sized>(field: &W, probes: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if probes.is_empty() {
        return Err(parameter("probes", "at least one probe is required"));
    }
    let mut norms = Vec::with_capacity(probes.len());
    let mut dists = Vec::with_capacity(probes.len());
    for p in probes {
        norms.push(operator_norm(&ricci(field, p)?));
        dists.push(field.sigma_distance(p).unwrap_or(f64::INFINITY));
    }
    Ok((norms, dists))
}

fn count_violations(norms: &[f64], dists: &[f64], a1: f64, a2: f64) -> usize {
    norms
        .iter()
        .zip(dists)
        .filter(|(&r, &d)| {
            let env = a1 + if d.is_finite() { a2 / d } else { 0.0 };
            r > env * (1.0 + ENVELOPE_REL_TOL) + 1e-12
        })
        .count()
}

/// Tightest envelope `A1 + A2 u` (`u = 1/|x - Sigma|`) lying above every
/// `(u_i, r_i)`: minimise the largest gap over probes subject to validity and
/// `A1, A2 >= 0`. For fixed `A2` the smallest valid `A1` is explicit, and the
/// resulting gap is convex in `A2`, so a ternary search over `A2` suffices.
pub fn fit_envelope(norms: &[f64], inv_dists: &[f64]) -> (f64, f64) {
    let a1_for = |a2: f64| -> f64 {
        norms.iter().zip(inv_dists).map(|(r, u)| r - a2 * u).fold(0.0, f64::max)
    };
    let gap = |a2: f64| -> f64 {
        let a1 = a1_for(a2);
        norms.iter().zip(inv_dists).map(|(r, u)| a1 + a2 * u - r).fold(f64::NEG_INFINITY, f64::max)
    };
    let hi = norms
        .iter()
        .zip(inv_dists)
        .filter(|(_, &u)| u > 0.0)
        .map(|(r, u)| r / u)
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if gap(m1) <= gap(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let a2 = 0.5 * (lo + hi);
    (a1_for(a2), a2)
}

/// Fits `(A1, A2)` on the probes and counts violations of the fitted envelope.
pub fn check_ricci_kato_bound<W: WeightField + ?Sized>(field: &W, probes: &[Vec<f64>]) -> Result<RicciBoundReport> {
    let (norms, dists) = ricci_samples(field, probes)?;
    let inv: Vec<f64> = dists.iter().map(|d| if d.is_finite() { 1.0 / d } else { 0.0 }).collect();
    let (a1, a2) = fit_envelope(&norms, &inv);
    let violations = count_violations(&norms, &dists, a1, a2);
    Ok(RicciBoundReport {
        probes: probes.to_vec(),
        ricci_norms: norms,
        sigma_distances: dists,
        a1,
        a2,
        fitted: true,
        violations,
    })
}

/// Counts violations of a supplied envelope `(A1, A2)`.
pub fn check_ricci_kato_bound_with<W: WeightField + ?Sized>(
    field: &W,
    probes: &[Vec<f64>],
    a1: f64,
    a2: f64,
) -> Result<RicciBoundReport> {
    if !(a1 >= 0.0 && a2 >= 0.0) {
        return Err(parameter("A1/A2", "envelope constants must be nonnegative"));
    }
    let (norms, dists) = ricci_samples(field, probes)?;
    let violations = count_violations(&norms, &dists, a1, a2);
    Ok(RicciBoundReport {
        probes: probes.to_vec(),
        ricci_norms: norms,
        sigma_distances: dists,
        a1,
        a2,
        fitted: false,
        violations,
    })
}

/// Points at which a ball supremum/infimum is searched: `n_samples`
/// quasi-uniform points, the centre, and points just inside the sphere along
/// the coordinate axes and along `±grad Phi(center)`.
fn ball_search_points<W: WeightField + ?Sized>(field: &W, center: &[f64], radius: f64, n_samples: usize) -> Vec<Vec<f64>> {
    let dim = center.len();
    let reach = radius * (1.0 - 1e-9);
    let mut pts = vec![center.to_vec()];
    let mut push_dir = |dir: &[f64]| {
        for sign in [1.0, -1.0] {
            pts.push(center.iter().zip(dir).map(|(c, d)| c + sign * reach * d).collect());
        }
    };
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        push_dir(&e);
    }
    if let Ok(g) = field.grad(center) {
        let n = crate::weights::norm(&g);
        if n > 0.0 && n.is_finite() {
            let dir: Vec<f64> = g.iter().map(|v| v / n).collect();
            push_dir(&dir);
        }
    }
    pts.extend(ball_points(center, radius, n_samples));
    pts
}

struct BallExtremes {
    sup: f64,
    inf: f64,
    used: usize,
    removed: usize,
}

fn ball_extremes<W: WeightField + ?Sized>(field: &W, center: &[f64], radius: f64, n_samples: usize) -> Result<BallExtremes> {
    let mut ext = BallExtremes { sup: f64::NEG_INFINITY, inf: f64::INFINITY, used: 0, removed: 0 };
    for p in ball_search_points(field, center, radius, n_samples) {
        match field.ground_state(&p) {
            Ok(v) if v > 0.0 && v.is_finite() => {
                ext.sup = ext.sup.max(v);
                ext.inf = ext.inf.min(v);
                ext.used += 1;
            }
            _ => ext.removed += 1,
        }
    }
    if ext.used == 0 {
        return Err(Error::Domain("ground state could not be evaluated anywhere in the ball".into()));
    }
    Ok(ext)
}

/// Default number of quasi-uniform ball samples.
pub const BALL_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub sup_value: f64,
    pub inf_value: f64,
    pub ratio: f64,
    pub samples_used: usize,
    pub samples_removed: usize,
}

/// `sup / inf` of `exp(-Phi)` over the open ball `B(center, radius)`.
pub fn harnack_ratio<W: WeightField + ?Sized>(field: &W, center: &[f64], radius: f64, n_samples: usize) -> Result<HarnackReport> {
    require_positive("radius", radius)?;
    let ext = ball_extremes(field, center, radius, n_samples)?;
    Ok(HarnackReport {
        center: center.to_vec(),
        radius,
        sup_value: ext.sup,
        inf_value: ext.inf,
        ratio: ext.sup / ext.inf,
        samples_used: ext.used,
        samples_removed: ext.removed,
    })
}

/// Which normalisation of `|d^alpha psi(x)|` to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FsForm {
    /// `|d^a psi(x)| / (min(1,|x-Sigma|)^{1-|a|} sup_B psi)`.
    LocalSup,
    /// `(|d^a psi(x)| / psi(x)) / (min(1,|x-Sigma|)^{1-|a|} sup_B psi / inf_B psi)`.
    SelfNormalized,
}

/// `d^alpha psi(x)` for `psi = exp(-Phi)` and `|alpha| in {1, 2}`, with `alpha`
/// given as the list of coordinate indices differentiated.
pub fn ground_state_derivative<W: WeightField + ?Sized>(field: &W, alpha: &[usize], x: &[f64]) -> Result<f64> {
    let psi = field.ground_state(x)?;
    let g = field.grad(x)?;
    if alpha.iter().any(|&i| i >= field.dim()) {
        return Err(parameter("alpha", "index out of range"));
    }
    match alpha {
        [i] => Ok(-psi * g[*i]),
        [i, j] => {
            let h = field.hessian(x)?;
            Ok(psi * (g[*i] * g[*j] - h[(*i, *j)]))
        }
        _ => Err(parameter("alpha", "only |alpha| in {1, 2} is supported")),
    }
}

/// The candidate constant `c_alpha` at `x` in the derivative bounds for the
/// ground state, with the local supremum over the ball of radius 1/2.
pub fn fs_ratio<W: WeightField + ?Sized>(field: &W, alpha: &[usize], x: &[f64], form: FsForm, n_samples: usize) -> Result<f64> {
    let deriv = ground_state_derivative(field, alpha, x)?.abs();
    let dist = field.sigma_distance(x).unwrap_or(f64::INFINITY);
    let scale = dist.min(1.0).powi(1 - alpha.len() as i32);
    let ext = ball_extremes(field, x, 0.5, n_samples)?;
    Ok(match form {
        FsForm::LocalSup => deriv / (scale * ext.sup),
        FsForm::SelfNormalized => (deriv / field.ground_state(x)?) / (scale * ext.sup / ext.inf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{make_hydrogenic_field, make_ou_field, ConstantField, Nucleus};

    #[test]
    fn distance_examples() {
        let h = MolecularSpec::hydrogen_like(1);
        assert_eq!(distance_to_sigma(&h, &[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(distance_to_sigma(&h, &[0.0, 0.0, 0.0]), 0.0);
        let he = MolecularSpec::new(vec![Nucleus { position: [0.0; 3], charge: 2 }], 2).unwrap();
        assert_eq!(distance_to_sigma(&he, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]), 1.0);
        // electron pair term dominates
        let d = distance_to_sigma(&he, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.0]);
        assert!((d - 0.5 / std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn ou_ricci_is_constant() {
        let f = make_ou_field(1.0, 3).unwrap();
        let r = ricci(&f, &[0.3, 2.0, -1.0]).unwrap();
        assert_eq!(r, DMatrix::identity(3, 3) * 2.0);
        let rep = check_ricci_kato_bound(&f, &[vec![0.0; 3], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!((rep.a1 - 2.0).abs() < 1e-12 && rep.a2 == 0.0 && rep.violations == 0);
    }

    #[test]
    fn hydrogenic_ricci_at_two() {
        let f = make_hydrogenic_field(1.0).unwrap();
        let r = ricci(&f, &[2.0, 0.0, 0.0]).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 1.0]));
        assert!((r - expected.clone()).abs().max() < 1e-15);
        assert!((operator_norm(&expected) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_hydrogenic_constants() {
        let f = make_hydrogenic_field(1.0).unwrap();
        let probes: Vec<Vec<f64>> = (1..=20).map(|i| vec![0.1 * i as f64, 0.05, -0.02 * i as f64]).collect();
        let rep = check_ricci_kato_bound(&f, &probes).unwrap();
        assert!(rep.a1.abs() < 1e-9, "{}", rep.a1);
        assert!((rep.a2 - 2.0).abs() < 1e-9, "{}", rep.a2);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn empty_probes_rejected() {
        let f = make_hydrogenic_field(1.0).unwrap();
        assert!(check_ricci_kato_bound(&f, &[]).is_err());
    }

    #[test]
    fn constant_field_harnack_and_fs() {
        let c = ConstantField { dim: 3, value: 0.7 };
        let rep = harnack_ratio(&c, &[1.0, 2.0, 3.0], 0.5, 256).unwrap();
        assert_eq!(rep.ratio, 1.0);
        assert_eq!(fs_ratio(&c, &[0], &[1.0, 0.0, 0.0], FsForm::LocalSup, 256).unwrap(), 0.0);
    }

    #[test]
    fn fs_ratio_first_order_hydrogenic() {
        let f = make_hydrogenic_field(1.0).unwrap();
        let r = fs_ratio(&f, &[0], &[2.0, 0.0, 0.0], FsForm::LocalSup, 1024).unwrap();
        assert!((r - (-0.5f64).exp()).abs() < 1e-8, "{r}");
    }

    #[test]
    fn harnack_rejects_nonpositive_radius() {
        let f = make_hydrogenic_field(1.0).unwrap();
        assert!(harnack_ratio(&f, &[0.0; 3], 0.0, 16).is_err());
    }
}
