//! Exactly solvable instances of each module, checked against closed forms.

use mmlab::estimators::{
    bismut_gradient, feynman_kac_check, feynman_kac_check_with, finite_difference_gradient, lipschitz_ratio, q_process, semigroup_apply,
};
use mmlab::geometry::{check_ricci_kato_bound, check_ricci_kato_bound_with, fs_ratio, ground_state_derivative, harnack_ratio, FsForm};
use mmlab::paths::{ensemble_stats, map_bm_paths, map_paths, simulate_path, survival_fraction};
use mmlab::quadrature::GaussHermite;
use mmlab::stochcalc::{girsanov_samples, novikov_check, weighted_expectation, TimeRule};
use mmlab::weights::{
    make_hydrogenic_field, make_ou_field, mollify, mollify_with, norm, ConstantField, MollifyOptions, MolecularSpec, WeightField,
};
use mmlab::{Estimate, Path, Result, Sampling, SeedTag};
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// `E|x + sigma Z|` for `Z ~ N(0, I_3)` and `|x| = r`.
fn gaussian_mean_norm(r: f64, sigma: f64) -> f64 {
    let pi = std::f64::consts::PI;
    sigma * (2.0 / pi).sqrt() * (-r * r / (2.0 * sigma * sigma)).exp() + (r + sigma * sigma / r) * erf(r / (sigma * 2f64.sqrt()))
}

#[test]
fn hydrogenic_z2_is_an_eigenfunction() {
    let f = make_hydrogenic_field(2.0).unwrap();
    let psi = |x: &[f64]| f.ground_state(x).unwrap();
    let h = 1e-4;
    for x in [[0.7, -0.2, 0.4], [1.5, 0.0, 0.3], [0.2, 0.3, -0.25]] {
        let mut lap = 0.0;
        for i in 0..3 {
            let mut p = x;
            let mut m = x;
            p[i] += h;
            m[i] -= h;
            lap += (psi(&p) - 2.0 * psi(&x) + psi(&m)) / (h * h);
        }
        let energy = (-0.5 * lap - 2.0 / norm(&x) * psi(&x)) / psi(&x);
        assert!((energy - f.ground_energy().unwrap()).abs() < 1e-5, "{energy}");
    }
    assert_eq!(f.ground_energy(), Some(-2.0));
}

#[test]
fn mollified_hydrogenic_matches_gaussian_average_of_norm() {
    let base = make_hydrogenic_field(1.0).unwrap();
    // the kink of |.| at the origin limits the tensor rule once it is within
    // a few standard deviations of the node cloud
    for (eps, tol) in [(1.0, 2e-3), (0.1, 2e-3), (0.01, 1e-8), (1e-4, 1e-12)] {
        let m = mollify(&base, eps).unwrap();
        let got = m.value(&[1.0, 0.0, 0.0]).unwrap();
        let want = gaussian_mean_norm(1.0, eps.sqrt());
        assert!((got - want).abs() < tol, "eps {eps}: {got} vs {want}");
    }
    let m = mollify(&base, 1e-6).unwrap();
    assert!((m.value(&[1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn mollified_gradient_stays_below_base_bound() {
    let base = make_hydrogenic_field(1.0).unwrap();
    let probes = mmlab::quadrature::ball_points(&[0.0; 3], 3.0, 200);
    for eps in [1.0, 0.1, 0.01] {
        let m = mollify_with(&base, eps, MollifyOptions { quadrature_order: 8, ..Default::default() }).unwrap();
        for p in &probes {
            assert!(norm(&m.grad(p).unwrap()) <= 1.0 + 1e-12);
        }
    }
}

struct InverseSquareHessian;

/// `Phi = -log|x|`: `|Hess Phi| = |x|^{-2}`.
impl WeightField for InverseSquareHessian {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(-norm(x).ln())
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r2 = x.iter().map(|v| v * v).sum::<f64>();
        for (o, v) in out.iter_mut().zip(x) {
            *o = -v / r2;
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r2 = x.iter().map(|v| v * v).sum::<f64>();
        Ok(DMatrix::from_fn(3, 3, |i, j| (2.0 * x[i] * x[j] - if i == j { r2 } else { 0.0 }) / (r2 * r2)))
    }
    fn sigma_distance(&self, x: &[f64]) -> Option<f64> {
        Some(norm(x))
    }
}

#[test]
fn inverse_square_curvature_escapes_the_envelope() {
    let far: Vec<Vec<f64>> = [0.5, 1.0, 2.0, 5.0].iter().map(|r| vec![*r, 0.0, 0.0]).collect();
    let fit = check_ricci_kato_bound(&InverseSquareHessian, &far).unwrap();
    assert_eq!(fit.violations, 0);
    let near: Vec<Vec<f64>> = [0.01, 0.02, 0.05].iter().map(|r| vec![0.0, *r, 0.0]).collect();
    let rep = check_ricci_kato_bound_with(&InverseSquareHessian, &near, fit.a1, fit.a2).unwrap();
    assert_eq!(rep.violations, near.len());
    let ou = check_ricci_kato_bound(&make_ou_field(1.0, 3).unwrap(), &far).unwrap();
    assert!((ou.a1 - 2.0).abs() < 1e-9 && ou.a2 == 0.0 && ou.violations == 0);
}

#[test]
fn harnack_far_from_the_nucleus_approaches_radial_bound() {
    let f = make_hydrogenic_field(1.0).unwrap();
    for c in [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [4.0, 0.0, 0.0], [0.0, -3.0, 2.0]] {
        let h = harnack_ratio(&f, &c, 0.5, 4096).unwrap();
        assert!(h.ratio >= 1.0 && h.ratio <= std::f64::consts::E, "{c:?}: {}", h.ratio);
    }
    let far = harnack_ratio(&f, &[4.0, 0.0, 0.0], 0.5, 4096).unwrap();
    assert!(far.ratio > 0.999 * std::f64::consts::E);
}

#[test]
fn second_order_ratio_stays_bounded_near_sigma() {
    let f = make_hydrogenic_field(1.0).unwrap();
    let mut raw = Vec::new();
    let mut ratios = Vec::new();
    for r in [0.1, 0.01, 0.001] {
        let x = [r, 0.0, 0.0];
        raw.push(ground_state_derivative(&f, &[1, 1], &x).unwrap().abs());
        ratios.push(fs_ratio(&f, &[1, 1], &x, FsForm::LocalSup, 4096).unwrap());
    }
    // |d_2 d_2 psi| = psi / r on the first axis
    for (d, r) in raw.iter().zip([0.1, 0.01, 0.001]) {
        assert!((d * r - (-r as f64).exp()).abs() < 1e-12);
    }
    assert!(ratios.iter().all(|q| *q > 0.5 && *q <= 1.0 + 1e-12), "{ratios:?}");
    let x = [2.0, 0.0, 0.0];
    let r = fs_ratio(&f, &[0], &x, FsForm::LocalSup, 4096).unwrap();
    assert!((r - (-0.5f64).exp()).abs() < 1e-6);
}

#[test]
fn zero_field_paths_are_brownian() {
    let s = Sampling::new(100_000, 0.05, 21);
    let x0 = [0.3, -0.2, 1.0];
    let stats = ensemble_stats(&ConstantField::zero(3), &x0, 1.0, &s).unwrap();
    for (m, x) in stats.terminal_mean.iter().zip(x0) {
        assert!(m.within(x, 3.0), "{m:?}");
    }
    let sq = map_bm_paths(&x0, 1.0, &s, |p| p.terminal().iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).unwrap();
    assert!(Estimate::from_samples(&sq, 21).within(3.0, 3.0));
}

#[test]
fn single_step_increments_pass_a_normality_test() {
    let s = Sampling::new(100_000, 0.5, 8);
    let mut z = map_bm_paths(&[0.0], 0.5, &s, |p: &Path| p.terminal()[0] / 0.5f64.sqrt()).unwrap();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let nd = std_normal();
    let ks = z
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = nd.cdf(*v);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov-Smirnov statistic
    assert!(ks < 1.63 / n.sqrt(), "KS = {ks}");
}

#[test]
fn ou_terminal_mean_decays() {
    let f = make_ou_field(1.0, 1).unwrap();
    let s = Sampling::new(100_000, 1e-3, 31);
    let m = semigroup_apply(&f, |y| y[0], 1.0, &[2.0], &s).unwrap();
    assert!(m.within(2.0 * (-1.0f64).exp(), 3.0), "{m:?}");
}

#[test]
fn euler_bias_halves_with_the_step() {
    // E[X_K] = x0 (1 - dt)^K for Euler on the OU field; the bias against
    // x0 e^{-t} is about x0 e^{-t} dt / 2.
    let f = make_ou_field(1.0, 1).unwrap();
    let x0 = 20.0;
    let exact = x0 * (-1.0f64).exp();
    let bias = |dt: f64| {
        let s = Sampling::new(1_000_000, dt, 77);
        exact - semigroup_apply(&f, |y| y[0], 1.0, &[x0], &s).unwrap().value
    };
    let ratio = bias(1e-2) / bias(5e-3);
    assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
}

struct Outward;

/// `Phi = -|x|^2 e^{|x|}` pushes paths outward super-linearly.
impl WeightField for Outward {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(-x[0] * x[0] * x[0].abs().exp())
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r = x[0].abs();
        out[0] = -(2.0 + r) * x[0] * r.exp();
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = x[0].abs();
        Ok(DMatrix::from_element(1, 1, -(2.0 + 4.0 * r + r * r) * r.exp()))
    }
}

#[test]
fn survival_examples() {
    let s = Sampling::new(2_000, 1e-3, 4).with_escape_radius(5.0);
    assert!(survival_fraction(&Outward, &[0.5], 1.0, &s).unwrap().value < 1.0);
    assert_eq!(survival_fraction(&Outward, &[0.5], 1e-3, &s).unwrap().value, 1.0);
    let h = make_hydrogenic_field(1.0).unwrap();
    let one = semigroup_apply(&h, |_| 1.0, 1.0, &[1.0, 0.0, 0.0], &Sampling::new(2_000, 1e-3, 4)).unwrap();
    assert_eq!(one.value, 1.0);
}

#[test]
fn girsanov_weights() {
    let h = make_hydrogenic_field(1.0).unwrap();
    let s = Sampling::new(20_000, 1e-3, 12);
    let w = girsanov_samples(&h, 1.0, &[1.0, 0.0, 0.0], 1.0, &s).unwrap();
    assert!(w.iter().all(|w| (w.unwrap().quadratic_term - 0.5).abs() < 1e-12));
    let ou = make_ou_field(1.0, 1).unwrap();
    let w = girsanov_samples(&ou, 1.0, &[0.5], 1.0, &Sampling::new(100_000, 1e-3, 13)).unwrap();
    let vals: Vec<f64> = w.iter().map(|w| w.unwrap().value).collect();
    assert!(Estimate::from_samples(&vals, 13).within(1.0, 3.0));
}

#[test]
fn novikov_examples() {
    let h = make_hydrogenic_field(1.0).unwrap();
    let s = Sampling::new(200, 1e-3, 2);
    let r = novikov_check(&h, 1.0, &[1.0, 0.0, 0.0], 1.0, &s).unwrap();
    assert!((r.estimate.value - 0.5f64.exp()).abs() < 1e-12 && r.estimate.stderr < 1e-12);
    assert_eq!(r.analytic_cap, Some(0.5f64.exp()));
    assert_eq!(novikov_check(&h, 0.0, &[1.0, 0.0, 0.0], 1.0, &s).unwrap().estimate.value, 1.0);
    // Cameron-Martin: E exp(1/2 int_0^t B^2) = (cos t)^{-1/2}
    let ou = make_ou_field(1.0, 1).unwrap();
    let t: f64 = 0.1;
    let exact = t.cos().powf(-0.5);
    let r = novikov_check(&ou, 1.0, &[0.0], t, &Sampling::new(100_000, 1e-3, 3)).unwrap();
    assert!(r.estimate.value.is_finite());
    assert!(r.estimate.within(exact, 3.0), "{:?} vs {exact}", r.estimate);
    assert!(r.estimate.value <= exact + 3.0 * r.estimate.stderr);
}

#[test]
fn girsanov_and_direct_estimators_agree() {
    let fields: Vec<Box<dyn WeightField>> = vec![
        Box::new(make_hydrogenic_field(1.0).unwrap()),
        Box::new(make_ou_field(1.0, 3).unwrap()),
        Box::new(ConstantField::zero(3)),
    ];
    type Functional = fn(&Path) -> Result<f64>;
    let battery: [Functional; 5] = [
        |_| Ok(1.0),
        |p| Ok(p.terminal()[0].tanh()),
        |p| Ok(norm(p.terminal()).min(3.0)),
        |p| Ok(if p.terminal()[1] > 0.0 { 1.0 } else { 0.0 }),
        |p| Ok((0..p.steps()).map(|k| 1.0 / (1.0 + norm(p.state(k)).powi(2))).sum::<f64>() * p.dt()),
    ];
    let s = Sampling::new(20_000, 1e-3, 5);
    for f in &fields {
        for g in battery {
            let r = weighted_expectation(&**f, g, &[0.8, 0.1, -0.3], 0.25, &s).unwrap();
            assert!(r.consistent(3.0), "{r:?}");
        }
    }
    let h = make_hydrogenic_field(1.0).unwrap();
    let inv = |p: &Path| Ok(1.0 / norm(p.state(p.steps() / 2)));
    let r = weighted_expectation(&h, inv, &[1.0, 0.0, 0.0], 0.1, &Sampling::new(50_000, 1e-3, 6)).unwrap();
    assert!(r.consistent(3.0), "{r:?}");
}

#[test]
fn semigroup_one_step_limit() {
    let h = make_hydrogenic_field(1.0).unwrap();
    let dt = 1e-3;
    let x = [1.0, 0.5, 0.0];
    let f = |y: &[f64]| y[0] - 2.0 * y[1];
    let s = Sampling::new(1_000, dt, 2);
    let v = semigroup_apply(&h, f, dt, &x, &s).unwrap();
    assert!((v.value - f(&x)).abs() <= 5.0 * dt.sqrt() * 5f64.sqrt());
}

#[test]
fn feynman_kac_short_time_limit() {
    let spec = MolecularSpec::hydrogen_like(1);
    let h = make_hydrogenic_field(1.0).unwrap();
    let dt = 1e-3;
    let x = [1.0, 0.0, 0.0];
    let r = feynman_kac_check(&spec, &h, &x, dt, &Sampling::new(2_000, dt, 9)).unwrap();
    let psi = (-1.0f64).exp();
    assert!((r.lhs_a.value - psi).abs() / psi <= 5.0 * dt.sqrt());
    assert!((r.rhs_a - psi).abs() / psi <= 5.0 * dt.sqrt());
    assert!((r.lhs_b.value - 1.0 / psi).abs() * psi <= 5.0 * dt.sqrt());
}

#[test]
fn feynman_kac_rules_agree_on_form_a() {
    let spec = MolecularSpec::hydrogen_like(1);
    let h = make_hydrogenic_field(1.0).unwrap();
    let s = Sampling::new(20_000, 1e-3, 10);
    let v = |y: &[f64]| mmlab::weights::coulomb_potential(&spec, y);
    for rule in [TimeRule::LeftPoint, TimeRule::BridgeSample] {
        let r = feynman_kac_check_with(v, &h, &[1.0, 0.0, 0.0], 0.5, &s, rule).unwrap();
        assert!(r.a_holds(3.0), "{rule:?}: {r:?}");
        assert!(!r.b_holds(3.0));
    }
}

#[test]
fn sign_function_smoothing_on_flat_space() {
    let f = ConstantField::zero(3);
    let sign = |y: &[f64]| if y[0] > 0.0 { 1.0 } else { -1.0 };
    let s = Sampling::new(100_000, 0.05, 14);
    let r = lipschitz_ratio(&f, sign, 1.0, 1.0, &[-0.05, 0.0, 0.0], &[0.05, 0.0, 0.0], 0.0, &s).unwrap();
    // E sign(x + B_1) = 2 Phi(x) - 1
    let exact = 2.0 * (2.0 * std_normal().cdf(0.05) - 1.0) / 0.1;
    assert!((r.ratio - exact).abs() <= 3.0 * r.ratio_stderr, "{} vs {exact}", r.ratio);
    assert!((exact - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-3);
    assert!(r.ratio < r.bound && r.bound == 1.0);
}

#[test]
fn gronwall_bound_holds_on_hydrogenic_paths() {
    let h = make_hydrogenic_field(1.0).unwrap();
    for i in 0..50 {
        let p = simulate_path(&h, &[0.3, 0.0, 0.0], 0.5, 1e-3, SeedTag::new(3, i), 1e3).unwrap();
        let q = q_process(&p, &h, |x| 2.0 / norm(x)).unwrap();
        assert!(q.matrices[0] == DMatrix::identity(3, 3));
        for (m, k) in q.matrices.iter().zip(&q.k_integral) {
            assert!(mmlab::geometry::spectral_norm(m) <= k.exp());
        }
    }
}

#[test]
fn bismut_constant_function_has_zero_gradient() {
    let h = make_hydrogenic_field(1.0).unwrap();
    let g = bismut_gradient(&h, |_| 1.0, 1.0, 0.5, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], |_, _| 0.0, &Sampling::new(5_000, 1e-3, 15)).unwrap();
    assert!(g.value.abs() <= 3.0 * g.stderr);
    assert!(g.respects_cap());
}

#[test]
fn bismut_matches_ou_gradient_and_finite_differences() {
    let ou = make_ou_field(1.0, 2).unwrap();
    let s = Sampling::new(40_000, 1e-3, 16);
    let x = [0.3, -0.4];
    let v = [0.6, 0.8];
    let t = 0.7;
    let f = |y: &[f64]| (y[0] + y[1]).tanh();
    let g = bismut_gradient(&ou, f, 1.0, t, &x, &v, |_, _| 0.0, &s).unwrap();
    let fd = finite_difference_gradient(&ou, f, t, &x, &v, 1e-2, &s).unwrap();
    // y_0 + y_1 is Gaussian with mean (x_0 + x_1) e^{-t} and variance (1 - e^{-2t})
    let decay = (-t as f64).exp();
    let sd = (1.0 - decay * decay).sqrt();
    let gh = GaussHermite::new(64);
    let mean_sech2: f64 = gh.nodes.iter().zip(&gh.weights).map(|(z, w)| w / ((x[0] + x[1]) * decay + sd * z).cosh().powi(2)).sum();
    let exact = decay * (v[0] + v[1]) * mean_sech2;
    let est = g.estimate(16, s.n_paths);
    assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
    assert!(mmlab::estimators::agree(&est, &fd, 3.0), "{est:?} vs {fd:?}");
    assert!(g.respects_cap());
}

#[test]
fn mollified_bismut_sweep_contracts() {
    let h = make_hydrogenic_field(1.0).unwrap();
    let s = Sampling::new(4_000, 1e-2, 17);
    let x = [0.5, 0.0, 0.0];
    let v = [1.0, 0.0, 0.0];
    let f = |y: &[f64]| y[0].tanh();
    let mut values = Vec::new();
    for eps in [1.0, 0.1, 0.01] {
        let m = mollify_with(&h, eps, MollifyOptions { quadrature_order: 4, ..Default::default() }).unwrap();
        let g = bismut_gradient(&m, f, 1.0, 0.5, &x, &v, |_, _| 0.0, &s).unwrap();
        assert!(g.respects_cap());
        values.push(g);
    }
    assert!((values[2].value - values[1].value).abs() < (values[1].value - values[0].value).abs());
    let fd = finite_difference_gradient(&h, f, 0.5, &x, &v, 1e-2, &s).unwrap();
    assert!(mmlab::estimators::agree(&values[2].estimate(17, 4_000), &fd, 3.0));
}

#[test]
fn killed_paths_count_as_zero() {
    let s = Sampling::new(500, 1e-3, 18).with_escape_radius(3.0);
    let rows = map_paths(&Outward, &[0.5], 1.0, &s, |p| p.survived()).unwrap();
    let alive = rows.iter().filter(|a| **a).count() as f64 / rows.len() as f64;
    let m = semigroup_apply(&Outward, |_| 1.0, 1.0, &[0.5], &s).unwrap();
    assert_eq!(m.value, alive);
}
