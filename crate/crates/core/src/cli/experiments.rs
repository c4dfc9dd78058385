use crate::estimators::{agree, bismut_gradient, feynman_kac_check, finite_difference_gradient, khasminskii_rate, lipschitz_ratio};
use crate::geometry::{check_ricci_kato_bound, check_ricci_kato_bound_with, distance_to_sigma, fs_ratio, ground_state_derivative, harnack_ratio, operator_norm, ricci, FsForm, BALL_SAMPLES};
use crate::paths::map_paths;
use crate::quadrature::{ball_points, GaussHermite};
use crate::stats::Estimate;
use crate::stochcalc::{automatic_probes, girsanov_samples, kato_norm, kato_sweep, khasminskii_bound, khasminskii_empirical, novikov_check, sigma_anchors, TimeRule, AUTO_PROBE_DISTANCES};
use crate::weights::{mollify_with, norm, MolecularSpec, MollifyOptions};

use super::report::{cell, coord_header, coords, Report, Table};
use super::{CliError, ExperimentConfig, ExperimentKind, FieldName, Setup};

/// Standard errors allowed between an estimate and its target.
const K_SIGMA: f64 = 3.0;
const FK_REL_TOL: f64 = 0.02;
const RICCI_PROBES: usize = 100;
const RICCI_PROBE_RADIUS: f64 = 5.0;
const RICCI_REL_TOL: f64 = 1e-6;
const DEFAULT_KATO_HORIZONS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
const DEFAULT_LIPSCHITZ_HORIZONS: [f64; 2] = [0.25, 1.0];
const LIPSCHITZ_SEPARATION: f64 = 0.1;
const LIPSCHITZ_SPREAD: f64 = 3.0;
/// Horizons searched for the exponential-moment rate.
const RATE_HORIZONS: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];
const FD_STEP: f64 = 1e-2;
const HARNACK_RADIUS: f64 = 0.5;
const HARNACK_CENTERS: usize = 20;
const HARNACK_MAX_CENTER: f64 = 5.0;
const FS_RADII: [f64; 5] = [2.0, 1.0, 0.1, 0.01, 0.001];
/// Largest spread of the second-order ratio over probes within 0.1 of Sigma.
const FS_NEAR_SPREAD: f64 = 2.0;

pub(super) fn dispatch(cfg: &ExperimentConfig, s: &Setup) -> Result<Report, CliError> {
    let mut r = Report::default();
    match cfg.experiment {
        ExperimentKind::RicciBound => ricci_bound(cfg, s, &mut r)?,
        ExperimentKind::KatoNorm => kato(cfg, s, &mut r)?,
        ExperimentKind::GirsanovCheck => girsanov(cfg, s, &mut r)?,
        ExperimentKind::Completeness => completeness(cfg, s, &mut r)?,
        ExperimentKind::FeynmanKac => feynman_kac(cfg, s, &mut r)?,
        ExperimentKind::Lipschitz => lipschitz(cfg, s, &mut r)?,
        ExperimentKind::Bismut => bismut(cfg, s, &mut r)?,
        ExperimentKind::Harnack => harnack(cfg, s, &mut r)?,
        ExperimentKind::FsRatio => fs(cfg, s, &mut r)?,
        ExperimentKind::Khasminskii => khasminskii(cfg, s, &mut r)?,
    }
    Ok(r)
}

fn need_sigma<'a>(s: &'a Setup, what: &str) -> Result<&'a MolecularSpec, CliError> {
    s.sigma
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{what} needs a field with a singular set (hydrogenic, molecular, or zero in dimension 3n)")))
}

/// User probes, then the automatic grid around Sigma, then `extra`.
fn probe_set(cfg: &ExperimentConfig, sigma: &MolecularSpec, extra: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut probes = cfg.probes.clone();
    probes.extend(automatic_probes(&sigma_anchors(sigma), &AUTO_PROBE_DISTANCES));
    probes.extend(extra.iter().map(|p| p.to_vec()));
    probes
}

fn est_json(e: &Estimate) -> serde_json::Value {
    serde_json::json!({ "value": e.value, "stderr": e.stderr, "n_samples": e.n_samples })
}

fn ricci_bound(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let probes = if cfg.probes.is_empty() {
        ball_points(&vec![0.0; field.dim()], RICCI_PROBE_RADIUS, 4 * RICCI_PROBES)
            .into_iter()
            .filter(|p| field.sigma_distance(p).map_or(true, |d| d > 0.1))
            .take(RICCI_PROBES)
            .collect()
    } else {
        cfg.probes.clone()
    };
    let fitted = check_ricci_kato_bound(field, &probes)?;
    r.metric("fitted_a1", fitted.a1);
    r.metric("fitted_a2", fitted.a2);
    r.metric("fitted_violations", fitted.violations);
    r.check("fitted_envelope_valid", fitted.violations == 0, format!("{} violations of A1={} A2={}", fitted.violations, fitted.a1, fitted.a2));
    let supplied = match cfg.field.name {
        FieldName::Hydrogenic => Some((0.0, 2.0 * cfg.field.param("z", 1.0))),
        FieldName::Ou => Some((2.0 * cfg.field.param("kappa", 1.0), 0.0)),
        FieldName::Zero => Some((0.0, 0.0)),
        FieldName::Molecular => None,
    };
    if let Some((a1, a2)) = supplied {
        let rep = check_ricci_kato_bound_with(field, &probes, a1, a2)?;
        r.metric("supplied_violations", rep.violations);
        r.check("supplied_envelope_valid", rep.violations == 0, format!("{} violations of A1={a1} A2={a2}", rep.violations));
    }
    if cfg.field.name == FieldName::Hydrogenic {
        let z = cfg.field.param("z", 1.0);
        let worst = fitted
            .ricci_norms
            .iter()
            .zip(&fitted.probes)
            .map(|(n, p)| (n - 2.0 * z / norm(p)).abs() / (2.0 * z / norm(p)))
            .fold(0.0, f64::max);
        r.metric("max_rel_error_vs_2z_over_r", worst);
        r.check("norm_equals_2z_over_r", worst <= RICCI_REL_TOL, format!("max relative error {worst:e}"));
    }
    let mut table = Table::new(coord_header("x_", field.dim()).into_iter().chain(["ricci_norm".into(), "sigma_distance".into(), "envelope".into()]));
    for ((p, n), d) in fitted.probes.iter().zip(&fitted.ricci_norms).zip(&fitted.sigma_distances) {
        let mut row = coords(p);
        row.extend([cell(*n), cell(*d), cell(fitted.envelope(*d))]);
        table.push(row);
    }
    r.detail = table;
    Ok(())
}

fn kato(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let sigma = need_sigma(s, "kato-norm")?;
    let probes = probe_set(cfg, sigma, &[]);
    let mut horizons = cfg.horizons.clone().unwrap_or_else(|| DEFAULT_KATO_HORIZONS.to_vec());
    horizons.sort_by(|a, b| b.total_cmp(a));
    horizons.dedup();
    let v = |y: &[f64]| 1.0 / distance_to_sigma(sigma, y);
    let sweep = kato_sweep(&*s.field, v, &horizons, &probes, &s.sampling, TimeRule::default())?;
    let dim = s.field.dim();
    let mut table = Table::new(["horizon".to_string(), "probe".into()].into_iter().chain(coord_header("x_", dim)).chain(["value".into(), "stderr".into()]));
    let mut sups = Vec::new();
    for est in &sweep {
        for (i, (p, e)) in est.probes.iter().zip(&est.values).enumerate() {
            let mut row = vec![cell(est.horizon), i.to_string()];
            row.extend(coords(p));
            row.extend([cell(e.value), cell(e.stderr)]);
            table.push(row);
        }
        sups.push(serde_json::json!({
            "horizon": est.horizon,
            "sup": est.sup_value,
            "argmax": est.probes[est.argmax],
            "clipped": est.clipped,
        }));
    }
    r.detail = table;
    r.metric("sweep", &sups);
    let decreasing = sweep.windows(2).all(|w| w[1].sup_value < w[0].sup_value);
    r.check(
        "sup_strictly_decreasing",
        decreasing,
        format!("sups {:?} at horizons {:?}", sweep.iter().map(|e| e.sup_value).collect::<Vec<_>>(), horizons),
    );
    if cfg.field.name == FieldName::Zero && dim == 3 {
        for est in &sweep {
            if let Some(i) = est.probes.iter().position(|p| p.iter().all(|c| *c == 0.0)) {
                let exact = 2.0 * (2.0 * est.horizon / std::f64::consts::PI).sqrt();
                let e = &est.values[i];
                r.check(
                    &format!("origin_matches_closed_form_t{}", est.horizon),
                    e.within(exact, K_SIGMA),
                    format!("{} +- {} vs {exact}", e.value, e.stderr),
                );
            }
        }
    }
    Ok(())
}

fn girsanov(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let samples = girsanov_samples(field, 1.0, &s.start, cfg.t, &s.sampling)?;
    let failures = samples.iter().filter(|w| w.is_none()).count();
    let values: Vec<f64> = samples.iter().flatten().map(|w| w.value).collect();
    let est = Estimate::from_samples(&values, cfg.seed);
    let worst_identity = samples
        .iter()
        .flatten()
        .map(|w| (w.value - (w.ito_term - w.quadratic_term).exp()).abs() / w.value)
        .fold(0.0, f64::max);
    let mut table = Table::new(["path", "value", "ito_term", "quadratic_term"]);
    for (i, w) in samples.iter().enumerate() {
        table.push(match w {
            Some(w) => vec![i.to_string(), cell(w.value), cell(w.ito_term), cell(w.quadratic_term)],
            None => vec![i.to_string(), "failed".into(), String::new(), String::new()],
        });
    }
    r.detail = table;
    r.metric("mean", est_json(&est));
    r.metric("failures", failures);
    if field.grad_sup_bound().is_some() {
        let nov = novikov_check(field, 1.0, &s.start, cfg.t, &s.sampling)?;
        r.metric("novikov", &nov);
    }
    r.check("mean_is_one", est.within(1.0, K_SIGMA), format!("{} +- {}", est.value, est.stderr));
    r.check("weight_identity", worst_identity <= 1e-12, format!("max relative error {worst_identity:e}"));
    Ok(())
}

fn completeness(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let rows = map_paths(&*s.field, &s.start, cfg.t, &s.sampling, |p| (p.exploded_at, norm(p.terminal())))?;
    let alive: Vec<f64> = rows.iter().map(|(e, _)| if e.is_none() { 1.0 } else { 0.0 }).collect();
    let survival = Estimate::from_samples(&alive, cfg.seed);
    let exploded = rows.iter().filter(|(e, _)| e.is_some()).count();
    let mut table = Table::new(["path", "exploded_at", "terminal_radius"]);
    for (i, (e, rad)) in rows.iter().enumerate() {
        table.push(vec![i.to_string(), e.map_or(String::new(), |k| k.to_string()), cell(*rad)]);
    }
    r.detail = table;
    r.metric("survival", est_json(&survival));
    r.metric("exploded", exploded);
    r.check("no_explosions", survival.value == 1.0, format!("{exploded} of {} paths exploded", rows.len()));
    Ok(())
}

fn feynman_kac(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let spec = match cfg.field.name {
        FieldName::Hydrogenic => {
            let z = cfg.field.param("z", 1.0);
            if z.fract() != 0.0 {
                return Err(CliError::Config(format!("feynman-kac needs an integer nuclear charge, got z = {z}")));
            }
            need_sigma(s, "feynman-kac")?
        }
        _ => need_sigma(s, "feynman-kac")?,
    };
    let rep = feynman_kac_check(spec, &*s.field, &s.start, cfg.t, &s.sampling)?;
    let a = rep.a_holds(K_SIGMA) && rep.rel_error_a() <= FK_REL_TOL;
    let b = rep.b_holds(K_SIGMA) && rep.rel_error_b() <= FK_REL_TOL;
    let mut table = Table::new(["form", "lhs", "stderr", "rhs", "rel_error", "holds"]);
    table.push(vec!["A".into(), cell(rep.lhs_a.value), cell(rep.lhs_a.stderr), cell(rep.rhs_a), cell(rep.rel_error_a()), a.to_string()]);
    table.push(vec!["B".into(), cell(rep.lhs_b.value), cell(rep.lhs_b.stderr), cell(rep.rhs_b), cell(rep.rel_error_b()), b.to_string()]);
    r.detail = table;
    r.metric("form_a", serde_json::json!({ "lhs": est_json(&rep.lhs_a), "rhs": rep.rhs_a, "rel_error": rep.rel_error_a(), "holds": a }));
    r.metric("form_b", serde_json::json!({ "lhs": est_json(&rep.lhs_b), "rhs": rep.rhs_b, "rel_error": rep.rel_error_b(), "holds": b }));
    r.metric("excluded_paths", rep.excluded);
    let winner = match (a, b) {
        (true, false) => "A",
        (false, true) => "B",
        (true, true) => "both",
        (false, false) => "neither",
    };
    r.metric("holding_form", winner);
    r.check("some_form_holds", a || b, format!("form A: {a}, form B: {b}"));
    Ok(())
}

fn lipschitz(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let x = s.start.clone();
    let mut y = x.clone();
    y[0] += LIPSCHITZ_SEPARATION;
    let threshold = 0.5 * (x[0] + y[0]);
    let f = move |p: &[f64]| if p[0] > threshold { 1.0 } else { 0.0 };
    let k = |p: &[f64]| ricci(field, p).map_or(f64::INFINITY, |m| operator_norm(&m));
    let mut probes = match &s.sigma {
        Some(sigma) => probe_set(cfg, sigma, &[&x, &y]),
        None => cfg.probes.iter().cloned().chain([x.clone(), y.clone()]).collect(),
    };
    probes.retain(|p| field.sigma_distance(p).map_or(true, |d| d > 0.0));
    let rate = khasminskii_rate(field, k, &probes, &RATE_HORIZONS, &s.sampling)?;
    r.metric("rate", &rate);
    let horizons = cfg.horizons.clone().unwrap_or_else(|| DEFAULT_LIPSCHITZ_HORIZONS.to_vec());
    let mut table = Table::new(["t", "p_x", "p_y", "difference", "stderr", "ratio", "scaled_ratio", "bound"]);
    let mut scaled = Vec::new();
    for &t in &horizons {
        let rep = lipschitz_ratio(field, f, 1.0, t, &x, &y, rate.rate, &s.sampling)?;
        table.push(vec![
            cell(t),
            cell(rep.pair.at_x.value),
            cell(rep.pair.at_y.value),
            cell(rep.pair.difference.value),
            cell(rep.pair.difference.stderr),
            cell(rep.ratio),
            cell(rep.scaled_ratio()),
            cell(rep.bound),
        ]);
        r.check(&format!("ratio_within_bound_t{t}"), rep.within_bound(), format!("ratio {} vs bound {}", rep.ratio, rep.bound));
        scaled.push(rep.scaled_ratio());
    }
    r.detail = table;
    if scaled.len() >= 2 {
        let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        r.metric("scaled_ratio_spread", hi / lo);
        r.check("scaled_ratio_spread", lo > 0.0 && hi / lo < LIPSCHITZ_SPREAD, format!("ratio*sqrt(t) in [{lo}, {hi}]"));
    }
    Ok(())
}

/// `e^{-kappa t} E[sech^2(Y)]`, `Y ~ N(x e^{-kappa t}, (1 - e^{-2 kappa t}) / 2 kappa)`.
fn ou_tanh_gradient(kappa: f64, x: f64, t: f64) -> f64 {
    let decay = (-kappa * t).exp();
    let sd = ((1.0 - decay * decay) / (2.0 * kappa)).sqrt();
    let gh = GaussHermite::new(64);
    let mean: f64 = gh.nodes.iter().zip(&gh.weights).map(|(z, w)| w / (x * decay + sd * z).cosh().powi(2)).sum();
    decay * mean
}

fn bismut(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let dim = field.dim();
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    let f = |p: &[f64]| p[0].tanh();
    let fd = finite_difference_gradient(field, f, cfg.t, &s.start, &v, FD_STEP, &s.sampling)?;
    r.metric("finite_difference", est_json(&fd));
    let mut table = Table::new(["epsilon", "value", "stderr", "bdg_cap", "exp_moment", "failures"]);
    let push = |label: String, g: &crate::estimators::GradientEstimate, table: &mut Table| {
        table.push(vec![label, cell(g.value), cell(g.stderr), cell(g.bdg_cap), cell(g.exp_moment.value), g.failures.to_string()]);
    };
    let smooth = matches!(cfg.field.name, FieldName::Ou | FieldName::Zero);
    if smooth {
        let g = bismut_gradient(field, f, 1.0, cfg.t, &s.start, &v, |_, _| 0.0, &s.sampling)?;
        push("none".into(), &g, &mut table);
        let est = g.estimate(cfg.seed, cfg.n_paths);
        r.check("respects_cap", g.respects_cap(), format!("|{}| vs cap {}", g.value, g.bdg_cap));
        r.check("matches_finite_difference", agree(&est, &fd, K_SIGMA), format!("{} +- {} vs {} +- {}", g.value, g.stderr, fd.value, fd.stderr));
        let exact = match cfg.field.name {
            FieldName::Ou => Some(ou_tanh_gradient(cfg.field.param("kappa", 1.0), s.start[0], cfg.t)),
            _ => {
                let sd = cfg.t.sqrt();
                let gh = GaussHermite::new(64);
                Some(gh.nodes.iter().zip(&gh.weights).map(|(z, w)| w / (s.start[0] + sd * z).cosh().powi(2)).sum())
            }
        };
        if let Some(exact) = exact {
            r.metric("exact", exact);
            r.check("matches_exact", est.within(exact, K_SIGMA), format!("{} +- {} vs {exact}", g.value, g.stderr));
        }
        r.metric("bismut", serde_json::json!({ "value": g.value, "stderr": g.stderr, "bdg_cap": g.bdg_cap }));
    } else {
        if cfg.epsilon_sweep.is_empty() {
            return Err(CliError::Config("bismut on a singular field needs a nonempty epsilon_sweep".into()));
        }
        let order = cfg.field.param("quadrature_order", MollifyOptions::default().quadrature_order as f64);
        let opts = MollifyOptions { quadrature_order: order.max(1.0) as usize, ..MollifyOptions::default() };
        let mut sweep = cfg.epsilon_sweep.clone();
        sweep.sort_by(|a, b| b.total_cmp(a));
        let mut estimates = Vec::new();
        for &eps in &sweep {
            let mf = mollify_with(field, eps, opts)?;
            let g = bismut_gradient(&mf, f, 1.0, cfg.t, &s.start, &v, |_, _| 0.0, &s.sampling)?;
            push(cell(eps), &g, &mut table);
            r.check(&format!("respects_cap_eps{eps}"), g.respects_cap(), format!("|{}| vs cap {}", g.value, g.bdg_cap));
            estimates.push(g);
        }
        let gaps: Vec<f64> = estimates.windows(2).map(|w| (w[1].value - w[0].value).abs()).collect();
        r.metric("successive_gaps", &gaps);
        if gaps.len() >= 2 {
            r.check("gaps_shrink", gaps.windows(2).all(|w| w[1] < w[0]), format!("{gaps:?}"));
        }
        let last = estimates.last().expect("nonempty sweep");
        let est = last.estimate(cfg.seed, cfg.n_paths);
        r.check(
            "limit_matches_finite_difference",
            agree(&est, &fd, K_SIGMA),
            format!("{} +- {} vs {} +- {}", last.value, last.stderr, fd.value, fd.stderr),
        );
    }
    r.detail = table;
    Ok(())
}

fn harnack(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let dim = field.dim();
    let centers: Vec<Vec<f64>> = if cfg.probes.is_empty() {
        let dirs = ball_points(&vec![0.0; dim], 1.0, HARNACK_CENTERS);
        dirs.iter()
            .enumerate()
            .map(|(i, d)| {
                let n = norm(d);
                let radius = HARNACK_MAX_CENTER * i as f64 / (HARNACK_CENTERS - 1) as f64;
                d.iter().map(|c| radius * c / n).collect()
            })
            .collect()
    } else {
        cfg.probes.clone()
    };
    let bound = field.grad_sup_bound().map(|c| (2.0 * HARNACK_RADIUS * c).exp());
    let mut table = Table::new(coord_header("c_", dim).into_iter().chain(["center_norm".into(), "sup".into(), "inf".into(), "ratio".into(), "removed".into()]));
    let mut worst: f64 = 1.0;
    let mut below_one = 0;
    for c in &centers {
        let h = harnack_ratio(field, c, HARNACK_RADIUS, BALL_SAMPLES)?;
        let mut row = coords(c);
        row.extend([cell(norm(c)), cell(h.sup_value), cell(h.inf_value), cell(h.ratio), h.samples_removed.to_string()]);
        table.push(row);
        worst = worst.max(h.ratio);
        if h.ratio < 1.0 {
            below_one += 1;
        }
    }
    r.detail = table;
    r.metric("max_ratio", worst);
    r.check("ratio_at_least_one", below_one == 0, format!("{below_one} ratios below 1"));
    if let Some(b) = bound {
        r.metric("bound", b);
        r.check("ratio_within_bound", worst <= b, format!("max ratio {worst} vs {b}"));
    }
    Ok(())
}

fn fs(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let dim = field.dim();
    let default_sweep = cfg.probes.is_empty();
    let origin = s.sigma.as_ref().map_or_else(|| vec![0.0; dim], |sig| sigma_anchors(sig).remove(0));
    let probes: Vec<Vec<f64>> = if default_sweep {
        FS_RADII
            .iter()
            .map(|rad| {
                let mut p = origin.clone();
                p[0] += rad;
                p
            })
            .collect()
    } else {
        cfg.probes.clone()
    };
    let second = if dim >= 2 { vec![1, 1] } else { vec![0, 0] };
    let alphas: [Vec<usize>; 2] = [vec![0], second.clone()];
    let mut table = Table::new(
        coord_header("x_", dim)
            .into_iter()
            .chain(["sigma_distance".into(), "alpha".into(), "form".into(), "derivative".into(), "ratio".into()]),
    );
    let mut all_finite = true;
    let mut near = Vec::new();
    for p in &probes {
        let dist = field.sigma_distance(p).unwrap_or(f64::INFINITY);
        for alpha in &alphas {
            let deriv = ground_state_derivative(field, alpha, p)?;
            for form in [FsForm::LocalSup, FsForm::SelfNormalized] {
                let ratio = fs_ratio(field, alpha, p, form, BALL_SAMPLES)?;
                all_finite &= ratio.is_finite();
                if *alpha == second && form == FsForm::LocalSup && dist <= 0.1 {
                    near.push(ratio);
                }
                let mut row = coords(p);
                row.extend([
                    cell(dist),
                    alpha.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(";"),
                    format!("{form:?}"),
                    cell(deriv),
                    cell(ratio),
                ]);
                table.push(row);
            }
        }
    }
    r.detail = table;
    r.check("ratios_finite", all_finite, "every ratio is finite");
    if default_sweep && s.sigma.is_some() && near.len() >= 2 {
        let hi = near.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = near.iter().cloned().fold(f64::INFINITY, f64::min);
        r.metric("near_sigma_second_order", &near);
        r.check("bounded_near_sigma", lo > 0.0 && hi / lo <= FS_NEAR_SPREAD, format!("second-order ratios in [{lo}, {hi}]"));
    }
    Ok(())
}

fn khasminskii(cfg: &ExperimentConfig, s: &Setup, r: &mut Report) -> Result<(), CliError> {
    let field = &*s.field;
    let sigma = need_sigma(s, "khasminskii")?;
    let k = |y: &[f64]| 1.0 / distance_to_sigma(sigma, y);
    let probes = probe_set(cfg, sigma, &[&s.start]);
    let kato_est = kato_norm(field, k, cfg.t, &probes, &s.sampling)?;
    let alpha = kato_est.sup_value;
    let empirical = khasminskii_empirical(field, k, &s.start, cfg.t, &s.sampling)?;
    let dim = field.dim();
    let mut table = Table::new(["quantity".to_string(), "probe".into()].into_iter().chain(coord_header("x_", dim)).chain(["value".into(), "stderr".into()]));
    for (i, (p, e)) in kato_est.probes.iter().zip(&kato_est.values).enumerate() {
        let mut row = vec!["kato".into(), i.to_string()];
        row.extend(coords(p));
        row.extend([cell(e.value), cell(e.stderr)]);
        table.push(row);
    }
    let mut row = vec!["exp_moment".into(), String::new()];
    row.extend(coords(&s.start));
    row.extend([cell(empirical.value), cell(empirical.stderr)]);
    table.push(row);
    r.detail = table;
    r.metric("alpha", alpha);
    r.metric("argmax", &kato_est.probes[kato_est.argmax]);
    r.metric("empirical", est_json(&empirical));
    r.check("alpha_below_one", alpha < 1.0, format!("alpha = {alpha}"));
    if alpha > 0.0 && alpha < 1.0 {
        let bound = khasminskii_bound(alpha, cfg.t, cfg.t)?;
        r.metric("bound", bound);
        r.check(
            "moment_within_bound",
            empirical.value <= bound + K_SIGMA * empirical.stderr,
            format!("{} +- {} vs {bound}", empirical.value, empirical.stderr),
        );
    }
    Ok(())
}
