//! Weight fields `Phi` on `R^m`, the Coulomb potential of a molecule, and
//! Gaussian mollification.
//!
//! A weight field induces the measure `exp(-2 Phi) dx`, the drift `-grad Phi`
//! of its diffusion and the Bakry–Emery tensor `2 hess Phi`. Ground-state
//! weights are `Psi = -log(psi)` for a positive ground state `psi`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, require_positive, Error, Result};
use crate::geometry::distance_to_sigma;
use crate::quadrature::GaussHermite;
use crate::rng::{Channel, SeedTag, VariateStream};

/// Pairwise distances below this are treated as lying on the singular set.
pub const HARD_FLOOR: f64 = 1e-12;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got: x.len() })
    }
}

fn check_floor(distance: f64) -> Result<()> {
    if distance < HARD_FLOOR {
        Err(Error::Singularity { distance, floor: HARD_FLOOR })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub position: [f64; 3],
    pub charge: u32,
}

/// Nuclei at fixed positions with positive integer charges and `electrons`
/// electrons; configurations live in `R^{3 electrons}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMolecularSpec")]
pub struct MolecularSpec {
    pub nuclei: Vec<Nucleus>,
    pub electrons: usize,
}

#[derive(Deserialize)]
struct RawMolecularSpec {
    nuclei: Vec<Nucleus>,
    electrons: usize,
}

impl TryFrom<RawMolecularSpec> for MolecularSpec {
    type Error = Error;

    fn try_from(raw: RawMolecularSpec) -> Result<Self> {
        MolecularSpec::new(raw.nuclei, raw.electrons)
    }
}

impl MolecularSpec {
    pub fn new(nuclei: Vec<Nucleus>, electrons: usize) -> Result<Self> {
        if nuclei.is_empty() {
            return Err(parameter("nuclei", "at least one nucleus is required"));
        }
        if electrons == 0 {
            return Err(parameter("electrons", "at least one electron is required"));
        }
        for (i, a) in nuclei.iter().enumerate() {
            if a.charge == 0 {
                return Err(parameter("charge", format!("nucleus {i} has zero charge")));
            }
            if a.position.iter().any(|c| !c.is_finite()) {
                return Err(parameter("position", format!("nucleus {i} has a non-finite coordinate")));
            }
            if nuclei[..i].iter().any(|b| b.position == a.position) {
                return Err(parameter("position", format!("nucleus {i} coincides with an earlier nucleus")));
            }
        }
        Ok(MolecularSpec { nuclei, electrons })
    }

    /// One nucleus of charge `charge` at the origin with one electron.
    pub fn hydrogen_like(charge: u32) -> Self {
        MolecularSpec::new(vec![Nucleus { position: [0.0; 3], charge }], 1).expect("valid spec")
    }

    pub fn dim(&self) -> usize {
        3 * self.electrons
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

fn dist3(a: &[f64], b: &[f64]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `V(x) = -sum_{i,j} Z_j/|x_i - R_j| + sum_{i<k} 1/|x_i - x_k|`.
pub fn coulomb_potential(spec: &MolecularSpec, x: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), x)?;
    let mut v = 0.0;
    for i in 0..spec.electrons {
        let xi = &x[3 * i..3 * i + 3];
        for nuc in &spec.nuclei {
            let r = dist3(xi, &nuc.position);
            check_floor(r)?;
            v -= nuc.charge as f64 / r;
        }
        for k in 0..i {
            let r = dist3(xi, &x[3 * k..3 * k + 3]);
            check_floor(r)?;
            v += 1.0 / r;
        }
    }
    Ok(v)
}

/// A weight `Phi: R^dim -> R` with its first and second derivatives.
///
/// Derivatives may fail on the singular set; the value itself is expected to
/// be defined wherever the field is locally Lipschitz.
pub trait WeightField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    /// `|x - Sigma|` when the field carries a singular set.
    fn sigma_distance(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Exact ground-state energy under `H = -Delta/2 + V`, for oracle fields.
    fn ground_energy(&self) -> Option<f64> {
        None
    }

    /// `C` with `|grad Phi| <= C` off the singular set.
    fn grad_sup_bound(&self) -> Option<f64> {
        None
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g)?;
        Ok(g)
    }

    fn laplacian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.hessian(x)?.trace())
    }

    /// The positive density `exp(-Phi(x))`.
    fn ground_state(&self, x: &[f64]) -> Result<f64> {
        Ok((-self.value(x)?).exp())
    }
}

impl<T: WeightField + ?Sized> WeightField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).grad_into(x, out)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(x)
    }
    fn sigma_distance(&self, x: &[f64]) -> Option<f64> {
        (**self).sigma_distance(x)
    }
    fn ground_energy(&self) -> Option<f64> {
        (**self).ground_energy()
    }
    fn grad_sup_bound(&self) -> Option<f64> {
        (**self).grad_sup_bound()
    }
}

impl<T: WeightField + ?Sized> WeightField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).grad_into(x, out)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(x)
    }
    fn sigma_distance(&self, x: &[f64]) -> Option<f64> {
        (**self).sigma_distance(x)
    }
    fn ground_energy(&self) -> Option<f64> {
        (**self).ground_energy()
    }
    fn grad_sup_bound(&self) -> Option<f64> {
        (**self).grad_sup_bound()
    }
}

/// `Phi == value` on `R^dim`; with `value = 0` the diffusion is Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField {
    pub dim: usize,
    pub value: f64,
}

impl ConstantField {
    pub fn zero(dim: usize) -> Self {
        ConstantField { dim, value: 0.0 }
    }
}

impl WeightField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.value)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x)?;
        out.fill(0.0);
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim, x)?;
        Ok(DMatrix::zeros(self.dim, self.dim))
    }
    fn grad_sup_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `Psi(x) = Z|x|` in `R^3`: the weight of the hydrogen-like ground state
/// `exp(-Z|x|)` with energy `-Z^2/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydrogenicField {
    z: f64,
}

pub fn make_hydrogenic_field(z: f64) -> Result<HydrogenicField> {
    require_positive("Z", z)?;
    Ok(HydrogenicField { z })
}

impl HydrogenicField {
    pub fn charge(&self) -> f64 {
        self.z
    }
}

impl WeightField for HydrogenicField {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(3, x)?;
        Ok(self.z * norm(x))
    }
    #[inline]
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(3, x)?;
        let r = norm(x);
        check_floor(r)?;
        let s = self.z / r;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(3, x)?;
        let r = norm(x);
        check_floor(r)?;
        Ok(DMatrix::from_fn(3, 3, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            self.z * (delta - x[i] * x[j] / (r * r)) / r
        }))
    }
    fn sigma_distance(&self, x: &[f64]) -> Option<f64> {
        Some(norm(x))
    }
    fn ground_energy(&self) -> Option<f64> {
        Some(-0.5 * self.z * self.z)
    }
    fn grad_sup_bound(&self) -> Option<f64> {
        Some(self.z)
    }
}

/// `Phi(x) = kappa |x|^2 / 2`, whose diffusion is the Ornstein–Uhlenbeck process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuField {
    kappa: f64,
    dim: usize,
}

pub fn make_ou_field(kappa: f64, dim: usize) -> Result<OuField> {
    require_positive("kappa", kappa)?;
    if dim == 0 {
        return Err(parameter("dim", "must be at least 1"));
    }
    Ok(OuField { kappa, dim })
}

impl OuField {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl WeightField for OuField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(0.5 * self.kappa * x.iter().map(|v| v * v).sum::<f64>())
    }
    #[inline]
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.kappa * xi;
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim, x)?;
        Ok(DMatrix::identity(self.dim, self.dim) * self.kappa)
    }
}

/// A strictly positive ground-state approximation `psi` with derivatives,
/// supplied from outside (the crate has no eigensolver).
pub trait GroundStateProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// Bound on `|grad psi| / psi`, when known.
    fn log_grad_bound(&self) -> Option<f64> {
        None
    }

    fn ground_energy(&self) -> Option<f64> {
        None
    }
}

/// The exact hydrogen-like ground state `exp(-Z|x|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydrogenicProvider {
    pub z: f64,
}

impl GroundStateProvider for HydrogenicProvider {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &[f64]) -> f64 {
        (-self.z * norm(x)).exp()
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let p = (-self.z * r).exp();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.z * p * xi / r;
        }
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let r = norm(x);
        let p = (-self.z * r).exp();
        let z = self.z;
        DMatrix::from_fn(3, 3, |i, j| {
            let (ui, uj) = (x[i] / r, x[j] / r);
            let delta = if i == j { 1.0 } else { 0.0 };
            p * (z * z * ui * uj - z * (delta - ui * uj) / r)
        })
    }
    fn log_grad_bound(&self) -> Option<f64> {
        Some(self.z)
    }
    fn ground_energy(&self) -> Option<f64> {
        Some(-0.5 * self.z * self.z)
    }
}

/// Product of per-electron sums of Slater orbitals,
/// `psi(x) = prod_i sum_j exp(-Z_j |x_i - R_j|)`.
///
/// A positive trial state with the cusp structure of the molecule and
/// `|grad log psi| <= max_j Z_j * sqrt(n)`; not an eigenfunction.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterProductProvider {
    pub spec: MolecularSpec,
}

impl SlaterProductProvider {
    /// Per electron: `s_i`, `grad s_i` (3) and `hess s_i` (3x3).
    fn orbital_sums(&self, x: &[f64]) -> Vec<(f64, [f64; 3], [[f64; 3]; 3])> {
        (0..self.spec.electrons)
            .map(|i| {
                let xi = &x[3 * i..3 * i + 3];
                let mut s = 0.0;
                let mut g = [0.0; 3];
                let mut h = [[0.0; 3]; 3];
                for nuc in &self.spec.nuclei {
                    let z = nuc.charge as f64;
                    let d = [xi[0] - nuc.position[0], xi[1] - nuc.position[1], xi[2] - nuc.position[2]];
                    let r = norm(&d);
                    let e = (-z * r).exp();
                    s += e;
                    for a in 0..3 {
                        let ua = d[a] / r;
                        g[a] -= z * e * ua;
                        for b in 0..3 {
                            let ub = d[b] / r;
                            let delta = if a == b { 1.0 } else { 0.0 };
                            h[a][b] += e * (z * z * ua * ub - z * (delta - ua * ub) / r);
                        }
                    }
                }
                (s, g, h)
            })
            .collect()
    }
}

impl GroundStateProvider for SlaterProductProvider {
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.orbital_sums(x).iter().map(|o| o.0).product()
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let sums = self.orbital_sums(x);
        let p: f64 = sums.iter().map(|o| o.0).product();
        for (i, (s, g, _)) in sums.iter().enumerate() {
            for a in 0..3 {
                out[3 * i + a] = p * g[a] / s;
            }
        }
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let sums = self.orbital_sums(x);
        let p: f64 = sums.iter().map(|o| o.0).product();
        let dim = self.dim();
        DMatrix::from_fn(dim, dim, |r, c| {
            let (i, a) = (r / 3, r % 3);
            let (k, b) = (c / 3, c % 3);
            if i == k {
                p * sums[i].2[a][b] / sums[i].0
            } else {
                p * (sums[i].1[a] / sums[i].0) * (sums[k].1[b] / sums[k].0)
            }
        })
    }
    fn log_grad_bound(&self) -> Option<f64> {
        let zmax = self.spec.nuclei.iter().map(|n| n.charge).max().unwrap_or(0) as f64;
        Some(zmax * (self.spec.electrons as f64).sqrt())
    }
}

/// `Psi = -log(psi)` for a molecule and a ground-state provider; the singular
/// set is the Coulomb set of the molecule.
#[derive(Debug, Clone)]
pub struct MolecularField<P> {
    spec: MolecularSpec,
    provider: P,
}

pub fn make_molecular_field<P: GroundStateProvider>(spec: MolecularSpec, provider: P) -> Result<MolecularField<P>> {
    if provider.dim() != spec.dim() {
        return Err(Error::Dimension { expected: spec.dim(), got: provider.dim() });
    }
    Ok(MolecularField { spec, provider })
}

impl<P: GroundStateProvider> MolecularField<P> {
    pub fn spec(&self) -> &MolecularSpec {
        &self.spec
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    fn positive_value(&self, x: &[f64]) -> Result<f64> {
        let p = self.provider.value(x);
        if p > 0.0 && p.is_finite() {
            Ok(p)
        } else {
            Err(Error::Domain(format!("ground-state provider returned {p}, expected a positive value")))
        }
    }

    fn off_sigma(&self, x: &[f64]) -> Result<()> {
        check_dim(self.spec.dim(), x)?;
        check_floor(distance_to_sigma(&self.spec, x))
    }
}

impl<P: GroundStateProvider> WeightField for MolecularField<P> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dim(), x)?;
        Ok(-self.positive_value(x)?.ln())
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.off_sigma(x)?;
        let p = self.positive_value(x)?;
        self.provider.grad_into(x, out);
        for o in out.iter_mut() {
            *o = -*o / p;
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.off_sigma(x)?;
        let p = self.positive_value(x)?;
        let mut g = vec![0.0; self.dim()];
        self.provider.grad_into(x, &mut g);
        let h = self.provider.hessian(x);
        Ok(DMatrix::from_fn(self.dim(), self.dim(), |i, j| -h[(i, j)] / p + g[i] * g[j] / (p * p)))
    }
    fn sigma_distance(&self, x: &[f64]) -> Option<f64> {
        Some(distance_to_sigma(&self.spec, x))
    }
    fn ground_energy(&self) -> Option<f64> {
        self.provider.ground_energy()
    }
    fn grad_sup_bound(&self) -> Option<f64> {
        self.provider.log_grad_bound()
    }
}

/// `Delta Psi` for `Psi = -log psi` three ways at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLaplacianDiagnostic {
    /// `-Delta psi / psi + |grad psi|^2 / psi^2` (the chain rule).
    pub chain_rule: f64,
    /// `-2 Delta psi / psi - 2 |grad psi|^2 / psi^2` (the coefficients as printed in the source remark).
    pub displayed: f64,
    /// Central second differences of `-log psi` with step `h`.
    pub finite_difference: f64,
}

impl LogLaplacianDiagnostic {
    pub fn chain_rule_holds(&self, rel_tol: f64) -> bool {
        (self.chain_rule - self.finite_difference).abs() <= rel_tol * self.finite_difference.abs().max(1.0)
    }

    pub fn displayed_holds(&self, rel_tol: f64) -> bool {
        (self.displayed - self.finite_difference).abs() <= rel_tol * self.finite_difference.abs().max(1.0)
    }
}

pub fn log_laplacian_diagnostic<P: GroundStateProvider>(provider: &P, x: &[f64], h: f64) -> LogLaplacianDiagnostic {
    let p = provider.value(x);
    let mut g = vec![0.0; provider.dim()];
    provider.grad_into(x, &mut g);
    let lap = provider.hessian(x).trace();
    let grad_sq: f64 = g.iter().map(|v| v * v).sum();
    let psi = |y: &[f64]| -provider.value(y).ln();
    let center = psi(x);
    let mut fd = 0.0;
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let up = psi(&y);
        y[i] = x[i] - h;
        let down = psi(&y);
        y[i] = x[i];
        fd += (up - 2.0 * center + down) / (h * h);
    }
    LogLaplacianDiagnostic {
        chain_rule: -lap / p + grad_sq / (p * p),
        displayed: -2.0 * lap / p - 2.0 * grad_sq / (p * p),
        finite_difference: fd,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifyOptions {
    /// Gauss–Hermite nodes per axis, used for `dim <= 3`.
    pub quadrature_order: usize,
    /// Number of fixed Gaussian nodes for `dim > 3`.
    pub mc_nodes: usize,
    pub mc_seed: u64,
}

impl Default for MollifyOptions {
    fn default() -> Self {
        MollifyOptions { quadrature_order: 16, mc_nodes: 4096, mc_seed: 0x5eed }
    }
}

/// `Phi^eps = E[Phi(x + sqrt(eps) Z)]`, the flat heat semigroup at time `eps`
/// applied to `Phi`, evaluated on a fixed set of weighted Gaussian nodes.
///
/// The gradient averages the base gradient. The Hessian uses Gaussian
/// integration by parts, `E[grad Phi(x + sqrt(eps) Z) Z^T] / sqrt(eps)`,
/// which stays bounded where the base Hessian blows up.
#[derive(Debug, Clone)]
pub struct MollifiedField<W> {
    base: W,
    epsilon: f64,
    quadrature_order: usize,
    /// Standard-normal nodes `z` and weights.
    nodes: Vec<(Vec<f64>, f64)>,
}

pub fn mollify<W: WeightField>(field: W, epsilon: f64) -> Result<MollifiedField<W>> {
    mollify_with(field, epsilon, MollifyOptions::default())
}

pub fn mollify_with<W: WeightField>(field: W, epsilon: f64, opts: MollifyOptions) -> Result<MollifiedField<W>> {
    require_positive("epsilon", epsilon)?;
    if field.grad_sup_bound().is_none() {
        return Err(parameter("field", "mollification requires a field with a gradient sup bound"));
    }
    if opts.quadrature_order == 0 || opts.mc_nodes == 0 {
        return Err(parameter("quadrature_order", "node counts must be positive"));
    }
    let dim = field.dim();
    let nodes = if dim <= 3 {
        GaussHermite::new(opts.quadrature_order).tensor(dim)
    } else {
        let mut stream = VariateStream::new(SeedTag::new(opts.mc_seed, 0), Channel::Nodes);
        let w = 1.0 / opts.mc_nodes as f64;
        (0..opts.mc_nodes)
            .map(|_| {
                let mut z = vec![0.0; dim];
                stream.fill_normal(&mut z);
                (z, w)
            })
            .collect()
    };
    Ok(MollifiedField { base: field, epsilon, quadrature_order: opts.quadrature_order, nodes })
}

impl<W: WeightField> MollifiedField<W> {
    pub fn base(&self) -> &W {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn shifted(&self, x: &[f64], z: &[f64], buf: &mut [f64]) {
        let s = self.epsilon.sqrt();
        for ((b, xi), zi) in buf.iter_mut().zip(x).zip(z) {
            *b = xi + s * zi;
        }
    }
}

impl<W: WeightField> WeightField for MollifiedField<W> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let mut y = vec![0.0; x.len()];
        let mut acc = 0.0;
        for (z, w) in &self.nodes {
            self.shifted(x, z, &mut y);
            acc += w * self.base.value(&y)?;
        }
        Ok(acc)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x)?;
        let mut y = vec![0.0; x.len()];
        let mut g = vec![0.0; x.len()];
        out.fill(0.0);
        for (z, w) in &self.nodes {
            self.shifted(x, z, &mut y);
            self.base.grad_into(&y, &mut g)?;
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += w * gi;
            }
        }
        Ok(())
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        check_dim(dim, x)?;
        let mut y = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for (z, w) in &self.nodes {
            self.shifted(x, z, &mut y);
            self.base.grad_into(&y, &mut g)?;
            for i in 0..dim {
                for j in 0..dim {
                    h[(i, j)] += w * g[i] * z[j];
                }
            }
        }
        let h = h / self.epsilon.sqrt();
        Ok((&h + h.transpose()) * 0.5)
    }
    fn grad_sup_bound(&self) -> Option<f64> {
        self.base.grad_sup_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hydrogen() -> MolecularSpec {
        MolecularSpec::hydrogen_like(1)
    }

    #[test]
    fn coulomb_hydrogen() {
        assert_eq!(coulomb_potential(&hydrogen(), &[1.0, 0.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            coulomb_potential(&hydrogen(), &[0.0, 0.0, 0.0]),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn coulomb_helium_like() {
        let spec = MolecularSpec::new(vec![Nucleus { position: [0.0; 3], charge: 2 }], 2).unwrap();
        let v = coulomb_potential(&spec, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, -3.5);
    }

    #[test]
    fn molecular_spec_validation() {
        assert!(MolecularSpec::new(vec![], 1).is_err());
        assert!(MolecularSpec::new(vec![Nucleus { position: [0.0; 3], charge: 1 }], 0).is_err());
        let twice = vec![Nucleus { position: [1.0, 0.0, 0.0], charge: 1 }; 2];
        assert!(MolecularSpec::new(twice, 1).is_err());
    }

    #[test]
    fn molecular_spec_from_toml() {
        let text = r#"
            electrons = 2
            [[nuclei]]
            position = [0.0, 0.0, -0.7]
            charge = 1
            [[nuclei]]
            position = [0.0, 0.0, 0.7]
            charge = 1
        "#;
        let spec = MolecularSpec::from_toml(text).unwrap();
        assert_eq!(spec.dim(), 6);
        assert_eq!(spec.nuclei[1].position, [0.0, 0.0, 0.7]);
        let bad = "electrons = 0\n[[nuclei]]\nposition = [0.0, 0.0, 0.0]\ncharge = 1\n";
        assert!(MolecularSpec::from_toml(bad).is_err());
    }

    #[test]
    fn hydrogenic_basics() {
        let f = make_hydrogenic_field(1.0).unwrap();
        assert_eq!(f.value(&[3.0, 4.0, 0.0]).unwrap(), 5.0);
        assert!((norm(&f.grad(&[0.3, -2.0, 1.1]).unwrap()) - 1.0).abs() < 1e-15);
        assert_eq!(make_hydrogenic_field(2.0).unwrap().ground_energy(), Some(-2.0));
        assert!(make_hydrogenic_field(0.0).is_err());
        assert!(make_hydrogenic_field(-1.0).is_err());
        assert!(f.grad(&[0.0; 3]).is_err());
    }

    #[test]
    fn ou_basics() {
        let f = make_ou_field(1.0, 1).unwrap();
        assert_eq!(f.value(&[2.0]).unwrap(), 2.0);
        assert_eq!(f.grad(&[2.0]).unwrap(), vec![2.0]);
        assert!(make_ou_field(0.0, 1).is_err());
        assert!(make_ou_field(1.0, 0).is_err());
    }

    #[test]
    fn molecular_field_reproduces_hydrogenic() {
        let exact = make_hydrogenic_field(1.0).unwrap();
        let mol = make_molecular_field(hydrogen(), HydrogenicProvider { z: 1.0 }).unwrap();
        for x in [[1.0, 0.0, 0.0], [0.3, -0.7, 2.0], [-4.0, 1.0, 0.5]] {
            assert!((mol.value(&x).unwrap() - exact.value(&x).unwrap()).abs() < 1e-12);
            let (g1, g2) = (mol.grad(&x).unwrap(), exact.grad(&x).unwrap());
            assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-12));
            let (h1, h2) = (mol.hessian(&x).unwrap(), exact.hessian(&x).unwrap());
            assert!((h1 - h2).abs().max() < 1e-12);
        }
    }

    struct Vanishing;
    impl GroundStateProvider for Vanishing {
        fn dim(&self) -> usize {
            3
        }
        fn value(&self, _x: &[f64]) -> f64 {
            0.0
        }
        fn grad_into(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0)
        }
        fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(3, 3)
        }
    }

    #[test]
    fn zero_provider_is_domain_error() {
        let f = make_molecular_field(hydrogen(), Vanishing).unwrap();
        assert!(matches!(f.value(&[1.0, 0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn chain_rule_identity_not_displayed_one() {
        let p = HydrogenicProvider { z: 1.0 };
        for x in [[1.0, 0.0, 0.0], [0.5, 0.5, -0.2], [2.0, -1.0, 3.0]] {
            let d = log_laplacian_diagnostic(&p, &x, 1e-4);
            assert!(d.chain_rule_holds(1e-5), "{d:?}");
            assert!(!d.displayed_holds(1e-2), "{d:?}");
            // Delta |x| = 2/|x| in R^3
            assert!((d.chain_rule - 2.0 / norm(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn slater_product_derivatives_match_finite_differences() {
        let spec = MolecularSpec::new(
            vec![
                Nucleus { position: [0.0, 0.0, -0.7], charge: 1 },
                Nucleus { position: [0.0, 0.0, 0.7], charge: 2 },
            ],
            2,
        )
        .unwrap();
        let p = SlaterProductProvider { spec };
        let x = [0.3, -0.2, 0.1, -0.5, 0.4, 1.2];
        let h = 1e-5;
        let mut g = vec![0.0; 6];
        p.grad_into(&x, &mut g);
        let hess = p.hessian(&x);
        for i in 0..6 {
            let mut up = x;
            let mut dn = x;
            up[i] += h;
            dn[i] -= h;
            let fd = (p.value(&up) - p.value(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * g[i].abs().max(1e-3), "grad {i}");
            let (mut gu, mut gd) = (vec![0.0; 6], vec![0.0; 6]);
            p.grad_into(&up, &mut gu);
            p.grad_into(&dn, &mut gd);
            for j in 0..6 {
                let fd = (gu[j] - gd[j]) / (2.0 * h);
                assert!((fd - hess[(j, i)]).abs() < 1e-6 * hess[(j, i)].abs().max(1e-2), "hess {i} {j}");
            }
        }
    }

    #[test]
    fn mollified_constant_is_constant() {
        let c = ConstantField { dim: 2, value: 3.25 };
        for eps in [1.0, 0.1, 0.01] {
            let m = mollify(c, eps).unwrap();
            assert!((m.value(&[0.4, -1.0]).unwrap() - 3.25).abs() < 1e-13);
        }
    }

    #[test]
    fn mollify_requires_bound_and_positive_epsilon() {
        assert!(mollify(make_ou_field(1.0, 1).unwrap(), 0.1).is_err());
        assert!(mollify(make_hydrogenic_field(1.0).unwrap(), 0.0).is_err());
        assert!(mollify(make_hydrogenic_field(1.0).unwrap(), -1.0).is_err());
    }
}
