//! Classical equations of motion on the coherent-state manifold.
//!
//! The Lagrangian is `L = A_a(q) q̇_a - H(q)` with `A` the Berry connection. Stationary action
//! gives `ω q̇ = ∇H` with `ω_ab = ∂_a A_b - ∂_b A_a`; this is [`EomMethod::Berry`] and is the
//! field every trajectory is integrated with by default. [`EomMethod::Paper`] evaluates the
//! printed per-group equations literally and exists to measure how far they are from it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{condition_number_1, pfaffian, solve_real, AlgebraError, CMatrix, CVector, C64, MAX_DIM, ONE, ZERO};
use crate::coherent::{
    berry_connection, frame, oracle_amplitudes, CoherentError, CoherentParams, Frame, GroupId, BETA, G, GAMMA, K, M,
    N, PHI, THETA,
};
use crate::generators::{Generator, GeneratorError};
use crate::observables::{sample_params, spin_vector_of};

/// Central-difference step for `∇H` and for `ω` built from the connection.
pub const GRAD_STEP: f64 = 1e-5;
/// Largest 1-norm condition number of `ω` accepted by the Berry field.
pub const MAX_CONDITION: f64 = 1e12;
/// Minimum distance from a vanishing denominator in the printed equations.
pub const SINGULAR_MARGIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid Hamiltonian: {0}")]
    InvalidSpec(String),
    #[error("singular point: {0}")]
    Singular(String),
    #[error("expected {expected} sites of {group}, got {got}")]
    SiteMismatch { group: GroupId, expected: usize, got: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("overlap between slices {index} and {prev} is {overlap:e}; the slicing is too coarse", prev = index - 1)]
    IllConditionedSlice { index: usize, overlap: f64 },
    #[error("a path needs at least two points")]
    PathTooShort,
    #[error("no reduction rule from {0} to {1}")]
    UnsupportedReduction(GroupId, GroupId),
    #[error(transparent)]
    Coherent(#[from] CoherentError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// One term: coefficient times a product of per-site generator strings.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: C64,
    /// `(site, generators)`; generators on one site multiply left to right.
    pub factors: Vec<(usize, Vec<Generator>)>,
}

impl Term {
    pub fn new(coeff: impl Into<C64>, factors: Vec<(usize, Vec<Generator>)>) -> Self {
        Term {
            coeff: coeff.into(),
            factors,
        }
    }

    /// `coeff * G` on a single site.
    pub fn single(coeff: f64, site: usize, generator: Generator) -> Self {
        Term::new(coeff, vec![(site, vec![generator])])
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    coeff: C64,
    /// Non-identity site operators sorted by site.
    ops: Vec<(usize, CMatrix)>,
}

#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    group: GroupId,
    sites: usize,
    terms: Vec<Term>,
    compiled: Vec<CompiledTerm>,
}

impl HamiltonianSpec {
    /// Validates generator availability, site indices and Hermiticity.
    ///
    /// Terms are grouped by the set of sites they act on, and each group must be Hermitian on
    /// its own support, so the check never needs the full chain operator.
    pub fn new(group: GroupId, sites: usize, terms: Vec<Term>) -> Result<Self, DynamicsError> {
        if sites == 0 {
            return Err(DynamicsError::InvalidSpec("chain length must be at least 1".into()));
        }
        let ops = group.operators();
        let dim = group.dim();
        let identity = CMatrix::identity(dim);
        let mut compiled = Vec::with_capacity(terms.len());
        for term in &terms {
            if !(term.coeff.re.is_finite() && term.coeff.im.is_finite()) {
                return Err(DynamicsError::InvalidSpec("non-finite coefficient".into()));
            }
            let mut per_site: BTreeMap<usize, CMatrix> = BTreeMap::new();
            for (site, gens) in &term.factors {
                if *site >= sites {
                    return Err(DynamicsError::InvalidSpec(format!(
                        "site index {site} out of range for chain of length {sites}"
                    )));
                }
                let m = ops.product(gens)?;
                let entry = per_site.entry(*site).or_insert_with(|| identity.clone());
                *entry = &*entry * &m;
            }
            let ops = per_site.into_iter().filter(|(_, m)| *m != identity).collect();
            compiled.push(CompiledTerm { coeff: term.coeff, ops });
        }

        let mut by_support: BTreeMap<Vec<usize>, Vec<&CompiledTerm>> = BTreeMap::new();
        for t in &compiled {
            by_support.entry(t.ops.iter().map(|(s, _)| *s).collect()).or_default().push(t);
        }
        for (support, group_terms) in by_support {
            let local_dim = dim.pow(support.len() as u32);
            if local_dim > MAX_DIM {
                return Err(DynamicsError::InvalidSpec(format!(
                    "a term acting on {} sites exceeds the dimension cap",
                    support.len()
                )));
            }
            let mut sum = CMatrix::zeros(local_dim, local_dim);
            for t in group_terms {
                let local = t
                    .ops
                    .iter()
                    .map(|(_, m)| m.clone())
                    .reduce(|a, b| a.kron(&b).expect("within cap"))
                    .unwrap_or_else(|| CMatrix::identity(1));
                sum = &sum + &local.scale(t.coeff);
            }
            if !sum.is_hermitian(1e-12) {
                return Err(DynamicsError::InvalidSpec(format!(
                    "terms acting on sites {support:?} do not add up to a Hermitian operator"
                )));
            }
        }
        Ok(HamiltonianSpec {
            group,
            sites,
            terms,
            compiled,
        })
    }

    /// `sum_i coeff_i * G_i` on site 0 of a single-site system.
    pub fn single_site(group: GroupId, terms: &[(f64, Generator)]) -> Result<Self, DynamicsError> {
        Self::new(group, 1, terms.iter().map(|&(c, g)| Term::single(c, 0, g)).collect())
    }

    /// Single-site Hamiltonian given directly as a Hermitian matrix.
    pub fn from_matrix(group: GroupId, matrix: &CMatrix) -> Result<Self, DynamicsError> {
        if matrix.rows() != group.dim() || !matrix.is_square() {
            return Err(DynamicsError::InvalidSpec("matrix dimension does not match group".into()));
        }
        if !matrix.is_hermitian(1e-12) {
            return Err(DynamicsError::InvalidSpec("matrix is not Hermitian".into()));
        }
        Ok(HamiltonianSpec {
            group,
            sites: 1,
            terms: Vec::new(),
            compiled: vec![CompiledTerm {
                coeff: ONE,
                ops: vec![(0, matrix.clone())],
            }],
        })
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Full operator on the chain Hilbert space, site 0 leftmost.
    pub fn assemble(&self) -> Result<CMatrix, DynamicsError> {
        let dim = self.group.dim();
        let total = dim
            .checked_pow(self.sites as u32)
            .filter(|&d| d <= MAX_DIM)
            .ok_or(AlgebraError::DimensionCap {
                dim: usize::MAX,
                cap: MAX_DIM,
            })?;
        let identity = CMatrix::identity(dim);
        let mut h = CMatrix::zeros(total, total);
        for t in &self.compiled {
            let mut full = CMatrix::identity(1);
            for site in 0..self.sites {
                let op = t.ops.iter().find(|(s, _)| *s == site).map_or(&identity, |(_, m)| m);
                full = full.kron(op)?;
            }
            h = &h + &full.scale(t.coeff);
        }
        Ok(h)
    }

    fn check_points(&self, points: &[CoherentParams]) -> Result<(), DynamicsError> {
        if points.len() != self.sites {
            return Err(DynamicsError::SiteMismatch {
                group: self.group,
                expected: self.sites,
                got: points.len(),
            });
        }
        if let Some(p) = points.iter().find(|p| p.group() != self.group) {
            return Err(CoherentError::GroupMismatch(self.group, p.group()).into());
        }
        Ok(())
    }

    fn energy_of_states(&self, states: &[CVector]) -> f64 {
        self.compiled
            .iter()
            .map(|t| {
                t.ops
                    .iter()
                    .fold(t.coeff, |acc, (s, m)| acc * states[*s].inner(&m.apply(&states[*s])))
            })
            .sum::<C64>()
            .re
    }

    /// Energy and its exact gradient from the tangent vectors of every site.
    fn energy_and_gradient(&self, frames: &[Frame]) -> (f64, Vec<f64>) {
        let n = self.group.n_params();
        let mut grad = vec![ZERO; n * self.sites];
        let mut energy = ZERO;
        for t in &self.compiled {
            let values: Vec<C64> = t
                .ops
                .iter()
                .map(|(s, m)| frames[*s].state.inner(&m.apply(&frames[*s].state)))
                .collect();
            energy += values.iter().fold(t.coeff, |a, &v| a * v);
            for (i, (s, m)) in t.ops.iter().enumerate() {
                let others = values
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .fold(t.coeff, |a, (_, &v)| a * v);
                let psi = &frames[*s].state;
                let u = m.apply(psi);
                let v = m.adjoint().apply(psi);
                for (a, tangent) in frames[*s].tangents.iter().enumerate() {
                    let d = tangent.inner(&u) + v.inner(tangent);
                    grad[s * n + a] += others * d;
                }
            }
        }
        (energy.re, grad.into_iter().map(|z| z.re).collect())
    }
}

fn states_of(group: GroupId, q: &[f64], sites: usize) -> Vec<CVector> {
    let n = group.n_params();
    (0..sites).map(|s| oracle_amplitudes(group, &q[s * n..(s + 1) * n])).collect()
}

fn flatten(points: &[CoherentParams]) -> Vec<f64> {
    points.iter().flat_map(|p| p.values().iter().copied()).collect()
}

fn unflatten(group: GroupId, q: &[f64]) -> Vec<CoherentParams> {
    q.chunks(group.n_params())
        .map(|c| CoherentParams::new(group, c.to_vec()).expect("finite coordinates"))
        .collect()
}

/// `<H>` in the product state, each multi-site term factorized over its sites.
pub fn classical_energy(h: &HamiltonianSpec, points: &[CoherentParams]) -> Result<f64, DynamicsError> {
    h.check_points(points)?;
    Ok(h.energy_of_states(&states_of(h.group, &flatten(points), h.sites)))
}

/// Central-difference gradient of [`classical_energy`] over all site coordinates.
pub fn grad_h(h: &HamiltonianSpec, points: &[CoherentParams]) -> Result<Vec<f64>, DynamicsError> {
    h.check_points(points)?;
    let q = flatten(points);
    let energy_at = |q: &[f64]| h.energy_of_states(&states_of(h.group, q, h.sites));
    Ok((0..q.len())
        .map(|i| {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[i] += GRAD_STEP;
            minus[i] -= GRAD_STEP;
            (energy_at(&plus) - energy_at(&minus)) / (2.0 * GRAD_STEP)
        })
        .collect())
}

/// Exact gradient from the tangent vectors; same quantity as [`grad_h`].
pub fn grad_h_exact(h: &HamiltonianSpec, points: &[CoherentParams]) -> Result<Vec<f64>, DynamicsError> {
    h.check_points(points)?;
    let frames: Vec<Frame> = points.iter().map(CoherentParams::frame).collect();
    Ok(h.energy_and_gradient(&frames).1)
}

pub type RealMatrix = Vec<Vec<f64>>;

fn antisymmetrize(w: RealMatrix) -> RealMatrix {
    let n = w.len();
    (0..n)
        .map(|a| (0..n).map(|b| 0.5 * (w[a][b] - w[b][a])).collect())
        .collect()
}

fn omega_from_frame(fr: &Frame, hbar: f64) -> RealMatrix {
    let n = fr.tangents.len();
    let w = (0..n)
        .map(|a| (0..n).map(|b| -2.0 * hbar * fr.tangents[a].inner(&fr.tangents[b]).im).collect())
        .collect();
    antisymmetrize(w)
}

/// `ω_ab = ∂_a A_b - ∂_b A_a`, evaluated as `-2ħ Im<∂_aψ|∂_bψ>` on exact tangents.
pub fn symplectic_form(p: &CoherentParams, hbar: f64) -> RealMatrix {
    omega_from_frame(&p.frame(), hbar)
}

/// `ω` by central differences (step [`GRAD_STEP`]) of the finite-difference connection.
pub fn symplectic_form_fd(p: &CoherentParams, hbar: f64) -> RealMatrix {
    let n = p.group().n_params();
    let da: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let plus = berry_connection(&p.shifted(a, GRAD_STEP), hbar);
            let minus = berry_connection(&p.shifted(a, -GRAD_STEP), hbar);
            plus.iter().zip(&minus).map(|(x, y)| (x - y) / (2.0 * GRAD_STEP)).collect()
        })
        .collect();
    // da[a][b] = ∂_a A_b
    antisymmetrize((0..n).map(|a| (0..n).map(|b| da[a][b] - da[b][a]).collect()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EomMethod {
    /// Stationary action with the Berry-connection symplectic form.
    #[default]
    Berry,
    /// Printed equations of motion, evaluated literally.
    Paper,
}

impl fmt::Display for EomMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EomMethod::Berry => "berry",
            EomMethod::Paper => "paper",
        })
    }
}

impl FromStr for EomMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "berry" => Ok(EomMethod::Berry),
            "paper" => Ok(EomMethod::Paper),
            _ => Err(format!("unknown method `{s}` (expected berry or paper)")),
        }
    }
}

fn berry_site_velocity(fr: &Frame, grad: &[f64], hbar: f64) -> Result<Vec<f64>, DynamicsError> {
    let omega = omega_from_frame(fr, hbar);
    let cond = condition_number_1(&omega);
    if cond >= MAX_CONDITION {
        return Err(DynamicsError::Singular(format!("condition number of ω is {cond:e}")));
    }
    solve_real(&omega, grad).ok_or_else(|| DynamicsError::Singular("ω is not invertible".into()))
}

fn check_denominators(dens: &[(&str, f64)]) -> Result<(), DynamicsError> {
    match dens.iter().find(|(_, v)| v.abs() <= SINGULAR_MARGIN) {
        Some((name, v)) => Err(DynamicsError::Singular(format!("{name} = {v:e}"))),
        None => Ok(()),
    }
}

/// Printed right-hand sides for one site; `d` is `∂H/∂q` for that site.
fn paper_site_velocity(group: GroupId, q: &[f64], d: &[f64], hbar: f64) -> Result<Vec<f64>, DynamicsError> {
    let at = |i: usize| q.get(i).copied().unwrap_or(0.0);
    let (th, g, k, n) = (at(THETA), at(G), at(K), at(N));
    let (st, ct) = (th.sin(), th.cos());
    let mut v = vec![0.0; group.n_params()];
    match group {
        GroupId::SU2 => {
            check_denominators(&[("sin(theta)", st)])?;
            v[PHI] = d[THETA] / st;
            v[THETA] = d[PHI] / st;
        }
        GroupId::SU3 => {
            let (c2g, s2g) = ((2.0 * g).cos(), (2.0 * g).sin());
            check_denominators(&[("sin(theta)", st), ("cos(2g)", c2g), ("sin(2g)", s2g)])?;
            v[THETA] = -(d[PHI] - ct * d[GAMMA]) / (c2g * st);
            v[G] = -d[GAMMA] / (2.0 * s2g);
            v[PHI] = d[THETA] / (c2g * st);
            v[GAMMA] = -d[G] / (2.0 * s2g) - ct * d[THETA] / (c2g * st);
        }
        GroupId::SU4 => {
            let (cg, sg) = (g.cos(), g.sin());
            let (c2k, s2k, s2g) = ((2.0 * k).cos(), (2.0 * k).sin(), (2.0 * g).sin());
            check_denominators(&[
                ("sin(theta)", st),
                ("cos(2k)", c2k),
                ("sin(2k)", s2k),
                ("cos(g)", cg),
                ("sin(g)", sg),
                ("sin(2g)", s2g),
            ])?;
            let base = c2k * cg * cg * st;
            v[THETA] = (d[PHI] - ct * d[GAMMA]) / base;
            v[PHI] = -d[THETA] / base;
            v[G] = d[BETA] / (6.0 * c2k * cg.powi(3) * sg) - d[GAMMA] / (c2k * s2g);
            v[GAMMA] = ct * d[THETA] / base + d[G] / (2.0 * c2k * cg * sg) + d[K] / (s2k * cg * cg);
            v[K] = d[GAMMA] / (s2k * cg * cg) - d[BETA] / (6.0 * s2k * cg.powi(4));
            v[BETA] = -d[K] / (6.0 * s2k * cg.powi(4)) - d[G] / (6.0 * c2k * cg.powi(3) * sg);
        }
        GroupId::SU5 => {
            let (cg, sg, ck, sk) = (g.cos(), g.sin(), k.cos(), k.sin());
            let (c2n, s2n, s2g) = ((2.0 * n).cos(), (2.0 * n).sin(), (2.0 * g).sin());
            check_denominators(&[
                ("sin(theta)", st),
                ("cos(2n)", c2n),
                ("sin(2n)", s2n),
                ("cos(g)", cg),
                ("sin(g)", sg),
                ("sin(2g)", s2g),
                ("cos(k)", ck),
                ("sin(k)", sk),
            ])?;
            let base = c2n * cg * cg * ck * ck * st;
            v[THETA] = d[PHI] / base - ct * d[GAMMA] / base;
            v[PHI] = -d[THETA] / base;
            v[G] = d[BETA] / (6.0 * c2n * cg.powi(3) * sg * ck.powi(4)) - d[M] / (3.0 * c2n * s2g * ck.powi(4));
            v[GAMMA] = ct * d[THETA] / base + d[K] / (2.0 * c2n * cg * cg * sk * ck)
                - d[N] / (s2n * cg * cg * ck * ck);
            v[K] = d[M] / (6.0 * sk * cg * cg * c2n * ck.powi(3)) - d[GAMMA] / (2.0 * sk * cg * cg * ck * c2n);
            // the n-derivative appears twice in the printed β equation; both are kept
            v[BETA] = d[N] / (6.0 * s2n * cg.powi(4) * ck.powi(4)) - d[G] / (6.0 * c2n * cg.powi(3) * sg * ck.powi(4))
                - d[N] / (s2n * cg * cg * ck * ck);
            v[N] = d[GAMMA] / base - d[BETA] / (6.0 * s2n * cg.powi(4) * ck.powi(4));
            v[M] = -d[G] / (cg * ck.powi(4) * s2n) - d[K] / (cg * cg * ck.powi(3) * c2n * sk);
        }
    }
    Ok(v.into_iter().map(|x| x / hbar).collect())
}

/// The classical vector field `q̇(q)` for a chain of product coherent states.
#[derive(Clone, Debug)]
pub struct VectorField<'a> {
    pub hamiltonian: &'a HamiltonianSpec,
    pub method: EomMethod,
    pub hbar: f64,
}

impl VectorField<'_> {
    /// Velocity at flattened coordinates `q` (site-major).
    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        let group = self.hamiltonian.group;
        let n = group.n_params();
        let frames: Vec<Frame> = q.chunks(n).map(|c| frame(group, c)).collect();
        let (_, grad) = self.hamiltonian.energy_and_gradient(&frames);
        let mut out = Vec::with_capacity(q.len());
        for (s, fr) in frames.iter().enumerate() {
            let g = &grad[s * n..(s + 1) * n];
            let v = match self.method {
                EomMethod::Berry => berry_site_velocity(fr, g, self.hbar),
                EomMethod::Paper => paper_site_velocity(group, &q[s * n..(s + 1) * n], g, self.hbar),
            }
            .map_err(|e| match e {
                DynamicsError::Singular(msg) if self.hamiltonian.sites > 1 => {
                    DynamicsError::Singular(format!("site {s}: {msg}"))
                }
                other => other,
            })?;
            out.extend(v);
        }
        Ok(out)
    }
}

/// `q̇` for all sites; errors with [`DynamicsError::Singular`] naming the offending quantity.
pub fn eom_rhs(
    h: &HamiltonianSpec,
    points: &[CoherentParams],
    method: EomMethod,
    hbar: f64,
) -> Result<Vec<f64>, DynamicsError> {
    h.check_points(points)?;
    VectorField {
        hamiltonian: h,
        method,
        hbar,
    }
    .eval(&flatten(points))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularStop {
    /// Time of the last accepted point.
    pub time: f64,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub group: GroupId,
    pub method: EomMethod,
    pub times: Vec<f64>,
    /// Per time, one parameter point per site.
    pub points: Vec<Vec<CoherentParams>>,
    pub energies: Vec<f64>,
    /// Per time, `(<Sx>, <Sy>, <Sz>)` per site.
    pub observables: Vec<Vec<[f64; 3]>>,
    /// Set when integration stopped early at a singular point.
    pub singular: Option<SingularStop>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn final_point(&self) -> &[CoherentParams] {
        self.points.last().expect("trajectories hold at least the initial point")
    }

    /// `max_t |H(t) - H(0)| / max(1, |H(0)|)`.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1.0)
    }
}

fn rk4_step(field: &VectorField<'_>, q: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    let k1 = field.eval(q)?;
    let k2 = field.eval(&axpy(q, dt / 2.0, &k1))?;
    let k3 = field.eval(&axpy(q, dt / 2.0, &k2))?;
    let k4 = field.eval(&axpy(q, dt, &k3))?;
    Ok((0..q.len())
        .map(|i| q[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Fixed-step classical RK4.
///
/// A singular initial point is an error; a singular point reached mid-run ends the trajectory
/// early with [`Trajectory::singular`] set. For the Berry field a step is also rejected as
/// singular when the Pfaffian of `ω` changes sign across it.
pub fn integrate(
    h: &HamiltonianSpec,
    initial: &[CoherentParams],
    dt: f64,
    steps: usize,
    method: EomMethod,
    hbar: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    h.check_points(initial)?;
    let field = VectorField {
        hamiltonian: h,
        method,
        hbar,
    };
    let group = h.group;
    let mut q = flatten(initial);
    field.eval(&q)?;

    let mut traj = Trajectory {
        group,
        method,
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        observables: Vec::with_capacity(steps + 1),
        singular: None,
    };
    let record = |traj: &mut Trajectory, t: f64, q: &[f64]| {
        let states = states_of(group, q, h.sites);
        traj.times.push(t);
        traj.points.push(unflatten(group, q));
        traj.energies.push(h.energy_of_states(&states));
        traj.observables.push(states.iter().map(|s| spin_vector_of(group, s)).collect());
    };
    // Pf(ω) per site; a sign change between accepted points means the path went through a
    // point where ω is degenerate, even when no sampled point lands close to it
    let orientation = |q: &[f64]| -> Vec<bool> {
        match method {
            EomMethod::Berry => q
                .chunks(group.n_params())
                .map(|c| pfaffian(&omega_from_frame(&frame(group, c), hbar)) > 0.0)
                .collect(),
            EomMethod::Paper => Vec::new(),
        }
    };
    let mut signs = orientation(&q);
    record(&mut traj, 0.0, &q);
    for step in 1..=steps {
        match rk4_step(&field, &q, dt) {
            Ok(next) if next.iter().all(|x| x.is_finite()) => {
                let next_signs = orientation(&next);
                if let Some(site) = (0..signs.len()).find(|&s| signs[s] != next_signs[s]) {
                    traj.singular = Some(SingularStop {
                        time: (step - 1) as f64 * dt,
                        detail: format!("ω degenerate on site {site} within the next step (Pfaffian changed sign)"),
                    });
                    break;
                }
                signs = next_signs;
                q = next;
                record(&mut traj, step as f64 * dt, &q);
            }
            Ok(_) => {
                traj.singular = Some(SingularStop {
                    time: (step - 1) as f64 * dt,
                    detail: "non-finite velocity".into(),
                });
                break;
            }
            Err(DynamicsError::Singular(detail)) => {
                traj.singular = Some(SingularStop {
                    time: (step - 1) as f64 * dt,
                    detail,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

/// Time-sliced coherent-state action for a single-site path:
/// `Σ_k [ln<ψ_k|ψ_{k-1}> - (iε/ħ) <ψ_k|H|ψ_{k-1}> / <ψ_k|ψ_{k-1}>]`.
pub fn discrete_action(
    path: &[CoherentParams],
    h: &HamiltonianSpec,
    eps: f64,
    hbar: f64,
) -> Result<C64, DynamicsError> {
    if path.len() < 2 {
        return Err(DynamicsError::PathTooShort);
    }
    if h.sites != 1 {
        return Err(DynamicsError::InvalidSpec("the discrete action is defined for single-site paths".into()));
    }
    h.check_points(&path[..1])?;
    if let Some(p) = path.iter().find(|p| p.group() != h.group) {
        return Err(CoherentError::GroupMismatch(h.group, p.group()).into());
    }
    let hm = h.assemble()?;
    let states: Vec<CVector> = path.iter().map(|p| oracle_amplitudes(p.group(), p.values())).collect();
    let mut total = ZERO;
    for k in 1..states.len() {
        let ov = states[k].inner(&states[k - 1]);
        if ov.norm() < 1e-12 {
            return Err(DynamicsError::IllConditionedSlice {
                index: k,
                overlap: ov.norm(),
            });
        }
        let hk = states[k].inner(&hm.apply(&states[k - 1]));
        total += ov.ln() - C64::new(0.0, eps / hbar) * hk / ov;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    pub from: GroupId,
    pub to: GroupId,
    pub n_points: usize,
    /// Sampled points of the smaller group where its own field was singular.
    pub skipped: usize,
    /// Embedded points where the larger group's full `ω` is degenerate.
    pub embedded_singular: usize,
    /// Embedded points where even `ω` restricted to the shared coordinates is degenerate, so the
    /// larger group defines no velocity there.
    pub restricted_singular: usize,
    /// Max over points and shared coordinates of `|q̇_from - q̇_to|`, where both exist.
    pub max_deviation: f64,
}

impl ReductionReport {
    /// Every sampled point produced a velocity on both sides and they agree within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.n_points > 0 && self.restricted_singular == 0 && self.max_deviation < tol
    }
}

/// Coordinate map of a reduction: `shared[i] = (index in larger group, index in smaller group)`
/// and the coordinates of the larger group pinned to zero.
fn reduction_map(from: GroupId, to: GroupId) -> Result<(Vec<(usize, usize)>, Vec<usize>), DynamicsError> {
    match (from, to) {
        // g = β = 0, k -> g
        (GroupId::SU4, GroupId::SU3) => Ok((vec![(THETA, THETA), (PHI, PHI), (GAMMA, GAMMA), (K, G)], vec![G, BETA])),
        // g = m = 0, n -> k, k -> g
        (GroupId::SU5, GroupId::SU4) => Ok((
            vec![(THETA, THETA), (PHI, PHI), (GAMMA, GAMMA), (K, G), (BETA, BETA), (N, K)],
            vec![G, M],
        )),
        // γ = g = 0
        (GroupId::SU3, GroupId::SU2) => Ok((vec![(THETA, THETA), (PHI, PHI)], vec![GAMMA, G])),
        _ => Err(DynamicsError::UnsupportedReduction(from, to)),
    }
}

/// Embeds a point of the smaller group into the larger one by the reduction rule.
pub fn embed(from: GroupId, to_point: &CoherentParams) -> Result<CoherentParams, DynamicsError> {
    let (shared, _) = reduction_map(from, to_point.group())?;
    let mut values = vec![0.0; from.n_params()];
    for (big, small) in shared {
        values[big] = to_point.values()[small];
    }
    Ok(CoherentParams::new(from, values)?)
}

/// Compares the larger group's Berry field on the reduced submanifold with the smaller group's
/// field, for `H = Sz` on each side.
///
/// The reduced submanifold pins some coordinates to values where the larger group's `ω` is
/// typically degenerate, so the larger field is the stationary-action field of the Lagrangian
/// restricted to the shared coordinates.
pub fn reduce_check(
    from: GroupId,
    to: GroupId,
    n_points: usize,
    seed: u64,
    hbar: f64,
) -> Result<ReductionReport, DynamicsError> {
    let (shared, _) = reduction_map(from, to)?;
    let h_from = HamiltonianSpec::single_site(from, &[(1.0, Generator::Sz)])?;
    let h_to = HamiltonianSpec::single_site(to, &[(1.0, Generator::Sz)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ReductionReport {
        from,
        to,
        n_points: 0,
        skipped: 0,
        embedded_singular: 0,
        restricted_singular: 0,
        max_deviation: 0.0,
    };
    while report.n_points < n_points {
        let p_small = sample_params(to, &mut rng);
        let v_small = match eom_rhs(&h_to, std::slice::from_ref(&p_small), EomMethod::Berry, hbar) {
            Ok(v) => v,
            Err(DynamicsError::Singular(_)) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let p_big = embed(from, &p_small)?;
        let fr = p_big.frame();
        let omega = omega_from_frame(&fr, hbar);
        if condition_number_1(&omega) >= MAX_CONDITION {
            report.embedded_singular += 1;
        }
        let (_, grad) = h_from.energy_and_gradient(std::slice::from_ref(&fr));
        let sub: RealMatrix = shared
            .iter()
            .map(|&(a, _)| shared.iter().map(|&(b, _)| omega[a][b]).collect())
            .collect();
        let rhs: Vec<f64> = shared.iter().map(|&(a, _)| grad[a]).collect();
        report.n_points += 1;
        let v_big = match solve_real(&sub, &rhs) {
            Some(v) if condition_number_1(&sub) < MAX_CONDITION => v,
            _ => {
                report.restricted_singular += 1;
                continue;
            }
        };
        for (i, &(_, small)) in shared.iter().enumerate() {
            report.max_deviation = report.max_deviation.max((v_big[i] - v_small[small]).abs());
        }
    }
    Ok(report)
}

/// Per-coordinate max |PAPER - BERRY| over seeded sample points, for `H = Sz`.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodComparison {
    pub group: GroupId,
    pub n_points: usize,
    pub skipped: usize,
    /// `(parameter name, max abs deviation, max abs deviation after flipping the printed sign)`
    pub per_coordinate: Vec<(&'static str, f64, f64)>,
}

pub fn compare_methods(group: GroupId, h: &HamiltonianSpec, n_points: usize, seed: u64, hbar: f64) -> Result<MethodComparison, DynamicsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = group.n_params();
    let mut per = vec![(0.0f64, 0.0f64); n];
    let mut used = 0;
    let mut skipped = 0;
    while used < n_points {
        let p = sample_params(group, &mut rng);
        let pts = std::slice::from_ref(&p);
        match (eom_rhs(h, pts, EomMethod::Berry, hbar), eom_rhs(h, pts, EomMethod::Paper, hbar)) {
            (Ok(b), Ok(pp)) => {
                for i in 0..n {
                    per[i].0 = per[i].0.max((pp[i] - b[i]).abs());
                    per[i].1 = per[i].1.max((pp[i] + b[i]).abs());
                }
                used += 1;
            }
            (Err(DynamicsError::Singular(_)), _) | (_, Err(DynamicsError::Singular(_))) => skipped += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(MethodComparison {
        group,
        n_points,
        skipped,
        per_coordinate: group.param_names().iter().zip(per).map(|(&name, (a, b))| (name, a, b)).collect(),
    })
}
