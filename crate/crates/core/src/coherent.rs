//! SU(2)..SU(5) coherent states in real parameterization.
//!
//! Every state is an ordered product of one-parameter exponentials applied to the
//! highest-weight reference state:
//!
//! ```text
//! SU2: e^{-iφSz} e^{-iθSy}                                        |0>
//! SU3: ... e^{-iγSz} e^{2igQxy}                                   |0>
//! SU4: ... e^{-iβSz} e^{-ikFxyz}                                  |0>
//! SU5: ... e^{-iβSz} e^{-ikOxyz} e^{-imSz} e^{-inXxyzl}           |0>
//! ```
//!
//! [`build_oracle`] evaluates that product with matrix exponentials and is the ground truth.
//! [`build_closed_form`] evaluates the expanded coefficient formulas term by term and is only
//! ever compared against the oracle.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{symmetric_eigen, CMatrix, CVector, C64, I, ONE, ZERO};
use crate::generators::{Generator, OperatorSet, SpinRep};

/// Finite-difference step for the Berry connection.
pub const CONNECTION_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoherentError {
    #[error("{group} takes {expected} parameters, got {got}")]
    ParamCount { group: GroupId, expected: usize, got: usize },
    #[error("parameter {name} is not finite")]
    NonFinite { name: &'static str },
    #[error("group mismatch: {0} vs {1}")]
    GroupMismatch(GroupId, GroupId),
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown parameter `{name}` for {group}")]
    UnknownParam { group: GroupId, name: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    SU2,
    SU3,
    SU4,
    SU5,
}

/// All parameter names in the order used by SU(5); smaller groups use a prefix.
pub const PARAM_NAMES: [&str; 8] = ["theta", "phi", "gamma", "g", "beta", "k", "m", "n"];

pub const THETA: usize = 0;
pub const PHI: usize = 1;
pub const GAMMA: usize = 2;
pub const G: usize = 3;
pub const BETA: usize = 4;
pub const K: usize = 5;
pub const M: usize = 6;
pub const N: usize = 7;

impl GroupId {
    pub const ALL: [GroupId; 4] = [GroupId::SU2, GroupId::SU3, GroupId::SU4, GroupId::SU5];

    pub fn dim(self) -> usize {
        match self {
            GroupId::SU2 => 2,
            GroupId::SU3 => 3,
            GroupId::SU4 => 4,
            GroupId::SU5 => 5,
        }
    }

    pub fn two_s(self) -> u32 {
        self.dim() as u32 - 1
    }

    pub fn n_params(self) -> usize {
        2 * (self.dim() - 1)
    }

    pub fn param_names(self) -> &'static [&'static str] {
        &PARAM_NAMES[..self.n_params()]
    }

    pub fn from_dim(dim: usize) -> Option<GroupId> {
        GroupId::ALL.into_iter().find(|g| g.dim() == dim)
    }

    /// Operators of the spin-(d-1)/2 irrep this group acts on.
    pub fn operators(self) -> &'static OperatorSet {
        &group_data(self).ops
    }

    pub fn rep(self) -> &'static SpinRep {
        &group_data(self).ops.rep
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GroupId::SU2 => "SU2",
            GroupId::SU3 => "SU3",
            GroupId::SU4 => "SU4",
            GroupId::SU5 => "SU5",
        };
        f.write_str(s)
    }
}

impl FromStr for GroupId {
    type Err = CoherentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['(', ')'], "").as_str() {
            "su2" => Ok(GroupId::SU2),
            "su3" => Ok(GroupId::SU3),
            "su4" => Ok(GroupId::SU4),
            "su5" => Ok(GroupId::SU5),
            _ => Err(CoherentError::UnknownGroup(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherentParams {
    group: GroupId,
    values: Vec<f64>,
}

impl CoherentParams {
    pub fn new(group: GroupId, values: Vec<f64>) -> Result<Self, CoherentError> {
        if values.len() != group.n_params() {
            return Err(CoherentError::ParamCount {
                group,
                expected: group.n_params(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoherentError::NonFinite { name: PARAM_NAMES[i] });
        }
        Ok(CoherentParams { group, values })
    }

    /// All parameters zero: the reference state itself.
    pub fn origin(group: GroupId) -> Self {
        CoherentParams {
            group,
            values: vec![0.0; group.n_params()],
        }
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, name: &str) -> Result<f64, CoherentError> {
        self.group
            .param_names()
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values[i])
            .ok_or_else(|| CoherentError::UnknownParam {
                group: self.group,
                name: name.to_string(),
            })
    }

    /// Copy with one coordinate shifted; used for finite differences.
    pub fn shifted(&self, index: usize, delta: f64) -> Self {
        let mut values = self.values.clone();
        values[index] += delta;
        CoherentParams {
            group: self.group,
            values,
        }
    }

    /// Value by index, zero for coordinates the group does not have.
    fn at(&self, index: usize) -> f64 {
        self.values.get(index).copied().unwrap_or(0.0)
    }
}

impl fmt::Display for CoherentParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in self.group.param_names().iter().zip(&self.values).enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{name}={v:.6}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherentState {
    pub group: GroupId,
    pub amplitudes: CVector,
}

/// One factor `exp(-i q K)` of the coherent-state product.
struct Factor {
    param: usize,
    generator: CMatrix,
    kind: FactorKind,
}

enum FactorKind {
    Diagonal(Vec<f64>),
    /// `K = iA` with `A` real antisymmetric, so `exp(-iqK) = exp(qA)`. On the eigenspace of `A²`
    /// with eigenvalue `-μ²` this is `cos(qμ) + sin(qμ) A / μ`.
    Rotation { kernel: Vec<Vec<f64>>, planes: Vec<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> },
    Dense,
}

fn real_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn rotation_kind(generator: &CMatrix) -> Option<FactorKind> {
    let dim = generator.rows();
    let real_part_zero = generator.as_slice().iter().all(|z| z.re == 0.0);
    if !real_part_zero || !generator.is_hermitian(0.0) {
        return None;
    }
    let a: Vec<Vec<f64>> = (0..dim).map(|r| (0..dim).map(|c| generator[(r, c)].im).collect()).collect();
    let (vals, vecs) = symmetric_eigen(&real_matmul(&a, &a));
    let projector = |idx: &[usize]| -> Vec<Vec<f64>> {
        (0..dim)
            .map(|i| (0..dim).map(|j| idx.iter().map(|&k| vecs[k][i] * vecs[k][j]).sum()).collect())
            .collect()
    };
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    for k in order {
        let mu = (-vals[k]).max(0.0).sqrt();
        match clusters.last_mut() {
            Some((m, idx)) if (mu - *m).abs() < 1e-9 => idx.push(k),
            _ => clusters.push((mu, vec![k])),
        }
    }
    let mut kernel = vec![vec![0.0; dim]; dim];
    let mut planes = Vec::new();
    for (mu, idx) in clusters {
        let p = projector(&idx);
        if mu < 1e-9 {
            kernel = p;
        } else {
            let ap = real_matmul(&a, &p).into_iter().map(|r| r.into_iter().map(|x| x / mu).collect()).collect();
            planes.push((mu, p, ap));
        }
    }
    Some(FactorKind::Rotation { kernel, planes })
}

impl Factor {
    fn new(param: usize, generator: CMatrix) -> Self {
        let dim = generator.rows();
        let is_diag = (0..dim).all(|r| (0..dim).all(|c| r == c || generator[(r, c)] == ZERO));
        let kind = if is_diag {
            FactorKind::Diagonal((0..dim).map(|i| generator[(i, i)].re).collect())
        } else {
            rotation_kind(&generator).unwrap_or(FactorKind::Dense)
        };
        Factor { param, generator, kind }
    }

    fn exponential(&self, q: f64) -> FactorExp {
        match &self.kind {
            FactorKind::Diagonal(d) => FactorExp::Diagonal(d.iter().map(|&k| C64::from_polar(1.0, -q * k)).collect()),
            FactorKind::Rotation { kernel, planes } => {
                let mut m = kernel.clone();
                for (mu, p, ap) in planes {
                    let (s, c) = (q * mu).sin_cos();
                    for (i, row) in m.iter_mut().enumerate() {
                        for (j, x) in row.iter_mut().enumerate() {
                            *x += c * p[i][j] + s * ap[i][j];
                        }
                    }
                }
                FactorExp::Real(m)
            }
            FactorKind::Dense => FactorExp::Dense(
                self.generator
                    .scale(-I * q)
                    .expm()
                    .expect("generator exponentials are finite and square"),
            ),
        }
    }
}

enum FactorExp {
    Diagonal(Vec<C64>),
    Real(Vec<Vec<f64>>),
    Dense(CMatrix),
}

impl FactorExp {
    fn apply(&self, v: &CVector) -> CVector {
        match self {
            FactorExp::Diagonal(d) => CVector::from_vec(d.iter().zip(v.as_slice()).map(|(a, b)| a * b).collect()),
            FactorExp::Real(m) => CVector::from_vec(
                m.iter()
                    .map(|row| row.iter().zip(v.as_slice()).map(|(a, b)| b * *a).sum())
                    .collect(),
            ),
            FactorExp::Dense(m) => m.apply(v),
        }
    }
}

struct GroupData {
    ops: OperatorSet,
    factors: Vec<Factor>,
}

fn build_group_data(group: GroupId) -> GroupData {
    let ops = OperatorSet::new(group.two_s()).expect("supported spin");
    let m = |g: Generator| ops.matrix(g).expect("generator available for group");
    let sz = m(Generator::Sz);
    let mut factors = vec![Factor::new(PHI, sz.clone()), Factor::new(THETA, m(Generator::Sy))];
    if group >= GroupId::SU3 {
        factors.push(Factor::new(GAMMA, sz.clone()));
        // e^{2ig Qxy} = exp(-i g (-2 Qxy))
        factors.push(Factor::new(G, m(Generator::Qxy).scale_real(-2.0)));
    }
    if group >= GroupId::SU4 {
        factors.push(Factor::new(BETA, sz.clone()));
        factors.push(Factor::new(K, m(Generator::Oxyz)));
    }
    if group == GroupId::SU5 {
        factors.push(Factor::new(M, sz));
        factors.push(Factor::new(N, m(Generator::Xxyzl)));
    }
    GroupData { ops, factors }
}

fn group_data(group: GroupId) -> &'static GroupData {
    static DATA: [OnceLock<GroupData>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let idx = group.dim() - 2;
    DATA[idx].get_or_init(|| build_group_data(group))
}

/// Oracle amplitudes for a raw coordinate slice (no validation).
pub(crate) fn oracle_amplitudes(group: GroupId, q: &[f64]) -> CVector {
    let data = group_data(group);
    data.factors
        .iter()
        .rev()
        .fold(CVector::basis(group.dim(), 0), |v, f| f.exponential(q[f.param]).apply(&v))
}

/// A coherent state together with its exact coordinate derivatives.
#[derive(Clone, Debug)]
pub struct Frame {
    pub state: CVector,
    pub tangents: Vec<CVector>,
}

/// State and tangent vectors `∂ψ/∂q_a`, obtained by inserting `-iK` at each factor.
pub(crate) fn frame(group: GroupId, q: &[f64]) -> Frame {
    let data = group_data(group);
    let exps: Vec<FactorExp> = data.factors.iter().map(|f| f.exponential(q[f.param])).collect();
    let n = exps.len();
    // suffix[j] = U_j U_{j+1} ... U_{n-1} |0>
    let mut suffix = vec![CVector::basis(group.dim(), 0); n + 1];
    for j in (0..n).rev() {
        suffix[j] = exps[j].apply(&suffix[j + 1]);
    }
    let mut tangents = vec![CVector::zeros(group.dim()); group.n_params()];
    for (j, factor) in data.factors.iter().enumerate() {
        let mut w = factor.generator.apply(&suffix[j]).scale(-I);
        for u in exps[..j].iter().rev() {
            w = u.apply(&w);
        }
        tangents[factor.param] = w;
    }
    Frame {
        state: suffix.swap_remove(0),
        tangents,
    }
}

impl CoherentParams {
    pub fn frame(&self) -> Frame {
        frame(self.group, &self.values)
    }
}

/// Applies the group's exponential factors to the reference state.
pub fn build_oracle(p: &CoherentParams) -> CoherentState {
    CoherentState {
        group: p.group,
        amplitudes: oracle_amplitudes(p.group, &p.values),
    }
}

#[derive(Clone, Debug)]
pub struct ClosedForm {
    pub state: CoherentState,
    /// Norm of the coefficients as evaluated, before any normalization.
    pub raw_norm: f64,
    /// Set when the raw norm missed 1 by more than 1e-9 and the state was rescaled.
    pub normalized: bool,
}

/// Expanded coefficient formulas, evaluated term by term.
///
/// The SU(3) coefficients are listed from the lowest weight upward; they are stored
/// highest weight first like every other state. SU(5) uses the truncated θ series for
/// the rotation entries.
pub fn build_closed_form(p: &CoherentParams) -> ClosedForm {
    let coeffs = match p.group {
        GroupId::SU2 => closed_su2(p),
        GroupId::SU3 => closed_su3(p),
        GroupId::SU4 => closed_su4(p),
        GroupId::SU5 => closed_su5(p),
    };
    let v = CVector::from_vec(coeffs);
    let raw_norm = v.norm();
    let normalized = (raw_norm - 1.0).abs() > 1e-9 && raw_norm > 0.0;
    let amplitudes = if normalized { v.normalized() } else { v };
    ClosedForm {
        state: CoherentState {
            group: p.group,
            amplitudes,
        },
        raw_norm,
        normalized,
    }
}

fn cis(x: f64) -> C64 {
    C64::from_polar(1.0, x)
}

fn closed_su2(p: &CoherentParams) -> Vec<C64> {
    let (th, ph) = (p.at(THETA), p.at(PHI));
    vec![cis(-ph / 2.0) * (th / 2.0).cos(), cis(ph / 2.0) * (th / 2.0).sin()]
}

fn closed_su3(p: &CoherentParams) -> Vec<C64> {
    let (th, ph, ga, g) = (p.at(THETA), p.at(PHI), p.at(GAMMA), p.at(G));
    let (c2, s2) = ((th / 2.0).cos().powi(2), (th / 2.0).sin().powi(2));
    let (cg, sg) = (g.cos(), g.sin());
    let low = cis(ph) * (cis(-ga) * s2 * cg + cis(ga) * c2 * sg);
    let mid = (cis(-ga) * cg - cis(ga) * sg) * (th.sin() / SQRT_2);
    let high = cis(-ph) * (cis(-ga) * c2 * cg + cis(ga) * s2 * sg);
    vec![high, mid, low]
}

fn closed_su4(p: &CoherentParams) -> Vec<C64> {
    let (th, ph, ga, g, be, k) = (p.at(THETA), p.at(PHI), p.at(GAMMA), p.at(G), p.at(BETA), p.at(K));
    let (c, s) = ((th / 2.0).cos(), (th / 2.0).sin());
    let r3 = 3f64.sqrt();
    let (cg, sg) = (g.cos(), g.sin());
    let a = [
        s.powi(3) * cg,
        r3 * s * c * c * sg,
        r3 * s * s * c * cg,
        th.cos() * (1.0 - s * s) * sg,
    ];
    let b = [
        r3 * s * s * c * sg,
        c.powi(3) * cg,
        th.sin() * (2.0 - 3.0 * s * s) * sg,
        r3 * s * c * c * cg,
    ];
    let (sk, ck) = (k.sin(), k.cos());
    let aa = |i: usize| a[i - 1] * sk;
    let bb = |i: usize| b[i - 1] * ck;
    let aap = |i: usize| a[i - 1] * ck;
    let bbp = |i: usize| b[i - 1] * sk;
    let e = |x: f64| cis(x);
    let c0 = e(1.5 * (ph - ga - be)) * aa(1) - e(0.5 * (3.0 * ph + ga - 3.0 * be)) * aa(2)
        + e(0.5 * (3.0 * ph - ga + 3.0 * be)) * bb(1)
        + e(1.5 * (ph + ga + be)) * bb(2);
    let c1 = e(1.5 * (ph - ga + be)) * aa(3) - e(0.5 * (ph + ga - 3.0 * be)) * aa(4)
        + e(0.5 * (ph - ga + 3.0 * be)) * bb(3)
        - e(0.5 * (ph + 3.0 * ga + 3.0 * be)) * bb(4);
    let c2 = e(-0.5 * (ph + 3.0 * ga + 3.0 * be)) * bbp(4)
        + e(0.5 * (ph - ga + 3.0 * be)) * bbp(4)
        + e(-0.5 * (ph + ga - 3.0 * be)) * aap(4)
        - e(-0.5 * (ph - 3.0 * ga - 3.0 * be)) * aap(2);
    let c3 = e(-1.5 * (ph + ga + be)) * bbp(1) - e(-0.5 * (3.0 * ph - ga + 3.0 * be)) * bbp(2)
        - e(-1.5 * (ph - ga - be)) * aap(1)
        + e(-0.5 * (3.0 * ph + ga - 3.0 * be)) * aap(2);
    vec![c0, c1, c2, c3]
}

/// Truncated power series (through θ^10) for the ten distinct spin-2 rotation entries.
pub fn spin2_series(theta: f64) -> [f64; 10] {
    let t = theta;
    let p = |n: i32| t.powi(n);
    let r6 = 6f64.sqrt();
    let r32 = 1.5f64.sqrt();
    let r23 = (2.0f64 / 3.0).sqrt();
    [
        1.0 - p(2) / 2.0 + 5.0 * p(4) / 48.0 - 17.0 * p(6) / 1440.0 + 13.0 * p(8) / 16128.0 - 257.0 * p(10) / 7257600.0,
        -t + 5.0 * p(3) / 12.0 - 17.0 * p(5) / 240.0 + 13.0 * p(7) / 2016.0 - 257.0 * p(9) / 725760.0,
        0.5 * r32 * p(2) - p(4) / (2.0 * r6) + p(6) / (15.0 * r6) - p(8) / (210.0 * r6) + p(10) / (4725.0 * r6),
        -p(3) / 4.0 + p(5) / 16.0 - p(7) / 160.0 + 17.0 * p(9) / 48384.0,
        p(4) / 16.0 - p(6) / 96.0 + p(8) / 1280.0 - 17.0 * p(10) / 483840.0,
        t - 5.0 * p(3) / 12.0 + 17.0 * p(5) / 240.0 - 13.0 * p(7) / 2016.0 + 257.0 * p(9) / 725760.0,
        1.0 - 5.0 * p(2) / 4.0 + 17.0 * p(4) / 48.0 - 13.0 * p(6) / 288.0 + 257.0 * p(8) / 80640.0
            - 41.0 * p(10) / 290304.0,
        -r32 * t + r23 * p(3) - r23 * p(5) / 5.0 + 2.0 * r23 * p(7) / 105.0 - r23 * p(9) / 945.0,
        3.0 * p(2) / 4.0 - 5.0 * p(4) / 16.0 + 7.0 * p(6) / 160.0 - 17.0 * p(8) / 5376.0 + 341.0 * p(10) / 2419200.0,
        1.0 - 3.0 * p(2) / 2.0 + p(4) / 2.0 - p(6) / 15.0 + p(8) / 210.0 - p(10) / 4725.0,
    ]
}

fn closed_su5(p: &CoherentParams) -> Vec<C64> {
    let (th, ph, ga, g) = (p.at(THETA), p.at(PHI), p.at(GAMMA), p.at(G));
    let (be, k, m, n) = (p.at(BETA), p.at(K), p.at(M), p.at(N));
    let f = spin2_series(th);
    let f = |i: usize| f[i - 1];
    let r2g = SQRT_2 * g;
    let a = 0.5 * (1.0 + r2g.cos());
    let b = 0.5 * (1.0 - r2g.cos());
    let c = r2g.sin() / SQRT_2;
    let (cg, sg, ck, sk, cn, sn) = (g.cos(), g.sin(), k.cos(), k.sin(), n.cos(), n.sin());
    let e = cis;
    let pre_n = e(2.0 * (be + m)) * sn;
    let pre_c = e(-2.0 * m) * cn;
    let eb = e(be);
    let eb2 = e(-2.0 * be);

    let c0 = -pre_n * (e(2.0 * (ph - ga)) * a * f(5) + e(2.0 * (ph + ga)) * b * f(1) + e(2.0 * ph) * c * f(3))
        + pre_c
            * (eb * (e(2.0 * ph - ga) * cg * f(4) + e(2.0 * ph + ga) * sg * f(2)) * sk
                + eb2 * (e(2.0 * (ph - ga)) * b * f(5) + e(2.0 * (ph + ga)) * a * f(1) - e(2.0 * ph) * c * f(3)) * ck);
    let c1 = -pre_n * (e(ph - 2.0 * ga) * a * f(4) + e(ph + 2.0 * ga) * b * f(6) + e(ph) * c * f(8))
        + pre_c
            * (eb * (e(ph - ga) * cg * f(9) + e(ph + ga) * sg * f(7)) * sk
                + eb2 * (e(ph - 2.0 * ga) * b * f(4) + e(ph + 2.0 * ga) * a * f(6) - e(ph) * c * f(8)) * ck);
    let c2 = -pre_n * (e(-2.0 * ga) * a * f(3) + e(2.0 * ga) * b * f(3) + ONE * c * f(10))
        + pre_c
            * (eb * (e(-ga) * cg * f(8) - e(ga) * sg * f(8)) * sk
                + eb2 * (e(-2.0 * ga) * b * f(3) + e(2.0 * ga) * a * f(3) - ONE * c * f(10)) * ck);
    let c3 = pre_n * (e(-(ph + 2.0 * ga)) * a * f(6) + e(-ph + 2.0 * ga) * b * f(4) + e(-ph) * c * f(8))
        + pre_c
            * (eb * (e(-(ph + ga)) * cg * f(7) + e(-ph + ga) * sg * f(9)) * sk
                - eb2 * (e(-(ph + 2.0 * ga)) * b * f(6) + e(-ph + 2.0 * ga) * a * f(4) - e(-ph) * c * f(8)) * ck);
    // The last term of the first bracket carries an unsubscripted f; f_3 by symmetry with C0.
    let c4 = -pre_n * (e(-2.0 * (ph + ga)) * a * f(1) + e(2.0 * (-ph + ga)) * b * f(5) + e(-2.0 * ph) * c * f(3))
        + pre_c
            * (eb * (-e(-(2.0 * ph + ga)) * cg * f(2) - e(-2.0 * ph + ga) * sg * f(4)) * sk
                + eb2 * (e(-2.0 * (ph + ga)) * b * f(1) + e(2.0 * (-ph + ga)) * a * f(5) - e(-2.0 * ph) * c * f(3)) * ck);
    vec![c0, c1, c2, c3, c4]
}

/// Rotation matrix `exp(-iθSy)` in one irrep.
#[derive(Clone, Debug)]
pub struct WignerD {
    pub matrix: CMatrix,
    /// Spin-2 only: the truncated-series matrix and its max deviation from `matrix`.
    pub series: Option<CMatrix>,
    pub series_deviation: Option<f64>,
}

/// Closed trigonometric d-matrices for dimensions 2..=4.
pub fn wigner_d_closed_form(dim: usize, theta: f64) -> Option<CMatrix> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let r = |rows: Vec<Vec<f64>>| CMatrix::from_rows(&rows.into_iter().map(|row| row.into_iter().map(|x| ONE * x).collect()).collect::<Vec<_>>());
    match dim {
        2 => Some(r(vec![vec![c, -s], vec![s, c]])),
        3 => {
            let (ct, st) = (theta.cos(), theta.sin() / SQRT_2);
            Some(r(vec![
                vec![(1.0 + ct) / 2.0, -st, (1.0 - ct) / 2.0],
                vec![st, ct, -st],
                vec![(1.0 - ct) / 2.0, st, (1.0 + ct) / 2.0],
            ]))
        }
        4 => {
            let r3 = 3f64.sqrt();
            let f1 = c.powi(3);
            let f2 = s.powi(3);
            let f3 = r3 * c * c * s;
            let f4 = r3 * c * s * s;
            let f5 = c * (1.0 - 3.0 * s * s);
            let f6 = s * (2.0 - 3.0 * s * s);
            Some(r(vec![
                vec![f1, -f3, f4, -f2],
                vec![f3, f5, -f6, f4],
                vec![f4, f6, f5, -f3],
                vec![f2, f4, f3, f1],
            ]))
        }
        _ => None,
    }
}

/// Spin-2 d-matrix assembled from the truncated series.
pub fn wigner_d_series_spin2(theta: f64) -> CMatrix {
    let f = spin2_series(theta);
    let f = |i: usize| f[i - 1];
    let rows = vec![
        vec![f(1), f(2), f(3), f(4), f(5)],
        vec![f(6), f(7), f(8), f(9), f(4)],
        vec![f(3), -f(8), f(10), f(8), f(3)],
        vec![-f(4), f(9), -f(8), f(7), -f(6)],
        vec![f(5), -f(4), f(3), -f(2), f(1)],
    ];
    CMatrix::from_rows(&rows.into_iter().map(|row| row.into_iter().map(|x| ONE * x).collect()).collect::<Vec<_>>())
}

/// `exp(-iθSy)` by matrix exponential.
pub fn wigner_d_oracle(rep: &SpinRep, theta: f64) -> CMatrix {
    rep.sy.scale(-I * theta).expm().expect("finite rotation generator")
}

pub fn wigner_d(rep: &SpinRep, theta: f64) -> WignerD {
    match wigner_d_closed_form(rep.dim(), theta) {
        Some(matrix) => WignerD {
            matrix,
            series: None,
            series_deviation: None,
        },
        None => {
            let matrix = wigner_d_oracle(rep, theta);
            let series = wigner_d_series_spin2(theta);
            let dev = series.max_abs_diff(&matrix);
            WignerD {
                matrix,
                series: Some(series),
                series_deviation: Some(dev),
            }
        }
    }
}

/// `<ψ(p1)|ψ(p2)>` on oracle states.
pub fn overlap(p1: &CoherentParams, p2: &CoherentParams) -> Result<C64, CoherentError> {
    if p1.group != p2.group {
        return Err(CoherentError::GroupMismatch(p1.group, p2.group));
    }
    Ok(build_oracle(p1).amplitudes.inner(&build_oracle(p2).amplitudes))
}

/// Berry connection `A_a = ħ Re[i<ψ|∂_a ψ>]` by central differences of the oracle state.
pub fn berry_connection(p: &CoherentParams, hbar: f64) -> Vec<f64> {
    let psi = build_oracle(p).amplitudes;
    (0..p.group.n_params())
        .map(|a| {
            let plus = oracle_amplitudes(p.group, &p.shifted(a, CONNECTION_STEP).values);
            let minus = oracle_amplitudes(p.group, &p.shifted(a, -CONNECTION_STEP).values);
            let d = plus.axpy(-ONE, &minus).scale(ONE / (2.0 * CONNECTION_STEP));
            -hbar * psi.inner(&d).im
        })
        .collect()
}

/// Same connection from the exact tangent vectors.
pub fn berry_connection_exact(p: &CoherentParams, hbar: f64) -> Vec<f64> {
    let fr = p.frame();
    fr.tangents.iter().map(|t| -hbar * fr.state.inner(t).im).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn params(group: GroupId, v: &[f64]) -> CoherentParams {
        CoherentParams::new(group, v.to_vec()).unwrap()
    }

    #[test]
    fn factor_exponentials_match_expm() {
        for group in GroupId::ALL {
            for f in &group_data(group).factors {
                if matches!(f.kind, FactorKind::Dense) {
                    panic!("{group}: factor {} fell back to expm", f.param);
                }
                for q in [-2.3, -0.4, 0.0, 0.7, 5.1] {
                    let exact = f.generator.scale(-I * q).expm().unwrap();
                    let cols: Vec<CVector> = (0..group.dim()).map(|c| f.exponential(q).apply(&CVector::basis(group.dim(), c))).collect();
                    for (c, col) in cols.iter().enumerate() {
                        for r in 0..group.dim() {
                            assert!((col[r] - exact[(r, c)]).norm() < 1e-13, "{group} param {} q {q}", f.param);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn param_counts_are_even() {
        for g in GroupId::ALL {
            assert_eq!(g.n_params() % 2, 0);
            assert_eq!(g.param_names().len(), g.n_params());
        }
        assert_eq!(GroupId::SU5.param_names(), &PARAM_NAMES);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(
            CoherentParams::new(GroupId::SU3, vec![0.0; 3]),
            Err(CoherentError::ParamCount { expected: 4, got: 3, .. })
        ));
        assert_eq!(
            CoherentParams::new(GroupId::SU2, vec![0.0, f64::INFINITY]),
            Err(CoherentError::NonFinite { name: "phi" })
        );
        assert!("su7".parse::<GroupId>().is_err());
        assert_eq!("SU(4)".parse::<GroupId>().unwrap(), GroupId::SU4);
    }

    #[test]
    fn oracle_reference_states() {
        let s = build_oracle(&params(GroupId::SU2, &[0.0, 0.0]));
        assert_eq!(s.amplitudes, CVector::basis(2, 0));
        let s = build_oracle(&params(GroupId::SU2, &[PI, 0.0]));
        assert!(s.amplitudes.max_abs_diff(&CVector::basis(2, 1)) < 1e-14);
        let s = build_oracle(&CoherentParams::origin(GroupId::SU3));
        assert!(s.amplitudes.max_abs_diff(&CVector::basis(3, 0)) < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = build_closed_form(&params(GroupId::SU2, &[FRAC_PI_2, 0.0]));
        assert!(s.state.amplitudes.max_abs_diff(&CVector::from_vec(vec![ONE * h, ONE * h])) < 1e-15);
        let s = build_closed_form(&params(GroupId::SU3, &[FRAC_PI_2, 0.0, 0.0, 0.0]));
        let expected = CVector::from_vec(vec![ONE * 0.5, ONE * h, ONE * 0.5]);
        assert!(s.state.amplitudes.max_abs_diff(&expected) < 1e-15);
        let s = build_closed_form(&CoherentParams::origin(GroupId::SU5));
        assert!(!s.normalized);
        assert!(s.state.amplitudes.max_abs_diff(&CVector::basis(5, 0)) < 1e-15);
    }

    #[test]
    fn su3_closed_form_matches_oracle_away_from_symmetric_points() {
        let p = params(GroupId::SU3, &[0.7, 1.3, -0.4, 0.25]);
        let cf = build_closed_form(&p);
        assert!(!cf.normalized);
        assert!(cf.state.amplitudes.max_abs_diff(&build_oracle(&p).amplitudes) < 1e-13);
    }

    #[test]
    fn wigner_examples() {
        for two_s in 1..=4 {
            let rep = SpinRep::new(two_s).unwrap();
            let d = wigner_d(&rep, 0.0).matrix;
            assert!(d.max_abs_diff(&CMatrix::identity(rep.dim())) < 1e-15);
        }
        let rep4 = SpinRep::new(3).unwrap();
        let d = wigner_d(&rep4, FRAC_PI_2);
        assert!((d.matrix[(0, 0)].re - 0.353_553_390_593_273_8).abs() < 1e-15);
        let rep5 = SpinRep::new(4).unwrap();
        let d = wigner_d(&rep5, 0.5);
        assert!(d.series_deviation.unwrap() < 1e-6);
    }

    #[test]
    fn wigner_closed_forms_match_exponential() {
        for two_s in 1..=3 {
            let rep = SpinRep::new(two_s).unwrap();
            for i in -20..=20 {
                let th = i as f64 * 0.17;
                let cf = wigner_d_closed_form(rep.dim(), th).unwrap();
                assert!(cf.max_abs_diff(&wigner_d_oracle(&rep, th)) < 1e-12, "dim {} θ {th}", rep.dim());
            }
        }
    }

    #[test]
    fn overlap_examples() {
        let p = params(GroupId::SU4, &[0.3, 0.2, 1.0, -0.3, 2.0, 0.4]);
        assert!((overlap(&p, &p).unwrap() - ONE).norm() < 1e-14);
        let a = params(GroupId::SU2, &[FRAC_PI_3, 0.4]);
        let b = params(GroupId::SU2, &[FRAC_PI_3, 0.4 - 1e-3]);
        let o = overlap(&a, &b).unwrap();
        assert!((o - C64::new(1.0, 2.5e-4)).norm() < 2e-7, "{o}");
        let n = params(GroupId::SU2, &[0.0, 0.0]);
        let s = params(GroupId::SU2, &[PI, 0.0]);
        assert!(overlap(&n, &s).unwrap().norm() < 1e-15);
        assert_eq!(
            overlap(&n, &CoherentParams::origin(GroupId::SU3)),
            Err(CoherentError::GroupMismatch(GroupId::SU2, GroupId::SU3))
        );
    }

    #[test]
    fn berry_connection_examples() {
        let a = berry_connection(&params(GroupId::SU2, &[FRAC_PI_2, 0.3]), 1.0);
        assert!(a[0].abs() < 1e-9 && a[1].abs() < 1e-9, "{a:?}");
        let a = berry_connection(&params(GroupId::SU2, &[0.0, 0.3]), 1.0);
        assert!((a[1] - 0.5).abs() < 1e-9);
        let a = berry_connection(&params(GroupId::SU3, &[0.8, 0.1, 0.2, 0.0]), 1.0);
        assert!((a[GAMMA] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tangents_match_finite_differences() {
        for group in GroupId::ALL {
            let q: Vec<f64> = (0..group.n_params()).map(|i| 0.3 + 0.37 * i as f64).collect();
            let p = params(group, &q);
            let fr = p.frame();
            assert!(fr.state.max_abs_diff(&build_oracle(&p).amplitudes) < 1e-14);
            for a in 0..group.n_params() {
                let h = 1e-6;
                let d = oracle_amplitudes(group, &p.shifted(a, h).values)
                    .axpy(-ONE, &oracle_amplitudes(group, &p.shifted(a, -h).values))
                    .scale(ONE / (2.0 * h));
                assert!(d.max_abs_diff(&fr.tangents[a]) < 1e-8, "{group} param {a}");
            }
        }
    }
}
