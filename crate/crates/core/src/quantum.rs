//! Exact Schrödinger reference for the classical dynamics.

use std::f64::consts::PI;
use std::io;

use thiserror::Error;

use crate::algebra::{AlgebraError, CMatrix, CVector, C64, MAX_DIM};
use crate::coherent::{oracle_amplitudes, CoherentParams, GroupId};
use crate::dynamics::{integrate, DynamicsError, EomMethod, HamiltonianSpec, SingularStop};
use crate::generators::Generator;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("Hamiltonian is not Hermitian")]
    NotHermitian,
    #[error("dimension mismatch: operator is {op}, state is {state}")]
    DimensionMismatch { op: usize, state: usize },
    #[error("state norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("quadrature orders must be at least 2, got {0}x{1}")]
    QuadratureOrder(usize, usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: CVector,
}

impl QuantumState {
    pub fn new(amplitudes: CVector) -> Result<Self, QuantumError> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QuantumError::NotNormalized(norm));
        }
        if amplitudes.dim() > MAX_DIM {
            return Err(AlgebraError::DimensionCap {
                dim: amplitudes.dim(),
                cap: MAX_DIM,
            }
            .into());
        }
        Ok(QuantumState { amplitudes })
    }

    pub fn from_coherent(p: &CoherentParams) -> Self {
        QuantumState {
            amplitudes: oracle_amplitudes(p.group(), p.values()),
        }
    }

    /// Product of per-site coherent states, site 0 leftmost.
    pub fn from_chain(sites: &[CoherentParams]) -> Result<Self, QuantumError> {
        let mut v = CVector::from_vec(vec![C64::new(1.0, 0.0)]);
        for p in sites {
            v = v.kron(&oracle_amplitudes(p.group(), p.values()))?;
        }
        Ok(QuantumState { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.dim()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn expect(&self, op: &CMatrix) -> Result<C64, QuantumError> {
        if op.rows() != self.dim() || !op.is_square() {
            return Err(QuantumError::DimensionMismatch {
                op: op.rows(),
                state: self.dim(),
            });
        }
        Ok(self.amplitudes.inner(&op.apply(&self.amplitudes)))
    }
}

fn evolution_operator(h: &CMatrix, t: f64, hbar: f64) -> Result<CMatrix, QuantumError> {
    if !h.is_square() {
        return Err(AlgebraError::NonSquare {
            rows: h.rows(),
            cols: h.cols(),
        }
        .into());
    }
    if !h.is_hermitian(1e-12) {
        return Err(QuantumError::NotHermitian);
    }
    Ok(h.scale(C64::new(0.0, -t / hbar)).expm()?)
}

/// `exp(-iHt/ħ) ψ0`.
pub fn propagate(h: &CMatrix, psi0: &QuantumState, t: f64, hbar: f64) -> Result<QuantumState, QuantumError> {
    if h.rows() != psi0.dim() {
        return Err(QuantumError::DimensionMismatch {
            op: h.rows(),
            state: psi0.dim(),
        });
    }
    let u = evolution_operator(h, t, hbar)?;
    Ok(QuantumState {
        amplitudes: u.apply(&psi0.amplitudes),
    })
}

/// `op` acting on `site` of a chain of `sites` copies of a `dim`-level system.
pub fn site_operator(op: &CMatrix, site: usize, sites: usize) -> Result<CMatrix, QuantumError> {
    let dim = op.rows();
    let mut full = CMatrix::identity(1);
    for s in 0..sites {
        full = if s == site {
            full.kron(op)?
        } else {
            full.kron(&CMatrix::identity(dim))?
        };
    }
    Ok(full)
}

/// `|Δ<S^{x,y,z}>|` between a classical trajectory and exact propagation on a shared grid.
#[derive(Clone, Debug)]
pub struct ComparisonMetrics {
    pub group: GroupId,
    pub times: Vec<f64>,
    /// Per time, per site.
    pub deviations: Vec<Vec<[f64; 3]>>,
    /// Set when the classical run stopped at a singular point; the grid ends there.
    pub singular: Option<SingularStop>,
}

impl ComparisonMetrics {
    pub fn n_sites(&self) -> usize {
        self.deviations.first().map_or(0, Vec::len)
    }

    pub fn max_per_site(&self) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0f64; 3]; self.n_sites()];
        for row in &self.deviations {
            for (acc, d) in out.iter_mut().zip(row) {
                for c in 0..3 {
                    acc[c] = acc[c].max(d[c]);
                }
            }
        }
        out
    }

    pub fn max_deviation(&self) -> f64 {
        self.max_per_site().iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for s in 0..self.n_sites() {
            for c in ["dSx", "dSy", "dSz"] {
                h.push(format!("{c}_{s}"));
            }
        }
        h
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), QuantumError> {
        let csv_err = |e: csv::Error| QuantumError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header()).map_err(csv_err)?;
        for (t, row) in self.times.iter().zip(&self.deviations) {
            let mut rec = vec![format!("{t:.16e}")];
            rec.extend(row.iter().flatten().map(|x| format!("{x:.16e}")));
            w.write_record(rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| QuantumError::Csv(e.to_string()))
    }
}

/// Reads a metrics CSV back as `(times, per-row deviations)`.
pub fn read_metrics_csv<R: io::Read>(reader: R) -> Result<(Vec<f64>, Vec<Vec<f64>>), QuantumError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| QuantumError::Csv(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| QuantumError::Csv(e.to_string())))
            .collect::<Result<_, _>>()?;
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    Ok((times, rows))
}

/// Runs the Berry classical trajectory and exact propagation from the same product coherent
/// state and records spin-vector discrepancies at every step.
pub fn compare(
    h: &HamiltonianSpec,
    initial: &[CoherentParams],
    t_max: f64,
    dt: f64,
    hbar: f64,
) -> Result<ComparisonMetrics, QuantumError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt).into());
    }
    let steps = (t_max / dt).round() as usize;
    let hm = h.assemble()?;
    let traj = integrate(h, initial, dt, steps, EomMethod::Berry, hbar)?;
    let u = evolution_operator(&hm, dt, hbar)?;

    let ops = h.group().operators();
    let spin_ops: Vec<[CMatrix; 3]> = (0..h.sites())
        .map(|s| {
            let make = |g| site_operator(&ops.matrix(g).expect("spin operators exist"), s, h.sites());
            Ok([make(Generator::Sx)?, make(Generator::Sy)?, make(Generator::Sz)?])
        })
        .collect::<Result<_, QuantumError>>()?;

    let mut psi = QuantumState::from_chain(initial)?.amplitudes;
    let mut deviations = Vec::with_capacity(traj.len());
    for (k, classical) in traj.observables.iter().enumerate() {
        if k > 0 {
            psi = u.apply(&psi);
        }
        let row = classical
            .iter()
            .zip(&spin_ops)
            .map(|(cl, so)| {
                let mut d = [0.0; 3];
                for c in 0..3 {
                    d[c] = (psi.inner(&so[c].apply(&psi)).re - cl[c]).abs();
                }
                d
            })
            .collect();
        deviations.push(row);
    }
    Ok(ComparisonMetrics {
        group: h.group(),
        times: traj.times,
        deviations,
        singular: traj.singular,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(2j+1)/(4π) ∫ |ψ(θ,φ)><ψ(θ,φ)| sinθ dθ dφ` for spin 1/2.
pub fn unity_integral(n_theta: usize, n_phi: usize) -> Result<CMatrix, QuantumError> {
    if n_theta < 2 || n_phi < 2 {
        return Err(QuantumError::QuadratureOrder(n_theta, n_phi));
    }
    let (x, w) = gauss_legendre(n_theta);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut acc = CMatrix::zeros(2, 2);
    for (xi, wi) in x.iter().zip(&w) {
        // x = cosθ, so sinθ dθ = dx
        let theta = xi.acos();
        let mut ring = CMatrix::zeros(2, 2);
        for k in 0..n_phi {
            let psi = oracle_amplitudes(GroupId::SU2, &[theta, k as f64 * dphi]);
            ring = &ring + &psi.outer_self();
        }
        acc = &acc + &ring.scale_real(wi * dphi);
    }
    Ok(acc.scale_real(2.0 / (4.0 * PI)))
}

/// Max-entry deviation of [`unity_integral`] from the identity.
pub fn unity_check(n_theta: usize, n_phi: usize) -> Result<f64, QuantumError> {
    Ok(unity_integral(n_theta, n_phi)?.max_abs_diff(&CMatrix::identity(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::GroupId;

    fn sz(group: GroupId, w: f64) -> HamiltonianSpec {
        HamiltonianSpec::single_site(group, &[(w, Generator::Sz)]).unwrap()
    }

    #[test]
    fn propagate_examples() {
        let psi = QuantumState::from_coherent(&CoherentParams::new(GroupId::SU3, vec![0.4, 0.1, 0.2, 0.3]).unwrap());
        let zero = CMatrix::zeros(3, 3);
        assert_eq!(propagate(&zero, &psi, 2.0, 1.0).unwrap(), psi);
        let h = sz(GroupId::SU3, 1.0).assemble().unwrap();
        let out = propagate(&h, &psi, 5.0, 1.0).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
        // eigenstate picks up a phase only
        let e0 = QuantumState::new(CVector::basis(3, 0)).unwrap();
        let out = propagate(&h, &e0, 0.7, 1.0).unwrap();
        assert!((out.amplitudes()[0] - C64::from_polar(1.0, -0.7)).norm() < 1e-14);
        let bad = CMatrix::from_rows(&[vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)], vec![C64::new(0.0, 0.0); 2]]);
        let e = QuantumState::new(CVector::basis(2, 0)).unwrap();
        assert!(matches!(propagate(&bad, &e, 1.0, 1.0), Err(QuantumError::NotHermitian)));
    }

    #[test]
    fn propagation_composes() {
        let h = HamiltonianSpec::single_site(GroupId::SU4, &[(0.3, Generator::Sx), (1.1, Generator::Qxy)])
            .unwrap()
            .assemble()
            .unwrap();
        let psi = QuantumState::from_coherent(&CoherentParams::origin(GroupId::SU4));
        let a = propagate(&h, &propagate(&h, &psi, 0.4, 1.0).unwrap(), 0.9, 1.0).unwrap();
        let b = propagate(&h, &psi, 1.3, 1.0).unwrap();
        assert!(a.amplitudes().max_abs_diff(b.amplitudes()) < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let x8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((x8 - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn unity_examples() {
        assert!(unity_check(64, 64).unwrap() < 1e-12);
        // the spin-1/2 integrand is linear in cosθ and has φ-modes 0, ±1 only, so 2x2 is already exact
        assert!(unity_check(2, 2).unwrap() < 1e-14);
        assert!((unity_integral(7, 5).unwrap().trace().re - 2.0).abs() < 1e-12);
        let devs: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| unity_check(n, n).unwrap()).collect();
        for w in devs.windows(2) {
            assert!(w[1] <= w[0] + 1e-14, "{devs:?}");
        }
        assert!(matches!(unity_check(1, 4), Err(QuantumError::QuadratureOrder(1, 4))));
    }

    #[test]
    fn larmor_matches_exact() {
        let p = CoherentParams::new(GroupId::SU2, vec![0.9, 0.2]).unwrap();
        let m = compare(&sz(GroupId::SU2, 1.0), &[p], 1.0, 1e-3, 1.0).unwrap();
        assert!(m.max_deviation() < 1e-10, "{}", m.max_deviation());
        assert!(m.deviations[0][0].iter().all(|d| *d < 1e-15));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let p = CoherentParams::new(GroupId::SU2, vec![0.9, 0.2]).unwrap();
        let m = compare(&sz(GroupId::SU2, 1.0), &[p], 0.01, 1e-3, 1.0).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let (times, rows) = read_metrics_csv(buf.as_slice()).unwrap();
        assert_eq!(times, m.times);
        for (row, dev) in rows.iter().zip(&m.deviations) {
            assert_eq!(row, &dev.iter().flatten().copied().collect::<Vec<_>>());
        }
    }
}
