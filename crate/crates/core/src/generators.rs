//! Spin irreps for s = 1/2 .. 2 and the multipole operators used by the coherent states.
//!
//! Basis order is highest weight first, so the reference state is always `(1, 0, ..., 0)`.
//! The multipole matrices are taken from their explicit entrywise form; the ladder-operator
//! expressions `c * (S+^k - S-^k)` are built alongside and every entry where the two disagree
//! is kept in a reconciliation table.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::algebra::{CMatrix, C64, I, ONE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("2s = {0} is outside the supported range 1..=4")]
    SpinOutOfRange(u32),
    #[error("multipole operators need dimension >= 3, got {0}")]
    NoMultipoles(usize),
    #[error("unknown generator name `{0}`")]
    UnknownGenerator(String),
    #[error("generator {name} is not defined in dimension {dim}")]
    UnavailableGenerator { name: Generator, dim: usize },
}

#[derive(Clone, Debug)]
pub struct SpinRep {
    two_s: u32,
    pub sz: CMatrix,
    pub sp: CMatrix,
    pub sm: CMatrix,
    pub sx: CMatrix,
    pub sy: CMatrix,
}

impl SpinRep {
    pub fn new(two_s: u32) -> Result<Self, GeneratorError> {
        if !(1..=4).contains(&two_s) {
            return Err(GeneratorError::SpinOutOfRange(two_s));
        }
        let dim = two_s as usize + 1;
        let s = f64::from(two_s) / 2.0;
        let weight = |i: usize| s - i as f64;
        let sz = CMatrix::from_diag(&(0..dim).map(|i| ONE * weight(i)).collect::<Vec<_>>());
        let mut sp = CMatrix::zeros(dim, dim);
        for i in 1..dim {
            let m = weight(i);
            sp[(i - 1, i)] = ONE * (s * (s + 1.0) - m * (m + 1.0)).sqrt();
        }
        let sm = sp.adjoint();
        let sx = (&sp + &sm).scale_real(0.5);
        let sy = (&sp - &sm).scale(C64::new(0.0, -0.5));
        Ok(SpinRep {
            two_s,
            sz,
            sp,
            sm,
            sx,
            sy,
        })
    }

    pub fn two_s(&self) -> u32 {
        self.two_s
    }

    pub fn dim(&self) -> usize {
        self.two_s as usize + 1
    }

    pub fn spin(&self) -> f64 {
        f64::from(self.two_s) / 2.0
    }

    pub fn casimir(&self) -> CMatrix {
        let sq = |m: &CMatrix| m * m;
        &(&sq(&self.sx) + &sq(&self.sy)) + &sq(&self.sz)
    }
}

/// Convenience wrapper around [`SpinRep::new`].
pub fn spin_rep(two_s: u32) -> Result<SpinRep, GeneratorError> {
    SpinRep::new(two_s)
}

/// One entry where the explicit multipole matrix and its ladder-operator expression differ.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconciliationEntry {
    pub operator: &'static str,
    pub dim: usize,
    pub row: usize,
    pub col: usize,
    pub printed: C64,
    pub ladder: C64,
    pub abs_dev: f64,
}

#[derive(Clone, Debug)]
pub struct MultipoleSet {
    dim: usize,
    pub qxy: CMatrix,
    /// `F^{xyz}` in dimension 4, `O^{xyz}` in dimension 5.
    pub octupole: Option<CMatrix>,
    pub hexadecapole: Option<CMatrix>,
    pub reconciliation: Vec<ReconciliationEntry>,
}

impl MultipoleSet {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Real antisymmetric pattern with +1 at each `(r, c)` and -1 at `(c, r)`, times `prefactor`.
fn antisymmetric(dim: usize, upper: &[(usize, usize)], prefactor: C64) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for &(r, c) in upper {
        m[(r, c)] = prefactor;
        m[(c, r)] = -prefactor;
    }
    m
}

fn ladder_form(rep: &SpinRep, power: u32, prefactor: C64) -> CMatrix {
    let pow = |m: &CMatrix| (1..power).fold(m.clone(), |acc, _| &acc * m);
    (&pow(&rep.sp) - &pow(&rep.sm)).scale(prefactor)
}

fn reconcile(out: &mut Vec<ReconciliationEntry>, operator: &'static str, printed: &CMatrix, ladder: &CMatrix) {
    let dim = printed.rows();
    for row in 0..dim {
        for col in 0..dim {
            let (p, l) = (printed[(row, col)], ladder[(row, col)]);
            let abs_dev = (p - l).norm();
            if abs_dev > 1e-12 {
                out.push(ReconciliationEntry {
                    operator,
                    dim,
                    row,
                    col,
                    printed: p,
                    ladder: l,
                    abs_dev,
                });
            }
        }
    }
}

/// Quadrupole, octupole and hexadecapole operators for dimensions 3, 4 and 5.
pub fn multipole_ops(rep: &SpinRep) -> Result<MultipoleSet, GeneratorError> {
    let dim = rep.dim();
    let inv_i = -I; // 1/i
    let mut reconciliation = Vec::new();
    let set = match dim {
        3 => {
            let qxy = antisymmetric(3, &[(0, 2)], I * 0.5);
            reconcile(&mut reconciliation, "Qxy", &qxy, &ladder_form(rep, 2, inv_i / 4.0));
            MultipoleSet {
                dim,
                qxy,
                octupole: None,
                hexadecapole: None,
                reconciliation,
            }
        }
        4 => {
            let qxy = antisymmetric(4, &[(0, 2), (1, 3)], inv_i * 0.5);
            let f = antisymmetric(4, &[(0, 3)], inv_i);
            reconcile(
                &mut reconciliation,
                "Qxy",
                &qxy,
                &ladder_form(rep, 2, inv_i / (4.0 * 3f64.sqrt())),
            );
            reconcile(&mut reconciliation, "Fxyz", &f, &ladder_form(rep, 3, inv_i / 6.0));
            MultipoleSet {
                dim,
                qxy,
                octupole: Some(f),
                hexadecapole: None,
                reconciliation,
            }
        }
        5 => {
            let qxy = antisymmetric(5, &[(0, 2), (1, 3), (2, 4)], inv_i * 0.5);
            let o = antisymmetric(5, &[(0, 3), (1, 4)], inv_i);
            let x = antisymmetric(5, &[(0, 4)], inv_i);
            // No ladder prefactor is given for the spin-2 quadrupole; use the cartesian 1/(4i).
            reconcile(&mut reconciliation, "Qxy", &qxy, &ladder_form(rep, 2, inv_i / 4.0));
            reconcile(&mut reconciliation, "Oxyz", &o, &ladder_form(rep, 3, inv_i / 12.0));
            reconcile(&mut reconciliation, "Xxyzl", &x, &ladder_form(rep, 4, inv_i / 24.0));
            MultipoleSet {
                dim,
                qxy,
                octupole: Some(o),
                hexadecapole: Some(x),
                reconciliation,
            }
        }
        _ => return Err(GeneratorError::NoMultipoles(dim)),
    };
    Ok(set)
}

/// Generator names accepted in Hamiltonian terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Generator {
    Identity,
    Sx,
    Sy,
    Sz,
    Sp,
    Sm,
    Qxy,
    Oxyz,
    Xxyzl,
}

impl Generator {
    pub const ALL: [Generator; 9] = [
        Generator::Identity,
        Generator::Sx,
        Generator::Sy,
        Generator::Sz,
        Generator::Sp,
        Generator::Sm,
        Generator::Qxy,
        Generator::Oxyz,
        Generator::Xxyzl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Identity => "I",
            Generator::Sx => "Sx",
            Generator::Sy => "Sy",
            Generator::Sz => "Sz",
            Generator::Sp => "Sp",
            Generator::Sm => "Sm",
            Generator::Qxy => "Qxy",
            Generator::Oxyz => "Oxyz",
            Generator::Xxyzl => "Xxyzl",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "I" | "Id" => Generator::Identity,
            "Sx" => Generator::Sx,
            "Sy" => Generator::Sy,
            "Sz" => Generator::Sz,
            "Sp" | "S+" => Generator::Sp,
            "Sm" | "S-" => Generator::Sm,
            "Qxy" => Generator::Qxy,
            "Oxyz" | "Fxyz" => Generator::Oxyz,
            "Xxyzl" => Generator::Xxyzl,
            other => return Err(GeneratorError::UnknownGenerator(other.to_string())),
        })
    }
}

/// The full operator set for one site: spin matrices plus whatever multipoles the dimension has.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub rep: SpinRep,
    pub multipoles: Option<MultipoleSet>,
}

impl OperatorSet {
    pub fn new(two_s: u32) -> Result<Self, GeneratorError> {
        let rep = SpinRep::new(two_s)?;
        let multipoles = if rep.dim() >= 3 {
            Some(multipole_ops(&rep)?)
        } else {
            None
        };
        Ok(OperatorSet { rep, multipoles })
    }

    pub fn dim(&self) -> usize {
        self.rep.dim()
    }

    pub fn matrix(&self, generator: Generator) -> Result<CMatrix, GeneratorError> {
        let dim = self.dim();
        let missing = || GeneratorError::UnavailableGenerator { name: generator, dim };
        Ok(match generator {
            Generator::Identity => CMatrix::identity(dim),
            Generator::Sx => self.rep.sx.clone(),
            Generator::Sy => self.rep.sy.clone(),
            Generator::Sz => self.rep.sz.clone(),
            Generator::Sp => self.rep.sp.clone(),
            Generator::Sm => self.rep.sm.clone(),
            Generator::Qxy => self.multipoles.as_ref().ok_or_else(missing)?.qxy.clone(),
            Generator::Oxyz => self
                .multipoles
                .as_ref()
                .and_then(|m| m.octupole.clone())
                .ok_or_else(missing)?,
            Generator::Xxyzl => self
                .multipoles
                .as_ref()
                .and_then(|m| m.hexadecapole.clone())
                .ok_or_else(missing)?,
        })
    }

    /// Ordered product of generators; the empty product is the identity.
    pub fn product(&self, generators: &[Generator]) -> Result<CMatrix, GeneratorError> {
        generators
            .iter()
            .try_fold(CMatrix::identity(self.dim()), |acc, &g| Ok(&acc * &self.matrix(g)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ZERO;

    #[test]
    fn spin_half_weights() {
        let rep = spin_rep(1).unwrap();
        assert_eq!(rep.sz, CMatrix::from_diag(&[ONE * 0.5, ONE * -0.5]));
    }

    #[test]
    fn spin_one_ladder_entries() {
        let rep = spin_rep(2).unwrap();
        let r2 = 2f64.sqrt();
        assert!((rep.sp[(0, 1)] - ONE * r2).norm() < 1e-15);
        assert!((rep.sp[(1, 2)] - ONE * r2).norm() < 1e-15);
        assert_eq!(rep.sm, rep.sp.adjoint());
    }

    #[test]
    fn su2_relations_and_casimir() {
        for two_s in 1..=4 {
            let rep = spin_rep(two_s).unwrap();
            let s = rep.spin();
            let d = rep.dim();
            assert!(rep.sz.commutator(&rep.sp).unwrap().max_abs_diff(&rep.sp) < 1e-12);
            assert!(rep.sz.commutator(&rep.sm).unwrap().max_abs_diff(&-&rep.sm) < 1e-12);
            assert!(rep.sp.commutator(&rep.sm).unwrap().max_abs_diff(&rep.sz.scale_real(2.0)) < 1e-12);
            let xy = rep.sx.commutator(&rep.sy).unwrap();
            assert!(xy.max_abs_diff(&rep.sz.scale(I)) < 1e-12);
            let cas = rep.casimir();
            assert!(cas.max_abs_diff(&CMatrix::identity(d).scale_real(s * (s + 1.0))) < 1e-12);
            for m in [&rep.sx, &rep.sy, &rep.sz] {
                assert!(m.is_hermitian(1e-12));
            }
        }
    }

    #[test]
    fn spin_two_casimir_is_six() {
        let rep = spin_rep(4).unwrap();
        assert!(rep.casimir().max_abs_diff(&CMatrix::identity(5).scale_real(6.0)) < 1e-12);
    }

    #[test]
    fn out_of_range_spin() {
        assert_eq!(spin_rep(0).unwrap_err(), GeneratorError::SpinOutOfRange(0));
        assert_eq!(spin_rep(5).unwrap_err(), GeneratorError::SpinOutOfRange(5));
    }

    #[test]
    fn explicit_multipole_entries() {
        let q3 = multipole_ops(&spin_rep(2).unwrap()).unwrap();
        assert_eq!(q3.qxy[(0, 2)], I * 0.5);
        assert_eq!(q3.qxy[(2, 0)], -I * 0.5);
        assert_eq!(q3.qxy[(1, 1)], ZERO);

        let m4 = multipole_ops(&spin_rep(3).unwrap()).unwrap();
        let f = m4.octupole.unwrap();
        assert_eq!(f[(0, 3)], -I);
        assert_eq!(f[(3, 0)], I);
        assert_eq!(f.max_abs(), 1.0);

        let m5 = multipole_ops(&spin_rep(4).unwrap()).unwrap();
        let x = m5.hexadecapole.unwrap();
        assert_eq!(x[(0, 4)], -I);
        assert_eq!(x[(4, 0)], I);
    }

    #[test]
    fn multipoles_hermitian_traceless() {
        for two_s in 2..=4 {
            let set = multipole_ops(&spin_rep(two_s).unwrap()).unwrap();
            let mats: Vec<CMatrix> = [Some(set.qxy.clone()), set.octupole.clone(), set.hexadecapole.clone()]
                .into_iter()
                .flatten()
                .collect();
            for m in mats {
                assert!(m.is_hermitian(1e-12));
                assert!(m.trace().norm() < 1e-12);
            }
        }
    }

    #[test]
    fn no_multipoles_for_spin_half() {
        assert_eq!(
            multipole_ops(&spin_rep(1).unwrap()).unwrap_err(),
            GeneratorError::NoMultipoles(2)
        );
    }

    #[test]
    fn spin_one_quadrupole_sign_is_reconciled() {
        let set = multipole_ops(&spin_rep(2).unwrap()).unwrap();
        // (1/4i)(S+^2 - S-^2) has (0,2) = 2/(4i) = -i/2, opposite to the explicit i/2.
        let e = set
            .reconciliation
            .iter()
            .find(|e| (e.row, e.col) == (0, 2))
            .expect("(0,2) deviation recorded");
        assert_eq!(e.operator, "Qxy");
        assert!((e.ladder - (-I * 0.5)).norm() < 1e-15);
        assert!((e.abs_dev - 1.0).abs() < 1e-15);
        assert_eq!(set.reconciliation.len(), 2);
    }

    #[test]
    fn spin_three_halves_ladder_forms_agree() {
        let set = multipole_ops(&spin_rep(3).unwrap()).unwrap();
        assert!(set.reconciliation.is_empty(), "{:?}", set.reconciliation);
    }

    #[test]
    fn spin_two_reconciliation_only_quadrupole() {
        let set = multipole_ops(&spin_rep(4).unwrap()).unwrap();
        assert!(!set.reconciliation.is_empty());
        assert!(set.reconciliation.iter().all(|e| e.operator == "Qxy"));
        let again = multipole_ops(&spin_rep(4).unwrap()).unwrap();
        assert_eq!(set.reconciliation, again.reconciliation);
    }

    #[test]
    fn generator_names_round_trip() {
        for g in Generator::ALL {
            assert_eq!(g.name().parse::<Generator>().unwrap(), g);
        }
        assert!("Sq".parse::<Generator>().is_err());
        let ops = OperatorSet::new(1).unwrap();
        assert!(matches!(
            ops.matrix(Generator::Qxy),
            Err(GeneratorError::UnavailableGenerator { .. })
        ));
        let ops3 = OperatorSet::new(2).unwrap();
        let szsz = ops3.product(&[Generator::Sz, Generator::Sz]).unwrap();
        assert_eq!(szsz, CMatrix::from_diag(&[ONE, ZERO, ONE]));
    }
}
