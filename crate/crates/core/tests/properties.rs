use proptest::prelude::*;

use multispin_core::coherent::{build_oracle, CoherentParams, GroupId};
use multispin_core::dynamics::{eom_rhs, grad_h_exact, symplectic_form, EomMethod, HamiltonianSpec};
use multispin_core::generators::Generator;
use multispin_core::quantum::{propagate, QuantumState};

fn point(group: GroupId) -> impl Strategy<Value = CoherentParams> {
    prop::collection::vec(0.2f64..1.3, group.n_params())
        .prop_map(move |v| CoherentParams::new(group, v).unwrap())
}

fn any_point() -> impl Strategy<Value = CoherentParams> {
    prop_oneof![point(GroupId::SU2), point(GroupId::SU3), point(GroupId::SU4), point(GroupId::SU5)]
}

fn hamiltonian(group: GroupId) -> HamiltonianSpec {
    HamiltonianSpec::single_site(group, &[(1.0, Generator::Sz), (0.7, Generator::Sx), (0.2, Generator::Sy)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn states_are_normalized(p in any_point()) {
        prop_assert!((build_oracle(&p).amplitudes.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omega_is_antisymmetric(p in any_point()) {
        let w = symplectic_form(&p, 1.0);
        for a in 0..w.len() {
            for b in 0..w.len() {
                prop_assert!((w[a][b] + w[b][a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn berry_flow_conserves_energy(p in prop_oneof![point(GroupId::SU2), point(GroupId::SU3)]) {
        let h = hamiltonian(p.group());
        let pts = [p];
        if let Ok(v) = eom_rhs(&h, &pts, EomMethod::Berry, 1.0) {
            let g = grad_h_exact(&h, &pts).unwrap();
            let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            let scale: f64 = g.iter().map(|x| x.abs()).sum::<f64>() * v.iter().map(|x| x.abs()).sum::<f64>();
            prop_assert!(dot.abs() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn propagation_composes(p in point(GroupId::SU3), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
        let h = hamiltonian(GroupId::SU3).assemble().unwrap();
        let psi = QuantumState::from_coherent(&p);
        let once = propagate(&h, &psi, t1 + t2, 1.0).unwrap();
        let twice = propagate(&h, &propagate(&h, &psi, t1, 1.0).unwrap(), t2, 1.0).unwrap();
        prop_assert!(once.amplitudes().max_abs_diff(twice.amplitudes()) < 1e-12);
    }
}
