"""Smoke test for the multispin Python extension.

Build and install first:
    pip install maturin
    maturin develop -m crates/py/Cargo.toml
"""
import math

import multispin


def main():
    p = multispin.CoherentParams("su3", [0.7, 0.2, 0.4, 0.3])
    amps = p.state()
    assert abs(sum(abs(a) ** 2 for a in amps) - 1.0) < 1e-12
    assert max(abs(a - b) for a, b in zip(amps, p.closed_form())) < 1e-10

    h = multispin.Hamiltonian("su2", [(1.0, [(0, ["Sz"])])])
    q0 = multispin.CoherentParams("su2", [1.0, 0.5])
    times, params, energies, stop = h.integrate([q0], 1e-3, 1000)
    assert stop is None
    assert abs(params[-1][0][1] - 1.5) < 1e-9
    assert max(abs(e - energies[0]) for e in energies) < 1e-10

    spin1 = multispin.Hamiltonian("su3", [(0.3, [(0, ["Sx"])]), (1.0, [(0, ["Sz", "Sz"])])])
    start = multispin.CoherentParams("su3", [1.0, 0.2, 0.3, 0.4])
    assert spin1.compare([start], 0.5, 1e-3) < 1e-6

    try:
        multispin.Hamiltonian("su2", [(0.5 + 0.1j, [(0, ["Sp"])])])
    except ValueError:
        pass
    else:
        raise AssertionError("non-Hermitian Hamiltonian accepted")

    assert multispin.unity_check(64, 64) < 1e-12
    report = multispin.compatibility_report("su4", 5, 1)
    assert report.splitlines()[0] == "formula,point,paper_value,oracle_value,abs_dev"
    n, degenerate, dev = multispin.reduce_check("su4", "su3", 10)
    assert n == 10 and degenerate == 0 and dev < 1e-8
    assert math.isclose(sum(x * x for x in q0.spin()), 0.25)
    print("smoke test passed")


if __name__ == "__main__":
    main()
