import numpy as np
import pytest
import scipy.linalg as sla

from spincorr.correlation_engine import (
    InvariantViolationError,
    ScenarioError,
    build_generator_field,
    build_generator_pure,
    build_generator_thermal,
    dissipative_gap,
    evolve,
    initial_state,
    leading_spectrum,
    make_layout,
    steady_state,
)
from spincorr.lattice import LatticeError, build_lattice, uniform_mode_weight


def test_layout_excludes_diagonal_entries():
    lat = build_lattice("chain", 5, "periodic")
    full = make_layout("pure", lat, "full_pairs")
    assert full.dim == 2 * 10
    disp = make_layout("field", lat, "displacement")
    assert disp.dim == 4 * 4
    thermal = make_layout("thermal", lat, "full_pairs")
    assert thermal.dim == 5 + 2 * 10
    thermal_disp = make_layout("thermal", lat, "displacement")
    assert thermal_disp.dim == 1 + 2 * 4


def test_generator_annihilates_symmetrized_steady_values():
    lat = build_lattice("chain", 4, "periodic")
    for mode in ("full_pairs", "displacement"):
        gen = build_generator_pure(lat, mode)
        v = np.zeros(gen.dim)
        v[gen.layout.block("C")] = 0.5   # off-diagonal steady level
        v[gen.layout.block("D")] = 0.0
        assert np.max(np.abs(gen.M @ v + gen.b)) < 1e-14


def test_two_site_transverse_decay():
    # single bond: the transverse channel relaxes as (1 - e^-tau)/2
    lat = build_lattice("chain", 2, "open")
    gen = build_generator_pure(lat, "full_pairs")
    taus = np.array([0.0, 0.25, 1.0, 3.0])
    states = evolve(gen, initial_state(gen.layout), taus)
    for tau, st in zip(taus, states):
        assert st.channel("C")[0] == pytest.approx(0.5 * (1 - np.exp(-tau)), abs=1e-12)
        assert abs(st.channel("D")[0]) < 1e-14


def test_field_generator_reduces_to_pure_at_zero_field():
    lat = build_lattice("square", 3, "open")
    pure = build_generator_pure(lat, "full_pairs")
    field = build_generator_field(lat, 0.0, "full_pairs")
    P = pure.layout.pair_index.npairs
    cd = slice(0, 2 * P)
    assert np.max(np.abs((field.M[cd, cd] - pure.M).toarray())) == 0.0
    assert np.array_equal(field.b[:2 * P], pure.b)
    # transverse-rotation channels stay decoupled from (C, D) at zero field
    assert abs(field.M[cd, 2 * P:]).sum() == 0.0


def test_gap_matches_dense_reference_chain16():
    lat = build_lattice("chain", 16, "periodic")
    gen_full = build_generator_pure(lat, "full_pairs")
    lam = sla.eigvals(gen_full.M.toarray()).real   # independent dense route
    dense_gap = -np.max(lam[lam < -1e-10])
    assert leading_spectrum(gen_full, k=3).gap == pytest.approx(dense_gap, abs=1e-10)
    assert dissipative_gap(gen_full) == pytest.approx(dense_gap, abs=1e-10)
    gen_disp = build_generator_pure(lat, "displacement")
    assert dissipative_gap(gen_disp) == pytest.approx(dense_gap, abs=1e-10)


def test_field_spectrum_contains_drive_frequencies():
    lat = build_lattice("square", 4, "periodic")
    gen = build_generator_field(lat, 0.5, "displacement")
    s = leading_spectrum(gen, k=4)
    vals = s.eigenvalues
    assert np.min(np.abs(vals - 1.0j)) < 1e-10
    assert np.min(np.abs(vals + 1.0j)) < 1e-10
    assert np.min(np.abs(vals - 0.0)) < 1e-10
    assert np.all(np.abs(vals.real) < 1e-10) or np.any(vals.real < -1e-10)


def test_field_top_modes_at_zero_field():
    lat = build_lattice("square", 4, "periodic")
    gap0 = dissipative_gap(build_generator_pure(lat, "displacement"))
    s = leading_spectrum(build_generator_field(lat, 0.0, "displacement"), k=4)
    assert np.sum(np.abs(s.eigenvalues.real) < 1e-12) == 3
    assert s.gap == pytest.approx(gap0, abs=1e-12)


def test_thermal_gap_equals_flip_rate_scale():
    lat = build_lattice("chain", 8, "periodic")
    kg, nT = 0.05, 3.0
    gen = build_generator_thermal(lat, kg, nT, "displacement")
    s = leading_spectrum(gen, k=2)
    expected = kg * (2 * nT + 1)
    assert s.eigenvalues[0] == 0.0
    assert s.eigenvalues[1].real == pytest.approx(-expected, abs=1e-12)
    assert s.gap == pytest.approx(expected, abs=1e-10)
    assert dissipative_gap(gen) == pytest.approx(expected, abs=1e-10)


def test_displacement_and_full_trajectories_agree():
    taus = np.concatenate([[0.0], np.geomspace(0.05, 12.0, 14)])
    for scenario, build, kwargs in [
        ("pure", build_generator_pure, {}),
        ("field", build_generator_field, {"eta": 0.4}),
        ("thermal", build_generator_thermal, {"kappa_over_gamma": 0.08, "n_thermal": 1.5}),
    ]:
        lat = build_lattice("chain", 5, "periodic")
        gf = build(lat, **kwargs, mode="full_pairs")
        gd = build(lat, **kwargs, mode="displacement")
        sf = evolve(gf, initial_state(gf.layout), taus)
        sd = evolve(gd, initial_state(gd.layout), taus)
        pi = gd.layout.pair_index
        for a, b in zip(sf, sd):
            for ch in gd.layout.channels:
                if ch == "S3":
                    assert np.max(np.abs(a.channel("S3") - b.channel("S3")[0])) < 1e-12
                else:
                    assert np.max(np.abs(
                        a.channel(ch) - pi.expand_to_pairs(b.channel(ch)))) < 1e-12


def test_spectrum_reality_and_stability():
    cases = [
        build_generator_pure(build_lattice("triangular", 3, "periodic"), "full_pairs"),
        build_generator_pure(build_lattice("honeycomb", 2, "periodic"), "full_pairs"),
        build_generator_thermal(build_lattice("square", 3, "open"), 0.2, 1.0, "full_pairs"),
        build_generator_field(build_lattice("chain", 6, "periodic"), 0.7, "displacement"),
    ]
    for gen in cases:
        lam = sla.eigvals(gen.M.toarray())
        scale = gen.infinity_norm()
        assert lam.real.max() <= 1e-10 * scale
        if gen.scenario in ("pure", "thermal"):
            assert np.max(np.abs(lam.imag)) <= 1e-10 * scale
        else:
            # real matrix: complex eigenvalues in conjugate pairs
            lam_sorted = np.sort_complex(lam)
            conj_sorted = np.sort_complex(lam.conj())
            assert np.allclose(lam_sorted, conj_sorted, atol=1e-10 * scale)


def test_longitudinal_mean_is_conserved_by_pure_drive():
    # The drive commutes with total S^3, so the summed longitudinal pair
    # channel is a constant of motion (the transverse sum is not).
    for geometry, L, bc in [("chain", 6, "periodic"), ("square", 3, "open"),
                            ("honeycomb", 2, "periodic")]:
        gen = build_generator_pure(build_lattice(geometry, L, bc), "full_pairs")
        dsl = gen.layout.block("D")
        ones_d = np.zeros(gen.dim)
        ones_d[dsl] = 1.0
        assert np.max(np.abs(ones_d @ gen.M)) < 1e-13
        assert abs(ones_d @ gen.b) < 1e-13


def test_pure_steady_state_formulas():
    lat = build_lattice("chain", 8, "periodic")
    gen = build_generator_pure(lat, "displacement")
    ss = steady_state(gen)
    assert np.allclose(ss.channel("C"), 0.5, atol=1e-12)
    assert np.allclose(ss.channel("D"), 0.0, atol=1e-13)
    n = lat.nsites
    assert ss.condensate_fraction() == pytest.approx((n + 1) / (2 * n), abs=1e-12)


def test_thermal_steady_state_formulas():
    lat = build_lattice("square", 4, "periodic")
    kg, nT = 0.03, 4.0
    gen = build_generator_thermal(lat, kg, nT, "full_pairs")
    ss = steady_state(gen)
    assert np.allclose(ss.channel("S3"), -0.5 / (2 * nT + 1), atol=1e-12)
    assert np.allclose(ss.channel("D"), 0.25 / (2 * nT + 1) ** 2, atol=1e-12)
    assert float(np.max(np.abs(gen.M @ ss.values + gen.b))) < 1e-10


def test_field_steady_state_rejected():
    gen = build_generator_field(build_lattice("chain", 4, "periodic"), 0.2)
    with pytest.raises(ScenarioError):
        steady_state(gen)


def test_evolve_validation_and_identity():
    lat = build_lattice("chain", 4, "periodic")
    gen = build_generator_pure(lat, "full_pairs")
    init = initial_state(gen.layout)
    out = evolve(gen, init, [0.0])
    assert np.array_equal(out[0].values, init.values)

    with pytest.raises(ValueError):
        evolve(gen, init, [1.0, 0.5])
    with pytest.raises(ValueError):
        evolve(gen, init, [-1.0, 0.5])
    with pytest.raises(ValueError):
        evolve(gen, init, [])
    bad = initial_state(gen.layout, values=np.zeros(gen.dim))
    bad.values[0] = np.nan
    with pytest.raises(ValueError):
        evolve(gen, bad, [0.0, 1.0])
    other = build_generator_pure(build_lattice("chain", 5, "periodic"), "full_pairs")
    with pytest.raises(ValueError):
        evolve(other, init, [0.0])


def test_bound_monitor_flags_unphysical_states():
    lat = build_lattice("chain", 4, "periodic")
    gen = build_generator_pure(lat, "full_pairs")
    v = np.zeros(gen.dim)
    v[gen.layout.block("C")] = 5.0
    init = initial_state(gen.layout, values=v)
    with pytest.raises(InvariantViolationError):
        evolve(gen, init, [0.0, 0.1])
    evolve(gen, init, [0.0, 0.1], check_bounds=False)


def test_evolve_matches_dense_eigendecomposition_reference():
    # independent dense reference on the augmented propagator
    lat = build_lattice("chain", 6, "periodic")
    gen = build_generator_pure(lat, "full_pairs")
    A = gen.augmented().toarray()
    lam, V = sla.eig(A)
    w0 = np.zeros(gen.dim + 1)
    w0[-1] = 1.0
    c0 = sla.solve(V, w0)
    taus = np.geomspace(0.07, 18.0, 9)
    states = evolve(gen, initial_state(gen.layout), taus)
    for tau, st in zip(taus, states):
        ref = (V @ (np.exp(lam * tau) * c0)).real[:-1]
        denom = max(1.0, float(np.max(np.abs(ref))))
        assert np.max(np.abs(st.values - ref)) / denom < 1e-9


def test_unknown_modes_and_scenarios_rejected():
    lat = build_lattice("chain", 6, "open")
    with pytest.raises(LatticeError):
        build_generator_pure(lat, "displacement")
    with pytest.raises(LatticeError):
        build_generator_pure(build_lattice("honeycomb", 2, "periodic"), "displacement")
    with pytest.raises(LatticeError):
        build_generator_pure(build_lattice("chain", 6, "periodic"), "momentum")
    with pytest.raises(ValueError):
        build_generator_field(build_lattice("chain", 4, "periodic"), -0.1)
    with pytest.raises(ValueError):
        build_generator_thermal(build_lattice("chain", 4, "periodic"), -0.1, 1.0)


def test_leading_spectrum_interface():
    gen = build_generator_pure(build_lattice("chain", 5, "periodic"), "full_pairs")
    with pytest.raises(ValueError):
        leading_spectrum(gen, k=0)
    with pytest.raises(ValueError):
        leading_spectrum(gen, k=gen.dim + 1)
    s = leading_spectrum(gen, k=4)
    # deterministic ordering: descending real part, then descending imaginary
    re = s.eigenvalues.real
    assert np.all(np.diff(re) <= 1e-14)
    assert s.zero_modes >= 1


def test_augmented_matrix_structure():
    gen = build_generator_thermal(build_lattice("chain", 4, "periodic"), 0.1, 2.0,
                                  "full_pairs")
    A = gen.augmented().toarray()
    n = gen.dim
    assert np.array_equal(A[:n, :n], gen.M.toarray())
    assert np.array_equal(A[:n, n], gen.b)
    assert np.all(A[n, :] == 0.0)


def test_all_down_initial_state():
    lat = build_lattice("chain", 4, "periodic")
    gen = build_generator_thermal(lat, 0.0, 0.0, "full_pairs")
    init = initial_state(gen.layout, "all_down")
    assert np.allclose(init.channel("S3"), -0.5)
    # product of down spins has maximal longitudinal pair correlations
    assert np.allclose(init.channel("D"), 0.25)
    assert np.allclose(init.channel("C"), 0.0)
    with pytest.raises(ValueError):
        initial_state(gen.layout, "haunted")
