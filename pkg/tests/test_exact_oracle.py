import numpy as np
import pytest
import scipy.linalg as sla

from spincorr.exact_oracle import (
    CapExceededError,
    DensityMatrix,
    LindbladSpec,
    build_superoperator,
    channel_operator,
    correlation_channels,
    dicke_ensemble,
    evolve_exact,
    expectation,
    infinite_temperature_state,
    lindbladian_gap,
    lindbladian_spectrum,
    site_operator,
    two_site_operator,
)
from spincorr.jump_algebra import SPIN, LocalFieldHamiltonian, builtin
from spincorr.lattice import Lattice, build_lattice


def single_site_lattice() -> Lattice:
    return Lattice(geometry="chain", L=1, bc="open", ndim=1, nsites=1, edges=(),
                   coordination=np.zeros(1, dtype=int), neighbors=((),),
                   site_coords=((0,),))


def two_site_lattice() -> Lattice:
    return build_lattice("chain", 2, "open")


def bell_states():
    up, dn = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    tp = np.kron(up, up)
    tm = np.kron(dn, dn)
    t0 = (np.kron(up, dn) + np.kron(dn, up)) / np.sqrt(2)
    s = (np.kron(up, dn) - np.kron(dn, up)) / np.sqrt(2)
    return tp, tm, t0, s


def test_amplitude_damping_spectrum():
    spec = LindbladSpec(single_site_lattice(), None, ((builtin("s_minus"), "per_site"),))
    lam = np.sort(sla.eigvals(build_superoperator(spec).toarray()).real)
    assert np.allclose(lam, [-1.0, -0.5, -0.5, 0.0], atol=1e-12)


def test_trace_preservation_left_null_vector():
    lat = two_site_lattice()
    spec = LindbladSpec(lat, LocalFieldHamiltonian((0.3, 0.0, 0.7)),
                        ((builtin("Q"), "per_edge"), (builtin("s_minus", 0.4), "per_site")))
    S = build_superoperator(spec)
    vec_id = np.eye(4, dtype=complex).reshape(-1, order="F")
    assert np.max(np.abs(vec_id @ S)) < 1e-14


def test_hermiticity_preserving_involution_commutes():
    lat = two_site_lattice()
    spec = LindbladSpec(lat, LocalFieldHamiltonian((0.5, 0.0, 0.0)),
                        ((builtin("Q"), "per_edge"),))
    S = build_superoperator(spec).toarray()
    rng = np.random.default_rng(5)
    for _ in range(5):
        v = rng.normal(size=16) + 1j * rng.normal(size=16)
        conj_t = lambda w: w.reshape(4, 4, order="F").conj().T.reshape(-1, order="F")
        assert np.allclose(S @ conj_t(v), conj_t(S @ v), atol=1e-12)


def test_two_site_drive_closed_form():
    lat = two_site_lattice()
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    taus = np.array([0.0, 0.5, 1.0, 2.5, 7.0])
    rhos = evolve_exact(spec, infinite_temperature_state(2), taus)
    tp, tm, t0, s = bell_states()
    for tau, rho in zip(taus, rhos):
        expected = 0.25 * (np.outer(tp, tp) + np.outer(tm, tm)
                           + (2 - np.exp(-tau)) * np.outer(t0, t0)
                           + np.exp(-tau) * np.outer(s, s))
        assert np.max(np.abs(rho.data - expected)) < 1e-12


def test_evolve_exact_at_zero_returns_initial_state():
    lat = two_site_lattice()
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    rho0 = infinite_temperature_state(2)
    out = evolve_exact(spec, rho0, np.array([0.0]))
    assert np.array_equal(out[0].data, rho0.data)


def test_evolve_contract_against_dense_eigendecomposition():
    # independent reference: eigendecomposition propagation (well conditioned
    # for the purely dissipative drive)
    lat = build_lattice("chain", 3, "open")
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    S = build_superoperator(spec).toarray()
    lam, V = sla.eig(S)
    v0 = infinite_temperature_state(3).data.reshape(-1, order="F")
    c0 = sla.solve(V, v0)
    taus = np.array([0.0, 0.3, 1.7, 6.0])
    rhos = evolve_exact(spec, infinite_temperature_state(3), taus)
    for tau, rho in zip(taus, rhos):
        ref = (V @ (np.exp(lam * tau) * c0)).reshape(8, 8, order="F")
        rel = np.max(np.abs(rho.data - ref)) / np.max(np.abs(ref))
        assert rel < 1e-10


def test_invariants_hold_along_evolution():
    lat = build_lattice("chain", 4, "periodic")
    spec = LindbladSpec(lat, LocalFieldHamiltonian((0.4, 0.0, 0.0)),
                        ((builtin("Q"), "per_edge"),))
    taus = np.geomspace(0.05, 15.0, 8)
    for rho in evolve_exact(spec, infinite_temperature_state(4), taus):
        rho.validate()  # hermiticity, trace, positivity


def test_density_matrix_validation_rejects_junk():
    bad = DensityMatrix(1, np.array([[1.0, 0.5], [0.1, 0.0]], dtype=complex))
    with pytest.raises(ValueError):
        bad.validate()
    not_normalized = DensityMatrix(1, 2.0 * np.eye(2, dtype=complex))
    with pytest.raises(ValueError):
        not_normalized.validate()


def test_expectation_values():
    lat = build_lattice("chain", 4, "periodic")
    rho_inf = infinite_temperature_state(4)
    C01 = channel_operator(4, "C", 0, 1)
    assert abs(expectation(rho_inf, C01)) < 1e-14

    d4 = dicke_ensemble(4)
    assert expectation(d4, C01).real == pytest.approx(0.5, abs=1e-12)

    # fully polarized two-spin state has maximal longitudinal correlations
    up = np.array([1.0, 0.0])
    tp = np.kron(up, up)
    rho_tp = DensityMatrix(2, np.outer(tp, tp).astype(complex))
    D01 = channel_operator(2, "D", 0, 1)
    assert expectation(rho_tp, D01).real == pytest.approx(0.25, abs=1e-14)

    with pytest.raises(ValueError):
        channel_operator(4, "C", 2, 2)


def test_dicke_ensemble_small_and_stationary():
    d2 = dicke_ensemble(2)
    tp, tm, t0, _ = bell_states()
    expected = (4 * np.outer(tp, tp) + 4 * np.outer(tm, tm) + 8 * np.outer(t0, t0)) / 16
    assert np.max(np.abs(d2.data - expected)) < 1e-15
    assert np.trace(d2.data).real == pytest.approx(1.0, abs=1e-14)

    lat = build_lattice("chain", 4, "periodic")
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    S = build_superoperator(spec)
    resid = np.max(np.abs(S @ dicke_ensemble(4).data.reshape(-1, order="F")))
    assert resid < 1e-12


def test_infinite_temperature_state_converges_to_dicke_mixture():
    lat = build_lattice("chain", 4, "periodic")
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    gap = lindbladian_gap(spec)
    rho = evolve_exact(spec, infinite_temperature_state(4), np.array([30.0 / gap]))[0]
    assert np.max(np.abs(rho.data - dicke_ensemble(4).data)) < 1e-10


def test_two_site_lindbladian_gap_value():
    # The slowest modes are singlet-triplet coherences decaying at half the
    # singlet population rate, so the full-spectrum gap is 1/2.
    spec = LindbladSpec(two_site_lattice(), None, ((builtin("Q"), "per_edge"),))
    assert lindbladian_gap(spec) == pytest.approx(0.5, abs=1e-12)
    lam = lindbladian_spectrum(spec)
    assert np.min(np.abs(lam - (-0.5))) < 1e-12


def test_caps_are_enforced():
    lat = build_lattice("chain", 7, "open")
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    with pytest.raises(CapExceededError):
        build_superoperator(spec)
    with pytest.raises(CapExceededError):
        lindbladian_gap(LindbladSpec(build_lattice("chain", 6, "open"), None,
                                     ((builtin("Q"), "per_edge"),)))


def test_matrix_free_propagation_matches_engine():
    # N = 7 exceeds the assembled-superoperator cap and exercises the
    # matrix-free route
    from spincorr.correlation_engine import build_generator_pure, evolve, initial_state

    lat = build_lattice("chain", 7, "open")
    spec = LindbladSpec(lat, None, ((builtin("Q"), "per_edge"),))
    taus = np.array([0.0, 0.4, 1.5])
    rhos = evolve_exact(spec, infinite_temperature_state(7), taus)
    gen = build_generator_pure(lat, "full_pairs")
    states = evolve(gen, initial_state(gen.layout), taus)
    worst = 0.0
    for rho, st in zip(rhos, states):
        chans = correlation_channels(rho, lat, "pure")
        for name, vals in chans.items():
            worst = max(worst, float(np.max(np.abs(vals - st.channel(name)))))
    assert worst < 1e-9


def test_placement_validation():
    lat = two_site_lattice()
    with pytest.raises(ValueError):
        LindbladSpec(lat, None, ((builtin("Q"), "per_site"),))
    with pytest.raises(ValueError):
        LindbladSpec(lat, None, ((builtin("s_plus"), "per_edge"),))
    with pytest.raises(ValueError):
        LindbladSpec(lat, None, ((builtin("Q"), "everywhere"),))


def test_operator_embeddings():
    # site 0 is the most significant bit
    s3_0 = site_operator(2, 0, SPIN[2]).toarray()
    assert np.allclose(np.diag(s3_0), [0.5, 0.5, -0.5, -0.5])
    s3_1 = site_operator(2, 1, SPIN[2]).toarray()
    assert np.allclose(np.diag(s3_1), [0.5, -0.5, 0.5, -0.5])
    m4 = np.kron(SPIN[0], SPIN[2])
    assert np.allclose(two_site_operator(2, 0, 1, m4).toarray(), m4)
    # swapped embedding transposes the tensor factors
    swapped = two_site_operator(2, 1, 0, m4).toarray()
    assert np.allclose(swapped, np.kron(SPIN[2], SPIN[0]))
