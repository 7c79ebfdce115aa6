import json

import numpy as np
import pytest
import scipy.linalg as sla

from spincorr.lattice import (
    Lattice,
    LatticeError,
    PairIndex,
    build_lattice,
    uniform_mode_weight,
)


def test_periodic_chain_basic():
    lat = build_lattice("chain", 4, "periodic")
    assert lat.nsites == 4
    assert len(lat.edges) == 4
    assert np.all(lat.coordination == 2)


def test_open_square_counts():
    lat = build_lattice("square", 3, "open")
    assert lat.nsites == 9
    assert len(lat.edges) == 12
    # row-major indexing: corners {0, 2, 6, 8}, center 4
    assert lat.coordination[0] == 2
    assert lat.coordination[4] == 4


def test_honeycomb_l2_periodic_hand_enumeration():
    # Hand enumeration of the twelve A-B bonds of the 2x2-cell torus:
    # A(cx,cy) couples to B in cells (cx,cy), (cx-1,cy), (cx,cy-1) mod 2,
    # with site index 2*(cx*L + cy) + sublattice.
    lat = build_lattice("honeycomb", 2, "periodic")
    assert lat.nsites == 8
    assert np.all(lat.coordination == 3)
    expected = set()
    for cx in range(2):
        for cy in range(2):
            a = 2 * (cx * 2 + cy)
            for ox, oy in ((0, 0), (-1, 0), (0, -1)):
                b = 2 * (((cx + ox) % 2) * 2 + (cy + oy) % 2) + 1
                expected.add((min(a, b), max(a, b)))
    assert set(lat.edges) == expected
    assert len(lat.edges) == 12


@pytest.mark.parametrize("geometry,L", [("chain", 2), ("square", 2), ("cubic", 2),
                                        ("triangular", 2)])
def test_small_periodic_lattices_rejected(geometry, L):
    with pytest.raises(LatticeError):
        build_lattice(geometry, L, "periodic")


def test_triangular_l3_periodic_ok():
    lat = build_lattice("triangular", 3, "periodic")
    assert lat.nsites == 9
    assert np.all(lat.coordination == 6)
    assert len(lat.edges) == 27


def test_invalid_parameters():
    with pytest.raises(LatticeError):
        build_lattice("kagome", 4, "periodic")
    with pytest.raises(LatticeError):
        build_lattice("chain", 1, "open")
    with pytest.raises(LatticeError):
        build_lattice("chain", 4, "twisted")


def test_open_chain_l2_single_bond():
    lat = build_lattice("chain", 2, "open")
    assert lat.edges == ((0, 1),)


def test_handshake_identity():
    for geometry, L, bc in [("chain", 5, "open"), ("square", 4, "periodic"),
                            ("honeycomb", 3, "open"), ("triangular", 4, "periodic"),
                            ("cubic", 3, "open")]:
        lat = build_lattice(geometry, L, bc)
        assert lat.coordination.sum() == 2 * len(lat.edges)


def test_ring_laplacian_eigenvalues():
    # translation modes of the 4-site ring decay at -4 sin^2(pi n / 4)
    lat = build_lattice("chain", 4, "periodic")
    lap = lat.laplacian().toarray()
    expected = sorted(-4.0 * np.sin(np.pi * n / 4) ** 2 for n in range(4))
    assert np.allclose(sorted(sla.eigvalsh(lap)), expected, atol=1e-12)


def test_open_chain_laplacian_eigenvalues():
    lat = build_lattice("chain", 3, "open")
    lap = lat.laplacian().toarray()
    reference = np.array([[-1, 1, 0], [1, -2, 1], [0, 1, -1]], dtype=float)
    assert np.allclose(lap, reference)
    assert np.allclose(sorted(sla.eigvalsh(reference)), [-3.0, -1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("geometry,L,bc", [("chain", 6, "periodic"), ("square", 3, "open"),
                                           ("honeycomb", 2, "periodic"),
                                           ("triangular", 3, "periodic"),
                                           ("cubic", 3, "periodic")])
def test_laplacian_structure(geometry, L, bc):
    lat = build_lattice(geometry, L, bc)
    lap = lat.laplacian().toarray()
    assert np.allclose(lap, lap.T)
    assert np.allclose(lap.sum(axis=1), 0.0)
    vals = sla.eigvalsh(lap)
    assert vals.max() <= 1e-12
    # connected lattice: one zero mode
    assert np.sum(np.abs(vals) < 1e-10) == 1


def test_uniform_mode_weight_examples():
    lat = build_lattice("square", 4, "periodic")  # N = 16
    full = PairIndex.full_pairs(lat)
    disp = PairIndex.displacement(lat)
    n = lat.nsites

    # delta correlations: only the diagonal contributes
    assert uniform_mode_weight(full, np.zeros(full.npairs), 1.0) == pytest.approx(1 / 16)
    assert uniform_mode_weight(disp, np.zeros(disp.npairs), 1.0) == pytest.approx(1 / 16)

    # fully symmetrized correlations (1 + delta)/2
    w = uniform_mode_weight(full, np.full(full.npairs, 0.5), 1.0)
    assert w == pytest.approx((n + 1) / (2 * n), abs=1e-15)

    # fully ordered
    assert uniform_mode_weight(full, np.ones(full.npairs), 1.0) == pytest.approx(1.0)
    assert uniform_mode_weight(disp, np.ones(disp.npairs), 1.0) == pytest.approx(1.0)


def test_pair_id_bijection():
    lat = build_lattice("chain", 7, "open")
    pi = PairIndex.full_pairs(lat)
    pairs = pi.pairs()
    assert len(pairs) == 21
    for p, (x, y) in enumerate(pairs):
        assert pi.pair_id(x, y) == p
        assert pi.pair_id(y, x) == p
    with pytest.raises(LatticeError):
        pi.pair_id(3, 3)


def test_displacement_depends_only_on_difference():
    lat = build_lattice("square", 4, "periodic")
    pi = PairIndex.displacement(lat)
    L = lat.L
    for x, y in [(0, 5), (1, 6), (10, 15)]:
        # shifting both sites by one lattice row leaves the class unchanged
        xs, ys = (x + L) % lat.nsites, (y + L) % lat.nsites
        assert pi.displacement_id(x, y) == pi.displacement_id(xs, ys)


def test_displacement_roundtrip_identity():
    lat = build_lattice("chain", 6, "periodic")
    pi = PairIndex.displacement(lat)
    rng = np.random.default_rng(11)
    v = rng.normal(size=pi.npairs)
    assert np.allclose(pi.reduce_pair_field(pi.expand_to_pairs(v)),
                       0.5 * (v + v[pi.parity_partner()]))
    # even fields round-trip exactly
    v_even = 0.5 * (v + v[pi.parity_partner()])
    assert np.allclose(pi.reduce_pair_field(pi.expand_to_pairs(v_even)), v_even,
                       atol=1e-15)


def test_parity_partner_involution():
    for geometry, L in [("chain", 6), ("square", 4), ("triangular", 3), ("cubic", 3)]:
        lat = build_lattice(geometry, L, "periodic")
        pi = PairIndex.displacement(lat)
        partner = pi.parity_partner()
        assert np.array_equal(partner[partner], np.arange(pi.npairs))


def test_displacement_requires_periodic_bravais():
    with pytest.raises(LatticeError):
        PairIndex.displacement(build_lattice("chain", 6, "open"))
    with pytest.raises(LatticeError):
        PairIndex.displacement(build_lattice("honeycomb", 3, "periodic"))


def test_json_roundtrip():
    lat = build_lattice("triangular", 4, "periodic")
    doc = json.loads(lat.to_json())
    assert doc["N"] == 16 and doc["geometry"] == "triangular"
    rebuilt = Lattice.from_json(lat.to_json())
    assert rebuilt.edges == lat.edges
