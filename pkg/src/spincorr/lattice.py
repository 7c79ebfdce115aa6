"""Finite spin lattices: geometries, adjacency, Laplacians and pair indexing.

Supported geometries are the chain (d=1), square / triangular / honeycomb
tilings (d=2) and the primitive cubic lattice (d=3), each with periodic or
open boundaries.  The honeycomb is represented as a triangular Bravais
lattice with a two-site basis; all other geometries are single-site Bravais
lattices addressed by integer coordinate tuples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp

GEOMETRIES = ("chain", "square", "triangular", "honeycomb", "cubic")
BOUNDARY_CONDITIONS = ("periodic", "open")

# Dimension and bulk coordination number per geometry.
_NDIM = {"chain": 1, "square": 2, "triangular": 2, "honeycomb": 2, "cubic": 3}
_BULK_COORDINATION = {"chain": 2, "square": 4, "triangular": 6, "honeycomb": 3, "cubic": 6}

# Bravais neighbor offsets (both signs).  Triangular uses oblique axes, so the
# third pair couples (1,-1); honeycomb bonds are handled separately.
_OFFSETS = {
    "chain": ((1,), (-1,)),
    "square": ((1, 0), (-1, 0), (0, 1), (0, -1)),
    "triangular": ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)),
    "cubic": (
        (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    ),
}

# Offsets of the B-site cell bonded to the A site of a given cell.
_HONEYCOMB_A_TO_B = ((0, 0), (-1, 0), (0, -1))


class LatticeError(ValueError):
    """Invalid lattice parameters (bad geometry, size, or boundary)."""


@dataclass(frozen=True)
class Lattice:
    """Immutable description of a finite lattice.

    Sites are indexed 0..nsites-1 in row-major coordinate order (honeycomb:
    cell index times two plus sublattice).  ``edges`` holds deduplicated
    unordered nearest-neighbor pairs (x, y) with x < y.
    """

    geometry: str
    L: int
    bc: str
    ndim: int
    nsites: int
    edges: tuple[tuple[int, int], ...]
    coordination: np.ndarray
    neighbors: tuple[tuple[int, ...], ...]
    site_coords: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def is_bravais(self) -> bool:
        return self.geometry != "honeycomb"

    @property
    def supports_displacement(self) -> bool:
        """Translation-invariant single-index pair reduction is available."""
        return self.bc == "periodic" and self.is_bravais

    def bravais_offsets(self) -> tuple[tuple[int, ...], ...]:
        if not self.is_bravais:
            raise LatticeError("honeycomb lattice has no single-site Bravais offsets")
        return _OFFSETS[self.geometry]

    def laplacian(self) -> sp.csr_matrix:
        """Graph Laplacian with (x,y)=1 on edges and (x,x)=-n_c(x)."""
        n = self.nsites
        rows, cols, vals = [], [], []
        for x, y in self.edges:
            rows += [x, y]
            cols += [y, x]
            vals += [1.0, 1.0]
        rows += list(range(n))
        cols += list(range(n))
        vals += list(-self.coordination.astype(float))
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def to_json(self) -> str:
        doc = {
            "geometry": self.geometry,
            "L": self.L,
            "bc": self.bc,
            "N": self.nsites,
            "edges": [[x, y] for x, y in self.edges],
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "Lattice":
        doc = json.loads(text)
        lat = build_lattice(doc["geometry"], doc["L"], doc["bc"])
        if lat.nsites != doc["N"] or [[x, y] for x, y in lat.edges] != doc["edges"]:
            raise LatticeError("serialized lattice does not match rebuilt lattice")
        return lat


def _site_index_bravais(coords: tuple[int, ...], L: int) -> int:
    idx = 0
    for c in coords:
        idx = idx * L + c
    return idx


def build_lattice(geometry: str, L: int, bc: str) -> Lattice:
    """Construct a lattice of the given geometry, linear extent and boundary.

    Periodic wrapping that would duplicate a bond (e.g. an L=2 periodic chain,
    where both neighbors of a site coincide) is rejected with a diagnostic.
    """
    if geometry not in GEOMETRIES:
        raise LatticeError(f"unknown geometry {geometry!r}; expected one of {GEOMETRIES}")
    if bc not in BOUNDARY_CONDITIONS:
        raise LatticeError(f"unknown boundary condition {bc!r}")
    if L < 2:
        raise LatticeError(f"linear extent must be at least 2, got L={L}")

    if geometry == "honeycomb":
        return _build_honeycomb(L, bc)
    return _build_bravais(geometry, L, bc)


def _build_bravais(geometry: str, L: int, bc: str) -> Lattice:
    ndim = _NDIM[geometry]
    nsites = L**ndim
    coords = [tuple(c) for c in product(range(L), repeat=ndim)]
    offsets = _OFFSETS[geometry]

    edges: set[tuple[int, int]] = set()
    seen_bonds: dict[tuple[int, int], tuple[int, ...]] = {}
    for c in coords:
        x = _site_index_bravais(c, L)
        for off in offsets:
            target = tuple(ci + oi for ci, oi in zip(c, off))
            if bc == "periodic":
                target = tuple(t % L for t in target)
            elif any(t < 0 or t >= L for t in target):
                continue
            y = _site_index_bravais(target, L)
            if y == x:
                raise LatticeError(
                    f"periodic {geometry} with L={L} wraps offset {off} onto the "
                    "same site; increase L"
                )
            bond = (min(x, y), max(x, y))
            key = tuple(sorted(np.abs(off)))
            if bond in seen_bonds and seen_bonds[bond] != key:
                raise LatticeError(
                    f"periodic {geometry} with L={L} produces a doubled bond "
                    f"{bond}; increase L"
                )
            seen_bonds[bond] = key
            edges.add(bond)

    # Catch duplicate bonds from a single offset pair (e.g. L=2 wrap where
    # +mu and -mu reach the same neighbor).
    if bc == "periodic":
        for c in coords:
            x = _site_index_bravais(c, L)
            targets = []
            for off in offsets:
                t = tuple((ci + oi) % L for ci, oi in zip(c, off))
                targets.append(_site_index_bravais(t, L))
            if len(set(targets)) != len(targets):
                raise LatticeError(
                    f"periodic {geometry} with L={L} yields duplicate bonds from a "
                    "single site; increase L"
                )

    return _finalize(geometry, L, bc, ndim, nsites, edges, coords)


def _build_honeycomb(L: int, bc: str) -> Lattice:
    # Sites are (cell_x, cell_y, sublattice); index = 2*cell + sublattice.
    nsites = 2 * L * L
    coords = []
    for cx, cy in product(range(L), repeat=2):
        coords.append((cx, cy, 0))
        coords.append((cx, cy, 1))

    def idx(cx: int, cy: int, s: int) -> int:
        return 2 * (cx * L + cy) + s

    edges: set[tuple[int, int]] = set()
    for cx, cy in product(range(L), repeat=2):
        a = idx(cx, cy, 0)
        for ox, oy in _HONEYCOMB_A_TO_B:
            tx, ty = cx + ox, cy + oy
            if bc == "periodic":
                tx, ty = tx % L, ty % L
            elif not (0 <= tx < L and 0 <= ty < L):
                continue
            b = idx(tx, ty, 1)
            bond = (min(a, b), max(a, b))
            if bond in edges and bc == "periodic":
                raise LatticeError(
                    f"periodic honeycomb with L={L} produces a doubled bond; increase L"
                )
            edges.add(bond)

    coords_sorted = [coords[i] for i in range(nsites)]
    return _finalize("honeycomb", L, bc, 2, nsites, edges, coords_sorted)


def _finalize(geometry, L, bc, ndim, nsites, edges, coords) -> Lattice:
    edge_list = tuple(sorted(edges))
    coordination = np.zeros(nsites, dtype=int)
    nbrs: list[list[int]] = [[] for _ in range(nsites)]
    for x, y in edge_list:
        coordination[x] += 1
        coordination[y] += 1
        nbrs[x].append(y)
        nbrs[y].append(x)

    if bc == "periodic":
        expected = _BULK_COORDINATION[geometry]
        if not np.all(coordination == expected):
            raise LatticeError(
                f"periodic {geometry} with L={L} has nonuniform coordination "
                f"{sorted(set(coordination.tolist()))}; expected {expected}"
            )

    return Lattice(
        geometry=geometry,
        L=L,
        bc=bc,
        ndim=ndim,
        nsites=nsites,
        edges=edge_list,
        coordination=coordination,
        neighbors=tuple(tuple(sorted(n)) for n in nbrs),
        site_coords=tuple(coords),
    )


# ---------------------------------------------------------------------------
# Pair indexing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairIndex:
    """Dense indexing of site pairs for correlation channels.

    full_pairs mode enumerates unordered pairs (x < y), P = N(N-1)/2; valid
    for every lattice.  displacement mode enumerates nonzero displacements
    r = y - x modulo the lattice, P = N - 1; valid only for periodic Bravais
    lattices, where channel fields depend on x - y only.
    """

    mode: str
    lattice: Lattice
    npairs: int

    @staticmethod
    def full_pairs(lattice: Lattice) -> "PairIndex":
        n = lattice.nsites
        return PairIndex(mode="full_pairs", lattice=lattice, npairs=n * (n - 1) // 2)

    @staticmethod
    def displacement(lattice: Lattice) -> "PairIndex":
        if not lattice.supports_displacement:
            raise LatticeError(
                "displacement indexing requires a periodic Bravais lattice "
                f"(got {lattice.geometry}, {lattice.bc})"
            )
        return PairIndex(mode="displacement", lattice=lattice, npairs=lattice.nsites - 1)

    # -- full_pairs helpers --

    def pair_id(self, x: int, y: int) -> int:
        """Dense index of the unordered pair {x, y}, x != y."""
        if self.mode != "full_pairs":
            raise LatticeError("pair_id is a full_pairs operation")
        if x == y:
            raise LatticeError("diagonal pairs are not indexed")
        n = self.lattice.nsites
        a, b = (x, y) if x < y else (y, x)
        # Offset of row a in the upper-triangular enumeration.
        return a * n - a * (a + 1) // 2 + (b - a - 1)

    def pairs(self) -> list[tuple[int, int]]:
        if self.mode != "full_pairs":
            raise LatticeError("pairs() is a full_pairs operation")
        n = self.lattice.nsites
        return [(x, y) for x in range(n) for y in range(x + 1, n)]

    # -- displacement helpers --

    def displacement_id(self, x: int, y: int) -> int:
        """Dense index of the displacement (y - x) mod L, x != y."""
        if self.mode != "displacement":
            raise LatticeError("displacement_id is a displacement operation")
        rx = self._displacement_coords(x, y)
        return self._coord_to_id(rx)

    def _displacement_coords(self, x: int, y: int) -> tuple[int, ...]:
        L = self.lattice.L
        cx = self.lattice.site_coords[x]
        cy = self.lattice.site_coords[y]
        return tuple((b - a) % L for a, b in zip(cx, cy))

    def _coord_to_id(self, r: tuple[int, ...]) -> int:
        if all(c == 0 for c in r):
            raise LatticeError("zero displacement is the diagonal, not indexed")
        return _site_index_bravais(r, self.lattice.L) - 1

    def displacement_coords(self) -> list[tuple[int, ...]]:
        """Coordinate tuples of all nonzero displacements, in index order."""
        if self.mode != "displacement":
            raise LatticeError("displacement_coords() is a displacement operation")
        L, d = self.lattice.L, self.lattice.ndim
        out = [tuple(c) for c in product(range(L), repeat=d)]
        return out[1:]

    def parity_partner(self) -> np.ndarray:
        """Index of the displacement -r for each displacement r.

        Channel fields of symmetric two-site operators are even under
        r -> -r; spectra restricted to that sector discard artifacts of the
        ordered-displacement representation.
        """
        if self.mode != "displacement":
            raise LatticeError("parity_partner() is a displacement operation")
        L = self.lattice.L
        partner = np.empty(self.npairs, dtype=int)
        for i, r in enumerate(self.displacement_coords()):
            neg = tuple((-c) % L for c in r)
            partner[i] = self._coord_to_id(neg)
        return partner

    def reduce_pair_field(self, pair_values: np.ndarray) -> np.ndarray:
        """Average a full_pairs-indexed field into displacement classes."""
        if self.mode != "displacement":
            raise LatticeError("reduce_pair_field() is a displacement operation")
        full = PairIndex.full_pairs(self.lattice)
        sums = np.zeros(self.npairs)
        counts = np.zeros(self.npairs)
        for p, (x, y) in enumerate(full.pairs()):
            for a, b in ((x, y), (y, x)):
                r = self.displacement_id(a, b)
                sums[r] += pair_values[p]
                counts[r] += 1
        return sums / counts

    def expand_to_pairs(self, disp_values: np.ndarray) -> np.ndarray:
        """Pull a displacement-indexed field back onto unordered pairs."""
        if self.mode != "displacement":
            raise LatticeError("expand_to_pairs() is a displacement operation")
        full = PairIndex.full_pairs(self.lattice)
        out = np.empty(full.npairs)
        for p, (x, y) in enumerate(full.pairs()):
            r = self.displacement_id(x, y)
            rr = self.displacement_id(y, x)
            out[p] = 0.5 * (disp_values[r] + disp_values[rr])
        return out


def uniform_mode_weight(pair_index: PairIndex, values: np.ndarray, diagonal: float) -> float:
    """Zero-momentum (uniform) weight of a pair channel, diagonal included.

    Equals (1/N^2) sum_{x,y} O_xy; on periodic Bravais lattices this is the
    p = 0 Fourier component, i.e. the condensate fraction for the C channel.
    """
    n = pair_index.lattice.nsites
    values = np.asarray(values, dtype=float)
    if pair_index.mode == "displacement":
        if values.shape != (n - 1,):
            raise LatticeError(f"expected {n - 1} displacement values, got {values.shape}")
        return float((diagonal + values.sum()) / n)
    npairs = n * (n - 1) // 2
    if values.shape != (npairs,):
        raise LatticeError(f"expected {npairs} pair values, got {values.shape}")
    return float((n * diagonal + 2.0 * values.sum()) / n**2)
