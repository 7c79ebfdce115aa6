"""Closed linear generators for correlation dynamics and their spectra.

Three driven-dissipative scenarios are wired end to end, all driven by the
nearest-neighbor symmetrizing jump process at unit rate (time is measured in
units of its inverse rate):

* pure      - channels (C, D) over site pairs,
* field     - transverse uniform field of dimensionless strength eta,
              channels (C, D, E, F),
* thermal   - longitudinal field plus thermal spin flips at rate ratio
              kappa_over_gamma and occupation n_thermal, channels (S3, C, D).

Channel fields exclude the diagonal (equal-site) entries, which are constants
of motion; hops of the pair Laplacian that land on the diagonal feed the
affine drive vector instead.  Generators are assembled either over all
unordered site pairs (any lattice) or over nonzero displacements (periodic
Bravais lattices), and the two representations produce identical physical
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import Lattice, LatticeError, PairIndex

SCENARIOS = ("pure", "field", "thermal")
CHANNEL_DIAGONAL = {"C": 1.0, "D": 0.25, "E": 0.0, "F": 0.25}
CHANNEL_BOUND = {"C": 1.0, "D": 0.25, "E": 1.0, "F": 0.25, "S3": 0.5}
BOUND_TOL = 1e-9

DENSE_SPECTRUM_CAP = 4000
LOBPCG_THRESHOLD = 60000


class GeneratorModeError(LatticeError):
    """Requested pair-index mode is unavailable for this lattice."""


class ScenarioError(ValueError):
    """Operation not defined for this scenario (e.g. fixed point of a limit cycle)."""


class SpectrumConvergenceError(RuntimeError):
    """Iterative eigensolver failed; carries residual diagnostics."""


class InvariantViolationError(RuntimeError):
    """A tracked channel left its physical bounds during evolution."""


# ---------------------------------------------------------------------------
# Layout and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelLayout:
    """Channel names and their slices inside the flat state vector."""

    scenario: str
    mode: str
    lattice: Lattice
    pair_index: PairIndex
    channels: tuple[str, ...]
    dim: int

    def block(self, name: str) -> slice:
        start = 0
        for ch in self.channels:
            size = self.channel_size(ch)
            if ch == name:
                return slice(start, start + size)
            start += size
        raise KeyError(f"channel {name!r} not in layout {self.channels}")

    def channel_size(self, name: str) -> int:
        if name == "S3":
            return 1 if self.mode == "displacement" else self.lattice.nsites
        return self.pair_index.npairs


def make_layout(scenario: str, lattice: Lattice, mode: str = "auto") -> ChannelLayout:
    if scenario not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {scenario!r}")
    if mode == "auto":
        mode = "displacement" if lattice.supports_displacement else "full_pairs"
    if mode == "displacement":
        pi = PairIndex.displacement(lattice)
    elif mode == "full_pairs":
        pi = PairIndex.full_pairs(lattice)
    else:
        raise GeneratorModeError(f"unknown pair-index mode {mode!r}")
    channels = {"pure": ("C", "D"), "field": ("C", "D", "E", "F"),
                "thermal": ("S3", "C", "D")}[scenario]
    s3 = (1 if mode == "displacement" else lattice.nsites) if "S3" in channels else 0
    dim = s3 + pi.npairs * sum(1 for c in channels if c != "S3")
    return ChannelLayout(scenario, mode, lattice, pi, channels, dim)


@dataclass(frozen=True)
class CorrelationState:
    """Flat vector of tracked channel values at one instant of scaled time."""

    layout: ChannelLayout
    values: np.ndarray
    tau: float

    def channel(self, name: str) -> np.ndarray:
        return self.values[self.layout.block(name)].copy()

    def condensate_fraction(self) -> float:
        from .lattice import uniform_mode_weight

        c = self.values[self.layout.block("C")]
        return uniform_mode_weight(self.layout.pair_index, c, CHANNEL_DIAGONAL["C"])


def initial_state(layout: ChannelLayout, name: str = "infinite_temperature",
                  values: np.ndarray | None = None) -> CorrelationState:
    """Built-in initial conditions, or a user-supplied flat vector."""
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape != (layout.dim,):
            raise ValueError(f"expected {layout.dim} values, got {values.shape}")
        return CorrelationState(layout, values.copy(), 0.0)
    v = np.zeros(layout.dim)
    if name == "infinite_temperature":
        pass  # all off-diagonal channels vanish, S3 = 0
    elif name == "all_down":
        if "S3" in layout.channels:
            v[layout.block("S3")] = -0.5
        # product state of down spins: <s3 s3> = 1/4 on every pair
        v[layout.block("D")] = 0.25
    else:
        raise ValueError(f"unknown initial state {name!r}")
    return CorrelationState(layout, v, 0.0)


# ---------------------------------------------------------------------------
# Generator assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Generator:
    """Sparse linear map M plus affine drive b for d/dtau v = M v + b."""

    layout: ChannelLayout
    M: sp.csr_matrix
    b: np.ndarray
    params: dict

    @property
    def scenario(self) -> str:
        return self.layout.scenario

    @property
    def dim(self) -> int:
        return self.layout.dim

    def augmented(self) -> sp.csr_matrix:
        """[[M, b], [0, 0]] acting on the state extended by a frozen 1."""
        n = self.dim
        A = sp.lil_matrix((n + 1, n + 1))
        A[:n, :n] = self.M
        A[:n, n] = self.b.reshape(-1, 1)
        return A.tocsr()

    def infinity_norm(self) -> float:
        return float(np.max(np.abs(self.M).sum(axis=1))) if self.dim else 0.0


@dataclass(frozen=True)
class _PairStructure:
    """Shared Laplacian structure over the pair (or displacement) space."""

    hops: list[tuple[int, int]]       # off-diagonal hops, uniform rate
    hop_rate: float
    out_rate: np.ndarray              # total Laplacian out-rate per entry
    diag_hits: np.ndarray             # number of hops landing on the diagonal
    nn_mask: np.ndarray               # entries that are nearest-neighbor pairs


def _pair_structure(layout: ChannelLayout) -> _PairStructure:
    lat = layout.lattice
    pi = layout.pair_index
    P = pi.npairs
    out_rate = np.zeros(P)
    diag_hits = np.zeros(P)
    nn_mask = np.zeros(P, dtype=bool)
    hops: list[tuple[int, int]] = []

    if layout.mode == "full_pairs":
        rate = 0.25
        pairs = pi.pairs()
        for x, y in lat.edges:
            nn_mask[pi.pair_id(x, y)] = True
        for p, (x, y) in enumerate(pairs):
            out_rate[p] = rate * (lat.coordination[x] + lat.coordination[y])
            for z in lat.neighbors[x]:
                if z == y:
                    diag_hits[p] += 1
                else:
                    hops.append((p, pi.pair_id(z, y)))
            for z in lat.neighbors[y]:
                if z == x:
                    diag_hits[p] += 1
                else:
                    hops.append((p, pi.pair_id(x, z)))
    else:
        rate = 0.5
        L = lat.L
        offsets = lat.bravais_offsets()
        coords = pi.displacement_coords()
        coord_to_id = {r: i for i, r in enumerate(coords)}
        for i, r in enumerate(coords):
            out_rate[i] = rate * len(offsets)
            for off in offsets:
                target = tuple((a + o) % L for a, o in zip(r, off))
                if all(c == 0 for c in target):
                    diag_hits[i] += 1
                else:
                    hops.append((i, coord_to_id[target]))
        nn_set = {tuple(o % L for o in off) for off in offsets}
        for i, r in enumerate(coords):
            nn_mask[i] = r in nn_set

    return _PairStructure(hops, rate, out_rate, diag_hits, nn_mask)


class _Assembler:
    """Accumulates COO triplets for the generator matrix and drive vector."""

    def __init__(self, layout: ChannelLayout):
        self.layout = layout
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.b = np.zeros(layout.dim)

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=int))
        self.cols.append(np.asarray(cols, dtype=int))
        self.vals.append(np.asarray(vals, dtype=float))

    def add_laplacian_block(self, channel: str, ps: _PairStructure):
        sl = self.layout.block(channel)
        base = sl.start
        if ps.hops:
            h = np.asarray(ps.hops)
            self.add(base + h[:, 0], base + h[:, 1], np.full(len(h), ps.hop_rate))
        idx = np.arange(ps.out_rate.size)
        self.add(base + idx, base + idx, -ps.out_rate)
        self.b[sl] += ps.diag_hits * ps.hop_rate * CHANNEL_DIAGONAL[channel]

    def add_diag(self, channel: str, mask: np.ndarray, value: float):
        sl = self.layout.block(channel)
        idx = np.flatnonzero(mask) + sl.start
        self.add(idx, idx, np.full(idx.size, value))

    def add_coupling(self, row_channel: str, col_channel: str, mask: np.ndarray, value: float):
        rsl = self.layout.block(row_channel)
        csl = self.layout.block(col_channel)
        idx = np.flatnonzero(mask)
        self.add(idx + rsl.start, idx + csl.start, np.full(idx.size, value))

    def build(self, params: dict) -> Generator:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        M = sp.csr_matrix((vals, (rows, cols)), shape=(self.layout.dim, self.layout.dim))
        M.sum_duplicates()
        return Generator(self.layout, M, self.b, params)


def _require_connected(lattice: Lattice):
    seen = {0}
    stack = [0]
    while stack:
        x = stack.pop()
        for y in lattice.neighbors[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    if len(seen) != lattice.nsites:
        raise LatticeError("generator construction requires a connected lattice")


def build_generator_pure(lattice: Lattice, mode: str = "auto") -> Generator:
    """Generator of the purely dissipative symmetrizing dynamics on (C, D)."""
    _require_connected(lattice)
    layout = make_layout("pure", lattice, mode)
    ps = _pair_structure(layout)
    asm = _Assembler(layout)
    _add_pure_terms(asm, ps)
    return asm.build({})


def _add_pure_terms(asm: _Assembler, ps: _PairStructure):
    asm.add_laplacian_block("C", ps)
    asm.add_laplacian_block("D", ps)
    nn = ps.nn_mask
    asm.add_diag("C", nn, -0.5)
    asm.add_coupling("C", "D", nn, -2.0)
    asm.add_diag("D", nn, 0.5)
    asm.b[asm.layout.block("D")][nn] += -0.5 * CHANNEL_DIAGONAL["D"]


def build_generator_field(lattice: Lattice, eta: float, mode: str = "auto") -> Generator:
    """Four-channel generator with a uniform transverse field, eta = h / rate."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    _require_connected(lattice)
    layout = make_layout("field", lattice, mode)
    ps = _pair_structure(layout)
    asm = _Assembler(layout)
    _add_pure_terms(asm, ps)

    asm.add_laplacian_block("E", ps)
    asm.add_laplacian_block("F", ps)
    nn = ps.nn_mask
    asm.add_diag("E", nn, 0.5)
    asm.add_diag("F", nn, 0.5)
    asm.add_coupling("F", "D", nn, -0.5)
    asm.add_coupling("F", "C", nn, -0.25)

    everywhere = np.ones(layout.pair_index.npairs, dtype=bool)
    if eta != 0.0:
        asm.add_coupling("C", "E", everywhere, -2.0 * eta)
        asm.add_coupling("D", "E", everywhere, eta)
        asm.add_coupling("E", "F", everywhere, 2.0 * eta)
        asm.add_coupling("E", "D", everywhere, -2.0 * eta)
        asm.add_coupling("F", "E", everywhere, -eta)
    return asm.build({"eta": eta})


def build_generator_thermal(lattice: Lattice, kappa_over_gamma: float, n_thermal: float,
                            mode: str = "auto") -> Generator:
    """Affine generator over (S3, C, D) with thermal spin flips.

    The longitudinal field commutes with every tracked observable and enters
    only through the occupation number n_thermal.
    """
    if kappa_over_gamma < 0 or n_thermal < 0:
        raise ValueError("kappa_over_gamma and n_thermal must be nonnegative")
    _require_connected(lattice)
    layout = make_layout("thermal", lattice, mode)
    ps = _pair_structure(layout)
    asm = _Assembler(layout)
    _add_pure_terms(asm, ps)

    kg = kappa_over_gamma
    decay = kg * (2.0 * n_thermal + 1.0)
    s3 = layout.block("S3")

    if layout.mode == "full_pairs":
        # single-spin diffusion: quarter of the site Laplacian
        lap = layout.lattice.laplacian().tocoo()
        asm.add(s3.start + lap.row, s3.start + lap.col, 0.25 * lap.data)
    # displacement mode: the uniform magnetization channel has zero Laplacian

    nS3 = layout.channel_size("S3")
    idx = np.arange(nS3) + s3.start
    asm.add(idx, idx, np.full(nS3, -decay))
    asm.b[s3] += -0.5 * kg

    P = layout.pair_index.npairs
    all_pairs = np.ones(P, dtype=bool)
    asm.add_diag("C", all_pairs, -decay)
    asm.add_diag("D", all_pairs, -2.0 * decay)

    dsl = layout.block("D")
    if layout.mode == "full_pairs":
        pairs = layout.pair_index.pairs()
        rows, cols, vals = [], [], []
        for p, (x, y) in enumerate(pairs):
            rows += [dsl.start + p, dsl.start + p]
            cols += [s3.start + x, s3.start + y]
            vals += [-0.5 * kg, -0.5 * kg]
        asm.add(rows, cols, vals)
    else:
        asm.add(np.arange(P) + dsl.start, np.full(P, s3.start), np.full(P, -kg))

    return asm.build({"kappa_over_gamma": kg, "n_thermal": n_thermal})


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------

def _check_bounds(state: CorrelationState):
    for ch in state.layout.channels:
        vals = state.values[state.layout.block(ch)]
        bound = CHANNEL_BOUND[ch] + BOUND_TOL
        worst = float(np.max(np.abs(vals))) if vals.size else 0.0
        if worst > bound:
            raise InvariantViolationError(
                f"channel {ch} reached |value| = {worst:.12g} beyond its physical "
                f"bound {CHANNEL_BOUND[ch]} at tau = {state.tau:g}"
            )


def evolve(gen: Generator, init: CorrelationState, times, *,
           check_bounds: bool = True) -> list[CorrelationState]:
    """Propagate the affine linear system to the requested times.

    Uses the augmented constant-channel propagator; uniform grids on systems
    of moderate size go through a dense matrix exponential applied
    repeatedly, everything else through sparse matrix-exponential stepping.
    """
    if init.layout is not gen.layout and init.layout != gen.layout:
        raise ValueError("initial state layout does not match the generator")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d array")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be ascending and nonnegative")
    if not np.all(np.isfinite(init.values)) or not np.all(np.isfinite(times)):
        raise ValueError("non-finite values in initial state or times")

    A = gen.augmented()
    w = np.concatenate([init.values, [1.0]])

    dts = np.diff(np.concatenate([[0.0], times]))
    uniform = times.size > 3 and np.allclose(dts[1:], dts[1], rtol=1e-12, atol=0.0)
    out: list[CorrelationState] = []

    if uniform and gen.dim + 1 <= 2000:
        P0 = sla.expm(A.toarray() * dts[0]) if dts[0] > 0 else None
        P = sla.expm(A.toarray() * dts[1])
        if P0 is not None:
            w = P0 @ w
        for i, t in enumerate(times):
            if i > 0:
                w = P @ w
            out.append(CorrelationState(gen.layout, w[:-1].copy(), float(t)))
    else:
        for t, dt in zip(times, dts):
            if dt > 0:
                w = spla.expm_multiply(A * dt, w)
            out.append(CorrelationState(gen.layout, w[:-1].copy(), float(t)))

    if check_bounds:
        for state in out:
            _check_bounds(state)
    return out


# ---------------------------------------------------------------------------
# Steady states
# ---------------------------------------------------------------------------

STEADY_RESIDUAL_TOL = 1e-10


def steady_state(gen: Generator, init: CorrelationState | None = None) -> CorrelationState:
    """Fixed point of the generator dynamics.

    Thermal systems with nonzero flip rate have a unique fixed point solving
    M v = -b.  The pure drive conserves the mean of the D channel (and of S3
    when present), so its fixed point depends on the initial condition; the
    infinite-temperature start is assumed when none is given.  The field
    scenario tends to a limit cycle and is rejected.
    """
    if gen.scenario == "field":
        raise ScenarioError("field dynamics ends in a limit cycle; "
                            "use the late-time averaging analysis instead")
    if gen.scenario == "thermal" and gen.params["kappa_over_gamma"] > 0:
        v = spla.splu(gen.M.tocsc()).solve(-gen.b)
    else:
        if init is None:
            init = initial_state(gen.layout, "infinite_temperature")
        v = _conserved_sector_steady_state(gen, init)

    residual = float(np.max(np.abs(gen.M @ v + gen.b))) if gen.dim else 0.0
    if residual > STEADY_RESIDUAL_TOL:
        raise RuntimeError(f"steady-state residual {residual:.3e} exceeds tolerance")
    return CorrelationState(gen.layout, v, np.inf)


def _conserved_sector_steady_state(gen: Generator, init: CorrelationState) -> np.ndarray:
    """Fixed point selected by the conserved D-mean (and S3-mean) sectors."""
    layout = gen.layout
    v = np.zeros(layout.dim)

    dsl = layout.block("D")
    d_mean = float(np.mean(init.values[dsl])) if init.values[dsl].size else 0.0
    v[dsl] = d_mean

    if "S3" in layout.channels:
        ssl = layout.block("S3")
        v[ssl] = float(np.mean(init.values[ssl])) if init.values[ssl].size else 0.0

    csl = layout.block("C")
    A_C = gen.M[csl, csl].tocsc()
    rhs = -(gen.b[csl] + gen.M[csl, :] @ v)
    v[csl] = spla.splu(A_C).solve(rhs)
    return v


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumResult:
    """Leading eigenvalues, the dissipative gap and the zero-mode count."""

    eigenvalues: np.ndarray
    gap: float
    zero_modes: int
    tol_zero: float


def _sort_eigenvalues(lam: np.ndarray) -> np.ndarray:
    order = np.lexsort((-lam.imag, -lam.real))
    return lam[order]


def _parity_basis(layout: ChannelLayout) -> tuple[sp.csr_matrix, int]:
    """Orthonormal basis of the physical (inversion-even) displacement sector.

    Channel fields of symmetric pair operators satisfy v(r) = v(-r); the
    odd combinations are representation artifacts with no corresponding
    observable and are excluded from reported spectra.
    """
    pi = layout.pair_index
    partner = pi.parity_partner()
    P = pi.npairs
    data_rows, data_cols, data_vals = [], [], []
    col = 0
    for r in range(P):
        q = partner[r]
        if q < r:
            continue
        if q == r:
            data_rows.append(r)
            data_cols.append(col)
            data_vals.append(1.0)
        else:
            s = 1.0 / np.sqrt(2.0)
            data_rows += [r, q]
            data_cols += [col, col]
            data_vals += [s, s]
        col += 1
    B_pair = sp.csr_matrix((data_vals, (data_rows, data_cols)), shape=(P, col))
    blocks = []
    for ch in layout.channels:
        if ch == "S3":
            blocks.append(sp.identity(layout.channel_size("S3"), format="csr"))
        else:
            blocks.append(B_pair)
    return sp.block_diag(blocks, format="csr"), col


def _spectrum_operator(gen: Generator) -> tuple[sp.csr_matrix, list[tuple[str, slice]]]:
    """The matrix whose spectrum is reported, with its channel blocks."""
    layout = gen.layout
    if layout.mode == "displacement":
        B, n_even = _parity_basis(layout)
        M = (B.T @ gen.M @ B).tocsr()
        blocks = []
        start = 0
        for ch in layout.channels:
            size = layout.channel_size("S3") if ch == "S3" else n_even
            blocks.append((ch, slice(start, start + size)))
            start += size
        return M, blocks
    blocks = [(ch, layout.block(ch)) for ch in layout.channels]
    return gen.M, blocks


def _stationary_mode_count(gen: Generator) -> int:
    """Exact zero modes of the augmented system beyond those of M itself.

    A thermal generator with nonzero flip rate is nonsingular, so its affine
    fixed point contributes one stationary mode that M alone does not show.
    """
    if gen.scenario == "thermal" and gen.params.get("kappa_over_gamma", 0.0) > 0:
        return 1
    return 0


def leading_spectrum(gen: Generator, k: int, tol_zero: float | None = None) -> SpectrumResult:
    """The k eigenvalues of largest real part, the gap, and zero-mode count.

    Dense diagonalization below DENSE_SPECTRUM_CAP; above it, symmetric
    blocks are resolved by shift-inverted Lanczos (or preconditioned LOBPCG
    at very large dimension) and nonsymmetric systems by shift-inverted
    Arnoldi.
    """
    if k < 1:
        raise ValueError("k must be positive")
    M, blocks = _spectrum_operator(gen)
    scale = gen.infinity_norm() or 1.0
    tol = tol_zero if tol_zero is not None else 1e-10 * scale
    if k > M.shape[0] + _stationary_mode_count(gen):
        raise ValueError(f"requested k={k} exceeds spectrum dimension")

    if M.shape[0] <= DENSE_SPECTRUM_CAP:
        lam = sla.eigvals(M.toarray())
        zero_modes = int(np.sum(np.abs(lam.real) <= tol))
    else:
        lam = _iterative_leading(gen, M, blocks, max(k, 8), scale)
        zero_modes = int(np.sum(np.abs(lam.real) <= tol))

    extra = _stationary_mode_count(gen)
    if extra:
        lam = np.concatenate([[0.0 + 0.0j], lam])
        zero_modes += extra

    lam = _sort_eigenvalues(lam)
    decaying = lam.real[lam.real < -tol]
    if decaying.size == 0:
        raise SpectrumConvergenceError(
            f"no decaying eigenvalue found among {lam.size} computed modes "
            f"(tol_zero = {tol:.3e}); request more modes"
        )
    gap = float(-np.max(decaying))
    return SpectrumResult(lam[:k], gap, zero_modes, tol)


def _block_is_triangular(M: sp.csr_matrix, blocks: list[tuple[str, slice]]) -> bool:
    """True when the inter-channel couplings form a DAG, so the spectrum is
    the union of the diagonal channel blocks."""
    deps = {}
    for rname, rsl in blocks:
        for cname, csl in blocks:
            if rname == cname:
                continue
            if abs(M[rsl, csl]).sum() != 0:
                deps.setdefault(rname, set()).add(cname)
    seen: set[str] = set()
    order = []

    def visit(node, trail):
        if node in trail:
            return False
        if node in seen:
            return True
        for dep in deps.get(node, ()):  # noqa: B023
            if not visit(dep, trail | {node}):
                return False
        seen.add(node)
        order.append(node)
        return True

    return all(visit(name, frozenset()) for name, _ in blocks)


def _symmetric_block_top(A: sp.csr_matrix, nmodes: int, scale: float) -> np.ndarray:
    """Leading (largest) eigenvalues of a symmetric nonpositive block.

    Large blocks go through preconditioned LOBPCG on -A: the pair-space
    graphs behave like doubled-dimension lattices, where sparse-direct
    shift-invert factorizations fill in badly but multigrid V-cycles stay
    cheap.  A singular block (the conserved-mean diffusion sector) is
    deflated against the constant vector and its known zero mode re-added.
    """
    n = A.shape[0]
    if n <= DENSE_SPECTRUM_CAP:
        return sla.eigvalsh(A.toarray())[-nmodes:]
    nmodes = min(nmodes, n - 2)
    return _lobpcg_top(A, nmodes, scale)


def _lobpcg_top(A: sp.csr_matrix, nmodes: int, scale: float) -> np.ndarray:
    import pyamg

    n = A.shape[0]
    Apos = (-A).tocsr()
    ones = np.ones((n, 1))
    singular = float(np.max(np.abs(A @ ones))) <= 1e-12 * scale

    ml = pyamg.smoothed_aggregation_solver(Apos, max_coarse=500)
    prec = ml.aspreconditioner()
    rng = np.random.default_rng(7)
    want = nmodes if not singular else max(nmodes - 1, 1)
    X = rng.standard_normal((n, want + 2))
    kwargs = {"M": prec, "tol": 2e-9 * scale, "maxiter": 2000, "largest": False}
    if singular:
        kwargs["Y"] = ones
    vals, vecs = spla.lobpcg(Apos, X, **kwargs)
    res = np.linalg.norm(Apos @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.any(res > 1e-7 * scale):
        raise SpectrumConvergenceError(
            f"LOBPCG residuals up to {res.max():.3e} exceed tolerance on a "
            f"{n}-dim block (scale {scale:.3e})"
        )
    tops = np.sort(-vals)[::-1][:want]
    if singular:
        tops = np.concatenate([[0.0], tops])
    return np.sort(tops[:nmodes])


def _iterative_leading(gen: Generator, M: sp.csr_matrix,
                       blocks: list[tuple[str, slice]], k: int, scale: float) -> np.ndarray:
    if gen.scenario in ("pure", "thermal") and _block_is_triangular(M, blocks):
        vals = []
        for _, sl in blocks:
            A = M[sl, sl].tocsr()
            sym_dev = abs(A - A.T).max()
            if sym_dev > 1e-12 * scale:
                raise SpectrumConvergenceError(
                    f"expected a symmetric channel block, got asymmetry {sym_dev:.3e}"
                )
            nmodes = min(k, A.shape[0])
            vals.append(_symmetric_block_top(A, nmodes, scale))
        lam = np.concatenate(vals).astype(complex)
        return _sort_eigenvalues(lam)[:k]

    sigma = 1e-6 * scale * (1.0 + 1.0j)
    try:
        vals = spla.eigs(M.tocsc(), k=min(k, M.shape[0] - 2), sigma=sigma,
                         which="LM", return_eigenvectors=False)
    except spla.ArpackNoConvergence as err:
        converged = getattr(err, "eigenvalues", np.zeros(0))
        raise SpectrumConvergenceError(
            f"shift-inverted Arnoldi converged only {len(converged)} of {k} modes "
            f"at sigma={sigma:.3e}"
        ) from err
    return _sort_eigenvalues(np.asarray(vals))[:k]


def dissipative_gap(gen: Generator, tol_zero: float | None = None) -> float:
    """Relaxation gap: negative of the largest strictly decaying eigenvalue.

    For the pure and thermal scenarios the channel blocks are symmetric and
    triangularly coupled, so the gap is resolved block by block at any size.
    """
    scale = gen.infinity_norm() or 1.0
    tol = tol_zero if tol_zero is not None else 1e-10 * scale
    M, blocks = _spectrum_operator(gen)

    if gen.scenario in ("pure", "thermal") and _block_is_triangular(M, blocks):
        candidates = []
        for _, sl in blocks:
            A = M[sl, sl].tocsr()
            if A.shape[0] == 0:
                continue
            top = _symmetric_block_top(A, min(3, A.shape[0]), scale)
            candidates.extend(top.tolist())
        lam = np.asarray(candidates)
        decaying = lam[lam < -tol]
        if decaying.size == 0:
            raise SpectrumConvergenceError("no decaying block mode found")
        return float(-np.max(decaying))

    return leading_spectrum(gen, k=min(gen.dim, 8), tol_zero=tol_zero).gap
