"""Brute-force Lindblad engine on the full 2^N Hilbert space.

Ground truth for small systems: builds the vectorized superoperator
(column-stacking convention, site 0 = most significant bit), evolves density
matrices, and extracts the same correlation channels the semi-analytic
engine tracks.  Dense eigendecomposition drives propagation for N <= 4;
larger systems (up to N = 10) use sparse matrix-exponential action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .jump_algebra import ID2, SPIN, JumpOperatorSpec, LocalFieldHamiltonian
from .lattice import Lattice, PairIndex

DENSE_CAP = 6       # largest N for which the 4^N superoperator matrix is built
PROPAGATION_CAP = 10
GAP_CAP = 5         # full-spectrum diagonalization cap


class CapExceededError(ValueError):
    """System size exceeds the configured brute-force cap."""


# ---------------------------------------------------------------------------
# Many-body operator embeddings
# ---------------------------------------------------------------------------

def site_operator(nsites: int, x: int, op2: np.ndarray) -> sp.csr_matrix:
    """Embed a single-site operator at site x (site 0 = most significant bit)."""
    if not 0 <= x < nsites:
        raise ValueError(f"site {x} out of range for N={nsites}")
    left = sp.identity(2**x, format="csr", dtype=complex)
    right = sp.identity(2 ** (nsites - x - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(op2)), right, format="csr")


def two_site_operator(nsites: int, x: int, y: int, op4: np.ndarray) -> sp.csr_matrix:
    """Embed a two-site operator given as a 4x4 matrix on (x, y), x != y."""
    if x == y:
        raise ValueError("two-site operator needs distinct sites")
    m = np.asarray(op4, dtype=complex).reshape(2, 2, 2, 2)  # [ax, ay, bx, by]
    total = sp.csr_matrix((2**nsites, 2**nsites), dtype=complex)
    for ax in range(2):
        for bx in range(2):
            sub = m[ax, :, bx, :]
            if not np.any(sub):
                continue
            ex = np.zeros((2, 2), dtype=complex)
            ex[ax, bx] = 1.0
            total = total + site_operator(nsites, x, ex) @ site_operator(nsites, y, sub)
    return total.tocsr()


def spin_product_operator(nsites: int, factors: list[tuple[int, int]]) -> sp.csr_matrix:
    """Product of single-spin operators, factors = [(site, alpha), ...]."""
    out = sp.identity(2**nsites, format="csr", dtype=complex)
    for x, alpha in factors:
        out = out @ site_operator(nsites, x, SPIN[alpha])
    return out.tocsr()


def channel_operator(nsites: int, name: str, x: int, y: int | None = None) -> sp.csr_matrix:
    """The tracked channel operators: S3 on a site; C, D, E, F on a pair."""
    if name == "S3":
        return site_operator(nsites, x, SPIN[2])
    if y is None or x == y:
        raise ValueError(f"channel {name} needs a site pair")
    sx = [site_operator(nsites, x, SPIN[a]) for a in range(3)]
    sy = [site_operator(nsites, y, SPIN[a]) for a in range(3)]
    if name == "C":
        return 2.0 * (sx[0] @ sy[0] + sx[1] @ sy[1])
    if name == "D":
        return sx[2] @ sy[2]
    if name == "E":
        return sx[1] @ sy[2] + sx[2] @ sy[1]
    if name == "F":
        return sx[1] @ sy[1]
    raise ValueError(f"unknown channel {name!r}")


# ---------------------------------------------------------------------------
# Lindblad specification and superoperator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityMatrix:
    """Dense density matrix in the computational product basis."""

    nsites: int
    data: np.ndarray

    def validate(self, herm_tol: float = 1e-12, trace_tol: float = 1e-12,
                 pos_tol: float = 1e-10) -> "DensityMatrix":
        d = self.data
        if d.shape != (2**self.nsites, 2**self.nsites):
            raise ValueError(f"density matrix shape {d.shape} inconsistent with N={self.nsites}")
        herm = np.linalg.norm(d - d.conj().T)
        tr = abs(np.trace(d) - 1.0)
        if herm > herm_tol:
            raise ValueError(f"density matrix not Hermitian: deviation {herm:.3e}")
        if tr > trace_tol:
            raise ValueError(f"density matrix trace off by {tr:.3e}")
        evmin = float(np.min(sla.eigvalsh(0.5 * (d + d.conj().T))))
        if evmin < -pos_tol:
            raise ValueError(f"density matrix has negative eigenvalue {evmin:.3e}")
        return self


def infinite_temperature_state(nsites: int) -> DensityMatrix:
    dim = 2**nsites
    return DensityMatrix(nsites, np.eye(dim, dtype=complex) / dim)


@dataclass(frozen=True)
class LindbladSpec:
    """Lattice, local-field Hamiltonian and placed jump processes.

    Each process is (JumpOperatorSpec, placement) with placement 'per_site'
    for local operators and 'per_edge' for bilocal ones.
    """

    lattice: Lattice
    hamiltonian: LocalFieldHamiltonian | None
    processes: tuple[tuple[JumpOperatorSpec, str], ...]
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        for spec, placement in self.processes:
            if placement not in ("per_site", "per_edge"):
                raise ValueError(f"unknown placement {placement!r}")
            if placement == "per_edge" and not spec.is_bilocal:
                raise ValueError("per_edge placement requires a bilocal jump spec")
            if placement == "per_site" and spec.is_bilocal:
                raise ValueError("per_site placement requires a local jump spec")

    def jump_terms(self) -> list[tuple[float, sp.csr_matrix]]:
        """All placed jump operators as (rate, many-body matrix)."""
        n = self.lattice.nsites
        if n > PROPAGATION_CAP:
            raise CapExceededError(f"N={n} exceeds the brute-force cap {PROPAGATION_CAP}")
        terms = []
        for spec, placement in self.processes:
            if spec.rate == 0.0:
                continue
            mat = spec.matrix()
            if placement == "per_site":
                for x in range(n):
                    terms.append((spec.rate, site_operator(n, x, mat)))
            else:
                for x, y in self.lattice.edges:
                    terms.append((spec.rate, two_site_operator(n, x, y, mat)))
        return terms

    def hamiltonian_matrix(self) -> sp.csr_matrix:
        n = self.lattice.nsites
        dim = 2**n
        H = sp.csr_matrix((dim, dim), dtype=complex)
        if self.hamiltonian is not None:
            h2 = self.hamiltonian.matrix()
            if np.any(h2):
                for x in range(n):
                    H = H + site_operator(n, x, h2)
        return H.tocsr()


def _matrix_free_superoperator(spec: LindbladSpec):
    """Lindbladian action on vectorized states without forming the 4^N matrix.

    Returns the action callable and the superoperator trace (needed by the
    matrix-exponential shifting heuristics).
    """
    n = spec.lattice.nsites
    dim = 2**n
    H = spec.hamiltonian_matrix()
    terms = [(rate, L, L.conj().T.tocsr(), (L.conj().T @ L).tocsr())
             for rate, L in spec.jump_terms()]

    def apply_lindblad(v: np.ndarray) -> np.ndarray:
        rho = v.reshape(dim, dim, order="F")
        out = -1.0j * (H @ rho - rho @ H)
        for rate, L, Ld, LdL in terms:
            out = out + rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
        return np.asarray(out).reshape(-1, order="F")

    def apply_heisenberg(v: np.ndarray) -> np.ndarray:
        # adjoint of the vectorized Lindbladian w.r.t. the Frobenius product
        X = v.reshape(dim, dim, order="F")
        out = 1.0j * (H @ X - X @ H)
        for rate, L, Ld, LdL in terms:
            out = out + rate * (Ld @ X @ L - 0.5 * (LdL @ X + X @ LdL))
        return np.asarray(out).reshape(-1, order="F")

    trace = sum(
        rate * (abs(complex(L.diagonal().sum())) ** 2 - dim * complex(LdL.diagonal().sum()))
        for rate, L, _, LdL in terms
    )
    return apply_lindblad, apply_heisenberg, trace


def build_superoperator(spec: LindbladSpec) -> sp.csr_matrix:
    """Vectorized Lindbladian, column-stacking: vec(A X B) = (B^T kron A) vec(X)."""
    n = spec.lattice.nsites
    if n > spec.dense_cap:
        raise CapExceededError(
            f"N={n} exceeds the superoperator cap {spec.dense_cap} (4^N too large)"
        )
    dim = 2**n
    ident = sp.identity(dim, format="csr", dtype=complex)
    H = spec.hamiltonian_matrix()
    S = -1.0j * (sp.kron(ident, H) - sp.kron(H.T, ident))
    for rate, L in spec.jump_terms():
        Ld = L.conj().T.tocsr()
        LdL = (Ld @ L).tocsr()
        S = S + rate * (
            sp.kron(Ld.T, L) - 0.5 * (sp.kron(ident, LdL) + sp.kron(LdL.T, ident))
        )
    return S.tocsr()


# ---------------------------------------------------------------------------
# Evolution, expectation values, spectra
# ---------------------------------------------------------------------------

def evolve_exact(spec: LindbladSpec, rho0: DensityMatrix, times: np.ndarray,
                 validate: bool = True) -> list[DensityMatrix]:
    """Density matrices at the requested times (ascending, nonnegative)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be an ascending list with times[0] >= 0")
    n = spec.lattice.nsites
    if n != rho0.nsites:
        raise ValueError("initial state size does not match the lattice")
    dim = 2**n
    v0 = rho0.data.reshape(-1, order="F")  # column stacking

    # Propagation uses scaling-and-squaring matrix-exponential action at every
    # size: eigendecomposition of these non-normal superoperators can lose
    # many digits through ill-conditioned eigenvector bases.
    if n <= spec.dense_cap:
        S = build_superoperator(spec)

        def stepper(v, dt):
            return spla.expm_multiply(S * dt, v)
    else:
        apply_lindblad, apply_heisenberg, trace = _matrix_free_superoperator(spec)

        def stepper(v, dt):
            op = spla.LinearOperator(
                (dim * dim, dim * dim),
                matvec=lambda w: dt * apply_lindblad(w),
                rmatvec=lambda w: dt * apply_heisenberg(w), dtype=complex)
            return spla.expm_multiply(op, v, traceA=trace * dt)

    vecs = []
    v = v0.astype(complex)
    prev = 0.0
    for t in times:
        step = t - prev
        if step > 0:
            v = stepper(v, step)
        prev = t
        vecs.append(v.copy())

    out = []
    for v in vecs:
        rho = DensityMatrix(n, v.reshape(dim, dim, order="F"))
        if validate:
            rho.validate()
        out.append(rho)
    return out


def expectation(rho: DensityMatrix, obs: sp.spmatrix | np.ndarray) -> complex:
    """tr(rho O); callers take .real for Hermitian observables."""
    if sp.issparse(obs):
        val = complex((obs.multiply(rho.data.T)).sum())
    else:
        val = complex(np.trace(rho.data @ np.asarray(obs)))
    return val


def correlation_channels(rho: DensityMatrix, lattice: Lattice,
                         scenario: str) -> dict[str, np.ndarray]:
    """Tracked channel expectation values laid out like the engine state.

    Pair channels follow the full_pairs enumeration (x < y); S3 is per site.
    """
    n = lattice.nsites
    pairs = PairIndex.full_pairs(lattice).pairs()
    names = {"pure": ("C", "D"), "field": ("C", "D", "E", "F"),
             "thermal": ("S3", "C", "D")}[scenario]
    out: dict[str, np.ndarray] = {}
    for name in names:
        if name == "S3":
            vals = [expectation(rho, channel_operator(n, "S3", x)).real for x in range(n)]
        else:
            vals = [expectation(rho, channel_operator(n, name, x, y)).real for x, y in pairs]
        out[name] = np.array(vals)
    return out


def dicke_ensemble(nsites: int) -> DensityMatrix:
    """Binomial mixture of the totally symmetric basis states.

    This is the stationary state reached from the infinite-temperature
    ensemble under the pure symmetrizing drive.
    """
    if nsites > PROPAGATION_CAP:
        raise CapExceededError(f"N={nsites} exceeds the cap {PROPAGATION_CAP}")
    dim = 2**nsites
    rho = np.zeros((dim, dim), dtype=complex)
    # Dicke state with n up-spins: equal amplitudes on all basis states of
    # that Hamming weight.
    weights = [[] for _ in range(nsites + 1)]
    for b in range(dim):
        weights[bin(b).count("1")].append(b)
    for n_up, states in enumerate(weights):
        amp = 1.0 / np.sqrt(len(states))
        vec = np.zeros(dim, dtype=complex)
        vec[states] = amp
        rho += (len(states) / dim) * np.outer(vec, vec.conj())
    return DensityMatrix(nsites, rho)


def lindbladian_spectrum(spec: LindbladSpec) -> np.ndarray:
    n = spec.lattice.nsites
    if n > GAP_CAP:
        raise CapExceededError(f"full-spectrum diagonalization capped at N={GAP_CAP}")
    S = build_superoperator(spec).toarray()
    return sla.eigvals(S)


def lindbladian_gap(spec: LindbladSpec, tol_zero: float | None = None) -> float:
    """Negative of the largest nonzero real part of the full Lindbladian."""
    lam = lindbladian_spectrum(spec)
    scale = float(np.max(np.abs(lam))) or 1.0
    tol = tol_zero if tol_zero is not None else 1e-10 * scale
    nonzero = lam[np.real(lam) < -tol]
    if nonzero.size == 0:
        raise ValueError("Lindbladian spectrum has no nonzero decay modes")
    return float(-np.max(np.real(nonzero)))
