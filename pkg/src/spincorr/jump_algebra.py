"""Jump operators, adjoint-dissipator expansions and closure checks.

Local jump operators are parametrized as L = l0 + sum_a l^a s^a; bilocal
operators acting on a site pair are split into a symmetric family
(l0, l, a, b) and an antisymmetric family (l, k).  The adjoint dissipator
(1/rate) * (Ld [T, L] + [Ld, T] L) is expanded in the one- or two-site spin
operator basis by dense matrix algebra, and the coefficient-level closure
conditions (vanishing of all two-spin terms generated from single-spin
targets) are evaluated directly from the parametrization and cross-checked
against that brute-force expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)
SPIN = tuple(0.5 * s for s in SIGMA)
ID2 = np.eye(2, dtype=complex)

_EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_i, _j, _k] = 1.0
    _EPS[_i, _k, _j] = -1.0

DEFAULT_CLOSURE_TOL = 1e-12


class ClosureCrossCheckError(RuntimeError):
    """Coefficient-level closure verdict contradicts the brute-force expansion."""


# ---------------------------------------------------------------------------
# Coefficient types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalJumpCoefficients:
    """L = l0 + sum_a l^a s^a with the overall phase fixed so l0 is real."""

    l0: float
    l: tuple[complex, complex, complex]

    def matrix(self) -> np.ndarray:
        m = self.l0 * ID2.copy()
        for a in range(3):
            m += self.l[a] * SPIN[a]
        return m


@dataclass(frozen=True)
class SymmetricBilocalCoefficients:
    """L_xy = l0 + i sum_a l^a (s_x^a + s_y^a) + sum_ab l^(ab) s_x^a s_y^b.

    The symmetric matrix l^(ab) is stored as its diagonal a^1..a^3 and the
    off-diagonal entries b^1 = l^(23), b^2 = l^(31), b^3 = l^(12).
    """

    l0: float
    l: tuple[complex, complex, complex]
    a: tuple[complex, complex, complex]
    b: tuple[complex, complex, complex]

    def coupling_matrix(self) -> np.ndarray:
        m = np.zeros((3, 3), dtype=complex)
        m[0, 0], m[1, 1], m[2, 2] = self.a
        m[1, 2] = m[2, 1] = self.b[0]
        m[2, 0] = m[0, 2] = self.b[1]
        m[0, 1] = m[1, 0] = self.b[2]
        return m

    def matrix(self) -> np.ndarray:
        m = self.l0 * np.eye(4, dtype=complex)
        for a in range(3):
            m += 1.0j * self.l[a] * (np.kron(SPIN[a], ID2) + np.kron(ID2, SPIN[a]))
        cm = self.coupling_matrix()
        for a in range(3):
            for b in range(3):
                if cm[a, b] != 0:
                    m += cm[a, b] * np.kron(SPIN[a], SPIN[b])
        return m


@dataclass(frozen=True)
class AntisymmetricBilocalCoefficients:
    """L_xy = i sum_a l^a (s_x^a - s_y^a) + sum_ab l^[ab] s_x^a s_y^b.

    The antisymmetric matrix l^[ab] is stored as k^1 = l^[23], k^2 = l^[31],
    k^3 = l^[12].  One global phase is free; the canonical form makes the
    largest-magnitude coefficient real and positive.
    """

    l: tuple[complex, complex, complex]
    k: tuple[complex, complex, complex]

    def coupling_matrix(self) -> np.ndarray:
        m = np.zeros((3, 3), dtype=complex)
        m[1, 2], m[2, 1] = self.k[0], -self.k[0]
        m[2, 0], m[0, 2] = self.k[1], -self.k[1]
        m[0, 1], m[1, 0] = self.k[2], -self.k[2]
        return m

    def matrix(self) -> np.ndarray:
        m = np.zeros((4, 4), dtype=complex)
        for a in range(3):
            m += 1.0j * self.l[a] * (np.kron(SPIN[a], ID2) - np.kron(ID2, SPIN[a]))
        cm = self.coupling_matrix()
        for a in range(3):
            for b in range(3):
                if cm[a, b] != 0:
                    m += cm[a, b] * np.kron(SPIN[a], SPIN[b])
        return m

    def canonical(self) -> "AntisymmetricBilocalCoefficients":
        coeffs = np.array(list(self.l) + list(self.k), dtype=complex)
        i = int(np.argmax(np.abs(coeffs)))
        z = coeffs[i]
        if abs(z) == 0:
            return self
        phase = np.conj(z) / abs(z)
        coeffs = coeffs * phase
        return AntisymmetricBilocalCoefficients(tuple(coeffs[:3]), tuple(coeffs[3:]))


@dataclass(frozen=True)
class JumpOperatorSpec:
    """A jump operator (coefficient form or raw 4x4 matrix) plus its rate."""

    kind: str  # local | bilocal_symmetric | bilocal_antisymmetric | raw_matrix
    coefficients: object
    rate: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"rate must be nonnegative, got {self.rate}")
        kinds = ("local", "bilocal_symmetric", "bilocal_antisymmetric", "raw_matrix")
        if self.kind not in kinds:
            raise ValueError(f"unknown jump kind {self.kind!r}")
        if self.kind == "raw_matrix":
            m = np.asarray(self.coefficients)
            if m.shape != (4, 4):
                raise ValueError(f"raw_matrix specs must be 4x4, got {m.shape}")

    @property
    def is_bilocal(self) -> bool:
        return self.kind in ("bilocal_symmetric", "bilocal_antisymmetric", "raw_matrix")

    def matrix(self) -> np.ndarray:
        """2x2 matrix for local kinds, 4x4 for bilocal kinds."""
        if self.kind == "raw_matrix":
            return np.asarray(self.coefficients, dtype=complex)
        return self.coefficients.matrix()

    def with_rate(self, rate: float) -> "JumpOperatorSpec":
        return JumpOperatorSpec(self.kind, self.coefficients, rate)


@dataclass(frozen=True)
class LocalFieldHamiltonian:
    """Uniform single-site Hamiltonian sum_x sum_a h^a s_x^a."""

    h: tuple[float, float, float]

    def matrix(self) -> np.ndarray:
        m = np.zeros((2, 2), dtype=complex)
        for a in range(3):
            m += self.h[a] * SPIN[a]
        return m


@dataclass(frozen=True)
class AdjointExpansion:
    """Expansion of the adjoint dissipator acting on one two-site operator.

    (1/rate) Ld [T, L] + [Ld, T] L  =  m0 + mx.s_x + my.s_y + s_x.m2.s_y
    Stacking the three single-spin targets s_x^1..s_x^3 recovers the full
    single-spin coefficient blocks; m2 = 0 for every single-spin target is
    the hierarchy-closure criterion.
    """

    m0: complex
    mx: np.ndarray
    my: np.ndarray
    m2: np.ndarray


# ---------------------------------------------------------------------------
# Brute-force two-site algebra
# ---------------------------------------------------------------------------

_BASIS_X = tuple(np.kron(s, ID2) for s in SPIN)
_BASIS_Y = tuple(np.kron(ID2, s) for s in SPIN)
ID4 = np.eye(4, dtype=complex)


def two_site_basis_op(site: str, alpha: int) -> np.ndarray:
    """s^alpha embedded at site 'x' or 'y' of a two-site system."""
    return _BASIS_X[alpha] if site == "x" else _BASIS_Y[alpha]


def adjoint_dissipator_matrix(L: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Ld [T, L] + [Ld, T] L, i.e. twice the rate-1 adjoint dissipator."""
    Ld = L.conj().T
    return Ld @ (T @ L - L @ T) + (Ld @ T - T @ Ld) @ L


def expand_two_site(T: np.ndarray) -> AdjointExpansion:
    """Expand a 4x4 operator in the basis {1, s_x^a, s_y^b, s_x^a s_y^b}."""
    m0 = np.trace(T) / 4.0
    mx = np.array([np.trace(T @ _BASIS_X[a]) for a in range(3)])
    my = np.array([np.trace(T @ _BASIS_Y[a]) for a in range(3)])
    m2 = np.array(
        [[4.0 * np.trace(T @ (_BASIS_X[a] @ _BASIS_Y[b])) for b in range(3)] for a in range(3)]
    )
    return AdjointExpansion(m0=m0, mx=mx, my=my, m2=m2)


def bilocal_adjoint_action(spec: JumpOperatorSpec, target: np.ndarray) -> AdjointExpansion:
    """Expansion of the bare bracket Ld [T, L] + [Ld, T] L, rate scaled out.

    The dual dissipator is half of this bracket times the rate; the bare
    normalization keeps single-spin images of the symmetrizing operator at
    the conventional +-1/2 coefficients.
    """
    if not spec.is_bilocal:
        raise ValueError("bilocal_adjoint_action requires a bilocal jump spec")
    T = np.asarray(target, dtype=complex)
    if T.shape != (4, 4):
        raise ValueError(f"target must be 4x4, got {T.shape}")
    L = spec.matrix()
    return expand_two_site(adjoint_dissipator_matrix(L, T))


def local_adjoint_coefficients(c: LocalJumpCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (m^a, m^ab) of the rate-scaled adjoint action on s^a.

    (1/rate) Ldiss* s^a = m^a + sum_b m^ab s^b with
      m^a  = (1/4) sum_bc eps^abc Im(conj(l^b) l^c)
      m^ab = (1/2) (Re(conj(l^a) l^b) - delta^ab sum_c |l^c|^2)
             + l0 sum_c eps^abc Im(l^c)
    """
    l = np.asarray(c.l, dtype=complex)
    im_ll = np.imag(np.conj(l)[:, None] * l[None, :])
    m_vec = 0.25 * np.einsum("abc,bc->a", _EPS, im_ll)
    re_ll = np.real(np.conj(l)[:, None] * l[None, :])
    norm2 = float(np.sum(np.abs(l) ** 2))
    m_mat = 0.5 * (re_ll - norm2 * np.eye(3)) + c.l0 * np.einsum("abc,c->ab", _EPS, np.imag(l))
    return m_vec, m_mat


def local_adjoint_bruteforce(c: LocalJumpCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """Same coefficients obtained by dense 2x2 algebra (independent route)."""
    L = c.matrix()
    m_vec = np.empty(3, dtype=complex)
    m_mat = np.empty((3, 3), dtype=complex)
    for a in range(3):
        acted = 0.5 * adjoint_dissipator_matrix(L, SPIN[a])
        m_vec[a] = np.trace(acted) / 2.0
        for b in range(3):
            m_mat[a, b] = 2.0 * np.trace(acted @ SPIN[b])
    return m_vec, m_mat


# ---------------------------------------------------------------------------
# Closure conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosureReport:
    """Residuals of the coefficient-level closure conditions for one spec."""

    family: str
    residuals: dict[str, float]
    max_residual: float
    tol: float
    passed: bool
    bruteforce_max_m2: float
    consistent: bool


def _im(z: complex) -> float:
    return float(np.imag(z))


def _symmetric_residuals(c: SymmetricBilocalCoefficients) -> dict[str, float]:
    l = np.asarray(c.l, dtype=complex)
    a = np.asarray(c.a, dtype=complex)
    b = np.asarray(c.b, dtype=complex)
    l0 = c.l0
    res: dict[str, float] = {}

    def iml(u, v):
        return _im(np.conj(u) * v)

    # diag-coupling conditions, one per alpha with (beta, gamma) the others
    for al in range(3):
        be, ga = [i for i in range(3) if i != al]
        lhs = iml(l[al], a[al])
        rhs = -0.5 * (iml(l[al], a[be]) + iml(l[al], a[ga]) + iml(l[be], b[ga]) + iml(l[ga], b[be]))
        res[f"la[{al}]"] = abs(lhs - rhs)

    for al in range(3):
        for be in range(3):
            # l-l conditions
            rhs = 0.0
            for ga in range(3):
                rhs += 0.25 * _EPS[al, be, ga] * (
                    iml(l[ga], a[al]) + iml(l[ga], a[be]) - iml(l[al], b[be]) - iml(l[be], b[al])
                )
            res[f"ll[{al}{be}]"] = abs(iml(l[al], l[be]) - rhs)

            # a-a conditions
            rhs = 0.0
            for ga in range(3):
                rhs += 2.0 * _EPS[al, be, ga] * (iml(l[al], b[al]) + iml(l[be], b[be]))
            res[f"aa[{al}{be}]"] = abs(iml(a[al], a[be]) - rhs)

            # a-b conditions
            rhs = 0.0
            for ga in range(3):
                rhs += -2.0 * _EPS[al, be, ga] * iml(l[al], b[ga])
            if al == be:
                for ga in range(3):
                    for de in range(3):
                        rhs -= _EPS[al, ga, de] * (iml(l[al], a[ga]) + iml(l[ga], b[de]))
            res[f"ab[{al}{be}]"] = abs(iml(a[al], b[be]) - rhs)

            # b-b conditions
            rhs = 0.0
            for ga in range(3):
                rhs += _EPS[al, be, ga] * (
                    iml(l[ga], a[al]) + iml(l[ga], a[be]) + iml(l[al], b[be]) + iml(l[be], b[al])
                )
            res[f"bb[{al}{be}]"] = abs(iml(b[al], b[be]) - rhs)

    # conditions tied to the identity coefficient
    for al in range(3):
        rhs = 0.0
        for be in range(3):
            for ga in range(3):
                rhs += -0.5 * _EPS[al, be, ga] * iml(l[be], b[be])
        res[f"l0a[{al}]"] = abs(l0 * _im(a[al]) - rhs)

        rhs = 0.0
        for be in range(3):
            for ga in range(3):
                rhs += -0.25 * _EPS[al, be, ga] * (iml(l[al], a[be]) - iml(l[be], b[ga]))
        res[f"l0b[{al}]"] = abs(l0 * _im(b[al]) - rhs)

    return res


def _antisymmetric_residuals(c: AntisymmetricBilocalCoefficients) -> dict[str, float]:
    l = np.asarray(c.l, dtype=complex)
    k = np.asarray(c.k, dtype=complex)
    res: dict[str, float] = {}
    for al in range(3):
        for be in range(3):
            res[f"lk[{al}{be}]"] = abs(_im(np.conj(l[al]) * k[be]))
            if al < be:
                res[f"ll[{al}{be}]"] = abs(_im(np.conj(l[al]) * l[be]))
                res[f"kk[{al}{be}]"] = abs(_im(np.conj(k[al]) * k[be]))
    return res


def bruteforce_max_m2(spec: JumpOperatorSpec) -> float:
    """Largest two-spin coefficient over all single-spin targets."""
    worst = 0.0
    for site in ("x", "y"):
        for a in range(3):
            exp = bilocal_adjoint_action(spec, two_site_basis_op(site, a))
            worst = max(worst, float(np.max(np.abs(exp.m2))))
    return worst


def _finish_report(family: str, spec: JumpOperatorSpec, residuals: dict[str, float],
                   tol: float) -> ClosureReport:
    max_res = max(residuals.values())
    passed = max_res < tol
    bf = bruteforce_max_m2(spec)
    bf_passed = bf < tol
    consistent = passed == bf_passed
    if not consistent:
        # Disagreement in the crossover band around tol is an expected
        # basis-change effect; a decisive disagreement is a hard error.
        decisive = (max_res < tol and bf > 10 * tol) or (bf < tol and max_res > 10 * tol)
        if decisive:
            raise ClosureCrossCheckError(
                f"{family} closure verdict (max residual {max_res:.3e}) contradicts "
                f"brute-force two-spin coefficients (max {bf:.3e}) at tol {tol:.1e}"
            )
    return ClosureReport(
        family=family,
        residuals=residuals,
        max_residual=max_res,
        tol=tol,
        passed=passed,
        bruteforce_max_m2=bf,
        consistent=consistent,
    )


def check_closure_symmetric(c: SymmetricBilocalCoefficients,
                            tol: float = DEFAULT_CLOSURE_TOL) -> ClosureReport:
    """Evaluate all symmetric-family closure conditions and cross-check."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    spec = JumpOperatorSpec("bilocal_symmetric", c)
    return _finish_report("symmetric", spec, _symmetric_residuals(c), tol)


def check_closure_antisymmetric(c: AntisymmetricBilocalCoefficients,
                                tol: float = DEFAULT_CLOSURE_TOL) -> ClosureReport:
    """Evaluate all antisymmetric-family closure conditions and cross-check."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    spec = JumpOperatorSpec("bilocal_antisymmetric", c)
    return _finish_report("antisymmetric", spec, _antisymmetric_residuals(c), tol)


def check_closure(spec: JumpOperatorSpec, tol: float = DEFAULT_CLOSURE_TOL) -> ClosureReport:
    if spec.kind == "bilocal_symmetric":
        return check_closure_symmetric(spec.coefficients, tol)
    if spec.kind == "bilocal_antisymmetric":
        return check_closure_antisymmetric(spec.coefficients, tol)
    raise ValueError(f"closure checking requires a coefficient-form bilocal spec, got {spec.kind!r}")


def check_hamiltonian_closure(h: np.ndarray, exchange: np.ndarray | None,
                              tol: float = DEFAULT_CLOSURE_TOL) -> bool:
    """True iff all two-site exchange couplings vanish within tolerance.

    Single-site field terms never generate higher-order correlations; any
    nonzero exchange coupling does, so it is rejected for generator
    construction.
    """
    np.asarray(h, dtype=float).reshape(3)
    if exchange is None:
        return True
    J = np.asarray(exchange, dtype=float).reshape(3, 3)
    return bool(np.max(np.abs(J)) < tol)


# ---------------------------------------------------------------------------
# Built-in operators
# ---------------------------------------------------------------------------

def pair_exchange_matrix() -> np.ndarray:
    """The symmetrizing pair operator (1/2)(s_x+ + s_y+)(s_x- - s_y-) as 4x4.

    Maps the two-site singlet onto the triplet t0, annihilates all triplet
    states, conserves total S^3 and squares to zero.
    """
    sp = SPIN[0] + 1.0j * SPIN[1]
    sm = SPIN[0] - 1.0j * SPIN[1]
    sxp, syp = np.kron(sp, ID2), np.kron(ID2, sp)
    sxm, sym = np.kron(sm, ID2), np.kron(ID2, sm)
    return 0.5 * (sxp + syp) @ (sxm - sym)


def singlet_projector_matrix() -> np.ndarray:
    m = 0.25 * ID4.copy()
    for a in range(3):
        m -= _BASIS_X[a] @ _BASIS_Y[a]
    return m


def triplet_projector_matrix() -> np.ndarray:
    m = 0.75 * ID4.copy()
    for a in range(3):
        m += _BASIS_X[a] @ _BASIS_Y[a]
    return m


def builtin(name: str, rate: float = 1.0) -> JumpOperatorSpec:
    """Canonical coefficient form of the built-in jump operators.

    Q is returned in the antisymmetric parametrization with the global phase
    fixed so the largest coefficient (k^3) is real and positive; the
    represented matrix is then -i times the conventional symmetrizer, which
    generates the identical dissipator.  Construction is verified against
    the exact 4x4 matrices.
    """
    if name == "Q":
        c = AntisymmetricBilocalCoefficients(l=(0.0, 0.0, -0.5), k=(0.0, 0.0, 1.0))
        spec = JumpOperatorSpec("bilocal_antisymmetric", c, rate)
        target = -1.0j * pair_exchange_matrix()
        if not np.allclose(spec.matrix(), target, atol=1e-14):
            raise AssertionError("builtin Q coefficients do not reproduce the exact matrix")
        return spec
    if name == "P_singlet":
        c = SymmetricBilocalCoefficients(
            l0=0.25, l=(0.0, 0.0, 0.0), a=(-1.0, -1.0, -1.0), b=(0.0, 0.0, 0.0)
        )
        spec = JumpOperatorSpec("bilocal_symmetric", c, rate)
        if not np.allclose(spec.matrix(), singlet_projector_matrix(), atol=1e-14):
            raise AssertionError("builtin P_singlet coefficients do not reproduce the projector")
        return spec
    if name == "P_triplet":
        c = SymmetricBilocalCoefficients(
            l0=0.75, l=(0.0, 0.0, 0.0), a=(1.0, 1.0, 1.0), b=(0.0, 0.0, 0.0)
        )
        spec = JumpOperatorSpec("bilocal_symmetric", c, rate)
        if not np.allclose(spec.matrix(), triplet_projector_matrix(), atol=1e-14):
            raise AssertionError("builtin P_triplet coefficients do not reproduce the projector")
        return spec
    if name == "s_plus":
        return JumpOperatorSpec("local", LocalJumpCoefficients(0.0, (1.0, 1.0j, 0.0)), rate)
    if name == "s_minus":
        return JumpOperatorSpec("local", LocalJumpCoefficients(0.0, (1.0, -1.0j, 0.0)), rate)
    raise ValueError(f"unknown builtin operator {name!r}")


def spec_from_config(doc: dict) -> JumpOperatorSpec:
    """Parse a jump spec from config form {kind, coefficients, rate}.

    Complex coefficients are given as [re, im] pairs; builtin names are
    accepted via {'kind': 'builtin', 'name': ...}.
    """
    kind = doc["kind"]
    rate = float(doc.get("rate", 1.0))
    if kind == "builtin":
        return builtin(doc["name"], rate)

    def cplx(v):
        if isinstance(v, (list, tuple)):
            return complex(v[0], v[1])
        return complex(v)

    coeffs = doc["coefficients"]
    if kind == "local":
        c = LocalJumpCoefficients(float(coeffs["l0"]), tuple(cplx(v) for v in coeffs["l"]))
    elif kind == "bilocal_symmetric":
        c = SymmetricBilocalCoefficients(
            float(coeffs["l0"]),
            tuple(cplx(v) for v in coeffs["l"]),
            tuple(cplx(v) for v in coeffs["a"]),
            tuple(cplx(v) for v in coeffs["b"]),
        )
    elif kind == "bilocal_antisymmetric":
        c = AntisymmetricBilocalCoefficients(
            tuple(cplx(v) for v in coeffs["l"]),
            tuple(cplx(v) for v in coeffs["k"]),
        )
    else:
        raise ValueError(f"unknown jump kind {kind!r} in config")
    return JumpOperatorSpec(kind, c, rate)
