"""Equations of motion implied by a triple, and their integration.

Master equations act on the vectorized density matrix (row-major
``vec``, so ``vec(A rho B) = kron(A, B^T) vec(rho)``).  Builders:

* ``liouvillian``            -- vacuum-input Lindblad generator
* ``liouvillian_coherent``   -- coherent drive on one designated port
* ``liouvillian_gaussian``   -- stationary Gaussian (thermal/squeezed) input
* ``fock_hierarchy``         -- coupled generalized-state equations for
                                Fock-state wavepacket inputs

plus Heisenberg-picture coefficient extraction, input-output structure,
an adaptive/fixed-step integrator with trace and truncation guards, and
a null-space steady-state solver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .envelopes import ConstantAmplitude, Envelope, as_envelope
from .errors import (
    ConstructionError,
    SteadyStateError,
    TraceDriftError,
    TruncationGuardError,
    UnsupportedConfigurationError,
    ValidationError,
)
from .hilbert import (
    TOL_OP,
    TRUNC_GUARD,
    LabeledSpace,
    Operator,
    commutator,
    make_elementary,
)
from .slh import SLHTriple

#: tolerance on |tr(rho) - 1| along a trajectory
TOL_TRACE = 1e-8

#: tolerance on the most negative eigenvalue of rho
TOL_POSITIVITY = 1e-8

#: default integrator tolerances (embedded Runge-Kutta 4(5))
DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-8


def _conj_coeff(f):
    if f is None:
        return None
    return lambda t, f=f: np.conj(f(t))


def _mul_coeffs(f, g):
    if f is None:
        return g
    if g is None:
        return f
    return lambda t, f=f, g=g: f(t) * g(t)


# --------------------------------------------------------------------------
# states


@dataclass
class DensityState:
    """Density matrix plus its time stamp; validated on construction."""

    rho: Operator
    time: float = 0.0

    def __post_init__(self):
        m = self.rho.constant()
        d = self.rho.space.total_dim
        if m.shape != (d, d):
            raise ValidationError("rho must be square on its space")
        tr = complex(m.diagonal().sum())
        if abs(tr - 1.0) > TOL_TRACE:
            raise ValidationError(f"trace(rho) = {tr:.10g}, expected 1 within {TOL_TRACE}")
        herm = (self.rho - self.rho.dag()).max_abs()
        if herm > TOL_OP:
            raise ValidationError(f"rho is not Hermitian: residual {herm:.3e}")
        w = np.linalg.eigvalsh(m.toarray())
        if w.min() < -TOL_POSITIVITY:
            raise ValidationError(f"rho has negative eigenvalue {w.min():.3e}")

    def expect(self, op: Operator) -> complex:
        x = op.embed(self.rho.space) if op.space != self.rho.space else op
        return complex((x.constant() @ self.rho.constant()).diagonal().sum())


@dataclass
class GaussianEnv:
    """Stationary Gaussian input field: thermal photons N, squeezing
    correlation M, optional mean-field envelope alpha."""

    N: float
    M: complex = 0.0
    alpha: object = None

    def __post_init__(self):
        self.N = float(self.N)
        self.M = complex(self.M)
        if self.N < 0:
            raise ValidationError(f"N >= 0 violated: N = {self.N}")
        slack = self.N * (self.N + 1.0) - abs(self.M) ** 2
        if slack < -TOL_OP:
            raise ValidationError(
                f"N(N+1) >= |M|^2 violated: N(N+1) = {self.N * (self.N + 1):.12g}, |M|^2 = {abs(self.M) ** 2:.12g}"
            )
        if self.alpha is not None and not isinstance(self.alpha, Envelope):
            self.alpha = as_envelope(self.alpha)

    @staticmethod
    def squeezing(r: float, phi: float = 0.0, n_th: float = 0.0) -> "GaussianEnv":
        """Parameterize by squeeze factor r, angle phi, thermal photons n_th."""
        N = math.cosh(2 * r) * n_th + math.sinh(r) ** 2
        M = np.exp(-2j * phi) * math.sinh(2 * r) * (n_th + 0.5)
        return GaussianEnv(N=N, M=M)

    # (N, M) <-> (r, phi, n_th): with u = n_th + 1/2,
    # N + 1/2 = u cosh(2r) and |M| = u sinh(2r), so u^2 = (N+1/2)^2 - |M|^2.

    @property
    def thermal_occupation(self) -> float:
        u = math.sqrt((self.N + 0.5) ** 2 - abs(self.M) ** 2)
        return u - 0.5

    @property
    def squeeze_factor(self) -> float:
        u = math.sqrt((self.N + 0.5) ** 2 - abs(self.M) ** 2)
        return 0.5 * math.acosh((self.N + 0.5) / u)

    @property
    def squeeze_angle(self) -> float:
        if self.M == 0:
            return 0.0
        return -0.5 * math.atan2(self.M.imag, self.M.real)


# --------------------------------------------------------------------------
# superoperators


class Superoperator:
    """Matrix acting on vec(rho), possibly with scalar-envelope terms."""

    __slots__ = ("space", "static", "terms")

    def __init__(self, space: LabeledSpace, static=None, terms=()):
        d2 = space.total_dim**2
        if static is None:
            static = sp.csr_matrix((d2, d2), dtype=np.complex128)
        static = sp.csr_matrix(static, dtype=np.complex128)
        if static.shape != (d2, d2):
            raise ConstructionError(f"superoperator shape {static.shape} != ({d2}, {d2})")
        self.space = space
        self.static = static
        self.terms = tuple(terms)

    @property
    def is_static(self) -> bool:
        return not self.terms

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        if self.is_static:
            return self.static
        out = self.static.copy()
        for coeff, m in self.terms:
            out = out + complex(coeff(t)) * m
        return sp.csr_matrix(out)

    def apply(self, y: np.ndarray, t: float = 0.0) -> np.ndarray:
        out = self.static @ y
        for coeff, m in self.terms:
            out = out + complex(coeff(t)) * (m @ y)
        return out

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if self.space != other.space:
            raise ConstructionError("superoperators live on different spaces")
        return Superoperator(self.space, self.static + other.static, self.terms + other.terms)

    def __mul__(self, z: complex) -> "Superoperator":
        z = complex(z)
        return Superoperator(
            self.space, z * self.static, tuple((c, z * m) for c, m in self.terms)
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def rhs(self) -> Callable[[float, np.ndarray], np.ndarray]:
        return lambda t, y: self.apply(y, t)


def vectorize(rho: Operator | np.ndarray) -> np.ndarray:
    m = rho.constant().toarray() if isinstance(rho, Operator) else np.asarray(rho)
    return np.asarray(m, dtype=np.complex128).reshape(-1)


def unvectorize(y: np.ndarray, space: LabeledSpace) -> Operator:
    d = space.total_dim
    return Operator(space, np.asarray(y, dtype=np.complex128).reshape(d, d))


def _sandwich(space: LabeledSpace, A: Operator, B: Operator) -> Superoperator:
    """Superoperator of rho -> A rho B, distributing over envelope terms."""
    A = A.embed(space)
    B = B.embed(space)
    a_parts = [(None, A.static)] + list(A.terms)
    b_parts = [(None, B.static)] + list(B.terms)
    static = None
    terms = []
    for ca, ma in a_parts:
        for cb, mb in b_parts:
            mat = sp.kron(ma, mb.T, format="csr")
            if not mat.nnz:
                continue
            coeff = _mul_coeffs(ca, cb)
            if coeff is None:
                static = mat if static is None else static + mat
            else:
                terms.append((coeff, mat))
    return Superoperator(space, static, tuple(terms))


def spre(space: LabeledSpace, A: Operator) -> Superoperator:
    A = A.embed(space)
    eye = sp.identity(space.total_dim, dtype=np.complex128, format="csr")
    terms = []
    static = sp.kron(A.static, eye, format="csr")
    for c, m in A.terms:
        terms.append((c, sp.kron(m, eye, format="csr")))
    return Superoperator(space, static, tuple(terms))


def spost(space: LabeledSpace, B: Operator) -> Superoperator:
    B = B.embed(space)
    eye = sp.identity(space.total_dim, dtype=np.complex128, format="csr")
    static = sp.kron(eye, B.static.T, format="csr")
    terms = [(c, sp.kron(eye, m.T, format="csr")) for c, m in B.terms]
    return Superoperator(space, static, tuple(terms))


def lindblad_dissipator(space: LabeledSpace, L: Operator) -> Superoperator:
    """D[L] rho = L rho L^ - (L^L rho + rho L^L)/2."""
    LdL = L.dag() * L
    return _sandwich(space, L, L.dag()) + (-0.5) * spre(space, LdL) + (-0.5) * spost(space, LdL)


def liouvillian(g: SLHTriple) -> Superoperator:
    """Vacuum-input master equation generator; S never enters."""
    space = g.space
    out = (-1j) * (spre(space, g.H) + (-1.0) * spost(space, g.H))
    for L in g.L:
        out = out + lindblad_dissipator(space, L)
    return out


def _static_or_raise(op: Operator, what: str) -> Operator:
    if not op.is_static:
        raise UnsupportedConfigurationError(f"{what} must be time independent here")
    return op


def liouvillian_coherent(g: SLHTriple, alpha, port: int = 1) -> Superoperator:
    """Master equation with a coherent drive alpha(t) on one input port.

    Adds alpha [S_:j rho, L^] + alpha* [L, rho S_:j^] + |alpha|^2
    (S_:j rho S_:j^ - rho) to the vacuum generator; identical to
    cascading the displacement source into the designated port.
    """
    if not 1 <= port <= g.n_ports:
        raise ValidationError(f"port {port} out of range 1..{g.n_ports}")
    env = alpha if isinstance(alpha, Envelope) else as_envelope(alpha)
    space = g.space
    d = space.total_dim
    j = port - 1
    out = liouvillian(g)
    eye = sp.identity(d, dtype=np.complex128, format="csr")
    m_alpha = None  # multiplies alpha(t):  [S_:j rho, L^]
    m_conj = None   # multiplies alpha*(t): [L, rho S_:j^]
    for i in range(g.n_ports):
        Sij = _static_or_raise(g.S[i, j], "scattering entry").embed(space).constant()
        Li = _static_or_raise(g.L[i], "coupling fed by a coherent drive").embed(space).constant()
        t1 = sp.kron(Sij, Li.conj(), format="csr") - sp.kron(Li.conj().T @ Sij, eye, format="csr")
        t2 = sp.kron(Li, Sij.conj(), format="csr") - sp.kron(eye, (Sij.conj().T @ Li).T, format="csr")
        m_alpha = t1 if m_alpha is None else m_alpha + t1
        m_conj = t2 if m_conj is None else m_conj + t2
    gauge = None
    for k in range(g.n_ports):
        Skj = g.S[k, j].embed(space).constant()
        m = sp.kron(Skj, Skj.conj(), format="csr")
        gauge = m if gauge is None else gauge + m
    m_gauge = sp.csr_matrix(gauge - sp.identity(d * d, dtype=np.complex128, format="csr"))
    if isinstance(env, ConstantAmplitude):
        a0 = env.value
        static = a0 * m_alpha + np.conj(a0) * m_conj + abs(a0) ** 2 * m_gauge
        return out + Superoperator(space, static)
    terms = (
        (env, m_alpha),
        (_conj_coeff(env), m_conj),
        (lambda t: abs(env(t)) ** 2, m_gauge),
    )
    return out + Superoperator(space, None, terms)


def _scalar_scattering_phase(g: SLHTriple) -> complex:
    if g.n_ports != 1:
        raise UnsupportedConfigurationError(
            "Gaussian input requires a single-port component"
        )
    s = g.S[0, 0].constant().toarray()
    d = g.space.total_dim
    val = np.trace(s) / d
    if np.abs(s - val * np.eye(d)).max() > TOL_OP or abs(abs(val) - 1.0) > TOL_OP:
        raise UnsupportedConfigurationError(
            "Gaussian input is only compatible with a scalar-phase scattering entry"
        )
    return complex(val)


def liouvillian_gaussian(g: SLHTriple, env: GaussianEnv) -> Superoperator:
    """Master equation for a stationary Gaussian input (mean alpha(t),
    thermal occupation N, squeezing correlation M)."""
    _scalar_scattering_phase(g)
    space = g.space
    L = _static_or_raise(g.L[0], "coupling driven by a Gaussian field")
    out = (-1j) * (spre(space, g.H) + (-1.0) * spost(space, g.H))
    out = out + (env.N + 1.0) * lindblad_dissipator(space, L)
    if env.N:
        out = out + env.N * lindblad_dissipator(space, L.dag())
    if env.M:
        for z, X in ((env.M, L.dag()), (np.conj(env.M), L)):
            X2 = (X * X).embed(space).constant()
            Xm = X.embed(space).constant()
            eye = sp.identity(space.total_dim, dtype=np.complex128, format="csr")
            dbl = sp.kron(X2, eye) - 2.0 * sp.kron(Xm, Xm.T) + sp.kron(eye, X2.T)
            out = out + Superoperator(space, z * dbl)
    if env.alpha is not None:
        a = env.alpha
        Lm = L.embed(space).constant()
        eye = sp.identity(space.total_dim, dtype=np.complex128, format="csr")
        m_conj = sp.kron(Lm, eye, format="csr") - sp.kron(eye, Lm.T, format="csr")
        m_alpha = -(sp.kron(Lm.conj().T, eye, format="csr") - sp.kron(eye, Lm.conj(), format="csr"))
        if isinstance(a, ConstantAmplitude):
            out = out + Superoperator(space, np.conj(a.value) * m_conj + a.value * m_alpha)
        else:
            out = out + Superoperator(space, None, ((_conj_coeff(a), m_conj), (a, m_alpha)))
    return out


# --------------------------------------------------------------------------
# Heisenberg picture and input-output structure


@dataclass
class HeisenbergCoefficients:
    """Coefficient operators of dX = drift dt + sum_j dB-terms + gauge terms."""

    drift: Operator
    dB: list[Operator]
    dB_dag: list[Operator]
    dLambda: np.ndarray  # (n, n) object array


def heisenberg_coefficients(g: SLHTriple, X: Operator) -> HeisenbergCoefficients:
    space = g.space
    X = X.embed(space)
    n = g.n_ports
    drift = (-1j) * commutator(X, g.H)
    for L in g.L:
        drift = drift + L.dag() * X * L - 0.5 * (L.dag() * L * X + X * L.dag() * L)
    dB = []
    dB_dag = []
    for jj in range(n):
        acc_b = None
        acc_bd = None
        for i in range(n):
            term_b = commutator(g.L[i].dag(), X) * g.S[i, jj]
            term_bd = g.S[i, jj].dag() * commutator(X, g.L[i])
            acc_b = term_b if acc_b is None else acc_b + term_b
            acc_bd = term_bd if acc_bd is None else acc_bd + term_bd
        dB.append(acc_b.simplify())
        dB_dag.append(acc_bd.simplify())
    dLambda = np.empty((n, n), dtype=object)
    for i in range(n):
        for jj in range(n):
            acc = None
            for k in range(n):
                term = g.S[k, i].dag() * X * g.S[k, jj]
                acc = term if acc is None else acc + term
            if i == jj:
                acc = acc - X
            dLambda[i, jj] = acc.simplify()
    return HeisenbergCoefficients(drift.simplify(), dB, dB_dag, dLambda)


@dataclass
class GaugeOutputTerm:
    """Operator data of one entry of the output gauge-process increment."""

    dt: Operator
    dB_dag: list[Operator]
    dB: list[Operator]
    dLambda: dict  # (k, l) -> (left, right) operator pair


@dataclass
class OutputRelations:
    """dB_out = S dB + L dt, plus the four-term gauge-output structure."""

    S: np.ndarray
    L: list[Operator]

    def gauge_coefficient(self, i: int, j: int) -> GaugeOutputTerm:
        """Structure of dLambda_out[i, j]; indices are 1-based ports."""
        n = len(self.L)
        i -= 1
        j -= 1
        dt = self.L[i].dag() * self.L[j]
        db_dag = [self.S[i, k].dag() * self.L[j] for k in range(n)]
        db = [self.L[i].dag() * self.S[j, k] for k in range(n)]
        dlam = {
            (k + 1, l + 1): (self.S[i, k].dag(), self.S[j, l])
            for k in range(n)
            for l in range(n)
        }
        return GaugeOutputTerm(dt, db_dag, db, dlam)


def output_relations(g: SLHTriple) -> OutputRelations:
    return OutputRelations(S=g.S, L=list(g.L))


# --------------------------------------------------------------------------
# Fock-state hierarchy


@dataclass
class FockHierarchyState:
    """Generalized state matrices rho_{m,n} for a Fock-driven run."""

    blocks: dict
    coefficients: np.ndarray
    envelope: Envelope
    time: float = 0.0

    @property
    def n_max(self) -> int:
        return self.coefficients.shape[0] - 1

    def physical_state(self) -> Operator:
        """sum c*_{m,n} rho_{m,n}^dag, the state all expectations trace against."""
        acc = None
        for (m, n), block in self.blocks.items():
            c = self.coefficients[m, n]
            if c == 0:
                continue
            term = np.conj(c) * block.dag()
            acc = term if acc is None else acc + term
        return acc

    def hermiticity_residual(self) -> float:
        worst = 0.0
        for (m, n), block in self.blocks.items():
            other = self.blocks[(n, m)]
            worst = max(worst, (block - other.dag()).max_abs())
        return worst

    def expect(self, X: Operator) -> complex:
        """E[X] = sum_{m,n} c*_{m,n} tr(rho_{m,n}^dag X)."""
        total = 0.0 + 0.0j
        for (m, n), block in self.blocks.items():
            c = self.coefficients[m, n]
            if c == 0:
                continue
            Xe = X.embed(block.space)
            total += np.conj(c) * complex(
                (block.dag().constant() @ Xe.constant()).diagonal().sum()
            )
        return total


class FockHierarchy:
    """Coupled master equations for an input wavepacket in a Fock mixture.

    ``field_coeffs`` is either an integer N (pure N-photon input) or the
    (N+1)x(N+1) coefficient matrix c_{m,n} of the field state in the
    wavepacket Fock basis.  The hierarchy couples block (m, n) downward
    to (m-1, n), (m, n-1) and (m-1, n-1) only.
    """

    def __init__(self, g: SLHTriple, envelope: Envelope, field_coeffs, driven_port: int = 1):
        if not 1 <= driven_port <= g.n_ports:
            raise ValidationError(f"driven port {driven_port} out of range 1..{g.n_ports}")
        envelope.check_normalized()
        if not g.is_static():
            raise UnsupportedConfigurationError("the Fock hierarchy needs a static triple")
        if isinstance(field_coeffs, (int, np.integer)):
            n = int(field_coeffs)
            c = np.zeros((n + 1, n + 1), dtype=complex)
            c[n, n] = 1.0
        else:
            c = np.array(field_coeffs, dtype=complex)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise ValidationError("field_coeffs must be a square matrix")
            if abs(np.trace(c) - 1.0) > TOL_TRACE:
                raise ValidationError(f"field coefficients must have unit trace, got {np.trace(c):.8g}")
        self.g = g
        self.envelope = envelope
        self.c = c
        self.n_max = c.shape[0] - 1
        self.driven_port = driven_port
        self.space = g.space
        d = self.space.total_dim
        self._d = d
        self._nblk = (self.n_max + 1) ** 2

        j = driven_port - 1
        eye = sp.identity(d, dtype=np.complex128, format="csr")
        m_xi = None   # sqrt(m) xi(t) [S rho, L^]
        m_xic = None  # sqrt(n) xi*(t) [L, rho S^]
        for i in range(g.n_ports):
            Sij = g.S[i, j].embed(self.space).constant()
            Li = g.L[i].embed(self.space).constant()
            t1 = sp.kron(Sij, Li.conj(), format="csr") - sp.kron(Li.conj().T @ Sij, eye, format="csr")
            t2 = sp.kron(Li, Sij.conj(), format="csr") - sp.kron(eye, (Sij.conj().T @ Li).T, format="csr")
            m_xi = t1 if m_xi is None else m_xi + t1
            m_xic = t2 if m_xic is None else m_xic + t2
        gauge = None
        for k in range(g.n_ports):
            Skj = g.S[k, j].embed(self.space).constant()
            m = sp.kron(Skj, Skj.conj(), format="csr")
            gauge = m if gauge is None else gauge + m
        m_abs2 = gauge - sp.identity(d * d, dtype=np.complex128, format="csr")

        nb = self.n_max + 1
        L0 = liouvillian(g).static

        def block_unit(mi, ni, mj, nj):
            e = sp.csr_matrix(
                ([1.0], ([mi * nb + ni], [mj * nb + nj])), shape=(nb * nb, nb * nb)
            )
            return e

        big0 = sp.kron(sp.identity(nb * nb, format="csr"), L0, format="csr")
        c_xi = None
        c_xic = None
        c_abs2 = None
        for m in range(nb):
            for n in range(nb):
                if m > 0:
                    t = math.sqrt(m) * sp.kron(block_unit(m, n, m - 1, n), m_xi, format="csr")
                    c_xi = t if c_xi is None else c_xi + t
                if n > 0:
                    t = math.sqrt(n) * sp.kron(block_unit(m, n, m, n - 1), m_xic, format="csr")
                    c_xic = t if c_xic is None else c_xic + t
                if m > 0 and n > 0:
                    t = math.sqrt(m * n) * sp.kron(block_unit(m, n, m - 1, n - 1), m_abs2, format="csr")
                    c_abs2 = t if c_abs2 is None else c_abs2 + t

        terms = []
        if c_xi is not None:
            terms.append((lambda t: envelope(t), c_xi))
            terms.append((lambda t: np.conj(envelope(t)), c_xic))
            terms.append((lambda t: abs(envelope(t)) ** 2, c_abs2))
        self._static = big0
        self._terms = tuple(terms)

        # flux ingredients: sum_i L_i^ L_i, sum_i S_ij^ L_i, sum_i L_i^ S_ij
        LdL = None
        SdL = None
        LdS = None
        for i in range(g.n_ports):
            Li = g.L[i]
            Sij = g.S[i, j]
            t0 = Li.dag() * Li
            t1 = Sij.dag() * Li
            t2 = Li.dag() * Sij
            LdL = t0 if LdL is None else LdL + t0
            SdL = t1 if SdL is None else SdL + t1
            LdS = t2 if LdS is None else LdS + t2
        self._flux_LdL = LdL
        self._flux_SdL = SdL
        self._flux_LdS = LdS

    # -- state handling ------------------------------------------------------

    def initial_state(self, rho_sys: Operator) -> FockHierarchyState:
        """Diagonal blocks start in the system state, off-diagonal at zero."""
        rho_sys = rho_sys.embed(self.space)
        blocks = {}
        zero = Operator(self.space)
        for m in range(self.n_max + 1):
            for n in range(self.n_max + 1):
                blocks[(m, n)] = rho_sys if m == n else zero
        return FockHierarchyState(blocks, self.c, self.envelope, 0.0)

    def pack(self, state: FockHierarchyState) -> np.ndarray:
        nb = self.n_max + 1
        d2 = self._d * self._d
        y = np.zeros(nb * nb * d2, dtype=np.complex128)
        for (m, n), block in state.blocks.items():
            y[(m * nb + n) * d2 : (m * nb + n + 1) * d2] = vectorize(block)
        return y

    def unpack(self, y: np.ndarray, t: float = 0.0) -> FockHierarchyState:
        nb = self.n_max + 1
        d2 = self._d * self._d
        blocks = {}
        for m in range(nb):
            for n in range(nb):
                seg = y[(m * nb + n) * d2 : (m * nb + n + 1) * d2]
                blocks[(m, n)] = unvectorize(seg, self.space)
        return FockHierarchyState(blocks, self.c, self.envelope, t)

    def rhs(self) -> Callable[[float, np.ndarray], np.ndarray]:
        def fn(t, y):
            out = self._static @ y
            for coeff, m in self._terms:
                out = out + complex(coeff(t)) * (m @ y)
            return out

        return fn

    # -- derived quantities ----------------------------------------------------

    def derivative(self, state: FockHierarchyState, t: float) -> FockHierarchyState:
        return self.unpack(self.rhs()(t, self.pack(state)), t)

    def mean_photon_flux(self, state: FockHierarchyState, t: float) -> float:
        """d E[Lambda_out]/dt combined over all blocks with the field
        coefficients; real up to numerical noise for physical states."""
        xi = self.envelope(t)
        total = 0.0 + 0.0j

        def emn(m, n, op):
            block = state.blocks[(m, n)]
            return complex(
                (block.dag().constant() @ op.embed(self.space).constant()).diagonal().sum()
            )

        for m in range(self.n_max + 1):
            for n in range(self.n_max + 1):
                c = self.c[m, n]
                if c == 0:
                    continue
                val = emn(m, n, self._flux_LdL)
                if m > 0:
                    val += math.sqrt(m) * np.conj(xi) * emn(m - 1, n, self._flux_SdL)
                if n > 0:
                    val += math.sqrt(n) * xi * emn(m, n - 1, self._flux_LdS)
                if m > 0 and n > 0:
                    val += math.sqrt(m * n) * abs(xi) ** 2
                total += np.conj(c) * val
        return float(np.real(total))


def fock_hierarchy(g: SLHTriple, envelope: Envelope, field_coeffs, driven_port: int = 1) -> FockHierarchy:
    return FockHierarchy(g, envelope, field_coeffs, driven_port)


# --------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, dim) complex


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_span: tuple[float, float],
    t_eval: Sequence[float] | None = None,
    method: str = "adaptive",
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    dt: float | None = None,
    guard: Callable[[float, np.ndarray], None] | None = None,
) -> Trajectory:
    """March the ODE and sample at ``t_eval`` (guards run at samples).

    ``adaptive`` uses an embedded Runge-Kutta 4(5) pair with the given
    tolerances; ``fixed`` uses classic RK4 with step ``dt`` (or close to
    it, adjusted per segment) and is bitwise reproducible.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValidationError(f"t_span start must precede end, got ({t0}, {t1})")
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 101)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval[0] != t0:
        t_eval = np.concatenate(([t0], t_eval))
    y = np.asarray(y0, dtype=np.complex128).copy()
    states = [y.copy()]
    if guard is not None:
        guard(t0, y)

    if method == "adaptive":
        for a, b in zip(t_eval[:-1], t_eval[1:]):
            sol = solve_ivp(
                rhs, (a, b), y, method="RK45", rtol=rtol, atol=atol, dense_output=False
            )
            if not sol.success:
                raise ValidationError(f"integrator failed on [{a}, {b}]: {sol.message}")
            y = sol.y[:, -1]
            states.append(y.copy())
            if guard is not None:
                guard(b, y)
    elif method == "fixed":
        if dt is None or dt <= 0:
            raise ValidationError("fixed-step integration needs dt > 0")
        for a, b in zip(t_eval[:-1], t_eval[1:]):
            steps = max(1, int(math.ceil((b - a) / dt - 1e-12)))
            h = (b - a) / steps
            t = a
            for _ in range(steps):
                k1 = rhs(t, y)
                k2 = rhs(t + h / 2, y + (h / 2) * k1)
                k3 = rhs(t + h / 2, y + (h / 2) * k2)
                k4 = rhs(t + h, y + h * k3)
                y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
            states.append(y.copy())
            if guard is not None:
                guard(b, y)
    else:
        raise ValidationError(f"unknown integration method {method!r}")
    return Trajectory(np.asarray(t_eval), np.asarray(states))


@dataclass
class DensityTrajectory:
    times: np.ndarray
    space: LabeledSpace
    states: list[Operator]
    expectations: dict = field(default_factory=dict)

    def final(self) -> DensityState:
        return DensityState(self.states[-1], float(self.times[-1]))

    def expect(self, op: Operator) -> np.ndarray:
        x = op.embed(self.space).constant()
        return np.array(
            [complex((x @ s.constant()).diagonal().sum()) for s in self.states]
        )


def _density_guard(space: LabeledSpace, oscillator_labels, truncation_guard, check_positivity):
    d = space.total_dim
    projectors = []
    labels = list(oscillator_labels) if oscillator_labels is not None else [
        lbl for lbl, dim in space.factors if dim > 2
    ]
    for lbl in labels:
        dim = space.dim_of(lbl)
        proj = make_elementary("projector", lbl, dim, dim - 1, dim - 1).embed(space)
        projectors.append((lbl, proj.constant()))

    def guard(t, y):
        rho = y.reshape(d, d)
        tr = np.trace(rho)
        if abs(tr - 1.0) > TOL_TRACE:
            raise TraceDriftError(
                f"trace drifted to {tr:.12g} at t = {t:.6g} (|tr - 1| > {TOL_TRACE}); "
                "not renormalizing, check tolerances or the generator"
            )
        if check_positivity:
            w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
            if w.min() < -TOL_POSITIVITY:
                raise TraceDriftError(
                    f"rho developed negative eigenvalue {w.min():.3e} at t = {t:.6g}"
                )
        if truncation_guard is not None:
            for lbl, proj in projectors:
                pop = float(np.real(np.trace(proj @ rho)))
                if pop > truncation_guard:
                    raise TruncationGuardError(
                        f"top Fock level of {lbl!r} reached population {pop:.3e} "
                        f"(> {truncation_guard:.1e}) at t = {t:.6g}; raise the truncation",
                        label=lbl,
                        population=pop,
                    )

    return guard


def evolve_density(
    generator: Superoperator,
    rho0: Operator | DensityState,
    t_span: tuple[float, float],
    t_eval: Sequence[float] | None = None,
    observables: Mapping[str, Operator] | None = None,
    method: str = "adaptive",
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    dt: float | None = None,
    truncation_guard: float | None = TRUNC_GUARD,
    oscillator_labels: Iterable[str] | None = None,
    check_positivity: bool = True,
) -> DensityTrajectory:
    """Integrate a master equation; never silently renormalizes."""
    if isinstance(rho0, DensityState):
        rho0 = rho0.rho
    rho0 = rho0.embed(generator.space)
    guard = _density_guard(generator.space, oscillator_labels, truncation_guard, check_positivity)
    traj = integrate(
        generator.rhs(), vectorize(rho0), t_span, t_eval, method=method,
        atol=atol, rtol=rtol, dt=dt, guard=guard,
    )
    states = [unvectorize(y, generator.space) for y in traj.states]
    out = DensityTrajectory(traj.times, generator.space, states)
    for name, op in (observables or {}).items():
        out.expectations[name] = out.expect(op)
    return out


def evolve_hierarchy(
    hier: FockHierarchy,
    rho_sys: Operator,
    t_span: tuple[float, float],
    t_eval: Sequence[float] | None = None,
    method: str = "adaptive",
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    dt: float | None = None,
    truncation_guard: float | None = TRUNC_GUARD,
) -> tuple[np.ndarray, list[FockHierarchyState]]:
    """Integrate the Fock hierarchy from the standard initial condition."""
    state0 = hier.initial_state(rho_sys)
    d = hier.space.total_dim
    nb = hier.n_max + 1

    labels = [lbl for lbl, dim in hier.space.factors if dim > 2]
    projs = [
        (lbl, make_elementary("projector", lbl, hier.space.dim_of(lbl), hier.space.dim_of(lbl) - 1,
                              hier.space.dim_of(lbl) - 1).embed(hier.space).constant())
        for lbl in labels
    ]

    def guard(t, y):
        if truncation_guard is None:
            return
        for m in range(nb):
            seg = y[(m * nb + m) * d * d : (m * nb + m + 1) * d * d].reshape(d, d)
            for lbl, proj in projs:
                pop = float(np.real(np.trace(proj @ seg)))
                if pop > truncation_guard:
                    raise TruncationGuardError(
                        f"top Fock level of {lbl!r} reached population {pop:.3e} in block ({m},{m})",
                        label=lbl,
                        population=pop,
                    )

    traj = integrate(
        hier.rhs(), hier.pack(state0), t_span, t_eval, method=method,
        atol=atol, rtol=rtol, dt=dt, guard=guard,
    )
    return traj.times, [hier.unpack(y, t) for t, y in zip(traj.times, traj.states)]


# --------------------------------------------------------------------------
# steady state


def steady_state(generator: Superoperator) -> DensityState:
    """Unit-trace null vector of a time-independent Liouvillian."""
    if not generator.is_static:
        raise UnsupportedConfigurationError("steady state needs a time-independent generator")
    M = generator.static
    d = generator.dim
    null_tol_floor = 1e-10
    if M.shape[0] <= 4096:
        dense = M.toarray()
        u, s, vh = np.linalg.svd(dense)
        scale = s[0] if s.size and s[0] > 0 else 1.0
        thresh = max(null_tol_floor, 1e-12 * scale)
        null_dim = int(np.sum(s < thresh))
        if null_dim == 0:
            raise SteadyStateError("no steady state: Liouvillian has trivial null space")
        if null_dim > 1:
            raise SteadyStateError(
                f"non-unique steady state: null space dimension {null_dim}"
            )
        vec = vh[-1].conj()
    else:
        import scipy.sparse.linalg as spla

        vals, vecs = spla.eigs(M.tocsc(), k=2, sigma=0.0, which="LM")
        order = np.argsort(np.abs(vals))
        if abs(vals[order[0]]) > 1e-8:
            raise SteadyStateError("no steady state found near zero eigenvalue")
        if abs(vals[order[1]]) < 1e-10:
            raise SteadyStateError("non-unique steady state: null space dimension >= 2")
        vec = vecs[:, order[0]]
    rho = vec.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise SteadyStateError("null vector is traceless; no physical steady state")
    rho = rho / tr
    return DensityState(Operator(generator.space, rho), 0.0)


# --------------------------------------------------------------------------
# trajectory output


def format_value(z) -> str:
    """Locale-independent %.12e; complex values as re:im pairs."""
    z = complex(z)
    if z.imag == 0.0:
        return f"{z.real:.12e}"
    return f"{z.real:.12e}:{z.imag:.12e}"


def trajectory_csv(times: np.ndarray, columns: Mapping[str, Sequence]) -> str:
    header = "t," + ",".join(columns.keys())
    lines = [header]
    cols = list(columns.values())
    for k, t in enumerate(times):
        row = [f"{float(t):.12e}"] + [format_value(col[k]) for col in cols]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def trajectory_json(times, columns: Mapping[str, Sequence], metadata: Mapping | None = None) -> str:
    payload = {
        "metadata": dict(metadata or {}),
        "columns": ["t"] + list(columns.keys()),
        "rows": [
            [f"{float(t):.12e}"] + [format_value(col[k]) for col in columns.values()]
            for k, t in enumerate(times)
        ],
    }
    return json.dumps(payload, indent=2)
