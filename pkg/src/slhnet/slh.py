"""SLH triples and the Gough-James network composition algebra.

A component interacting with n itinerant field ports is the triple
``G = (S, L, H)``: an n x n matrix of scattering operators, an n-vector
of coupling operators and a Hamiltonian, all acting on one shared
labeled space.  The five operations below (series, concatenation,
direct coupling, feedback reduction, port permutation) are everything
needed to assemble an arbitrary network:

* ``series(g2, g1)``        -- all outputs of g1 feed the inputs of g2
* ``concat(g1, g2)``        -- independent parallel composition
* ``direct_couple(g1, g2)`` -- concatenation plus an interaction Hamiltonian
* ``feedback(g, x, y)``     -- close the internal link: output x -> input y
* ``feedback_multi(g, wiring)`` -- close several links at once

Port indices in the public API are 1-based, matching the usual port
arithmetic conventions; survivors keep their relative order after a
feedback reduction and the returned index maps record the re-packing.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AlgebraicLoopError, CompositionError, ConstructionError
from .hilbert import (
    TOL_OP,
    LabeledSpace,
    Operator,
    identity,
    op_close,
    operator_from_dict,
    operator_to_dict,
    union_space,
    zero,
)

#: singularity threshold for the feedback loop operator (I - S_xy)
LOOP_SINGULARITY_TOL = 1e-8

#: version tag of the JSON triple serialization
SCHEMA_VERSION = 1


class SLHTriple:
    """Immutable (S, L, H) triple with port names and shared space.

    ``S`` may be anything convertible to an (n, n) object array of
    Operators (scalars are promoted to multiples of the identity on the
    trivial space); entries must be time independent.  ``L`` entries and
    ``H`` may carry scalar-envelope time dependence.
    """

    __slots__ = ("n_ports", "space", "S", "L", "H", "input_names", "output_names", "metadata", "check_tol")

    def __init__(
        self,
        S,
        L,
        H,
        input_names: Sequence[str] | None = None,
        output_names: Sequence[str] | None = None,
        metadata: dict | None = None,
        check: bool = True,
        tol: float = TOL_OP,
    ):
        S = _as_operator_grid(S)
        L = [_as_operator(x) for x in (L if isinstance(L, (list, tuple, np.ndarray)) else [L])]
        H = _as_operator(H)
        n = S.shape[0]
        if S.shape != (n, n):
            raise CompositionError(f"S must be square, got shape {S.shape}")
        if len(L) != n:
            raise CompositionError(f"S is {n}x{n} but L has {len(L)} entries")

        space = union_space(
            H.space, *(x.space for x in L), *(S[i, j].space for i in range(n) for j in range(n))
        )
        S = np.array([[S[i, j].embed(space) for j in range(n)] for i in range(n)], dtype=object).reshape(n, n)
        L = [x.embed(space) for x in L]
        H = H.embed(space)

        for i in range(n):
            for j in range(n):
                if not S[i, j].is_static:
                    raise CompositionError("time-dependent scattering entries are not supported")

        if input_names is None:
            input_names = tuple(f"in{k + 1}" for k in range(n))
        if output_names is None:
            output_names = tuple(f"out{k + 1}" for k in range(n))
        if len(input_names) != n or len(output_names) != n:
            raise CompositionError("port name lists must match the port count")

        self.n_ports = n
        self.space = space
        self.S = S
        self.L = tuple(L)
        self.input_names = tuple(str(s) for s in input_names)
        self.output_names = tuple(str(s) for s in output_names)
        self.metadata = dict(metadata or {})
        self.check_tol = float(tol)

        if check:
            self._check_unitarity(tol)
            H = _symmetrized(H, tol)
        self.H = H

    # -- checks -------------------------------------------------------------

    def scattering_matrix(self) -> sp.csr_matrix:
        """The (n*d) x (n*d) block matrix of static scattering entries."""
        n, d = self.n_ports, self.space.total_dim
        if n == 0:
            return sp.csr_matrix((0, 0), dtype=np.complex128)
        blocks = [[self.S[i, j].constant() for j in range(n)] for i in range(n)]
        return sp.bmat(blocks, format="csr")

    def _check_unitarity(self, tol: float) -> None:
        n, d = self.n_ports, self.space.total_dim
        if n == 0:
            return
        big = self.scattering_matrix()
        eye = sp.identity(n * d, dtype=np.complex128, format="csr")
        for resid in (big.conj().T @ big - eye, big @ big.conj().T - eye):
            if resid.nnz and np.abs(resid.data).max() > tol:
                raise CompositionError(
                    f"scattering matrix is not unitary: residual {np.abs(resid.data).max():.3e}"
                )

    def unitarity_residual(self) -> float:
        n, d = self.n_ports, self.space.total_dim
        if n == 0:
            return 0.0
        big = self.scattering_matrix()
        eye = sp.identity(n * d, dtype=np.complex128, format="csr")
        r1 = big.conj().T @ big - eye
        r2 = big @ big.conj().T - eye
        vals = [np.abs(r.data).max() if r.nnz else 0.0 for r in (r1, r2)]
        return float(max(vals))

    def hermiticity_residual(self) -> float:
        return (self.H - self.H.dag()).max_abs()

    # -- conveniences ---------------------------------------------------------

    def is_static(self) -> bool:
        return self.H.is_static and all(x.is_static for x in self.L)

    def with_names(self, input_names=None, output_names=None, metadata=None) -> "SLHTriple":
        return SLHTriple(
            self.S,
            self.L,
            self.H,
            input_names=input_names or self.input_names,
            output_names=output_names or self.output_names,
            metadata={**self.metadata, **(metadata or {})},
            check=False,
            tol=self.check_tol,
        )

    def __repr__(self):
        return f"SLHTriple(n_ports={self.n_ports}, space={self.space!r})"


class PortMap(NamedTuple):
    """Internal wiring: 1-based (output index -> input index) pairs."""

    pairs: tuple[tuple[int, int], ...]

    @staticmethod
    def of(pairs: Iterable[tuple[int, int]]) -> "PortMap":
        return PortMap(tuple((int(a), int(b)) for a, b in pairs))

    def validate(self, n_ports: int) -> None:
        outs = [a for a, _ in self.pairs]
        ins = [b for _, b in self.pairs]
        if len(set(outs)) != len(outs):
            raise CompositionError(f"output port used twice in wiring {self.pairs}")
        if len(set(ins)) != len(ins):
            raise CompositionError(f"input port used twice in wiring {self.pairs}")
        for k in outs + ins:
            if not 1 <= k <= n_ports:
                raise CompositionError(f"port index {k} out of range 1..{n_ports}")


class FeedbackResult(NamedTuple):
    """Reduced triple plus maps old surviving port index -> new index (1-based)."""

    triple: SLHTriple
    out_map: dict[int, int]
    in_map: dict[int, int]


def _as_operator(x) -> Operator:
    if isinstance(x, Operator):
        return x
    if np.isscalar(x):
        return identity(LabeledSpace()) * complex(x)
    raise ConstructionError(f"cannot interpret {x!r} as an Operator")


def _as_operator_grid(S) -> np.ndarray:
    if isinstance(S, Operator) or np.isscalar(S):
        S = [[S]]
    if isinstance(S, np.ndarray) and S.dtype == object and S.ndim == 2:
        rows = S.tolist()
    else:
        rows = list(S)
    n = len(rows)
    grid = np.empty((n, n), dtype=object)
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) != n:
            raise CompositionError("S must be a square matrix of operators")
        for j, entry in enumerate(row):
            grid[i, j] = _as_operator(entry)
    return grid


def _symmetrized(H: Operator, tol: float) -> Operator:
    """(H + H^dag)/2, but only when the anti-Hermitian residual is small.

    A large residual is a formula bug upstream and is never silently
    repaired.
    """
    resid = (H - H.dag()).max_abs()
    if resid > tol:
        raise CompositionError(f"Hamiltonian has anti-Hermitian residual {resid:.3e} > {tol:.1e}")
    return ((H + H.dag()) * 0.5).simplify()


# --------------------------------------------------------------------------
# trivial components


def identity_triple(n: int, space: LabeledSpace | None = None) -> SLHTriple:
    """The padding element: n channels scattered straight through."""
    space = space or LabeledSpace()
    eye = identity(space)
    zero_op = zero(space)
    S = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            S[i, j] = eye if i == j else zero_op
    return SLHTriple(S, [zero_op] * n, zero_op, check=False)


def permutation_matrix(sigma: Sequence[int]) -> np.ndarray:
    """P[j, k] = delta(j, sigma(k)) for a 1-based permutation list.

    ``sigma[k-1]`` is the output port that input port k is routed to, so
    ``P_(sigma2 o sigma1) = P_sigma2 @ P_sigma1``.
    """
    n = len(sigma)
    if sorted(sigma) != list(range(1, n + 1)):
        raise CompositionError(f"{list(sigma)} is not a permutation of 1..{n}")
    P = np.zeros((n, n))
    for k, target in enumerate(sigma):
        P[target - 1, k] = 1.0
    return P


def permutation_triple(sigma: Sequence[int], space: LabeledSpace | None = None) -> SLHTriple:
    space = space or LabeledSpace()
    P = permutation_matrix(sigma)
    eye, zero_op = identity(space), zero(space)
    n = len(sigma)
    S = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            S[i, j] = eye if P[i, j] else zero_op
    return SLHTriple(S, [zero_op] * n, zero_op, check=False)


# --------------------------------------------------------------------------
# composition rules


def _inherit_tol(*gs: SLHTriple) -> float:
    from .hilbert import TOL_OP as _t

    return max([_t] + [g.check_tol for g in gs])


def series(g2: SLHTriple, g1: SLHTriple, check: bool = True) -> SLHTriple:
    """Cascade g1 into g2 (read right to left, like operator products):

        (S2 S1,  L2 + S2 L1,  H1 + H2 + (L2^ S2 L1 - L1^ S2^ L2) / 2i)
    """
    if g1.n_ports != g2.n_ports:
        raise CompositionError(
            f"series needs equal port counts, got {g1.n_ports} and {g2.n_ports}"
        )
    n = g1.n_ports
    space = g1.space.union(g2.space)
    S1 = _embed_grid(g1.S, space)
    S2 = _embed_grid(g2.S, space)
    L1 = [x.embed(space) for x in g1.L]
    L2 = [x.embed(space) for x in g2.L]

    S = _matmul_grid(S2, S1)
    L = [L2[i] + _row_dot(S2, i, L1) for i in range(n)]
    cross = zero(space)
    for i in range(n):
        s2l1_i = _row_dot(S2, i, L1)
        cross = cross + L2[i].dag() * s2l1_i
    H = g1.H.embed(space) + g2.H.embed(space) + (cross - cross.dag()) * (1.0 / 2.0j)
    return SLHTriple(
        S,
        L,
        H,
        input_names=g1.input_names,
        output_names=g2.output_names,
        check=check,
        tol=_inherit_tol(g1, g2),
    )


def concat(g1: SLHTriple, g2: SLHTriple, check: bool = True) -> SLHTriple:
    """Parallel composition: block-diagonal S, stacked L, summed H."""
    space = g1.space.union(g2.space)
    n1, n2 = g1.n_ports, g2.n_ports
    n = n1 + n2
    zero_op = zero(space)
    S = np.empty((n, n), dtype=object)
    S.fill(zero_op)
    for i in range(n1):
        for j in range(n1):
            S[i, j] = g1.S[i, j].embed(space)
    for i in range(n2):
        for j in range(n2):
            S[n1 + i, n1 + j] = g2.S[i, j].embed(space)
    L = [x.embed(space) for x in g1.L] + [x.embed(space) for x in g2.L]
    H = g1.H.embed(space) + g2.H.embed(space)
    return SLHTriple(
        S,
        L,
        H,
        input_names=g1.input_names + g2.input_names,
        output_names=g1.output_names + g2.output_names,
        check=check,
        tol=_inherit_tol(g1, g2),
    )


def direct_couple(g1: SLHTriple, g2: SLHTriple, h_int: Operator, check: bool = True) -> SLHTriple:
    """Concatenation with an added interaction Hamiltonian.

    The interaction is attributed to the first operand; both operands
    are recorded in the result metadata since the split is a convention.
    """
    if not h_int.is_hermitian():
        raise CompositionError("direct coupling requires a Hermitian interaction")
    out = concat(g1, g2, check=check)
    H = out.H + h_int.embed(out.space)
    return SLHTriple(
        out.S,
        out.L,
        H,
        input_names=out.input_names,
        output_names=out.output_names,
        metadata={"direct_coupling_operands": (g1.input_names, g2.input_names)},
        check=check,
        tol=_inherit_tol(g1, g2),
    )


def pad(g: SLHTriple, n_extra: int, position: str = "after", check: bool = True) -> SLHTriple:
    """Concatenate with the trivial n_extra-channel padding element."""
    if n_extra < 0:
        raise CompositionError(f"n_extra must be >= 0, got {n_extra}")
    if n_extra == 0:
        return g
    pad_el = identity_triple(n_extra)
    if position == "after":
        return concat(g, pad_el, check=check)
    if position == "before":
        return concat(pad_el, g, check=check)
    raise CompositionError(f"position must be 'before' or 'after', got {position!r}")


def permute_ports(g: SLHTriple, sigma: Sequence[int], which: str = "outputs", check: bool = True) -> SLHTriple:
    """Reroute ports with a permuting scatterer: port k goes to sigma[k-1].

    ``which`` selects whether the outputs, the inputs, or both sides are
    rerouted; rerouting is a series product with ``(P_sigma, 0, 0)``.
    """
    if len(sigma) != g.n_ports:
        raise CompositionError("permutation length must equal the port count")
    perm = permutation_triple(sigma)
    if which == "outputs":
        out = series(perm, g, check=check)
        names = [None] * g.n_ports
        for k, target in enumerate(sigma):
            names[target - 1] = g.output_names[k]
        return out.with_names(output_names=tuple(names))
    if which == "inputs":
        # input k of the result feeds original input sigma[k-1]
        out = series(g, perm, check=check)
        names = [g.input_names[s - 1] for s in sigma]
        return out.with_names(input_names=tuple(names))
    if which == "both":
        return permute_ports(permute_ports(g, sigma, "outputs", check), sigma, "inputs", check)
    raise CompositionError(f"which must be 'outputs', 'inputs' or 'both', got {which!r}")


# --------------------------------------------------------------------------
# feedback reduction


def _embed_grid(S: np.ndarray, space: LabeledSpace) -> np.ndarray:
    n = S.shape[0]
    out = np.empty_like(S)
    for i in range(n):
        for j in range(n):
            out[i, j] = S[i, j].embed(space)
    return out


def _matmul_grid(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    out = np.empty_like(A)
    for i in range(n):
        for j in range(n):
            acc = A[i, 0] * B[0, j]
            for k in range(1, n):
                acc = acc + A[i, k] * B[k, j]
            out[i, j] = acc
    return out


def _row_dot(S: np.ndarray, i: int, L: Sequence[Operator]) -> Operator:
    acc = S[i, 0] * L[0]
    for k in range(1, len(L)):
        acc = acc + S[i, k] * L[k]
    return acc


def _block_matrix(grid: np.ndarray, rows: Sequence[int], cols: Sequence[int], d: int) -> sp.csr_matrix:
    """Stack operator entries (static) into one sparse block matrix."""
    blocks = [[grid[i, j].constant() for j in cols] for i in rows]
    return sp.bmat(blocks, format="csc") if rows and cols else sp.csc_matrix((len(rows) * d, len(cols) * d))


def _solve_loop(loop: sp.spmatrix, rhs: sp.spmatrix, k: int, d: int):
    """X = loop^-1 rhs with loop = I - S_xy.

    A singular loop operator is still acceptable when the circulating
    channel carries nothing, i.e. the right-hand side is consistent; a
    detached pass-through loop then simply drops out (minimal-norm
    solution).  An inconsistent singular loop is genuinely ill posed
    (energy would pile up in an undamped circulating mode) and raises.
    """
    dense_dim = loop.shape[0]
    if dense_dim <= 4096:
        sv = np.linalg.svd(loop.toarray(), compute_uv=False)
        smallest = sv[-1] if sv.size else 0.0
    else:
        try:
            smallest = spla.svds(loop.tocsc(), k=1, which="SM", return_singular_vectors=False)[0]
        except Exception:
            sv = np.linalg.svd(loop.toarray(), compute_uv=False)
            smallest = sv[-1] if sv.size else 0.0
    if smallest >= LOOP_SINGULARITY_TOL:
        x = spla.spsolve(loop.tocsc(), rhs.tocsc())
        if not sp.issparse(x):
            x = sp.csc_matrix(np.atleast_2d(x).reshape(rhs.shape) if x.ndim == 1 else x)
        return x.tocsr()
    dense_rhs = rhs.toarray()
    x, *_ = np.linalg.lstsq(loop.toarray(), dense_rhs, rcond=LOOP_SINGULARITY_TOL)
    resid = np.abs(loop.toarray() @ x - dense_rhs).max() if dense_rhs.size else 0.0
    scale = 1.0 + (np.abs(dense_rhs).max() if dense_rhs.size else 0.0)
    if resid > 1e-10 * scale:
        raise AlgebraicLoopError(
            "ill-posed algebraic loop: (I - S_xy) is singular "
            f"(smallest singular value {smallest:.3e}) and the loop carries signal "
            f"(residual {resid:.3e})"
        )
    return sp.csr_matrix(x)


def feedback_multi(g: SLHTriple, wiring, check: bool = True) -> FeedbackResult:
    """Close several output -> input links of one triple simultaneously.

    The eliminated ports are brought into block-contiguous form
    internally, the vector feedback formula is applied once, and the
    survivors are re-packed keeping their relative order.  The result is
    independent of the order in which the links would be closed one by
    one.
    """
    pairs = wiring.pairs if isinstance(wiring, PortMap) else PortMap.of(wiring).pairs
    PortMap(pairs).validate(g.n_ports)
    if not pairs:
        return FeedbackResult(
            g,
            {k: k for k in range(1, g.n_ports + 1)},
            {k: k for k in range(1, g.n_ports + 1)},
        )

    n, d = g.n_ports, g.space.total_dim
    xs = [a - 1 for a, _ in pairs]  # eliminated output rows (0-based)
    ys = [b - 1 for _, b in pairs]  # eliminated input columns, aligned with xs
    xbar = [i for i in range(n) if i not in set(xs)]
    ybar = [j for j in range(n) if j not in set(ys)]
    k = len(xs)
    m = len(xbar)
    space = g.space

    S_xy = _block_matrix(g.S, xs, ys, d)
    loop = sp.identity(k * d, dtype=np.complex128, format="csc") - S_xy

    L_x = sp.bmat([[g.L[i].constant() if g.L[i].is_static else None] for i in xs], format="csc") \
        if all(g.L[i].is_static for i in xs) else None
    if L_x is None:
        raise CompositionError("feedback through time-dependent couplings is not supported")

    inv_L = _solve_loop(loop, L_x, k, d)  # (I - S_xy)^-1 L_x, stacked k blocks

    if m:
        S_xybar = _block_matrix(g.S, xs, ybar, d)
        inv_S = _solve_loop(loop, S_xybar, k, d)  # (I - S_xy)^-1 S_x,ybar
    else:
        inv_S = None

    def block(mat, i):
        return mat[i * d : (i + 1) * d, :]

    def subblock(mat, i, j):
        return mat[i * d : (i + 1) * d, j * d : (j + 1) * d]

    zero_op = zero(space)

    # S_red = S_xbar,ybar + S_xbar,y (I - S_xy)^-1 S_x,ybar
    S_red = np.empty((m, m), dtype=object)
    for a, i in enumerate(xbar):
        for b, j in enumerate(ybar):
            acc = g.S[i, j]
            for c, yc in enumerate(ys):
                term = g.S[i, yc].constant() @ subblock(inv_S, c, b)
                acc = acc + Operator(space, term)
            S_red[a, b] = acc

    # L_red = L_xbar + S_xbar,y (I - S_xy)^-1 L_x
    L_red = []
    for a, i in enumerate(xbar):
        acc = g.L[i]
        for c, yc in enumerate(ys):
            acc = acc + Operator(space, g.S[i, yc].constant() @ block(inv_L, c))
        L_red.append(acc)

    # H_red = H + (M - M^dag) / 2i with M = L^dag S_:,y (I - S_xy)^-1 L_x
    M = zero_op
    for i in range(n):
        acc = None
        for c, yc in enumerate(ys):
            term = g.S[i, yc].constant() @ block(inv_L, c)
            acc = term if acc is None else acc + term
        M = M + g.L[i].dag() * Operator(space, acc)
    H_red = g.H + (M - M.dag()) * (1.0 / 2.0j)

    out_map = {i + 1: a + 1 for a, i in enumerate(xbar)}
    in_map = {j + 1: b + 1 for b, j in enumerate(ybar)}
    triple = SLHTriple(
        S_red,
        L_red,
        H_red,
        input_names=tuple(g.input_names[j] for j in ybar),
        output_names=tuple(g.output_names[i] for i in xbar),
        check=check,
        tol=_inherit_tol(g),
    )
    return FeedbackResult(triple, out_map, in_map)


def feedback(g: SLHTriple, x: int, y: int, check: bool = True) -> FeedbackResult:
    """Close the single internal link: output port x into input port y."""
    if g.n_ports < 2:
        raise CompositionError("feedback needs at least two ports")
    return feedback_multi(g, [(x, y)], check=check)


# --------------------------------------------------------------------------
# comparison and serialization


def triples_close(
    a: SLHTriple,
    b: SLHTriple,
    tol: float = TOL_OP,
    times: Sequence[float] | None = None,
) -> bool:
    """Operator-wise equality of two triples on the union of their spaces."""
    if a.n_ports != b.n_ports:
        return False
    for i in range(a.n_ports):
        if not op_close(a.L[i], b.L[i], tol, times):
            return False
        for j in range(a.n_ports):
            if not op_close(a.S[i, j], b.S[i, j], tol, times):
                return False
    return op_close(a.H, b.H, tol, times)


def triple_to_dict(g: SLHTriple) -> dict:
    n = g.n_ports
    return {
        "schema_version": SCHEMA_VERSION,
        "n_ports": n,
        "input_names": list(g.input_names),
        "output_names": list(g.output_names),
        "space": {"labels": list(g.space.labels), "dims": list(g.space.dims)},
        "S": [[operator_to_dict(g.S[i, j]) for j in range(n)] for i in range(n)],
        "L": [operator_to_dict(x) for x in g.L],
        "H": operator_to_dict(g.H),
    }


def triple_from_dict(data: dict) -> SLHTriple:
    n = data["n_ports"]
    S = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            S[i, j] = operator_from_dict(data["S"][i][j])
    L = [operator_from_dict(x) for x in data["L"]]
    H = operator_from_dict(data["H"])
    return SLHTriple(
        S, L, H, input_names=data["input_names"], output_names=data["output_names"], check=False
    )


def triple_to_json(g: SLHTriple, indent: int | None = 2) -> str:
    return json.dumps(triple_to_dict(g), indent=indent, separators=None if indent else (",", ":"))


def triple_from_json(text: str) -> SLHTriple:
    return triple_from_dict(json.loads(text))


def triple_hash(g: SLHTriple) -> str:
    """Stable content hash of the serialized triple."""
    payload = json.dumps(triple_to_dict(g), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
