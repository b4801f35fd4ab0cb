"""Small cone-programming layer on top of Clarabel.

Problems are written over one real decision vector ``x``.  Every constraint is
an affine expression ``G @ x + h`` required to lie in a cone:

* ``"zero"``    -- ``G x + h == 0``
* ``"nonneg"``  -- ``G x + h >= 0`` elementwise
* ``"soc"``     -- ``v[0] >= ||v[1:]||``
* ``"psd"``     -- the rows hold a ``k x k`` matrix flattened row-major,
  symmetrised before use, and required to be positive semidefinite

Hermitian PSD variables are added with :meth:`ConeProgram.add_hermitian_psd`,
which lifts them through a free real PSD matrix instead of constraining the
structured ``[[Re, -Im], [Im, Re]]`` embedding; the latter leaves interior-point
solvers stalling short of full accuracy.
"""
from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-8

CONE_KINDS = ("zero", "nonneg", "soc", "psd")


class ConicError(ValueError):
    pass


# --------------------------------------------------------------------------
# affine expressions
# --------------------------------------------------------------------------


class Affine:
    """Affine map ``x -> G @ x + h`` over the decision vector."""

    __slots__ = ("G", "h")
    # make numpy defer to __rmatmul__/__rmul__
    __array_ufunc__ = None

    def __init__(self, G, h=None):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        self.G = G
        self.h = np.zeros(G.shape[0]) if h is None else np.asarray(h, dtype=float).reshape(G.shape[0])

    @classmethod
    def constant(cls, h, width=0):
        h = np.atleast_1d(np.asarray(h, dtype=float))
        return cls(np.zeros((h.size, width)), h)

    @property
    def size(self):
        return self.G.shape[0]

    @property
    def width(self):
        return self.G.shape[1]

    def padded(self, width):
        if width == self.width:
            return self
        if width < self.width:
            raise ConicError("cannot shrink an affine expression")
        G = np.zeros((self.size, width))
        G[:, : self.width] = self.G
        return Affine(G, self.h)

    def _coerce(self, other):
        if isinstance(other, Affine):
            return other
        other = np.broadcast_to(np.asarray(other, dtype=float), (self.size,))
        return Affine.constant(other, 0)

    def __add__(self, other):
        other = self._coerce(other)
        w = max(self.width, other.width)
        a, b = self.padded(w), other.padded(w)
        return Affine(a.G + b.G, a.h + b.h)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.G, -self.h)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        s = np.asarray(scalar, dtype=float)
        if s.ndim == 0:
            return Affine(s * self.G, s * self.h)
        return Affine(s[:, None] * self.G, s * self.h)

    __rmul__ = __mul__

    def __rmatmul__(self, mat):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return Affine(mat @ self.G, mat @ self.h)

    def __getitem__(self, idx):
        rows = np.arange(self.size)[idx]
        return Affine(self.G[np.atleast_1d(rows)], self.h[np.atleast_1d(rows)])

    def sum(self):
        return Affine(self.G.sum(axis=0, keepdims=True), [self.h.sum()])

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.G @ x[: self.width] + self.h


def vstack(exprs):
    exprs = [e if isinstance(e, Affine) else Affine.constant(e) for e in exprs]
    w = max(e.width for e in exprs)
    exprs = [e.padded(w) for e in exprs]
    return Affine(np.vstack([e.G for e in exprs]), np.concatenate([e.h for e in exprs]))


def realify(C):
    """Real matrix acting on ``[Re z; Im z]`` that returns ``[Re Cz; Im Cz]``."""
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    return np.block([[C.real, -C.imag], [C.imag, C.real]])


def complex_apply(C, z):
    """Apply complex matrix ``C`` to a realified complex vector expression.

    ``z`` stacks real parts then imaginary parts.  Returns ``(re, im)``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    out = realify(C) @ z
    n = C.shape[0]
    return out[:n], out[n:]


# --------------------------------------------------------------------------
# Hermitian helpers
# --------------------------------------------------------------------------


def embed_hermitian(H, tol=1e-10):
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConicError("expected a square matrix")
    scale = max(1.0, np.abs(H).max(initial=0.0))
    if np.abs(H - H.conj().T).max(initial=0.0) > tol * scale:
        raise ConicError("matrix is not Hermitian")
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


@functools.lru_cache(maxsize=None)
def hermitian_basis(n):
    """Basis ``E_p`` (shape ``(n*n, n, n)``) with ``H = sum_p x_p E_p``.

    Parameters are the ``n`` diagonal entries, then real and imaginary parts
    of the strict upper triangle.
    """
    basis = np.zeros((n * n, n, n), dtype=complex)
    p = 0
    for i in range(n):
        basis[p, i, i] = 1.0
        p += 1
    iu, ju = np.triu_indices(n, 1)
    for i, j in zip(iu, ju):
        basis[p, i, j] = basis[p, j, i] = 1.0
        p += 1
    for i, j in zip(iu, ju):
        basis[p, i, j] = 1j
        basis[p, j, i] = -1j
        p += 1
    basis.flags.writeable = False
    return basis


@functools.lru_cache(maxsize=None)
def _sym_map(k):
    """Map from upper-triangle entries of a symmetric ``k x k`` matrix to its row-major flattening."""
    iu, ju = np.triu_indices(k)
    S = np.zeros((k * k, iu.size))
    S[iu * k + ju, np.arange(iu.size)] = 1.0
    S[ju * k + iu, np.arange(iu.size)] = 1.0
    S.flags.writeable = False
    return S


@functools.lru_cache(maxsize=None)
def _lift_map(n):
    """Linear map from ``X`` (``2n x 2n`` symmetric, upper triangle) to Hermitian parameters.

    ``H = X11 + X22 + j (X21 - X12)`` is PSD whenever ``X`` is, and every
    Hermitian PSD ``H`` is reached (take ``X`` = half the real embedding).
    """
    k = 2 * n
    T = np.zeros((n * n, k * k))
    for idx in range(k * k):
        E = np.zeros(k * k)
        E[idx] = 1.0
        E = E.reshape(k, k)
        H = E[:n, :n] + E[n:, n:] + 1j * (E[n:, :n] - E[:n, n:])
        T[:, idx] = params_from_hermitian(H)
    out = T @ _sym_map(k)
    out.flags.writeable = False
    return out


def hermitian_from_params(x, n):
    return np.tensordot(np.asarray(x, dtype=float), hermitian_basis(n), axes=1)


def params_from_hermitian(H):
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    iu, ju = np.triu_indices(n, 1)
    return np.concatenate([H.diagonal().real, H[iu, ju].real, H[iu, ju].imag])


def quadform_coeffs(g, n):
    """Coefficients ``c`` with ``g^H H g == c @ params(H)``."""
    g = np.asarray(g, dtype=complex)
    return np.einsum("i,pij,j->p", g.conj(), hermitian_basis(n), g).real


def trace_coeffs(n):
    c = np.zeros(n * n)
    c[:n] = 1.0
    return c


# --------------------------------------------------------------------------
# programs
# --------------------------------------------------------------------------


@dataclass
class Constraint:
    kind: str
    expr: Affine
    tag: str = ""
    dim: int = 0


@dataclass
class ConeProgram:
    """Conic program ``min 1/2 x'Px + c'x + c0`` subject to tagged cone constraints."""

    n: int = 0
    variables: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    hermitian: dict = field(default_factory=dict)
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    P: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    c0: float = 0.0

    def add_variable(self, name, size):
        if name in self.variables:
            raise ConicError(f"duplicate variable {name!r}")
        sl = slice(self.n, self.n + size)
        self.variables[name] = sl
        self.n += size
        c = np.zeros(self.n)
        c[: self.c.size] = self.c
        self.c = c
        P = np.zeros((self.n, self.n))
        P[: self.P.shape[0], : self.P.shape[1]] = self.P
        self.P = P
        G = np.zeros((size, self.n))
        G[:, sl] = np.eye(size)
        return Affine(G)

    def var(self, name):
        sl = self.variables[name]
        G = np.zeros((sl.stop - sl.start, self.n))
        G[:, sl] = np.eye(sl.stop - sl.start)
        return Affine(G)

    def add_constraint(self, kind, expr, tag=""):
        if kind not in CONE_KINDS:
            raise ConicError(f"unknown cone {kind!r}")
        if not isinstance(expr, Affine):
            raise ConicError("constraint expression must be Affine")
        dim = 0
        if kind == "psd":
            dim = int(round(np.sqrt(expr.size)))
            if dim * dim != expr.size:
                raise ConicError("psd expression must hold a flattened square matrix")
        if kind == "soc" and expr.size < 1:
            raise ConicError("empty second-order cone")
        self.constraints.append(Constraint(kind, expr, tag, dim))

    def add_linear_objective(self, expr, weight=1.0):
        if expr.size != 1:
            raise ConicError("objective term must be scalar")
        e = expr.padded(self.n)
        self.c = self.c + weight * e.G[0]
        self.c0 += weight * e.h[0]

    def add_quadratic_objective(self, expr, weight=1.0):
        """Add ``weight * ||expr||^2`` (``weight >= 0``)."""
        if weight < 0:
            raise ConicError("quadratic weight must be nonnegative")
        e = expr.padded(self.n)
        self.P = self.P + 2.0 * weight * (e.G.T @ e.G)
        self.c = self.c + 2.0 * weight * (e.G.T @ e.h)
        self.c0 += weight * float(e.h @ e.h)

    def add_hermitian_psd(self, name, n, tag="psd"):
        """Add a Hermitian PSD ``n x n`` variable; returns the affine map to its parameters.

        The parameters follow :func:`hermitian_basis`.  Internally the variable is
        the upper triangle of a real ``2n x 2n`` PSD matrix.
        """
        k = 2 * n
        t = self.add_variable(name, k * (k + 1) // 2)
        self.add_constraint("psd", _sym_map(k) @ t, tag=tag)
        self.hermitian[name] = n
        return _lift_map(n) @ t

    def hermitian_expr(self, name):
        """Parameter expression of a variable added by :meth:`add_hermitian_psd`."""
        return _lift_map(self.hermitian[name]) @ self.var(name)

    def census(self):
        """Counts of constraints keyed by ``(kind, tag)``, plus the variable count."""
        out = {"variables": self.n}
        for con in self.constraints:
            key = (con.kind, con.tag)
            out[key] = out.get(key, 0) + 1
        return out

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.c @ x + self.c0)

    def violations(self, x):
        """Largest violation of each constraint at ``x`` (``<= 0`` means satisfied)."""
        out = []
        for con in self.constraints:
            v = con.expr.value(x)
            if con.kind == "zero":
                out.append(float(np.abs(v).max(initial=0.0)))
            elif con.kind == "nonneg":
                out.append(float(max(0.0, -v.min(initial=0.0))))
            elif con.kind == "soc":
                out.append(float(max(0.0, np.linalg.norm(v[1:]) - v[0])))
            else:
                S = v.reshape(con.dim, con.dim)
                S = 0.5 * (S + S.T)
                out.append(float(max(0.0, -np.linalg.eigvalsh(S)[0])))
        return np.array(out)

    def is_feasible(self, x, tol=1e-7):
        return bool(np.all(self.violations(x) <= tol))

    def dump(self):
        """Plain-text listing of the program, stable enough to diff."""
        fmt = lambda a: " ".join(f"{v:.12g}" for v in np.ravel(a))
        lines = [f"n {self.n}"]
        for name, sl in self.variables.items():
            lines.append(f"var {name} {sl.start} {sl.stop}")
        lines.append(f"c {fmt(self.c)}")
        lines.append(f"c0 {self.c0:.12g}")
        if np.any(self.P):
            lines.append(f"P {fmt(self.P)}")
        for i, con in enumerate(self.constraints):
            e = con.expr.padded(self.n)
            lines.append(f"con {i} {con.kind} {con.tag or '-'} rows={e.size} dim={con.dim}")
            lines.append(f"  G {fmt(e.G)}")
            lines.append(f"  h {fmt(e.h)}")
        return "\n".join(lines) + "\n"


@dataclass
class ConeSolution:
    status: str
    x: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    raw_status: str
    variables: dict
    hermitian_sizes: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "optimal"

    def __getitem__(self, name):
        return self.x[self.variables[name]]

    def hermitian(self, name):
        """Value of a variable created by :meth:`ConeProgram.add_hermitian_psd`."""
        n = self.hermitian_sizes[name]
        return hermitian_from_params(_lift_map(n) @ self[name], n)


@functools.lru_cache(maxsize=None)
def _svec_map(k):
    """Sparse map from a flattened ``k x k`` matrix to Clarabel's scaled triangle."""
    rows, cols, vals = [], [], []
    r = 0
    s2 = np.sqrt(2.0) / 2.0
    for j in range(k):
        for i in range(j + 1):
            if i == j:
                rows.append(r), cols.append(i * k + j), vals.append(1.0)
            else:
                rows += [r, r]
                cols += [i * k + j, j * k + i]
                vals += [s2, s2]
            r += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, k * k))


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def solve(prog, tol=DEFAULT_TOL, max_iter=200, verbose=False):
    """Solve with Clarabel's interior-point method.

    A program with a quadratic objective that fails numerically is retried in
    epigraph form, ``min r/2 + c'x`` with ``x'Px <= r`` as a rotated cone.
    """
    if prog.n == 0:
        raise ConicError("program has no variables")
    sol = _solve_once(prog, tol, max_iter, verbose)
    if sol.status != "numerical-failure" or not np.any(prog.P):
        return sol
    epi = _solve_once(_epigraph(prog), tol, max_iter, verbose)
    if not epi.ok:
        return sol
    x = epi.x[: prog.n]
    return dataclasses.replace(
        epi,
        x=x,
        objective=prog.objective(x),
        raw_status=f"{epi.raw_status} (epigraph)",
        variables=dict(prog.variables),
    )


def _epigraph(prog):
    P = 0.5 * (prog.P + prog.P.T)
    w, V = np.linalg.eigh(P)
    keep = w > 1e-12 * max(w.max(), 0.0)
    L = (V[:, keep] * np.sqrt(w[keep])).T
    out = ConeProgram(
        n=prog.n,
        variables=dict(prog.variables),
        constraints=list(prog.constraints),
        hermitian=dict(prog.hermitian),
        c=prog.c.copy(),
        P=np.zeros_like(prog.P),
        c0=prog.c0,
    )
    r = out.add_variable("__epigraph", 1)
    out.add_constraint("soc", vstack([0.5 * (r + 1.0), 0.5 * (r - 1.0), Affine(L)]), tag="epigraph")
    out.add_linear_objective(r, weight=0.5)
    return out


def _solve_once(prog, tol, max_iter, verbose):
    order = {"zero": 0, "nonneg": 1, "soc": 2, "psd": 3}
    cons = sorted(prog.constraints, key=lambda c: order[c.kind])
    A_blocks, b_blocks, cones = [], [], []
    zero_rows, nonneg_rows = [], []
    for con in cons:
        e = con.expr.padded(prog.n)
        if con.kind == "zero":
            zero_rows.append(e)
        elif con.kind == "nonneg":
            nonneg_rows.append(e)
        elif con.kind == "soc":
            A_blocks.append(sp.csr_matrix(-e.G))
            b_blocks.append(e.h)
            cones.append(clarabel.SecondOrderConeT(e.size))
        else:
            S = _svec_map(con.dim)
            A_blocks.append(sp.csr_matrix(-(S @ e.G)))
            b_blocks.append(S @ e.h)
            cones.append(clarabel.PSDTriangleConeT(con.dim))
    head_A, head_b, head_cones = [], [], []
    if zero_rows:
        z = vstack(zero_rows).padded(prog.n)
        head_A.append(sp.csr_matrix(-z.G))
        head_b.append(z.h)
        head_cones.append(clarabel.ZeroConeT(z.size))
    if nonneg_rows:
        z = vstack(nonneg_rows).padded(prog.n)
        head_A.append(sp.csr_matrix(-z.G))
        head_b.append(z.h)
        head_cones.append(clarabel.NonnegativeConeT(z.size))
    A = sp.vstack(head_A + A_blocks, format="csc")
    b = np.concatenate(head_b + b_blocks)
    P = sp.triu(sp.csc_matrix(prog.P), format="csc")

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_ktratio = max(tol, 1e-8)
    result = clarabel.DefaultSolver(P, prog.c, A, b, head_cones + cones, settings).solve()
    raw = str(result.status)
    status = _STATUS.get(raw, "numerical-failure")
    x = np.asarray(result.x, dtype=float)
    obj = prog.objective(x) if status == "optimal" else float("nan")
    return ConeSolution(
        status=status,
        x=x,
        objective=obj,
        iterations=int(result.iterations),
        primal_residual=float(result.r_prim),
        dual_residual=float(result.r_dual),
        raw_status=raw,
        variables=dict(prog.variables),
        hermitian_sizes=dict(prog.hermitian),
    )
