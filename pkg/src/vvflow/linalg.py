"""Sparse direct and Krylov solvers for the saddle-point systems."""
from __future__ import annotations

import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_RESIDUAL_TOL = 1e-10
_DENSE_DIAGNOSTIC_LIMIT = 3000


class SingularSystemError(np.linalg.LinAlgError):
    """The system matrix is singular; ``row`` names the offending row when known."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class KrylovError(RuntimeError):
    """Krylov iteration did not reach the requested tolerance."""

    def __init__(self, message, report=None, best=None):
        super().__init__(message)
        self.report = report
        self.best = best


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float  # recomputed ||Ax - b|| / ||b||
    wall_time: float


@dataclass(eq=False)
class BlockSystem:
    """Monolithic sparse system with an optional 2x2 block partition.

    ``n_primary`` rows/columns form the leading (velocity-like) block; the
    trailing block holds multipliers and mean borders. ``schur`` is an
    optional approximation of the trailing Schur complement used by the
    Krylov preconditioner.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_primary: int | None = None
    blocks: dict = field(default_factory=dict)
    schur: sp.spmatrix | None = None

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"system matrix must be square, got {self.matrix.shape}")
        if self.rhs.shape != (n,):
            raise ValueError(f"rhs length {self.rhs.shape} does not match matrix size {n}")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def with_rhs(self, rhs) -> "BlockSystem":
        return BlockSystem(self.matrix, rhs, self.n_primary, self.blocks, self.schur)


def saddle_system(A, B, F, G=None, mean=None, schur=None) -> BlockSystem:
    """Symmetric saddle system for ``A u - B^T p = F``, ``B u = G``.

    With ``mean`` given, the multiplier gets a zero-mean border row:

        [ A   -B^T   0 ] [u]   [ F]
        [-B    0     m ] [p] = [-G]
        [ 0    m^T   0 ] [mu]  [ 0]
    """
    A = sp.csr_matrix(A)
    B = sp.csr_matrix(B)
    nu, npr = A.shape[0], B.shape[0]
    if A.shape != (nu, nu) or B.shape[1] != nu:
        raise ValueError(f"inconsistent block shapes A{A.shape}, B{B.shape}")
    G = np.zeros(npr) if G is None else np.asarray(G, dtype=float)
    rows = [[A, -B.T, None], [-B, None, None]]
    rhs = [np.asarray(F, dtype=float), -G]
    if mean is not None:
        m = sp.csr_matrix(np.asarray(mean, dtype=float).reshape(-1, 1))
        rows = [[A, -B.T, None], [-B, None, m], [None, m.T, None]]
        rhs.append(np.zeros(1))
    else:
        rows = [r[:2] for r in rows]
    K = sp.bmat(rows, format="csr")
    K.sort_indices()
    if schur is not None and mean is not None:
        schur = sp.bmat([[schur, m], [m.T, None]], format="csc")
    return BlockSystem(K, np.concatenate(rhs), n_primary=nu,
                       blocks={"A": A, "B": B, "mean": mean}, schur=schur)


def _relative_residual(K, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(K @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def _zero_row(K) -> int | None:
    K = sp.csr_matrix(K)
    nnz_rows = np.diff(K.indptr)
    absrow = np.asarray(abs(K).sum(axis=1)).ravel()
    bad = np.flatnonzero((nnz_rows == 0) | (absrow == 0))
    return int(bad[0]) if len(bad) else None


def _diagnose_singular(K) -> SingularSystemError:
    row = _zero_row(K)
    if row is not None:
        return SingularSystemError(f"singular system: row {row} is identically zero", row=row)
    col = _zero_row(sp.csr_matrix(K).T)
    if col is not None:
        return SingularSystemError(f"singular system: column {col} is identically zero", row=col)
    if K.shape[0] <= _DENSE_DIAGNOSTIC_LIMIT:
        P, L, U = scipy.linalg.lu(K.toarray())
        d = np.abs(np.diag(U))
        k = int(np.argmin(d))
        if d[k] <= 1e-13 * max(d.max(), 1.0):
            row = int(np.argmax(P[:, k]))
            return SingularSystemError(
                f"singular system: zero pivot at elimination step {k} (original row {row})", row=row)
    return SingularSystemError("singular system: exactly singular pivot in sparse LU")


def nested_dissection(coords, kind=None, graph=None, leaf_size: int = 64) -> np.ndarray:
    """Geometric nested-dissection ordering of unknowns located at ``coords``.

    Primal unknowns (``kind == 0``) are split recursively by lattice planes
    across the longest extent, separators ordered after both halves.

    Multipliers (``kind > 0``) are not dissected: each is placed right
    after the last primal unknown it couples to in ``graph`` (the sparse
    system matrix). When a multiplier is eliminated, every primal unknown
    in its row is already gone, so its pivot is a Schur-complement entry
    that does not vanish. Without ``graph`` multipliers follow the primal
    unknowns sharing their block.

    Rows with non-finite coordinates (mean-value borders) are placed just
    before the final unknown: the last multiplier pivot would vanish while
    the constant mode is still free, so the border is eliminated first; at
    that position it adds no fill.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    kind = np.zeros(n) if kind is None else np.asarray(kind, dtype=float)
    finite = np.all(np.isfinite(coords), axis=1)
    dissect = finite & ((kind == 0) | (graph is None))

    def split(ids):
        c = coords[ids]
        lo, hi = c.min(axis=0), c.max(axis=0)
        ax = int(np.argmax(hi - lo))
        vals = np.unique(c[:, ax])
        if len(ids) <= leaf_size or len(vals) < 3:
            return None
        mid = vals[len(vals) // 2]
        return (ids[c[:, ax] < mid], ids[c[:, ax] > mid], ids[c[:, ax] == mid])

    def order(ids):
        parts = split(ids)
        if parts is None:
            return [ids[np.lexsort((ids, kind[ids]))]]
        left, right, sep = parts
        return order(left) + order(right) + [sep[np.lexsort((sep, kind[sep]))]]

    body = np.concatenate(order(np.flatnonzero(dissect)) + [np.zeros(0, dtype=np.int64)])
    mult = np.flatnonzero(finite & ~dissect)
    if len(mult):
        pos = np.full(n, -1.0)
        pos[body] = np.arange(len(body))
        G = sp.csr_matrix(graph)[mult]
        last = np.full(len(mult), -1.0)
        rows = np.repeat(np.arange(len(mult)), np.diff(G.indptr))
        np.maximum.at(last, rows, pos[G.indices])
        keys = np.concatenate([pos[body], last + 0.5])
        ids = np.concatenate([body, mult])
        body = ids[np.lexsort((ids, keys))]
    borders = np.flatnonzero(~finite)
    if len(body) == 0:
        return borders.astype(np.int64)
    return np.concatenate([body[:-1], borders, body[-1:]]).astype(np.int64)


class DirectFactor:
    """Sparse LU factorization of a fixed matrix, reusable across right-hand sides.

    With ``ordering`` (a symmetric permutation, e.g. from
    :func:`nested_dissection`) the permuted matrix is factored with
    diagonal pivoting; if that factorization fails or is inaccurate the
    default column ordering with partial pivoting is used instead.
    """

    def __init__(self, K, ordering=None):
        self.matrix = sp.csc_matrix(K)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("matrix must be square")
        row = _zero_row(self.matrix)
        if row is not None:
            raise SingularSystemError(f"singular system: row {row} is identically zero", row=row)
        self.perm = None
        if ordering is not None:
            perm = np.asarray(ordering)
            try:
                Kp = sp.csc_matrix(self.matrix[perm][:, perm])
                self.lu = spla.splu(Kp, permc_spec="NATURAL", diag_pivot_thresh=0.0)
                self.perm = perm
                b = np.cos(np.arange(self.matrix.shape[0]))
                if _relative_residual(self.matrix, self.solve(b), b) > 1e-8:
                    self.perm = None
            except (RuntimeError, SingularSystemError):
                self.perm = None
        if self.perm is None:
            try:
                self.lu = spla.splu(self.matrix, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise _diagnose_singular(self.matrix) from exc

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.perm is None:
            x = self.lu.solve(b)
        else:
            x = np.empty_like(b)
            x[self.perm] = self.lu.solve(b[self.perm])
        if not np.all(np.isfinite(x)):
            raise _diagnose_singular(self.matrix)
        return x


def solve_direct(system: BlockSystem, factor: DirectFactor | None = None):
    """Sparse LU solve with one step of iterative refinement when needed."""
    t0 = time.perf_counter()
    factor = factor if factor is not None else DirectFactor(system.matrix)
    b = system.rhs
    x = factor.solve(b)
    res = _relative_residual(system.matrix, x, b)
    steps = 0
    while res > 1e-13 and steps < 2:
        x = x + factor.solve(b - system.matrix @ x)
        res = _relative_residual(system.matrix, x, b)
        steps += 1
    if res > DIRECT_RESIDUAL_TOL:
        raise _diagnose_singular(system.matrix) if res > 1e-6 else np.linalg.LinAlgError(
            f"direct solve residual {res:.3e} exceeds {DIRECT_RESIDUAL_TOL:.0e}")
    return x, SolveReport("direct", 1 + steps, res, time.perf_counter() - t0)


def _preconditioner(system: BlockSystem):
    K = system.matrix
    n = system.size
    npri = system.n_primary
    if npri is None or npri == n:
        ilu = spla.spilu(sp.csc_matrix(K), drop_tol=1e-5, fill_factor=20)
        return spla.LinearOperator((n, n), ilu.solve)
    A = sp.csc_matrix(K[:npri, :npri])
    K12 = K[:npri, npri:]
    ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
    if system.schur is not None:
        S = sp.csc_matrix(system.schur)
    else:
        S = sp.csc_matrix(K[npri:, npri:] - sp.identity(n - npri))
    Slu = spla.splu(S)

    def apply(r):
        y2 = Slu.solve(r[npri:])
        y1 = ilu.solve(r[:npri] - K12 @ y2)
        return np.concatenate([y1, y2])

    return spla.LinearOperator((n, n), apply)


def solve_krylov(system: BlockSystem, tol: float = 1e-10, max_iter: int = 500, x0=None):
    """Preconditioned restarted GMRES.

    For partitioned systems the preconditioner is block upper triangular:
    incomplete LU of the leading block and an exact solve with the supplied
    Schur-complement approximation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    K, b = system.matrix, system.rhs
    M = _preconditioner(system)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(K, b, x0=x0, rtol=tol, atol=0.0, restart=100, maxiter=max_iter,
                         M=M, callback=cb, callback_type="pr_norm")
    res = _relative_residual(K, x, b)
    report = SolveReport("krylov", count[0], res, time.perf_counter() - t0)
    if info < 0:
        raise KrylovError(f"GMRES breakdown (info={info})", report, x)
    if res > tol and not np.isclose(res, tol, rtol=1e-3):
        raise KrylovError(f"GMRES stopped at residual {res:.3e} > {tol:.1e} after "
                          f"{count[0]} iterations", report, x)
    return x, report


def solve(system: BlockSystem, method: str = "direct", factor=None, tol=1e-10, max_iter=500):
    if method == "direct":
        return solve_direct(system, factor)
    if method == "krylov":
        return solve_krylov(system, tol, max_iter)
    raise ValueError(f"unknown solver method {method!r}")


class FactorCache:
    """Thread-safe LRU cache of factorizations keyed by the caller."""

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key, build):
        """Return the cached value for ``key``, calling ``build()`` on a miss."""
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                return self._store[key]
        value = build()
        with self._lock:
            self._store[key] = value
            while len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return value

    def clear(self):
        with self._lock:
            self._store.clear()

    def __len__(self):
        return len(self._store)


def read_matrix(path):
    import scipy.io
    return sp.csr_matrix(scipy.io.mmread(str(path)))
