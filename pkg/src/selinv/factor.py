"""Supernodal LU factorization (no pivoting) and the panel normalization pass."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .sparse import SparseMatrix
from .symbolic import FillPattern, SupernodePartition

PIVOT_RTOL = 1e-14  # relative pivot safeguard


class FactorizationError(Exception):
    """Zero or numerically tiny pivot encountered."""


class SupFactorization:
    """Per-supernode dense block storage of the L and U factors.

    For supernode K of width s with below-supernode fill rows ``rows_below[K]``:
      - ``Ldiag[K]``: s-by-s unit lower triangular
      - ``Udiag[K]``: s-by-s upper triangular (carries the pivots)
      - ``Lpanel[K]``: len(rows_below)-by-s panel over the fill rows
      - ``Upanel[K]``: s-by-len(rows_below) panel (structurally symmetric pattern)

    After :func:`normalize_factors` the off-diagonal panels hold
    ``Lpanel @ inv(Ldiag)`` and ``inv(Udiag) @ Upanel``.
    """

    def __init__(self, n, part: SupernodePartition, rows_below, runs):
        self.n = n
        self.part = part
        self.rows_below = rows_below          # per supernode: sorted global row ids
        self.runs = runs                      # per supernode: list of (I, lo, hi) into rows_below
        self.run_map = [dict((I, (lo, hi)) for I, lo, hi in r) for r in runs]
        self.Ldiag = [None] * part.count
        self.Udiag = [None] * part.count
        self.Lpanel = [None] * part.count
        self.Upanel = [None] * part.count
        self.normalized = False

    def ancestors(self, K):
        return [I for I, _, _ in self.runs[K]]

    def dense_L(self):
        n, part = self.n, self.part
        L = np.zeros((n, n))
        for K in range(part.count):
            s, e = part.start(K), part.end(K)
            L[s:e, s:e] = np.tril(self.Ldiag[K])
            rb = self.rows_below[K]
            if rb.size:
                L[np.ix_(rb, np.arange(s, e))] = self.Lpanel[K]
        return L

    def dense_U(self):
        n, part = self.n, self.part
        U = np.zeros((n, n))
        for K in range(part.count):
            s, e = part.start(K), part.end(K)
            U[s:e, s:e] = np.triu(self.Udiag[K])
            rb = self.rows_below[K]
            if rb.size:
                U[np.ix_(np.arange(s, e), rb)] = self.Upanel[K]
        return U


def _structure(part: SupernodePartition, fill: FillPattern):
    """Per-supernode fill rows below the supernode and their ancestor runs."""
    rows_below, runs = [], []
    for K in range(part.count):
        col = fill.col(part.start(K))
        rb = col[col >= part.end(K)]
        rows_below.append(rb)
        r = []
        i = 0
        while i < len(rb):
            I = part.snode_of(rb[i])
            j = i
            while j < len(rb) and rb[j] < part.end(I):
                j += 1
            r.append((I, i, j))
            i = j
        runs.append(r)
    return rows_below, runs


def _dense_lu_nopivot(D, anorm, col0):
    """Unpivoted dense LU of a small block; raises on tiny pivots."""
    s = D.shape[0]
    L = np.eye(s)
    U = D.copy()
    tol = PIVOT_RTOL * anorm
    for k in range(s):
        piv = U[k, k]
        if abs(piv) <= tol:
            raise FactorizationError(f"zero or tiny pivot at column {col0 + k}")
        L[k + 1:, k] = U[k + 1:, k] / piv
        U[k + 1:, k:] -= np.outer(L[k + 1:, k], U[k, k:])
        U[k + 1:, k] = 0.0
    return L, U


def supernodal_lu(A: SparseMatrix, part: SupernodePartition,
                  fill: FillPattern) -> SupFactorization:
    """Left-looking supernodal LU restricted to the fill pattern.

    Requires a structurally symmetric pattern and nonzero pivots (guaranteed
    for SPD / diagonally dominant inputs). Deterministic: repeated runs are
    bit-identical.
    """
    n = A.n
    rows_below, runs = _structure(part, fill)
    f = SupFactorization(n, part, rows_below, runs)
    anorm = A.max_abs()
    dense_cols = A.to_dense() if n <= 4096 else None
    updaters = [[] for _ in range(part.count)]  # descendants touching each supernode

    for K in range(part.count):
        s, e = part.start(K), part.end(K)
        sw = e - s
        rb = rows_below[K]
        rk = np.concatenate([np.arange(s, e), rb])       # rows of the L column panel
        W = np.zeros((len(rk), sw))                       # A[rk, s:e]
        Wr = np.zeros((sw, len(rb)))                      # A[s:e, rb]
        if dense_cols is not None:
            W[:] = dense_cols[np.ix_(rk, np.arange(s, e))]
            if rb.size:
                Wr[:] = dense_cols[np.ix_(np.arange(s, e), rb)]
        else:
            pos = {int(r): i for i, r in enumerate(rk)}
            for jj in range(s, e):
                rr = A.col_rows(jj)
                vv = A.col_values(jj)
                for r, v in zip(rr, vv):
                    if r >= s:
                        W[pos[int(r)], jj - s] = v
                    # upper row panel: A[s:e, col] entries with row in [s,e)
            rbpos = {int(r): i for i, r in enumerate(rb)}
            for jj in rb:
                rr = A.col_rows(int(jj))
                vv = A.col_values(int(jj))
                for r, v in zip(rr, vv):
                    if s <= r < e:
                        Wr[r - s, rbpos[int(jj)]] = v

        for J in updaters[K]:
            rJ = rows_below[J]
            lo, hi = f.run_map[J][K]
            ccols = rJ[lo:hi] - s  # columns of K that J's U panel touches
            # rows of J's panel at or beyond this supernode update W
            sel = np.arange(lo, len(rJ))
            tgt = np.searchsorted(rk, rJ[sel])
            W[np.ix_(tgt, ccols)] -= f.Lpanel[J][sel, :] @ f.Upanel[J][:, lo:hi]
            # rows of J's panel inside this supernode update the U row panel
            beyond = np.arange(hi, len(rJ))
            if beyond.size:
                tgt2 = np.searchsorted(rb, rJ[beyond])
                Wr[np.ix_(ccols, tgt2)] -= (
                    f.Lpanel[J][lo:hi, :] @ f.Upanel[J][:, beyond])

        L, U = _dense_lu_nopivot(W[:sw, :], anorm, s)
        f.Ldiag[K] = L
        f.Udiag[K] = U
        if rb.size:
            # L[rb,K] * Udiag = W_below  and  Ldiag * U[K,rb] = Wr
            f.Lpanel[K] = solve_triangular(U, W[sw:, :].T, lower=False, trans="T").T
            f.Upanel[K] = solve_triangular(L, Wr, lower=True, unit_diagonal=True)
        else:
            f.Lpanel[K] = np.zeros((0, sw))
            f.Upanel[K] = np.zeros((sw, 0))
        for I in f.ancestors(K):
            updaters[I].append(K)
    return f


def normalize_factors(f: SupFactorization) -> SupFactorization:
    """Right-multiply L panels by inv(Ldiag), left-multiply U panels by inv(Udiag).

    In place over the panels; may be applied only once.
    """
    if f.normalized:
        raise ValueError("factorization is already normalized")
    for K in range(f.part.count):
        if f.rows_below[K].size:
            f.Lpanel[K] = solve_triangular(
                f.Ldiag[K], f.Lpanel[K].T, lower=True, unit_diagonal=True, trans="T").T
            f.Upanel[K] = solve_triangular(f.Udiag[K], f.Upanel[K], lower=False)
    f.normalized = True
    return f
