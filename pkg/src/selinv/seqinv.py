"""Sequential selected inversion and the dense oracle used for verification.

Selected inversion computes the entries of inv(A) at the positions of the
filled L/U pattern only, sweeping supernodes from last to first:

  step 2:  Ainv[C,K] = -Ainv[C,C] @ Lhat[C,K]
  step 3:  Ainv[K,K] = inv(U[K,K]) inv(L[K,K]) - Uhat[K,C] @ Ainv[C,K]
  step 4:  Ainv[K,C] = -Uhat[K,C] @ Ainv[C,C]

where C is the set of ancestor supernodes with a nonzero block in block
column K, and only selected (pattern) blocks of Ainv[C,C] are ever read.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .factor import SupFactorization
from .sparse import SparseMatrix
from .symbolic import FillPattern, SupernodePartition, ancestor_supernodes

ORACLE_MAX_N = 2000


class SelectionError(Exception):
    """A required selected block is missing from the fill pattern."""


def ancestor_blocks(K: int, fill: FillPattern, part: SupernodePartition):
    """Ordered ancestor supernode indices with a nonzero block under/right of K."""
    if not 0 <= K < part.count:
        raise ValueError("supernode index out of range")
    return ancestor_supernodes(K, fill, part)


def _positions(haystack, needles, what):
    pos = np.searchsorted(haystack, needles)
    if np.any(pos >= len(haystack)) or not np.array_equal(haystack[pos], needles):
        raise SelectionError(f"selected block misses required {what}")
    return pos


def extract_block(store, f: SupFactorization, J, I, rows, cols):
    """Sub-block of the selected inverse block (J, I) at global rows/cols.

    ``store`` maps ('d', K) / ('l', J, K) with J > K / ('u', K, J) to dense
    blocks laid out over the fill rows. Raises if a required position is not
    covered by the pattern (selected inversion never needs such entries).
    """
    part = f.part
    if J == I:
        blk = store[("d", J)]
        return blk[np.ix_(rows - part.start(J), cols - part.start(J))]
    if J > I:
        blk = store[("l", J, I)]
        lo, hi = f.run_map[I][J]
        rpos = _positions(f.rows_below[I][lo:hi], rows, f"rows of block ({J},{I})")
        return blk[np.ix_(rpos, cols - part.start(I))]
    blk = store[("u", J, I)]
    lo, hi = f.run_map[J][I]
    cpos = _positions(f.rows_below[J][lo:hi], cols, f"cols of block ({J},{I})")
    return blk[np.ix_(rows - part.start(J), cpos)]


class SelInvResult:
    """Selected entries of inv(A), stored blockwise on the fill pattern."""

    def __init__(self, f: SupFactorization, store):
        self.f = f
        self.part = f.part
        self.n = f.n
        self.store = store

    def diag_block(self, K):
        return self.store[("d", K)]

    def lower_block(self, J, K):
        return self.store[("l", J, K)]

    def upper_block(self, K, J):
        return self.store[("u", K, J)]

    def iter_entries(self):
        """Yield (i, j, value) for every stored position."""
        f, part = self.f, self.part
        for K in range(part.count):
            s = part.start(K)
            cols = part.cols(K)
            D = self.store[("d", K)]
            for a, i in enumerate(cols):
                for b, j in enumerate(cols):
                    yield int(i), int(j), D[a, b]
            rb = f.rows_below[K]
            for J, lo, hi in f.runs[K]:
                L = self.store[("l", J, K)]
                U = self.store[("u", K, J)]
                for a, i in enumerate(rb[lo:hi]):
                    for b, j in enumerate(cols):
                        yield int(i), int(j), L[a, b]
                        yield int(j), int(i), U[b, a]

    def get_entry(self, i, j):
        part, f = self.part, self.f
        J, I = part.snode_of(i), part.snode_of(j)
        blk = extract_block(self.store, f, J, I,
                            np.array([i], dtype=np.int64),
                            np.array([j], dtype=np.int64))
        return float(blk[0, 0])

    def max_abs(self):
        return max((abs(v) for _, _, v in self.iter_entries()), default=0.0)

    def max_abs_diff(self, other: "SelInvResult"):
        assert self.store.keys() == other.store.keys()
        return max(float(np.max(np.abs(self.store[k] - other.store[k])))
                   if self.store[k].size else 0.0
                   for k in self.store)

    def rel_error_vs(self, other: "SelInvResult"):
        """Max entrywise difference relative to the other result's magnitude."""
        scale = other.max_abs()
        return self.max_abs_diff(other) / scale if scale else self.max_abs_diff(other)

    def equals_exactly(self, other: "SelInvResult"):
        return (self.store.keys() == other.store.keys()
                and all(np.array_equal(self.store[k], other.store[k])
                        for k in self.store))


def _diag_inverse_term(f: SupFactorization, K):
    """inv(U[K,K]) @ inv(L[K,K]) via two triangular solves against the identity."""
    s = f.part.width(K)
    X = solve_triangular(f.Ldiag[K], np.eye(s), lower=True, unit_diagonal=True)
    return solve_triangular(f.Udiag[K], X, lower=False)


def selected_inversion(f: SupFactorization) -> SelInvResult:
    """Supernode-by-supernode backward sweep over the normalized factorization."""
    if not f.normalized:
        raise ValueError("factorization must be normalized first")
    part = f.part
    store = {}
    for K in reversed(range(part.count)):
        runs = f.runs[K]
        rb = f.rows_below[K]
        Lh = f.Lpanel[K]
        Uh = f.Upanel[K]
        X = np.empty((len(rb), part.width(K)))
        for J, lo, hi in runs:  # step 2, rows of the updated block column
            rJ = rb[lo:hi]
            acc = np.zeros((hi - lo, part.width(K)))
            for I, lo2, hi2 in runs:
                cI = rb[lo2:hi2]
                S = extract_block(store, f, J, I, rJ, cI)
                acc += S @ Lh[lo2:hi2, :]
            X[lo:hi] = -acc
            store[("l", J, K)] = X[lo:hi].copy()
        D = _diag_inverse_term(f, K)  # step 3
        if len(rb):
            D = D - Uh @ X
        store[("d", K)] = D
        for J, lo, hi in runs:  # step 4
            rJ = rb[lo:hi]
            acc = np.zeros((part.width(K), hi - lo))
            for I, lo2, hi2 in runs:
                cI = rb[lo2:hi2]
                S = extract_block(store, f, I, J, cI, rJ)
                acc += Uh[:, lo2:hi2] @ S
            store[("u", K, J)] = -acc
    return SelInvResult(f, store)


def dense_inverse_oracle(A: SparseMatrix) -> np.ndarray:
    """Full inverse by dense LU with partial pivoting; test / verify path only."""
    if A.n > ORACLE_MAX_N:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_N}")
    try:
        return np.linalg.inv(A.to_dense())
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular matrix: {exc}") from exc


def extract_selected(dense: np.ndarray, fill: FillPattern,
                     part: SupernodePartition, f: SupFactorization = None) -> SelInvResult:
    """Copy the block positions a SelInvResult carries out of a dense matrix."""
    if f is None:
        from .factor import SupFactorization as _SF
        from .factor import _structure
        rows_below, runs = _structure(part, fill)
        f = _SF(part.n, part, rows_below, runs)
    if dense.shape != (f.n, f.n):
        raise ValueError("shape mismatch")
    store = {}
    for K in range(part.count):
        cols = part.cols(K)
        store[("d", K)] = dense[np.ix_(cols, cols)].copy()
        rb = f.rows_below[K]
        for J, lo, hi in f.runs[K]:
            store[("l", J, K)] = dense[np.ix_(rb[lo:hi], cols)].copy()
            store[("u", K, J)] = dense[np.ix_(cols, rb[lo:hi])].copy()
    return SelInvResult(f, store)
