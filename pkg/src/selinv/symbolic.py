"""Elimination tree, symbolic fill, and supernode detection on symmetric patterns."""

from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix

ROOT = -1  # parent sentinel


class EliminationTree:
    """Per-column parent structure parent(j) = min{i > j : L[i,j] != 0}."""

    def __init__(self, parent):
        self.parent = np.asarray(parent, dtype=np.int64)
        self.postorder = self._postorder()

    def _postorder(self):
        n = len(self.parent)
        children = [[] for _ in range(n)]
        roots = []
        for j in range(n):
            p = self.parent[j]
            if p == ROOT:
                roots.append(j)
            else:
                children[p].append(j)
        order = []
        for root in roots:
            stack = [(root, False)]
            while stack:
                node, expanded = stack.pop()
                if expanded:
                    order.append(node)
                else:
                    stack.append((node, True))
                    for c in reversed(children[node]):
                        stack.append((c, False))
        return np.array(order, dtype=np.int64)


class FillPattern:
    """Per-column sorted row structures (diagonal included) of the filled L factor.

    By structural symmetry of the input the U pattern is the transpose.
    """

    def __init__(self, n, lower):
        self.n = n
        self.lower = [np.asarray(r, dtype=np.int64) for r in lower]

    @property
    def nnz_lower(self):
        return int(sum(len(r) for r in self.lower))

    def col(self, j):
        return self.lower[j]

    def below(self, j):
        """Rows strictly below the diagonal in column j."""
        rows = self.lower[j]
        return rows[rows > j]


class SupernodePartition:
    """Contiguous column ranges sharing identical below-supernode fill structure."""

    def __init__(self, n, boundaries):
        self.n = n
        self.boundaries = list(boundaries)  # start column per supernode, sorted
        self.count = len(self.boundaries)
        self.col_to_snode = np.zeros(n, dtype=np.int64)
        ends = self.boundaries[1:] + [n]
        for k, (s, e) in enumerate(zip(self.boundaries, ends)):
            self.col_to_snode[s:e] = k
        self._ends = ends

    def start(self, k):
        return self.boundaries[k]

    def end(self, k):
        """One past the last column of supernode k."""
        return self._ends[k]

    def cols(self, k):
        return np.arange(self.start(k), self.end(k), dtype=np.int64)

    def width(self, k):
        return self.end(k) - self.start(k)

    def snode_of(self, col):
        return int(self.col_to_snode[col])


def elimination_tree(A: SparseMatrix) -> EliminationTree:
    """Path-compression construction over the (structurally symmetric) pattern."""
    if not A.pattern_symmetric():
        raise ValueError("pattern is not structurally symmetric")
    n = A.n
    parent = np.full(n, ROOT, dtype=np.int64)
    ancestor = np.full(n, ROOT, dtype=np.int64)
    for j in range(n):
        rows = A.col_rows(j)
        for i in rows[rows < j]:
            r = int(i)
            while ancestor[r] != ROOT and ancestor[r] != j:
                nxt = ancestor[r]
                ancestor[r] = j  # path compression
                r = nxt
            if ancestor[r] == ROOT:
                ancestor[r] = j
                parent[r] = j
    return EliminationTree(parent)


def symbolic_fill(A: SparseMatrix, etree: EliminationTree) -> FillPattern:
    """Exact Cholesky-style fill of the symmetrized pattern via row-subtree walks."""
    n = A.n
    parent = etree.parent
    cols_of_row = [[] for _ in range(n)]
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        mark[i] = i
        rows = A.col_rows(i)
        for k in rows[rows < i]:
            j = int(k)
            while mark[j] != i:  # walk up until already visited for row i
                mark[j] = i
                cols_of_row[i].append(j)
                j = parent[j]
    lower = [[j] for j in range(n)]
    for i in range(n):
        for j in cols_of_row[i]:
            lower[j].append(i)
    return FillPattern(n, [np.sort(np.array(r, dtype=np.int64)) for r in lower])


def detect_supernodes(fill: FillPattern, max_size: int = 48) -> SupernodePartition:
    """Greedy left-to-right merge of columns with identical below-supernode structure.

    Column j+1 joins the current supernode iff its structure below row j+1
    equals the current members' structure below row j+1 and the size cap is
    not exceeded. Columns with empty below structures are mergeable.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    n = fill.n
    boundaries = [0]
    start = 0
    for j in range(1, n):
        size = j - start
        if size >= max_size:
            boundaries.append(j)
            start = j
            continue
        # members of [start, j-1] already share structure below j-1; compare
        # any member (use column start) against column j, both below row j.
        a = fill.col(start)
        b = fill.col(j)
        if np.array_equal(a[a > j], b[b > j]):
            continue
        boundaries.append(j)
        start = j
    return SupernodePartition(n, boundaries)


def ancestor_supernodes(K: int, fill: FillPattern, part: SupernodePartition):
    """Sorted supernode indices > K whose rows appear in K's below-supernode fill."""
    end = part.end(K)
    rows = set()
    for c in range(part.start(K), end):
        col = fill.col(c)
        rows.update(col[col >= end].tolist())
    return sorted({part.snode_of(r) for r in rows})
