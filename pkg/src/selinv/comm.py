"""Virtual 2D process grid, block-cyclic ownership, and restricted-collective trees."""

from __future__ import annotations

import random

from .symbolic import SupernodePartition

FLAT = "flat"
BINARY = "binary"
SHIFTED = "shifted"
TREE_KINDS = (FLAT, BINARY, SHIFTED)


class ProcessGrid:
    """pr-by-pc virtual grid with row-major rank numbering."""

    def __init__(self, pr, pc):
        if pr < 1 or pc < 1:
            raise ValueError("grid dimensions must be >= 1")
        self.pr = int(pr)
        self.pc = int(pc)
        self.p = self.pr * self.pc

    def rank(self, i, j):
        return i * self.pc + j

    def coords(self, rank):
        return rank // self.pc, rank % self.pc

    def __repr__(self):
        return f"ProcessGrid({self.pr}x{self.pc})"


def build_grid(pr: int, pc: int) -> ProcessGrid:
    return ProcessGrid(pr, pc)


class BlockCyclicMap:
    """Block (I, J) lives at grid cell (I mod pr, J mod pc)."""

    def __init__(self, grid: ProcessGrid, part: SupernodePartition):
        self.grid = grid
        self.part = part

    def owner(self, I, J):
        if not (0 <= I < self.part.count and 0 <= J < self.part.count):
            raise ValueError("supernode index out of range")
        return self.grid.rank(I % self.grid.pr, J % self.grid.pc)


def map_block(I: int, J: int, m: BlockCyclicMap) -> int:
    return m.owner(I, J)


class CommTree:
    """Rooted tree over a rank subset describing one restricted broadcast/reduction."""

    def __init__(self, root, members, children, kind, seed=None, offset=None):
        self.root = root
        self.members = tuple(members)
        self.children = children  # rank -> list of child ranks
        self.kind = kind
        self.seed = seed
        self.offset = offset
        self.parent = {}
        for p, cs in children.items():
            for c in cs:
                self.parent[c] = p
        self._validate()

    def _validate(self):
        seen = {self.root}
        stack = [self.root]
        while stack:
            node = stack.pop()
            for c in self.children.get(node, ()):
                if c in seen:
                    raise ValueError("cycle or duplicate edge in tree")
                seen.add(c)
                stack.append(c)
        if seen != set(self.members):
            raise ValueError("tree does not span its member set")

    @property
    def edges(self):
        return [(p, c) for p in self.children for c in self.children[p]]


def _check_members(root, members):
    members = list(members)
    if len(set(members)) != len(members):
        raise ValueError("duplicate members")
    if root not in members:
        raise ValueError("root not in member set")
    return members


def build_flat_tree(root: int, members) -> CommTree:
    """Root sends directly to every other member."""
    members = _check_members(root, members)
    children = {root: sorted(m for m in members if m != root)}
    return CommTree(root, members, children, FLAT)


def _binary_from_list(root, ordered, children):
    """Recursive half-split: head of each half becomes a child of the parent."""
    if not ordered:
        return
    cut = (len(ordered) + 1) // 2  # first half takes the extra element
    for half in (ordered[:cut], ordered[cut:]):
        if half:
            head = half[0]
            children.setdefault(root, []).append(head)
            _binary_from_list(head, half[1:], children)


def build_binary_tree(root: int, members) -> CommTree:
    """Binary tree over the ascending member list (root removed before splitting)."""
    members = _check_members(root, members)
    rest = sorted(m for m in members if m != root)
    children = {}
    _binary_from_list(root, rest, children)
    return CommTree(root, members, children, BINARY)


def derive_seed(global_seed, supernode, block, kind) -> str:
    """Deterministic per-collective RNG seed string."""
    return f"{global_seed}:{supernode}:{block}:{kind}"


def build_shifted_binary_tree(root: int, members, seed, offset=None) -> CommTree:
    """Binary tree over the member list after a seeded random circular shift.

    The sorted non-root list is rotated left by an offset drawn uniformly from
    the given seed (or supplied explicitly); the half-split recursion is then
    applied to the rotated list.
    """
    members = _check_members(root, members)
    rest = sorted(m for m in members if m != root)
    if rest:
        if offset is None:
            offset = random.Random(str(seed)).randrange(len(rest))
        offset %= len(rest)
        rest = rest[offset:] + rest[:offset]
    else:
        offset = 0
    children = {}
    _binary_from_list(root, rest, children)
    return CommTree(root, members, children, SHIFTED, seed=seed, offset=offset)


def tree_stats(t: CommTree) -> dict:
    """Depth, maximum out-degree, and the set of internal (forwarding) nodes."""
    depth = {t.root: 0}
    stack = [t.root]
    while stack:
        node = stack.pop()
        for c in t.children.get(node, ()):
            depth[c] = depth[node] + 1
            stack.append(c)
    internal = {n for n, cs in t.children.items() if cs and n != t.root}
    return {
        "depth": max(depth.values()),
        "max_out_degree": max((len(c) for c in t.children.values()), default=0),
        "internal_nodes": internal,
    }
