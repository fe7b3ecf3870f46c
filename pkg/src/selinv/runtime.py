"""Emulated distributed-memory execution of parallel selected inversion.

One worker per rank of a virtual 2D grid. Panels of the normalized
factorization are distributed block-cyclically; the backward sweep runs the
six-step protocol per supernode K:

  (a) broadcast the transposed Lhat panels within restricted column groups,
  (1) local products Ainv[J,I] @ Lhat[I,K],
  (b) reduce partial products within restricted row groups,
  (2) diagonal contributions Uhat[K,C] @ Ainv[C,K],
  (c) reduce them to the diagonal-block owner,
  (3) update Ainv[K,K]; the upper blocks follow by symmetry.

There is no global barrier: progress is driven purely by per-rank dependency
counters, so independent elimination-tree branches pipeline naturally. Every
message is logged with exact byte sizes in a CommLedger.

Reduction numerics are canonical: contributions are always summed in
ascending contributor-rank order regardless of the tree shape, so results are
bit-identical across tree kinds, schedules and worker counts.
"""

from __future__ import annotations

import os
import threading
import time
import random as _random
from collections import deque

import numpy as np
from scipy.linalg import solve_triangular

from . import comm
from .comm import BlockCyclicMap, CommTree, ProcessGrid
from .factor import SupFactorization, normalize_factors, supernodal_lu
from .seqinv import SelInvResult, _diag_inverse_term, extract_block
from .sparse import SparseMatrix, symmetrize_pattern
from .symbolic import detect_supernodes, elimination_tree, symbolic_fill

TAG_LPANEL = "LPanel"        # transposed Lhat panel handed to the U-side owner
TAG_UPANEL = "UPanel"        # transposed Ainv block filling the upper pattern
TAG_COLBCAST = "ColBcast"    # tree broadcast of a Uhat panel down a column group
TAG_ROWREDUCE = "RowReduce"  # tree reduction of partial products in a row group
TAG_DIAGUPDATE = "DiagUpdate"  # diagonal contribution sent to the diagonal owner

HEADER_BYTES = 32
ENTRY_BYTES = 8

KIND_COLBCAST = "colbcast"
KIND_ROWREDUCE = "rowreduce"
KIND_OTHER = "other"
KINDS = (KIND_COLBCAST, KIND_ROWREDUCE, KIND_OTHER)
_KIND_OF_TAG = {
    TAG_COLBCAST: KIND_COLBCAST,
    TAG_ROWREDUCE: KIND_ROWREDUCE,
    TAG_LPANEL: KIND_OTHER,
    TAG_UPANEL: KIND_OTHER,
    TAG_DIAGUPDATE: KIND_OTHER,
}


class DeadlockError(Exception):
    """No runnable work remains while dependencies are still outstanding."""


class Message:
    __slots__ = ("tag", "snode", "block", "src", "dst", "payload", "entries")

    def __init__(self, tag, snode, block, src, dst, payload, entries):
        self.tag = tag
        self.snode = snode
        self.block = block
        self.src = src
        self.dst = dst
        self.payload = payload
        self.entries = int(entries)

    @property
    def size(self):
        """Wire size: 8 bytes per numeric entry plus a fixed 32-byte header."""
        return self.entries * ENTRY_BYTES + HEADER_BYTES


class CommLedger:
    """Per-rank byte counters plus an ordered event log of every message.

    Counters track payload bytes (headers excluded from volume statistics).
    The event log lists messages in delivery order; ``canonical_events``
    gives a schedule-independent view.
    """

    def __init__(self, p):
        self.p = p
        self.sent = np.zeros((p, len(KINDS)), dtype=np.int64)
        self.received = np.zeros((p, len(KINDS)), dtype=np.int64)
        self.events = []
        self.collectives = []  # group descriptors, filled in by the plan
        self._lock = threading.Lock()

    def _kind_index(self, kind):
        return KINDS.index(kind)

    def record_send(self, msg: Message):
        k = KINDS.index(_KIND_OF_TAG[msg.tag])
        with self._lock:
            self.sent[msg.src, k] += msg.entries * ENTRY_BYTES

    def record_delivery(self, msg: Message):
        k = KINDS.index(_KIND_OF_TAG[msg.tag])
        with self._lock:
            self.received[msg.dst, k] += msg.entries * ENTRY_BYTES
            self.events.append(
                (msg.tag, msg.snode, msg.block, msg.src, msg.dst, msg.entries))

    def per_rank(self, direction="sent", kind="all"):
        table = {"sent": self.sent, "received": self.received}[direction]
        if kind == "all":
            return table.sum(axis=1)
        return table[:, KINDS.index(kind)].copy()

    def total(self, direction="sent", kind="all"):
        return int(self.per_rank(direction, kind).sum())

    def canonical_events(self):
        return sorted(self.events)

    def message_count(self):
        return len(self.events)


def _tree_for(kind, root, members, seed, snode, block, ctx):
    if kind == comm.FLAT:
        return comm.build_flat_tree(root, members)
    if kind == comm.BINARY:
        return comm.build_binary_tree(root, members)
    if kind == comm.SHIFTED:
        return comm.build_shifted_binary_tree(
            root, members, comm.derive_seed(seed, snode, block, ctx))
    raise ValueError(f"unknown tree kind: {kind}")


class _ColBcast:
    __slots__ = ("root", "members", "tree", "mult", "entries", "src")

    def __init__(self, root, members, tree, mult, entries, src):
        self.root = root
        self.members = members
        self.tree = tree
        self.mult = mult        # rank -> sorted list of target supernodes J
        self.entries = entries  # panel entry count
        self.src = src          # rank owning the Lhat panel (handoff sender)


class _RowReduce:
    __slots__ = ("target", "members", "tree", "needed", "entries")

    def __init__(self, target, members, tree, needed, entries):
        self.target = target
        self.members = members
        self.tree = tree
        self.needed = needed    # rank -> sorted list of source supernodes I
        self.entries = entries  # reduced block entry count


class RunPlan:
    """Static communication schedule derived from the symbolic structure."""

    def __init__(self, f: SupFactorization, grid: ProcessGrid, tree_kind, seed):
        if tree_kind not in comm.TREE_KINDS:
            raise ValueError(f"unknown tree kind: {tree_kind}")
        self.f = f
        self.grid = grid
        self.map = BlockCyclicMap(grid, f.part)
        self.tree_kind = tree_kind
        self.seed = seed
        self.cb = {}      # (K, I) -> _ColBcast
        self.rr = {}      # (K, J) -> _RowReduce
        self.diag = {}    # K -> (owner, {rank: sorted J list})
        self.uside = {}   # (K, J) -> (src, dst)
        self.total_blocks = 0
        self._build()

    def _build(self):
        f, cell = self.f, self.map.owner
        for K in range(f.part.count):
            anc = f.ancestors(K)
            self.total_blocks += 1 + 2 * len(anc)
            contributors = {}
            for J in anc:
                contributors.setdefault(cell(J, K), []).append(J)
            self.diag[K] = (cell(K, K), {r: sorted(js) for r, js in contributors.items()})
            for I in anc:
                root = cell(K, I)
                mult = {}
                for J in anc:
                    mult.setdefault(cell(J, I), []).append(J)
                members = sorted(set(mult) | {root})
                tree = _tree_for(self.tree_kind, root, members, self.seed,
                                 K, I, "colbcast")
                lo, hi = f.run_map[K][I]
                entries = f.part.width(K) * (hi - lo)
                self.cb[(K, I)] = _ColBcast(root, members, tree,
                                            {r: sorted(js) for r, js in mult.items()},
                                            entries, cell(I, K))
            for J in anc:
                target = cell(J, K)
                needed = {}
                for I in anc:
                    needed.setdefault(cell(J, I), []).append(I)
                members = sorted(set(needed) | {target})
                tree = _tree_for(self.tree_kind, target, members, self.seed,
                                 K, J, "rowreduce")
                lo, hi = f.run_map[K][J]
                entries = (hi - lo) * f.part.width(K)
                self.rr[(K, J)] = _RowReduce(target, members, tree,
                                             {r: sorted(i) for r, i in needed.items()},
                                             entries)
                self.uside[(K, J)] = (target, cell(K, J))

    def describe_collectives(self):
        out = []
        for (K, I), cb in sorted(self.cb.items()):
            out.append({"kind": KIND_COLBCAST, "snode": K, "block": I,
                        "root": cb.root, "members": list(cb.members),
                        "group_size": len(cb.members), "entries": cb.entries})
        for (K, J), rr in sorted(self.rr.items()):
            out.append({"kind": KIND_ROWREDUCE, "snode": K, "block": J,
                        "root": rr.target, "members": list(rr.members),
                        "group_size": len(rr.members), "entries": rr.entries})
        return out


class _RankState:
    __slots__ = ("rank", "inbox", "store", "panels", "products", "rr_children",
                 "rr_payloads", "rr_ready", "diag_pending", "diag_recv",
                 "diag_expect", "waiters")

    def __init__(self, rank):
        self.rank = rank
        self.inbox = deque()
        self.store = {}        # finalized Ainv blocks owned by this rank
        self.panels = {}       # (K, I) -> received Uhat panel
        self.products = {}     # (K, J) -> {I: product block}
        self.rr_children = {}  # (K, J) -> outstanding child-message count
        self.rr_payloads = {}  # (K, J) -> list of (member_rank, partial)
        self.rr_ready = {}     # (K, J) -> own partial ready flag
        self.diag_pending = {}  # K -> unfinished local Ainv[J,K] count (contributor)
        self.diag_recv = {}    # K -> {src_rank: contribution} (diagonal owner)
        self.diag_expect = {}  # K -> outstanding contributor count (diagonal owner)
        self.waiters = {}      # block key -> list of (K, I) colbcasts to retry


class Engine:
    """Message-passing emulator over the static plan."""

    def __init__(self, plan: RunPlan, ledger: CommLedger):
        self.plan = plan
        self.f = plan.f
        self.grid = plan.grid
        self.ledger = ledger
        self.ranks = [_RankState(r) for r in range(plan.grid.p)]
        self.remaining = plan.total_blocks
        self._count_lock = threading.Lock()
        self.done = threading.Event()
        self._init_counters()

    # ------------------------------------------------------------- setup

    def _init_counters(self):
        for (K, J), rr in self.plan.rr.items():
            for r in rr.members:
                st = self.ranks[r]
                tree_children = rr.tree.children.get(r, [])
                st.rr_children[(K, J)] = len(tree_children)
                st.rr_payloads[(K, J)] = []
                st.rr_ready[(K, J)] = r not in rr.needed  # no partial to wait for
        for (K, J), rr in self.plan.rr.items():
            for r, needs in rr.needed.items():
                self.ranks[r].products[(K, J)] = {}
        for K, (owner, contributors) in self.plan.diag.items():
            self.ranks[owner].diag_expect[K] = len(contributors)
            self.ranks[owner].diag_recv[K] = {}
            for r, js in contributors.items():
                self.ranks[r].diag_pending[K] = len(js)

    def seed_work(self):
        """Queue the panel handoffs and the leaf diagonal updates."""
        for K in range(self.f.part.count):
            owner, contributors = self.plan.diag[K]
            if not contributors:
                self.ranks[owner].inbox.append(("diag_seed", K))
        for (K, I), cb in self.plan.cb.items():
            panel = self.f.Lpanel[K]
            lo, hi = self.f.run_map[K][I]
            upanel = panel[lo:hi, :].T  # Uhat[K, I] = transpose(Lhat[I, K])
            if cb.src == cb.root:
                self.ranks[cb.root].inbox.append(("upanel_local", K, I, upanel))
            else:
                self._send(TAG_LPANEL, K, I, cb.src, cb.root, upanel, upanel.size)

    # ------------------------------------------------------------- messaging

    def _send(self, tag, K, block, src, dst, payload, entries):
        msg = Message(tag, K, block, src, dst, payload, entries)
        self.ledger.record_send(msg)
        self.ranks[dst].inbox.append(("msg", msg))

    # ------------------------------------------------------------- handlers

    def _handle(self, st: _RankState, item):
        kind = item[0]
        if kind == "msg":
            msg = item[1]
            self.ledger.record_delivery(msg)
            if msg.tag == TAG_LPANEL:
                self._upanel_at_root(st, msg.snode, msg.block, msg.payload)
            elif msg.tag == TAG_COLBCAST:
                self._panel_arrived(st, msg.snode, msg.block, msg.payload)
            elif msg.tag == TAG_ROWREDUCE:
                key = (msg.snode, msg.block)
                st.rr_payloads[key].extend(msg.payload)
                st.rr_children[key] -= 1
                self._try_reduce(st, msg.snode, msg.block)
            elif msg.tag == TAG_DIAGUPDATE:
                K = msg.snode
                st.diag_recv[K][msg.src] = msg.payload
                st.diag_expect[K] -= 1
                if st.diag_expect[K] == 0:
                    self._finalize_diag(st, K)
            elif msg.tag == TAG_UPANEL:
                self._store_final(st, ("u", msg.snode, msg.block), msg.payload)
            else:
                raise AssertionError(f"unknown tag {msg.tag}")
        elif kind == "upanel_local":
            _, K, I, panel = item
            self._upanel_at_root(st, K, I, panel)
        elif kind == "diag_seed":
            self._finalize_diag(st, item[1])
        else:
            raise AssertionError(f"unknown task {kind}")

    def _upanel_at_root(self, st, K, I, panel):
        cb = self.plan.cb[(K, I)]
        for child in cb.tree.children.get(st.rank, ()):
            self._send(TAG_COLBCAST, K, I, st.rank, child, panel, cb.entries)
        self._panel_arrived(st, K, I, panel)

    def _panel_arrived(self, st, K, I, panel):
        cb = self.plan.cb[(K, I)]
        if st.rank != cb.root:
            for child in cb.tree.children.get(st.rank, ()):
                self._send(TAG_COLBCAST, K, I, st.rank, child, panel, cb.entries)
        st.panels[(K, I)] = panel
        for J in cb.mult.get(st.rank, ()):
            key = _block_key(J, I)
            if key in st.store:
                self._compute_product(st, K, I, J)
            else:
                st.waiters.setdefault(key, []).append((K, I))

    def _compute_product(self, st, K, I, J):
        f = self.f
        lo, hi = f.run_map[K][J]
        rJ = f.rows_below[K][lo:hi]
        lo2, hi2 = f.run_map[K][I]
        cI = f.rows_below[K][lo2:hi2]
        S = extract_block(st.store, f, J, I, rJ, cI)
        panel = st.panels[(K, I)]          # Uhat[K, I], shape (width K, |cI|)
        prod = S @ panel.T                 # Ainv[J, I] @ Lhat[I, K]
        prods = st.products[(K, J)]
        prods[I] = prod
        if len(prods) == len(self.plan.rr[(K, J)].needed[st.rank]):
            st.rr_ready[(K, J)] = True
            self._try_reduce(st, K, J)

    def _try_reduce(self, st, K, J):
        key = (K, J)
        if not st.rr_ready.get(key) or st.rr_children[key] != 0:
            return
        rr = self.plan.rr[key]
        entries = []
        if st.rank in rr.needed:
            prods = st.products[key]
            partial = sum(prods[I] for I in sorted(prods))
            entries.append((st.rank, partial))
        entries.extend(st.rr_payloads[key])
        st.rr_children[key] = -1  # fired
        if st.rank == rr.target:
            total = None
            for _, part in sorted(entries, key=lambda e: e[0]):
                total = part if total is None else total + part
            self._finalize_lower(st, K, J, -total)
        else:
            parent = rr.tree.parent[st.rank]
            self._send(TAG_ROWREDUCE, K, J, st.rank, parent, entries, rr.entries)

    def _finalize_lower(self, st, K, J, block):
        self._store_final(st, ("l", J, K), block)
        # upper counterpart by symmetry
        src, dst = self.plan.uside[(K, J)]
        upper = block.T.copy()
        if src == dst:
            self._store_final(st, ("u", K, J), upper)
        else:
            self._send(TAG_UPANEL, K, J, src, dst, upper, upper.size)
        # diagonal contribution bookkeeping
        st.diag_pending[K] -= 1
        if st.diag_pending[K] == 0:
            self._send_diag_contribution(st, K)

    def _send_diag_contribution(self, st, K):
        f = self.f
        owner, contributors = self.plan.diag[K]
        total = None
        for J in contributors[st.rank]:
            lo, hi = f.run_map[K][J]
            term = f.Lpanel[K][lo:hi, :].T @ st.store[("l", J, K)]
            total = term if total is None else total + term
        if st.rank == owner:
            st.diag_recv[K][st.rank] = total
            st.diag_expect[K] -= 1
            if st.diag_expect[K] == 0:
                self._finalize_diag(st, K)
        else:
            self._send(TAG_DIAGUPDATE, K, None, st.rank, owner, total, total.size)

    def _finalize_diag(self, st, K):
        D = _diag_inverse_term(self.f, K)
        recv = st.diag_recv.get(K, {})
        for src in sorted(recv):
            D = D - recv[src]
        self._store_final(st, ("d", K), D)

    def _store_final(self, st, key, block):
        st.store[key] = block
        with self._count_lock:
            self.remaining -= 1
            if self.remaining == 0:
                self.done.set()
        for (K, I) in st.waiters.pop(key, ()):  # retry blocked products
            cb = self.plan.cb[(K, I)]
            J = key[1] if key[0] == "l" else (key[2] if key[0] == "u" else key[1])
            for Jm in cb.mult.get(st.rank, ()):
                if _block_key(Jm, I) == key:
                    self._compute_product(st, K, I, Jm)

    # ------------------------------------------------------------- schedulers

    def run_round_robin(self, schedule_seed=None):
        rng = _random.Random(schedule_seed) if schedule_seed is not None else None
        order = list(range(self.grid.p))
        while not self.done.is_set():
            if rng is not None:
                rng.shuffle(order)
            progressed = False
            for r in order:
                st = self.ranks[r]
                if st.inbox:
                    self._handle(st, st.inbox.popleft())
                    progressed = True
            if not progressed and not self.done.is_set():
                self._raise_deadlock()

    def run_threaded(self, workers):
        workers = max(1, min(workers, self.grid.p))
        groups = [list(range(self.grid.p))[w::workers] for w in range(workers)]
        errors = []

        def worker(ranks):
            try:
                while not self.done.is_set():
                    progressed = False
                    for r in ranks:
                        st = self.ranks[r]
                        while st.inbox:
                            self._handle(st, st.inbox.popleft())
                            progressed = True
                    if not progressed:
                        time.sleep(1e-4)
            except Exception as exc:  # surfaced after join
                errors.append(exc)
                self.done.set()

        threads = [threading.Thread(target=worker, args=(g,)) for g in groups]
        for t in threads:
            t.start()
        deadline = time.monotonic() + 600
        while not self.done.is_set():
            if time.monotonic() > deadline:
                self.done.set()
                for t in threads:
                    t.join()
                self._raise_deadlock()
            time.sleep(1e-3)
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    def _raise_deadlock(self):
        for K in range(self.f.part.count):
            owner = self.plan.diag[K][0]
            if ("d", K) not in self.ranks[owner].store:
                raise DeadlockError(
                    f"no runnable work but supernode {K} is unfinished")
        raise DeadlockError("no runnable work with dependencies outstanding")

    def gather_result(self) -> SelInvResult:
        store = {}
        for st in self.ranks:
            store.update(st.store)
        assert len(store) == self.plan.total_blocks
        return SelInvResult(self.f, store)


def _block_key(J, I):
    if J == I:
        return ("d", J)
    if J > I:
        return ("l", J, I)
    return ("u", J, I)


def simulate_ledger(plan: RunPlan) -> CommLedger:
    """Ledger of a run derived from the static plan alone, without numerics.

    Every message the engine would send is determined by the plan: panel
    handoffs, one message per broadcast/reduction tree edge, the upper-block
    transposes, and the diagonal contributions. The result is byte-for-byte
    identical to the ledger of an actual run.
    """
    ledger = CommLedger(plan.grid.p)
    ledger.collectives = plan.describe_collectives()

    def send(tag, K, block, src, dst, entries):
        msg = Message(tag, K, block, src, dst, None, entries)
        ledger.record_send(msg)
        ledger.record_delivery(msg)

    for (K, I), cb in plan.cb.items():
        if cb.src != cb.root:
            send(TAG_LPANEL, K, I, cb.src, cb.root, cb.entries)
        for parent, child in cb.tree.edges:
            send(TAG_COLBCAST, K, I, parent, child, cb.entries)
    for (K, J), rr in plan.rr.items():
        for parent, child in rr.tree.edges:
            send(TAG_ROWREDUCE, K, J, child, parent, rr.entries)
        src, dst = plan.uside[(K, J)]
        if src != dst:
            send(TAG_UPANEL, K, J, src, dst, rr.entries)
    for K, (owner, contributors) in plan.diag.items():
        w = plan.f.part.width(K)
        for r in contributors:
            if r != owner:
                send(TAG_DIAGUPDATE, K, None, r, owner, w * w)
    return ledger


def prepare(A: SparseMatrix, max_size=48):
    """Symbolic analysis plus normalized factorization, shared across runs."""
    As = symmetrize_pattern(A)
    etree = elimination_tree(As)
    fill = symbolic_fill(As, etree)
    part = detect_supernodes(fill, max_size)
    f = supernodal_lu(As, part, fill)
    return normalize_factors(f)


def run_parallel_selinv(A: SparseMatrix, grid: ProcessGrid, tree_kind, seed,
                        max_size=48, prepared: SupFactorization = None,
                        threads=None, schedule_seed=None):
    """Execute the emulated parallel selected inversion.

    Returns (SelInvResult, CommLedger). ``prepared`` may carry a normalized
    factorization to reuse across runs; otherwise it is computed here.
    ``threads`` defaults to the SELINV_THREADS environment variable; with one
    worker a deterministic round-robin scheduler is used.
    """
    f = prepared if prepared is not None else prepare(A, max_size)
    if not f.normalized:
        raise ValueError("prepared factorization must be normalized")
    plan = RunPlan(f, grid, tree_kind, seed)
    ledger = CommLedger(grid.p)
    ledger.collectives = plan.describe_collectives()
    engine = Engine(plan, ledger)
    engine.seed_work()
    if threads is None:
        threads = int(os.environ.get("SELINV_THREADS", "1"))
    if engine.remaining == 0:
        engine.done.set()
    elif threads > 1:
        engine.run_threaded(threads)
    else:
        engine.run_round_robin(schedule_seed=schedule_seed)
    return engine.gather_result(), ledger
