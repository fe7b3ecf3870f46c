import numpy as np
import pytest

from selinv.comm import TREE_KINDS, build_grid
from selinv.runtime import (TAG_COLBCAST, TAG_LPANEL, CommLedger,
                            DeadlockError, Engine, Message, RunPlan,
                            prepare, run_parallel_selinv, simulate_ledger)
from selinv.seqinv import selected_inversion
from selinv.sparse import (SparseMatrix, gen_laplacian_2d,
                           gen_random_diag_dominant, gen_tridiagonal)


def test_message_size():
    m = Message("ColBcast", 0, 1, 0, 1, None, 6)
    assert m.size == 6 * 8 + 32  # [DERIVED] 8 bytes/entry + 32-byte header


def test_hand_counted_bytes_tridiagonal():
    # [DERIVED] tridiagonal n=8, singleton supernodes, 2x2 grid, flat trees.
    # Each supernode K < 7 has the single ancestor K+1: one ColBcast group of
    # two ranks moving a 1x1 panel (8 payload bytes) -> 7 * 8 = 56 bytes; the
    # matching RowReduce groups move another 56; handoffs/transposes/diagonal
    # contributions are "other".
    A = gen_tridiagonal(8)
    f = prepare(A, 1)
    res, led = run_parallel_selinv(A, build_grid(2, 2), "flat", 0, prepared=f)
    assert led.total("sent", "colbcast") == 56
    assert led.total("sent", "rowreduce") == 56


def test_single_rank_no_messages():
    A = gen_laplacian_2d(4, 4)
    res, led = run_parallel_selinv(A, build_grid(1, 1), "flat", 0)
    assert led.message_count() == 0 and led.total("sent") == 0
    f = prepare(A, 48)
    # accumulation order differs from the sequential sweep, so only
    # near-machine-precision agreement is guaranteed
    assert res.rel_error_vs(selected_inversion(f)) <= 1e-14


@pytest.mark.parametrize("grid", [(2, 2), (3, 2), (2, 4)])
def test_parallel_matches_sequential(grid):
    A = gen_random_diag_dominant(45, seed=6)
    f = prepare(A, 4)
    seq = selected_inversion(f)
    res, _ = run_parallel_selinv(A, build_grid(*grid), "binary", 1, prepared=f)
    assert res.rel_error_vs(seq) <= 1e-13


def test_identical_across_tree_kinds_and_schedules():
    A = gen_laplacian_2d(5, 5)
    f = prepare(A, 3)
    grid = build_grid(2, 3)
    runs = [run_parallel_selinv(A, grid, kind, 2, prepared=f)[0]
            for kind in TREE_KINDS]
    assert all(r.equals_exactly(runs[0]) for r in runs)
    # adversarial rank-visit order does not change a single bit
    for ss in (1, 99, 12345):
        r = run_parallel_selinv(A, grid, "shifted", 2, prepared=f,
                                schedule_seed=ss)[0]
        assert r.equals_exactly(runs[0])


def test_threaded_matches_round_robin():
    A = gen_laplacian_2d(5, 5)
    f = prepare(A, 3)
    grid = build_grid(2, 3)
    base, lbase = run_parallel_selinv(A, grid, "shifted", 4, prepared=f)
    for workers in (2, 6):
        res, led = run_parallel_selinv(A, grid, "shifted", 4, prepared=f,
                                       threads=workers)
        assert res.equals_exactly(base)
        assert led.canonical_events() == lbase.canonical_events()
        assert np.array_equal(led.sent, lbase.sent)


def test_conservation():
    A = gen_random_diag_dominant(40, seed=2)
    _, led = run_parallel_selinv(A, build_grid(3, 3), "shifted", 5, max_size=4)
    for kind in ("all", "colbcast", "rowreduce", "other"):
        assert led.total("sent", kind) == led.total("received", kind)


def test_simulated_ledger_matches_real_run():
    A = gen_laplacian_2d(6, 6)
    f = prepare(A, 4)
    grid = build_grid(3, 3)
    for kind in TREE_KINDS:
        _, led = run_parallel_selinv(A, grid, kind, 7, prepared=f)
        sim = simulate_ledger(RunPlan(f, grid, kind, 7))
        assert np.array_equal(led.sent, sim.sent)
        assert np.array_equal(led.received, sim.received)
        assert (sorted((e[0], e[1], e[2], e[3], e[4], e[5]) for e in led.events)
                == sorted((e[0], e[1], e[2], e[3], e[4], e[5]) for e in sim.events))


def test_panel_handoff_crosses_ranks():
    # The owner of the L panel block (I, K) sends its transpose to the owner
    # of (K, I), who then roots the column broadcast.
    A = gen_laplacian_2d(5, 5)
    f = prepare(A, 3)
    grid = build_grid(3, 2)
    plan = RunPlan(f, grid, "flat", 0)
    crossing = [(K, I) for (K, I), cb in plan.cb.items() if cb.src != cb.root]
    assert crossing, "expected at least one off-diagonal handoff"
    _, led = run_parallel_selinv(A, grid, "flat", 0, prepared=f)
    handoffs = {(e[1], e[2]): (e[3], e[4]) for e in led.events if e[0] == TAG_LPANEL}
    for K, I in crossing:
        cb = plan.cb[(K, I)]
        assert handoffs[(K, I)] == (cb.src, cb.root)
        assert handoffs[(K, I)][0] == plan.map.owner(I, K)


def test_pipelining_of_independent_branches():
    # Two decoupled chains: a block-diagonal matrix of two tridiagonal halves.
    # Their supernodes live on disjoint ranks of a 4x1 grid, and the delivery
    # log interleaves events from both branches instead of finishing one
    # branch before starting the other.
    half = gen_tridiagonal(16).to_dense()
    D = np.zeros((32, 32))
    D[:16, :16] = half
    D[16:, 16:] = half
    A = SparseMatrix.from_dense(D)
    f = prepare(A, 1)
    grid = build_grid(4, 1)
    _, led = run_parallel_selinv(A, grid, "flat", 0, prepared=f)
    branch = ["first" if e[1] < 16 else "second" for e in led.events]
    assert {"first", "second"} <= set(branch)
    switches = sum(1 for a, b in zip(branch, branch[1:]) if a != b)
    assert switches >= 2  # genuinely interleaved, not two sequential phases


def test_deadlock_detection():
    A = gen_laplacian_2d(4, 4)
    f = prepare(A, 3)
    plan = RunPlan(f, build_grid(2, 2), "flat", 0)
    engine = Engine(plan, CommLedger(4))
    engine.seed_work()
    # drop one pending item: the run can no longer complete
    for st in engine.ranks:
        if st.inbox:
            st.inbox.popleft()
            break
    with pytest.raises(DeadlockError):
        engine.run_round_robin()


def test_rejects_unknown_tree_kind():
    A = gen_tridiagonal(4)
    with pytest.raises(ValueError):
        run_parallel_selinv(A, build_grid(2, 2), "ring", 0)


def test_requires_normalized_prepared():
    from selinv.factor import supernodal_lu
    from selinv.symbolic import detect_supernodes, elimination_tree, symbolic_fill
    A = gen_tridiagonal(5)
    fill = symbolic_fill(A, elimination_tree(A))
    part = detect_supernodes(fill, 48)
    raw = supernodal_lu(A, part, fill)
    with pytest.raises(ValueError):
        run_parallel_selinv(A, build_grid(2, 2), "flat", 0, prepared=raw)
