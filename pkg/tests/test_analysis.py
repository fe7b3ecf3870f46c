import csv
import json
import statistics

import pytest

from selinv.analysis import (MB, VolumeStats, compare_schemes, histogram_rows,
                             volume_stats, write_comparison_json,
                             write_heatmap_csv, write_histogram_csv)
from selinv.comm import TREE_KINDS, build_grid
from selinv.runtime import run_parallel_selinv
from selinv.sparse import gen_laplacian_2d


def test_volume_stats_hand_values():
    # [DERIVED] hand-computed on [2, 4, 4, 4, 5, 5, 7, 9]
    v = VolumeStats([2, 4, 4, 4, 5, 5, 7, 9])
    assert v.min == 2 and v.max == 9 and v.total == 40
    assert v.mean == 5.0 and v.median == 4.5
    assert v.stddev == pytest.approx(2.0)  # population stddev
    assert VolumeStats([3]).stddev == 0.0
    with pytest.raises(ValueError):
        VolumeStats([])


def test_mb_is_decimal_megabyte():
    assert MB == 10 ** 6
    d = VolumeStats([2_000_000, 4_000_000]).as_dict("mb")
    assert d["mean"] == 3.0 and d["total"] == 6.0


@pytest.fixture(scope="module")
def run():
    A = gen_laplacian_2d(6, 6)
    grid = build_grid(3, 2)
    _, ledger = run_parallel_selinv(A, grid, "shifted", 3, max_size=4)
    return grid, ledger


def test_volume_stats_from_ledger(run):
    grid, ledger = run
    vs = volume_stats(ledger, "sent", "all")
    per = ledger.per_rank("sent", "all")
    assert vs.total == per.sum() and vs.max == per.max()
    assert (volume_stats(ledger, "sent", "colbcast").total
            + volume_stats(ledger, "sent", "rowreduce").total
            + volume_stats(ledger, "sent", "other").total == vs.total)


def test_heatmap_csv(run, tmp_path):
    grid, ledger = run
    p = tmp_path / "h.csv"
    write_heatmap_csv(p, ledger, grid, "sent", "all")
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["grid_row", "grid_col", "bytes"]
    assert len(rows) == 1 + grid.p
    per = ledger.per_rank("sent", "all")
    for i, j, b in (map(int, r) for r in rows[1:]):
        assert b == per[grid.rank(i, j)]


def test_histogram_rows(run, tmp_path):
    grid, ledger = run
    rows = histogram_rows(ledger, "sent", "all", bins=5)
    assert len(rows) == 5
    assert sum(c for _, _, c in rows) == grid.p  # every rank lands in a bin
    widths = {round(hi - lo, 9) for lo, hi, _ in rows}
    assert len(widths) == 1  # equal-width bins
    assert rows[0][0] == 0.0
    assert rows[-1][1] == float(ledger.per_rank("sent", "all").max())
    p = tmp_path / "hist.csv"
    write_histogram_csv(p, ledger, "sent", bins=5)
    with open(p, newline="") as fh:
        out = list(csv.reader(fh))
    assert out[0] == ["bin_lower", "bin_upper", "rank_count"]
    assert len(out) == 6


def test_compare_schemes(tmp_path):
    A = gen_laplacian_2d(5, 5)
    grid = build_grid(2, 2)
    report, ledgers = compare_schemes(A, grid, seeds=[0, 1], max_size=4)
    assert report["schema_version"] == 1
    assert set(report["schemes"]) == set(TREE_KINDS)
    for kind in TREE_KINDS:
        sch = report["schemes"][kind]
        assert [s["seed"] for s in sch["per_seed"]] == [0, 1]
        agg = sch["aggregate"]
        assert agg["mean"] == pytest.approx(
            statistics.fmean(s["mean"] for s in sch["per_seed"]))
    assert set(ledgers) == set(TREE_KINDS)

    # serialized report is bitwise deterministic across repeated runs
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_comparison_json(p1, report)
    report2, _ = compare_schemes(A, grid, seeds=[0, 1], max_size=4)
    write_comparison_json(p2, report2)
    assert p1.read_bytes() == p2.read_bytes()
    parsed = json.loads(p1.read_text())
    assert parsed["grid"] == {"pr": 2, "pc": 2, "p": 4}
