"""Communication-load analysis over CommLedger byte counters.

Reports per-rank sent/received payload volume, per-grid-cell heatmap and
histogram CSV exports, and a JSON comparison of broadcast/reduction schemes
over several seeds. Volumes are payload bytes; MB means 10**6 bytes.
"""

from __future__ import annotations

import csv
import json
import statistics

import numpy as np

from . import comm
from .comm import ProcessGrid
from .runtime import CommLedger, prepare, run_parallel_selinv

SCHEMA_VERSION = 1
MB = 1_000_000


class VolumeStats:
    """Summary statistics of a per-rank byte-volume vector."""

    def __init__(self, per_rank):
        v = [int(x) for x in per_rank]
        if not v:
            raise ValueError("empty volume vector")
        self.per_rank = v
        self.min = min(v)
        self.max = max(v)
        self.mean = statistics.fmean(v)
        self.median = statistics.median(v)
        self.stddev = statistics.pstdev(v)  # population stddev
        self.total = sum(v)

    def as_dict(self, unit="bytes"):
        scale = MB if unit == "mb" else 1
        return {
            "min": self.min / scale,
            "max": self.max / scale,
            "mean": self.mean / scale,
            "median": self.median / scale,
            "stddev": self.stddev / scale,
            "total": self.total / scale,
        }

    def __repr__(self):
        return (f"VolumeStats(min={self.min}, max={self.max}, "
                f"mean={self.mean:.6g}, stddev={self.stddev:.6g})")


def volume_stats(ledger: CommLedger, direction="sent", kind="all") -> VolumeStats:
    return VolumeStats(ledger.per_rank(direction, kind))


def heatmap_rows(ledger: CommLedger, grid: ProcessGrid, direction="sent", kind="all"):
    per_rank = ledger.per_rank(direction, kind)
    rows = []
    for r in range(grid.p):
        i, j = grid.coords(r)
        rows.append((i, j, int(per_rank[r])))
    return rows


def write_heatmap_csv(path, ledger: CommLedger, grid: ProcessGrid,
                      direction="sent", kind="all"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_row", "grid_col", "bytes"])
        w.writerows(heatmap_rows(ledger, grid, direction, kind))


def histogram_rows(ledger: CommLedger, direction="sent", kind="all", bins=10):
    """Equal-width bins over [0, max volume]; returns (lower, upper, count) rows."""
    per_rank = ledger.per_rank(direction, kind)
    hi = int(per_rank.max())
    if hi == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
    else:
        edges = np.linspace(0.0, float(hi), bins + 1)
    counts, _ = np.histogram(per_rank, bins=edges)
    return [(edges[b], edges[b + 1], int(counts[b])) for b in range(bins)]


def write_histogram_csv(path, ledger: CommLedger, direction="sent",
                        kind="all", bins=10):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lower", "bin_upper", "rank_count"])
        for lo, hi, c in histogram_rows(ledger, direction, kind, bins):
            w.writerow([f"{lo:.6f}", f"{hi:.6f}", c])


def compare_schemes(A, grid: ProcessGrid, seeds, max_size=48,
                    kinds=comm.TREE_KINDS, direction="sent", stat_kind="all"):
    """Run every tree kind over every seed on one shared factorization.

    Returns a JSON-serializable dict: per-scheme per-seed volume statistics
    plus across-seed aggregates. Asserts that all runs produce identical
    numeric results. Also returns the first-seed ledgers for export.
    """
    f = prepare(A, max_size)
    baseline = None
    report = {
        "schema_version": SCHEMA_VERSION,
        "matrix_n": A.n,
        "grid": {"pr": grid.pr, "pc": grid.pc, "p": grid.p},
        "max_supernode": max_size,
        "seeds": list(seeds),
        "direction": direction,
        "kind": stat_kind,
        "unit": "mb",
        "schemes": {},
    }
    ledgers = {}
    for kind in kinds:
        per_seed = []
        for seed in seeds:
            res, ledger = run_parallel_selinv(A, grid, kind, seed, prepared=f)
            if baseline is None:
                baseline = res
            elif not res.equals_exactly(baseline):
                raise AssertionError(
                    f"scheme {kind} seed {seed} changed the numeric result")
            if kind not in ledgers:
                ledgers[kind] = ledger
            stats = volume_stats(ledger, direction, stat_kind)
            per_seed.append({"seed": seed, **stats.as_dict("mb")})
        agg_src = [s for s in per_seed]
        report["schemes"][kind] = {
            "per_seed": per_seed,
            "aggregate": {
                field: statistics.fmean(s[field] for s in agg_src)
                for field in ("min", "max", "mean", "median", "stddev", "total")
            },
        }
    return report, ledgers


def write_comparison_json(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
