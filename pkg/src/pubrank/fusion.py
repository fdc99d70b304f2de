"""Combine two ranked systems by nomination or weighted rank-point summation.

Fusion works on ordering only: the document at rank r (1-based) inside the
top-K window earns K + 1 - r points and absent documents earn 0, so weights
matter only through their ratio. The weighted variant sums w1 and w2 scaled
points over the union of both windows; grid search sweeps an integer weight
grid against MAP@10 on a validation set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DataError, UsageError
from .metrics import map_at10
from .runs import RankedRun, pmid_sort_key

logger = logging.getLogger(__name__)

DEFAULT_GRID_MAX = 10


@dataclass
class FusionConfig:
    mode: str = "weighted"
    ka: int = 6
    k_total: int = 10
    w1: float = 1.0
    w2: float = 7.0
    rank_points_k: int = 10

    def __post_init__(self) -> None:
        if self.mode not in ("nominate", "weighted"):
            raise UsageError(f"fusion mode must be nominate or weighted, got {self.mode!r}")
        if self.mode == "nominate" and not 0 <= self.ka <= self.k_total:
            raise UsageError(f"ka must be within [0, {self.k_total}], got {self.ka}")
        if self.mode == "weighted":
            if self.w1 < 0 or self.w2 < 0 or self.w1 + self.w2 <= 0:
                raise UsageError(
                    f"weighted fusion needs non-negative weights with w1 + w2 > 0, "
                    f"got ({self.w1}, {self.w2})"
                )
        if self.k_total < 1 or self.rank_points_k < 1:
            raise UsageError("k_total and rank_points_k must be >= 1")


def default_weight_grid(limit: int = DEFAULT_GRID_MAX) -> list[tuple[int, int]]:
    """All integer pairs (w1, w2) in [0, limit]^2 except (0, 0), in (w1, w2) order."""
    return [
        (w1, w2)
        for w1 in range(limit + 1)
        for w2 in range(limit + 1)
        if (w1, w2) != (0, 0)
    ]


def rank_points(run: RankedRun, k: int) -> dict[str, float]:
    """Document at rank r (1-based) gets k + 1 - r; absent documents get 0."""
    return {pmid: float(k - i) for i, pmid in enumerate(run.pmids[:k])}


def _check_same_question(run_a: RankedRun, run_b: RankedRun) -> None:
    if run_a.question_id != run_b.question_id:
        raise DataError(
            f"cannot fuse runs for different questions: "
            f"{run_a.question_id} vs {run_b.question_id}"
        )


def fuse_nominate(run_a: RankedRun, run_b: RankedRun, config: FusionConfig) -> RankedRun:
    """First ka from system A, remainder from B in order, A back-fills if B runs out."""
    _check_same_question(run_a, run_b)
    chosen: list[str] = list(run_a.pmids[: config.ka])
    taken = set(chosen)
    for pmid in run_b.pmids:
        if len(chosen) >= config.k_total:
            break
        if pmid not in taken:
            chosen.append(pmid)
            taken.add(pmid)
    for pmid in run_a.pmids[config.ka :]:
        if len(chosen) >= config.k_total:
            break
        if pmid not in taken:
            chosen.append(pmid)
            taken.add(pmid)
    items = [(pmid, float(config.k_total - i)) for i, pmid in enumerate(chosen)]
    return RankedRun(run_a.question_id, items, stage_tag="fused")


def fuse_weighted(run_a: RankedRun, run_b: RankedRun, config: FusionConfig) -> RankedRun:
    """fused(d) = w1*points_a(d) + w2*points_b(d) over the union of both windows.

    Ties break on higher system-B points, then smaller numeric pmid.
    """
    _check_same_question(run_a, run_b)
    if config.w1 + config.w2 <= 0:
        raise UsageError("weighted fusion needs w1 + w2 > 0")
    points_a = rank_points(run_a, config.rank_points_k)
    points_b = rank_points(run_b, config.rank_points_k)
    union = set(points_a) | set(points_b)
    fused = {
        pmid: config.w1 * points_a.get(pmid, 0.0) + config.w2 * points_b.get(pmid, 0.0)
        for pmid in union
    }
    ordered = sorted(
        union,
        key=lambda p: (-fused[p], -points_b.get(p, 0.0), pmid_sort_key(p)),
    )
    items = [(pmid, fused[pmid]) for pmid in ordered[: config.k_total]]
    return RankedRun(run_a.question_id, items, stage_tag="fused")


def grid_search_weights(
    runs_a: Mapping[str, RankedRun],
    runs_b: Mapping[str, RankedRun],
    golds: Mapping[str, set[str]],
    grid: Sequence[tuple[float, float]] | None = None,
    k_total: int = 10,
    rank_points_k: int = 10,
) -> tuple[float, float, list[tuple[float, float, float]]]:
    """Exhaustively evaluate the grid by MAP@10 and return the argmax.

    The grid is swept in (w1, w2) order and only a strictly better MAP
    displaces the incumbent, so ties resolve to the smaller w1, then the
    smaller w2. The full score table is returned for audit.
    """
    if set(runs_a) != set(runs_b):
        diff = sorted(set(runs_a) ^ set(runs_b))
        raise DataError(f"question id mismatch between run sets: {diff}")
    usable_golds = {}
    for qid, gold in golds.items():
        if gold:
            usable_golds[qid] = gold
        else:
            logger.warning("question %s has no gold documents, excluded", qid)
    if set(runs_a) != set(usable_golds):
        diff = sorted(set(runs_a) ^ set(usable_golds))
        raise DataError(f"question id mismatch between runs and golds: {diff}")
    if grid is None:
        grid = default_weight_grid()
    if not grid:
        raise UsageError("weight grid is empty")

    table: list[tuple[float, float, float]] = []
    best: tuple[float, float] | None = None
    best_map = float("-inf")
    for w1, w2 in sorted(grid):
        if w1 + w2 <= 0:
            raise UsageError(f"grid contains degenerate weights ({w1}, {w2})")
        config = FusionConfig(
            mode="weighted", w1=w1, w2=w2, k_total=k_total, rank_points_k=rank_points_k
        )
        fused = {
            qid: fuse_weighted(runs_a[qid], runs_b[qid], config) for qid in runs_a
        }
        score = map_at10(fused, usable_golds)
        table.append((w1, w2, score))
        if score > best_map:
            best_map = score
            best = (w1, w2)
    assert best is not None
    return best[0], best[1], table
