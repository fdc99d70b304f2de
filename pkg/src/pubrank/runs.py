"""Ranked run lists: the currency between retrieval, re-ranking, fusion and eval.

Run files are line-delimited JSON, one object per question:
``{"question_id": ..., "stage": ..., "items": [{"pmid": ..., "score": ...}, ...]}``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import DataError

STAGES = ("retrieval", "crossencoder", "llm", "fused")

# Stages whose scores are model- or fusion-derived and therefore must be
# non-increasing. The llm stage carries rank-derived points which are
# monotone by construction, so the check is uniform.
_SCORED_STAGES = frozenset(STAGES)


def pmid_sort_key(pmid: str) -> int:
    """Numeric ordering of PMIDs, used as the global tie-break (smaller first)."""
    try:
        return int(pmid)
    except ValueError as exc:
        raise DataError(f"pmid is not numeric: {pmid!r}") from exc


@dataclass
class RankedRun:
    question_id: str
    items: list[tuple[str, float]] = field(default_factory=list)
    stage_tag: str = "retrieval"

    def __post_init__(self) -> None:
        self.items = [(str(p), float(s)) for p, s in self.items]

    @property
    def pmids(self) -> list[str]:
        return [p for p, _ in self.items]

    def truncated(self, k: int) -> "RankedRun":
        return RankedRun(self.question_id, self.items[:k], self.stage_tag)

    def validate(self, max_k: int | None = None) -> None:
        """Check uniqueness, score monotonicity and the optional length cap."""
        seen: set[str] = set()
        for pmid, score in self.items:
            if pmid in seen:
                raise DataError(
                    f"duplicate pmid {pmid} in run for question {self.question_id}"
                )
            seen.add(pmid)
            if score != score or score in (float("inf"), float("-inf")):
                raise DataError(
                    f"non-finite score for pmid {pmid} in question {self.question_id}"
                )
        if self.stage_tag in _SCORED_STAGES:
            scores = [s for _, s in self.items]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise DataError(
                    f"items not sorted by score descending for question {self.question_id}"
                )
        if max_k is not None and len(self.items) > max_k:
            raise DataError(
                f"run for question {self.question_id} has {len(self.items)} items, cap is {max_k}"
            )


def write_run_file(path: str | Path, runs: Iterable[RankedRun]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for run in runs:
            obj = {
                "question_id": run.question_id,
                "stage": run.stage_tag,
                "items": [{"pmid": p, "score": s} for p, s in run.items],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_run_file(path: str | Path) -> list[RankedRun]:
    runs: list[RankedRun] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                run = RankedRun(
                    question_id=str(obj["question_id"]),
                    items=[(d["pmid"], d["score"]) for d in obj["items"]],
                    stage_tag=obj.get("stage", "retrieval"),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed run line: {exc}") from exc
            runs.append(run)
    return runs


def runs_by_question(runs: Iterable[RankedRun]) -> dict[str, RankedRun]:
    out: dict[str, RankedRun] = {}
    for run in runs:
        if run.question_id in out:
            raise DataError(f"duplicate question_id in run file: {run.question_id}")
        out[run.question_id] = run
    return out
