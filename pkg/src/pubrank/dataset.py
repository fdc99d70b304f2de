"""BioASQ-style question loading, splits, hard-negative mining, few-shot pools.

Question "age" has no explicit field in the exports, so file order stands in
for it: later in the file means more recent. Splits are stratified by
question type so no question leaks across train/val/test.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Document
from .errors import DataError, UsageError
from .runs import RankedRun, pmid_sort_key
from .textnorm import normalize_answer

logger = logging.getLogger(__name__)

QTYPES = ("yesno", "factoid", "list", "summary")


@dataclass
class Question:
    id: str
    body: str
    qtype: str
    gold_documents: set[str] = field(default_factory=set)
    gold_snippets: list[tuple[str, str]] = field(default_factory=list)
    exact_yesno: bool | None = None
    exact_groups: list[list[str]] = field(default_factory=list)  # raw surface forms
    ideal_answer: str = ""

    @property
    def synonym_groups(self) -> list[set[str]]:
        groups = []
        for raw_group in self.exact_groups:
            normalized = {normalize_answer(s) for s in raw_group if normalize_answer(s)}
            if normalized:
                groups.append(normalized)
        return groups


@dataclass
class TrainingPair:
    question_id: str
    pmid: str
    label: int
    question_text: str
    doc_text: str


@dataclass
class FewshotExample:
    snippets: list[str]
    body: str
    question: Question


def pmid_from_url(url: str) -> str:
    """Extract the numeric PMID from a .../pubmed/<pmid> URL."""
    trimmed = url.rstrip("/")
    head, _, tail = trimmed.rpartition("/")
    if not head.endswith("pubmed") or not tail.isdigit():
        raise DataError(f"not a pubmed document URL: {url!r}")
    return tail


def _parse_exact_answer(q: dict, qtype: str, qid: str) -> tuple[bool | None, list[list[str]]]:
    raw = q.get("exact_answer")
    if qtype == "summary" or raw is None:
        return None, []
    if qtype == "yesno":
        if not isinstance(raw, str) or raw.strip().lower() not in ("yes", "no"):
            raise DataError(f"question {qid}: yesno exact_answer must be yes/no, got {raw!r}")
        return raw.strip().lower() == "yes", []
    if not isinstance(raw, list):
        raise DataError(f"question {qid}: exact_answer must be a list, got {type(raw)}")
    if all(isinstance(entry, list) for entry in raw):
        groups = [[str(s) for s in entry] for entry in raw if entry]
    elif qtype == "factoid":
        # flat list: one answer with its synonyms
        groups = [[str(s) for s in raw]] if raw else []
    else:
        # flat list for list questions: each element is its own item
        groups = [[str(s)] for s in raw]
    return None, groups


def load_bioasq(path: str | Path) -> list[Question]:
    """Parse the BioASQ JSON shape: top-level questions array."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "questions" not in data:
        raise DataError(f"{path}: missing top-level questions array")
    questions: list[Question] = []
    bad_urls: list[str] = []
    for q in data["questions"]:
        qid = str(q.get("id", ""))
        qtype = q.get("type", "")
        if qtype not in QTYPES:
            raise DataError(f"question {qid}: unknown question type {qtype!r}")
        docs: set[str] = set()
        for url in q.get("documents", []):
            try:
                docs.add(pmid_from_url(url))
            except DataError:
                bad_urls.append(f"{qid}: {url}")
        snippets: list[tuple[str, str]] = []
        for snip in q.get("snippets", []):
            try:
                snippets.append((pmid_from_url(snip["document"]), str(snip["text"])))
            except DataError:
                bad_urls.append(f"{qid}: {snip.get('document')}")
            except (KeyError, TypeError):
                raise DataError(f"question {qid}: snippet missing document or text")
        yesno, groups = _parse_exact_answer(q, qtype, qid)
        ideal = q.get("ideal_answer", "")
        if isinstance(ideal, list):
            ideal = str(ideal[0]) if ideal else ""
        questions.append(
            Question(
                id=qid,
                body=str(q.get("body", "")),
                qtype=qtype,
                gold_documents=docs,
                gold_snippets=snippets,
                exact_yesno=yesno,
                exact_groups=groups,
                ideal_answer=str(ideal),
            )
        )
    if bad_urls:
        raise DataError(
            "non-pubmed document URLs: " + "; ".join(bad_urls[:20])
            + ("..." if len(bad_urls) > 20 else "")
        )
    return questions


def gold_map(questions: Sequence[Question]) -> dict[str, set[str]]:
    return {q.id: set(q.gold_documents) for q in questions}


def _apportion(total: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment; ties go to the earlier split."""
    exact = [r * total for r in ratios]
    counts = [math.floor(e) for e in exact]
    leftover = total - sum(counts)
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i)
    )
    for i in remainders[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(
    questions: Sequence[Question],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[Question], list[Question], list[Question]]:
    """Per-qtype shuffle and apportion; deterministic for a given seed.

    Types with fewer questions than splits go entirely to train with a
    warning. Output splits preserve original file order.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"split ratios must sum to 1, got {ratios}")
    index_splits: tuple[list[int], list[int], list[int]] = ([], [], [])
    for qtype in QTYPES:
        indices = [i for i, q in enumerate(questions) if q.qtype == qtype]
        if not indices:
            continue
        if len(indices) < len(ratios):
            logger.warning(
                "only %d %s questions, all assigned to train", len(indices), qtype
            )
            index_splits[0].extend(indices)
            continue
        rng = random.Random(f"{seed}:{qtype}")
        shuffled = indices[:]
        rng.shuffle(shuffled)
        n_train, n_val, _ = _apportion(len(indices), ratios)
        index_splits[0].extend(shuffled[:n_train])
        index_splits[1].extend(shuffled[n_train : n_train + n_val])
        index_splits[2].extend(shuffled[n_train + n_val :])
    train, val, test = (
        [questions[i] for i in sorted(split)] for split in index_splits
    )
    return train, val, test


def mine_hard_negatives(
    question: Question,
    retrieved: RankedRun,
    depth: int,
    docs: Mapping[str, Document] | None = None,
) -> list[TrainingPair]:
    """Positives are all golden documents; negatives are retrieved non-gold.

    The natural class imbalance is preserved. Output is sorted by
    (label desc, numeric pmid) for determinism.
    """
    if not question.gold_documents:
        logger.warning("question %s has no gold documents, skipped", question.id)
        return []

    def text_of(pmid: str) -> str:
        if docs and pmid in docs:
            doc = docs[pmid]
            return f"{doc.title} {doc.abstract}".strip()
        return ""

    pairs = [
        TrainingPair(question.id, pmid, 1, question.body, text_of(pmid))
        for pmid in question.gold_documents
    ]
    for pmid in retrieved.pmids[:depth]:
        if pmid not in question.gold_documents:
            pairs.append(TrainingPair(question.id, pmid, 0, question.body, text_of(pmid)))
    pairs.sort(key=lambda p: (-p.label, pmid_sort_key(p.pmid)))
    return pairs


def write_pairs_tsv(pairs: Sequence[TrainingPair], path: str | Path) -> None:
    """Tab-separated: question_id, pmid, label, question_text, doc_text."""

    def clean(text: str) -> str:
        return " ".join(text.split())

    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                "\t".join(
                    [p.question_id, p.pmid, str(p.label), clean(p.question_text), clean(p.doc_text)]
                )
                + "\n"
            )


def filter_recent(questions: Sequence[Question], cutoff_fraction: float) -> list[Question]:
    """Keep the most recent ceil(fraction * n) questions by file order."""
    if not 0 < cutoff_fraction <= 1:
        raise UsageError(f"cutoff_fraction must be in (0, 1], got {cutoff_fraction}")
    keep = math.ceil(cutoff_fraction * len(questions))
    return list(questions[len(questions) - keep :])


def sample_fewshot(
    questions: Sequence[Question], qtype: str, n: int, seed: int = 0
) -> list[FewshotExample]:
    """Deterministic sample of n distinct questions of one type."""
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    if qtype not in QTYPES:
        raise UsageError(f"unknown question type {qtype!r}")
    pool = [q for q in questions if q.qtype == qtype]
    if len(pool) < n:
        raise DataError(
            f"few-shot pool for {qtype} has only {len(pool)} questions, need {n}"
        )
    rng = random.Random(f"{seed}:{qtype}:{n}")
    sampled = rng.sample(pool, n)
    return [
        FewshotExample(
            snippets=[text for _, text in q.gold_snippets],
            body=q.body,
            question=q,
        )
        for q in sampled
    ]
