"""Phase A ranking metrics and Phase B answer metrics.

All values lie in [0, 1]. Zero-denominator conventions are explicit: any
precision, recall or F1 whose denominator is zero is defined as 0. Aggregates
are arithmetic means over evaluated questions, accumulated with ``math.fsum``
so they are independent of question order.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from math import fsum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .runs import RankedRun
from .textnorm import normalize_answer, rouge_tokenize

logger = logging.getLogger(__name__)

SKIP_WINDOW = 4  # ROUGE-SU4: ordered pairs (i, j) with j - i <= 4


@dataclass
class GoldSet:
    question_id: str
    relevant_pmids: set[str]


@dataclass
class FactoidGold:
    """Acceptable answers: each group is one answer with its synonyms."""

    synonym_groups: list[set[str]]


def _mean(values: Sequence[float]) -> float:
    return fsum(values) / len(values) if values else 0.0


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Phase A: document ranking
# ---------------------------------------------------------------------------

def recall_at_n(run: RankedRun, gold: set[str], n: int) -> float:
    """Fraction of golden documents contained in the top-n of the run."""
    if not gold:
        raise DataError(f"empty gold set for question {run.question_id}")
    top = set(run.pmids[:n])
    return len(top & gold) / len(gold)


def average_precision_at10(run: RankedRun, gold: set[str]) -> float:
    """AP over the top-10 with denominator min(|gold|, 10)."""
    if not gold:
        raise DataError(f"empty gold set for question {run.question_id}")
    pmids = run.pmids
    if len(set(pmids)) != len(pmids):
        raise DataError(f"duplicate pmids in run for question {run.question_id}")
    pmids = pmids[:10]
    hits = 0
    precision_sum = 0.0
    for rank, pmid in enumerate(pmids, start=1):
        if pmid in gold:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / min(len(gold), 10)


def map_at10(
    runs: Mapping[str, RankedRun], golds: Mapping[str, set[str]]
) -> float:
    """Arithmetic mean of per-question AP over identical question-id sets."""
    if set(runs) != set(golds):
        diff = sorted(set(runs) ^ set(golds))
        raise DataError(f"question id mismatch between runs and golds: {diff}")
    aps = [average_precision_at10(runs[qid], golds[qid]) for qid in sorted(runs)]
    return _mean(aps)


# ---------------------------------------------------------------------------
# Phase B: exact answers
# ---------------------------------------------------------------------------

def reciprocal_rank(predicted: Sequence[str], gold: FactoidGold) -> float:
    """1/r for the first prediction matching any synonym in any group, else 0."""
    normalized_groups = [
        {normalize_answer(s) for s in group} for group in gold.synonym_groups
    ]
    for rank, raw in enumerate(predicted, start=1):
        pred = normalize_answer(raw)
        if any(pred in group for group in normalized_groups):
            return 1.0 / rank
    return 0.0


def mean_reciprocal_rank(
    cases: Sequence[tuple[Sequence[str], FactoidGold]]
) -> float:
    return _mean([reciprocal_rank(pred, gold) for pred, gold in cases])


def macro_f1_yesno(
    predictions: Sequence[str], golds: Sequence[str]
) -> float:
    """maF1 = (F1 with yes positive + F1 with no positive) / 2."""
    if len(predictions) != len(golds):
        raise DataError("predictions and golds differ in length")
    for value in list(predictions) + list(golds):
        if value not in ("yes", "no"):
            raise DataError(f"yes/no label outside {{yes, no}}: {value!r}")

    def class_f1(positive: str) -> float:
        tp = sum(1 for p, g in zip(predictions, golds) if p == positive and g == positive)
        fp = sum(1 for p, g in zip(predictions, golds) if p == positive and g != positive)
        fn = sum(1 for p, g in zip(predictions, golds) if p != positive and g == positive)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return _f1(precision, recall)

    return (class_f1("yes") + class_f1("no")) / 2


def list_f1(predicted: Sequence[str], groups: Sequence[set[str]]) -> float:
    """Per-question list F1 with each synonym group claimable once."""
    normalized_groups = [{normalize_answer(s) for s in g} for g in groups]
    claimed = [False] * len(normalized_groups)
    tp = 0
    for raw in predicted:
        pred = normalize_answer(raw)
        for i, group in enumerate(normalized_groups):
            if not claimed[i] and pred in group:
                claimed[i] = True
                tp += 1
                break
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(normalized_groups) if normalized_groups else 0.0
    return _f1(precision, recall)


def mean_list_f1(
    cases: Sequence[tuple[Sequence[str], Sequence[set[str]]]]
) -> float:
    return _mean([list_f1(pred, groups) for pred, groups in cases])


# ---------------------------------------------------------------------------
# Phase B: ideal answers (ROUGE)
# ---------------------------------------------------------------------------

def _clipped_overlap(cand: Counter, ref: Counter) -> int:
    return sum(min(count, ref[unit]) for unit, count in cand.items() if unit in ref)


def _rouge_from_counts(cand: Counter, ref: Counter) -> tuple[float, float, float]:
    overlap = _clipped_overlap(cand, ref)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    recall = overlap / ref_total if ref_total else 0.0
    precision = overlap / cand_total if cand_total else 0.0
    return recall, precision, _f1(precision, recall)


def _bigrams(tokens: Sequence[str]) -> Counter:
    return Counter(zip(tokens, tokens[1:]))


def rouge_2(candidate: str, reference: str) -> tuple[float, float, float]:
    """Bigram overlap (recall, precision, f1) with clipped multiset counting."""
    return _rouge_from_counts(
        _bigrams(rouge_tokenize(candidate)), _bigrams(rouge_tokenize(reference))
    )


def su4_units(tokens: Sequence[str]) -> Counter:
    """Counting units for ROUGE-SU4: unigrams plus skip-bigrams within the window.

    Unigrams are 1-tuples and skip-bigrams 2-tuples, so the two unit kinds
    never collide in the multiset.
    """
    units: Counter = Counter((t,) for t in tokens)
    for i, left in enumerate(tokens):
        for j in range(i + 1, min(i + SKIP_WINDOW, len(tokens) - 1) + 1):
            units[(left, tokens[j])] += 1
    return units


def rouge_su4(candidate: str, reference: str) -> tuple[float, float, float]:
    return _rouge_from_counts(
        su4_units(rouge_tokenize(candidate)), su4_units(rouge_tokenize(reference))
    )


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    aggregates: dict[str, float] = field(default_factory=dict)
    per_question: dict[str, dict[str, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "aggregates": self.aggregates,
            "per_question": [
                {"question_id": qid, **vals}
                for qid, vals in sorted(self.per_question.items())
            ],
            "warnings": self.warnings,
        }
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def evaluate_phase_a(
    runs: Mapping[str, RankedRun],
    golds: Mapping[str, set[str]],
    recall_ns: Sequence[int] = (10, 100, 1000),
) -> EvalReport:
    """Recall@N and MAP@10 over the questions shared by runs and gold.

    Questions with empty gold document sets are excluded with a warning.
    Remaining id mismatches are an error.
    """
    report = EvalReport()
    usable = {}
    for qid, gold in golds.items():
        if gold:
            usable[qid] = gold
        else:
            report.warnings.append(f"question {qid} has no gold documents, excluded")
            logger.warning("question %s has no gold documents, excluded", qid)
    if set(runs) != set(usable):
        diff = sorted(set(runs) ^ set(usable))
        raise DataError(f"question id mismatch between runs and golds: {diff}")

    per_metric: dict[str, list[float]] = {f"recall@{n}": [] for n in recall_ns}
    per_metric["ap@10"] = []
    for qid in sorted(usable):
        run, gold = runs[qid], usable[qid]
        row: dict[str, float] = {}
        for n in recall_ns:
            row[f"recall@{n}"] = recall_at_n(run, gold, n)
        row["ap@10"] = average_precision_at10(run, gold)
        for name, value in row.items():
            per_metric[name].append(value)
        report.per_question[qid] = row

    for name, values in per_metric.items():
        key = "map@10" if name == "ap@10" else name
        report.aggregates[key] = _mean(values)
    return report


def evaluate_phase_b(questions: Iterable, answers: Mapping) -> EvalReport:
    """Score a submission object against gold questions.

    ``questions`` are dataset.Question-shaped objects; ``answers`` is the
    submission mapping ``{"questions": [{"id", "exact_answer", "ideal_answer"}]}``.
    Questions without a submitted answer are skipped with a warning.
    """
    report = EvalReport()
    answered = {str(a["id"]): a for a in answers.get("questions", [])}

    yes_pred: list[str] = []
    yes_gold: list[str] = []
    mrr_values: list[float] = []
    listf1_values: list[float] = []
    rouge2 = {"recall": [], "precision": [], "f1": []}
    rougesu4 = {"recall": [], "precision": [], "f1": []}

    for q in questions:
        ans = answered.get(q.id)
        if ans is None:
            report.warnings.append(f"question {q.id} not answered, skipped")
            logger.warning("question %s not answered, skipped", q.id)
            continue
        row: dict[str, float] = {}
        exact = ans.get("exact_answer")
        if q.qtype == "yesno":
            gold = "yes" if q.exact_yesno else "no"
            if isinstance(exact, str) and exact.strip().lower() in ("yes", "no"):
                pred = exact.strip().lower()
            else:
                # recorded parse failure: counts as a wrong prediction
                pred = "no" if gold == "yes" else "yes"
                report.warnings.append(f"question {q.id}: no usable yes/no answer, counted wrong")
            yes_pred.append(pred)
            yes_gold.append(gold)
            row["yesno_correct"] = float(pred == gold)
        elif q.qtype in ("factoid", "list"):
            if exact is not None and not isinstance(exact, list):
                raise DataError(
                    f"question {q.id}: {q.qtype} exact_answer must be a list, got {type(exact).__name__}"
                )
            entities = [entry[0] if isinstance(entry, list) else entry for entry in exact or []]
            if q.qtype == "factoid":
                value = reciprocal_rank(entities, FactoidGold(q.synonym_groups))
                mrr_values.append(value)
                row["mrr"] = value
            else:
                value = list_f1(entities, q.synonym_groups)
                listf1_values.append(value)
                row["list_f1"] = value

        ideal_pred = ans.get("ideal_answer") or ""
        if ideal_pred and q.ideal_answer:
            r2 = rouge_2(ideal_pred, q.ideal_answer)
            su4 = rouge_su4(ideal_pred, q.ideal_answer)
            for store, triple, prefix in (
                (rouge2, r2, "rouge2"),
                (rougesu4, su4, "rougesu4"),
            ):
                for part, value in zip(("recall", "precision", "f1"), triple):
                    store[part].append(value)
                    row[f"{prefix}_{part}"] = value
        report.per_question[q.id] = row

    if yes_pred:
        report.aggregates["maf1"] = macro_f1_yesno(yes_pred, yes_gold)
    if mrr_values:
        report.aggregates["mrr"] = _mean(mrr_values)
    if listf1_values:
        report.aggregates["list_f1"] = _mean(listf1_values)
    for store, prefix in ((rouge2, "rouge2"), (rougesu4, "rougesu4")):
        if store["f1"]:
            for part in ("recall", "precision", "f1"):
                report.aggregates[f"{prefix}_{part}"] = _mean(store[part])
    return report
