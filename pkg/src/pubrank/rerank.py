"""Two-stage re-ranking: pointwise candidate scoring, then the listwise
chat protocol that reorders the pointwise top-30 into a top-10.

The listwise prompt asks for candidate ordinals rather than PMIDs, and any
slot the model fails to fill falls back to the pointwise order, so the worst
case of an unparseable response is exactly the pointwise top-k.

A per-document chat-scoring variant (asking the model to rate each
question-document pair) is deliberately not implemented: it underperforms
the dedicated pointwise scorer while costing a chat call per document. The
chat model is only used listwise, where it adds value.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .clients import ChatMessage
from .corpus import Document
from .errors import DataError, ServiceError
from .runs import RankedRun, pmid_sort_key

logger = logging.getLogger(__name__)

DEFAULT_DOC_CHAR_BUDGET = 1200
LISTWISE_SYSTEM = (
    "You are a biomedical assistant. You rank candidate documents by their "
    "relevance to a question and return only the requested list of candidate numbers."
)

_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")
_INT_LIST_RE = re.compile(r"^\s*\d+\s*(?:,\s*\d+\s*)*$")

Scorer = Callable[[str, Sequence[tuple[str, str]]], Sequence[tuple[str, float]]]


@dataclass
class ListwisePromptExchange:
    prompt: str
    raw_response: str
    parsed_order: list[int]
    fallback_fill: int


def _doc_text(doc) -> str:
    if isinstance(doc, Document):
        return f"{doc.title} {doc.abstract}".strip()
    return str(doc)


def _lookup_texts(pmids: Sequence[str], docs: Mapping[str, object]) -> list[str]:
    texts = []
    for pmid in pmids:
        if pmid not in docs:
            raise DataError(f"no document text available for pmid {pmid}")
        texts.append(_doc_text(docs[pmid]))
    return texts


def pointwise_rerank(
    question_body: str,
    candidates: RankedRun,
    scorer: Scorer,
    docs: Mapping[str, object],
    k: int,
    batch_size: int = 128,
) -> RankedRun:
    """Score every candidate, sort descending, truncate to k.

    No minimum score threshold is applied; ties break on smaller numeric pmid.
    """
    if not candidates.items:
        raise DataError(f"no candidates to rerank for question {candidates.question_id}")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    pmids = candidates.pmids
    texts = _lookup_texts(pmids, docs)
    scored: list[tuple[str, float]] = []
    try:
        for start in range(0, len(pmids), batch_size):
            batch = list(zip(pmids[start : start + batch_size], texts[start : start + batch_size]))
            scored.extend(scorer(question_body, batch))
    except ServiceError as exc:
        raise ServiceError(
            f"scoring failed for question {candidates.question_id}: {exc}"
        ) from exc
    scored.sort(key=lambda item: (-item[1], pmid_sort_key(item[0])))
    return RankedRun(candidates.question_id, scored[:k], stage_tag="crossencoder")


def build_listwise_prompt(
    question_body: str,
    top30: RankedRun,
    docs: Mapping[str, object],
    k: int = 10,
    doc_char_budget: int = DEFAULT_DOC_CHAR_BUDGET,
) -> list[ChatMessage]:
    """One system message plus one user message enumerating candidates [1]..[n]."""
    if not top30.items:
        raise DataError(f"empty candidate list for question {top30.question_id}")
    want = min(k, len(top30.items))
    lines = [f"Question: {question_body}", "", "Candidate documents:"]
    for i, pmid in enumerate(top30.pmids, start=1):
        text = _doc_text(docs[pmid]) if pmid in docs else ""
        lines.append(f"[{i}] {text[:doc_char_budget]}")
    lines.append("")
    lines.append(
        f"Output exactly the {want} most relevant candidate numbers, most "
        "relevant first, as a bracketed comma-separated list (for example "
        "[2, 5, 1]) and nothing else."
    )
    return [
        ChatMessage("system", LISTWISE_SYSTEM),
        ChatMessage("user", "\n".join(lines)),
    ]


def parse_listwise_response(raw: str, candidate_count: int, want: int) -> list[int]:
    """Extract the first bracketed integer list; never raises on content.

    Out-of-range and duplicate ordinals are dropped (first occurrence wins);
    at most ``want`` ordinals are returned. No parseable list yields [].
    """
    if candidate_count < 1 or want < 1:
        raise DataError("candidate_count and want must be >= 1")
    for match in _BRACKET_RE.finditer(raw):
        content = match.group(1)
        if not _INT_LIST_RE.match(content):
            continue
        ordinals: list[int] = []
        for piece in content.split(","):
            value = int(piece)
            if 1 <= value <= candidate_count and value not in ordinals:
                ordinals.append(value)
            if len(ordinals) == want:
                break
        return ordinals
    return []


def llm_rerank(
    question_body: str,
    top30: RankedRun,
    chat_client,
    docs: Mapping[str, object],
    k: int = 10,
    doc_char_budget: int = DEFAULT_DOC_CHAR_BUDGET,
    audit_dir: str | Path | None = None,
) -> RankedRun:
    """Listwise reorder of the pointwise output with fallback fill.

    Parse failure is not an error: missing slots are filled from the
    pointwise order, so a garbage response degrades to the pointwise top-k.
    """
    messages = build_listwise_prompt(question_body, top30, docs, k, doc_char_budget)
    try:
        raw = chat_client.chat(messages)
    except ServiceError as exc:
        raise ServiceError(
            f"listwise chat failed for question {top30.question_id}: {exc}"
        ) from exc
    ordinals = parse_listwise_response(raw, len(top30.items), k)
    chosen = [top30.items[o - 1][0] for o in ordinals]
    taken = set(chosen)
    for pmid in top30.pmids:
        if len(chosen) >= k:
            break
        if pmid not in taken:
            chosen.append(pmid)
            taken.add(pmid)
    fallback_fill = len(chosen) - len(ordinals)
    exchange = ListwisePromptExchange(
        prompt=messages[1].content,
        raw_response=raw,
        parsed_order=ordinals,
        fallback_fill=fallback_fill,
    )
    if audit_dir is not None:
        directory = Path(audit_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{top30.question_id}.json"
        path.write_text(
            json.dumps(asdict(exchange), ensure_ascii=False, indent=1),
            encoding="utf-8",
        )
    items = [(pmid, float(k - rank)) for rank, pmid in enumerate(chosen)]
    return RankedRun(top30.question_id, items, stage_tag="llm")
