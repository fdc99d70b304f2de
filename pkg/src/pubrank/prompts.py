"""Answer-generation prompt assembly and model answer parsing.

Three prompt styles combine two query templates with two answer-formatting
templates: style 1 = (query 1, formatting 1), style 2 = (query 2,
formatting 1), style 3 = (query 2, formatting 2). Query template 2 only
differs for non-summary ideal-answer prompts, where it appends a short-answer
hint after the question body, and by showing complete gold lists in list-type
few-shot examples. Formatting blocks are versioned text assets with a
checksum manifest, not string constants.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

from .clients import ChatMessage
from .dataset import FewshotExample, Question
from .errors import AnswerParseError, DataError, UsageError
from .textnorm import normalize_answer

TEMPLATES_DIR = Path(__file__).parent / "assets" / "templates"
SYSTEM_PREAMBLE = (
    "You are a biomedical assistant. You answer questions based on background "
    "knowledge and return the answer in the requested format."
)
FACTOID_MAX_ENTITIES = 5
DEFAULT_SNIPPET_BUDGET = 12000

_LINE_MARKER_RE = re.compile(r"^\s*(?:\d+\s*[.)]\s*|[-*•]\s*)")
_YESNO_LEAD_RE = re.compile(r"^(yes|no),")


@dataclass
class PromptSpec:
    style: int
    n_shots: int
    qtype: str
    answer_kind: str

    def __post_init__(self) -> None:
        if self.style not in (1, 2, 3):
            raise UsageError(f"style must be 1, 2 or 3, got {self.style}")
        if self.n_shots < 0:
            raise UsageError(f"n_shots must be >= 0, got {self.n_shots}")
        if self.qtype not in ("yesno", "factoid", "list", "summary"):
            raise UsageError(f"unknown question type {self.qtype!r}")
        if self.answer_kind not in ("exact", "ideal"):
            raise UsageError(f"answer_kind must be exact or ideal, got {self.answer_kind!r}")

    @property
    def query_template(self) -> int:
        return 1 if self.style == 1 else 2

    @property
    def formatting_template(self) -> int:
        return 2 if self.style == 3 else 1


@dataclass
class ExactAnswer:
    qtype: str
    yesno_value: str | None = None
    entities: list[str] = field(default_factory=list)


@lru_cache(maxsize=None)
def formatting_block(qtype: str, answer_kind: str, template: int) -> str:
    path = TEMPLATES_DIR / f"aft{template}_{qtype}_{answer_kind}.txt"
    if not path.exists():
        raise UsageError(f"no formatting template asset {path.name}")
    return path.read_text(encoding="utf-8").rstrip("\n")


def template_manifest() -> dict[str, str]:
    return json.loads((TEMPLATES_DIR / "manifest.json").read_text(encoding="utf-8"))


def _joined_snippets(snippets: Sequence[str], budget: int) -> str:
    """Join snippets with newlines, dropping whole snippets from the end to
    fit the character budget. The first snippet is always kept."""
    kept: list[str] = []
    total = 0
    for snippet in snippets:
        cost = len(snippet) + (1 if kept else 0)
        if kept and total + cost > budget:
            break
        kept.append(snippet)
        total += cost
    return "\n".join(kept)


def _render_query(body: str, snippets_text: str, block: str, hint: str | None) -> str:
    hint_part = f" (Hint: short answer is {hint})" if hint is not None else ""
    return f"Passage: {snippets_text}\nQuestion: {body}{hint_part}\n{block}"


def _first_synonyms(groups: Sequence[Sequence[str]], limit: int | None = None) -> list[str]:
    names = [group[0] for group in groups if group]
    return names[:limit] if limit is not None else names


def _numbered(entries: Sequence[str]) -> str:
    return "\n".join(f"{i}. {e}" for i, e in enumerate(entries, start=1))


def render_gold_exact(question: Question, query_template: int) -> str:
    """Gold exact answer as shown in a few-shot assistant turn."""
    if question.qtype == "yesno":
        return "yes" if question.exact_yesno else "no"
    if question.qtype == "factoid":
        return _numbered(_first_synonyms(question.exact_groups, FACTOID_MAX_ENTITIES))
    if question.qtype == "list":
        if query_template == 1:
            names = _first_synonyms(question.exact_groups, 1)
            return names[0] if names else ""
        return _numbered(_first_synonyms(question.exact_groups))
    return question.ideal_answer


def short_answer_hint(question: Question) -> str:
    """Compact rendering of a question's exact answer for use as a hint."""
    if question.qtype == "yesno":
        return "yes" if question.exact_yesno else "no"
    limit = FACTOID_MAX_ENTITIES if question.qtype == "factoid" else None
    return ", ".join(_first_synonyms(question.exact_groups, limit))


def build_prompt(
    question: Question,
    snippets: Sequence[str],
    spec: PromptSpec,
    fewshot: Sequence[FewshotExample] = (),
    answer_hint: str | None = None,
    snippet_budget: int = DEFAULT_SNIPPET_BUDGET,
) -> list[ChatMessage]:
    """Assemble the full message list: 1 system + 2*n_shots + 1 final user."""
    if len(fewshot) != spec.n_shots:
        raise DataError(
            f"spec asks for {spec.n_shots} shots but {len(fewshot)} examples supplied"
        )
    if not snippets:
        raise DataError(f"no snippets available for question {question.id}")
    block = formatting_block(spec.qtype, spec.answer_kind, spec.formatting_template)
    hinted = spec.answer_kind == "ideal" and spec.query_template == 2
    messages = [ChatMessage("system", SYSTEM_PREAMBLE)]
    for example in fewshot:
        ex_q = example.question
        hint = None
        if hinted and ex_q.qtype != "summary":
            hint = short_answer_hint(ex_q)
        user = _render_query(
            example.body, _joined_snippets(example.snippets, snippet_budget), block, hint
        )
        if spec.answer_kind == "ideal":
            assistant = ex_q.ideal_answer
        else:
            assistant = render_gold_exact(ex_q, spec.query_template)
        messages.append(ChatMessage("user", user))
        messages.append(ChatMessage("assistant", assistant or "(no gold answer)"))
    final_hint = None
    if hinted and question.qtype != "summary":
        if answer_hint is None:
            raise DataError(
                f"style {spec.style} ideal-answer prompt for question {question.id} "
                "needs the system-generated exact answer as a hint"
            )
        final_hint = answer_hint
    messages.append(
        ChatMessage(
            "user",
            _render_query(
                question.body, _joined_snippets(snippets, snippet_budget), block, final_hint
            ),
        )
    )
    return messages


# ---------------------------------------------------------------------------
# Answer parsing and submission rendering
# ---------------------------------------------------------------------------

def _split_entities(raw: str) -> list[str]:
    if "\n" in raw:
        pieces = raw.splitlines()
    else:
        pieces = re.split(r"[;,]", raw)
    entities: list[str] = []
    for piece in pieces:
        cleaned = normalize_answer(_LINE_MARKER_RE.sub("", piece))
        if cleaned and cleaned not in entities:
            entities.append(cleaned)
    return entities


def parse_exact_answer(raw: str, qtype: str) -> ExactAnswer:
    """Reduce a model reply to the structured exact-answer shape.

    yes/no parsing is strict (bare yes/no or a leading "yes,"/"no," clause);
    entity parsing is lenient about list markers and separators.
    """
    if not raw.strip():
        raise AnswerParseError("empty answer")
    if qtype == "yesno":
        norm = normalize_answer(raw)
        if norm in ("yes", "no"):
            return ExactAnswer(qtype="yesno", yesno_value=norm)
        lead = _YESNO_LEAD_RE.match(norm)
        if lead:
            return ExactAnswer(qtype="yesno", yesno_value=lead.group(1))
        raise AnswerParseError(f"cannot reduce to yes/no: {raw[:80]!r}")
    if qtype == "factoid":
        entities = _split_entities(raw)[:FACTOID_MAX_ENTITIES]
        return ExactAnswer(qtype="factoid", entities=entities)
    if qtype == "list":
        return ExactAnswer(qtype="list", entities=_split_entities(raw))
    raise UsageError(f"no exact answer defined for question type {qtype!r}")


def render_answers_file(
    questions: Sequence[Question],
    answers: Mapping[str, tuple[ExactAnswer | None, str]],
) -> dict:
    """Build the submission object for the answered subset of questions."""
    known = {q.id: q for q in questions}
    for qid in answers:
        if qid not in known:
            raise DataError(f"answered question id {qid} does not exist")
    out = []
    for q in questions:
        if q.id not in answers:
            continue
        exact, ideal = answers[q.id]
        entry: dict = {"id": q.id, "ideal_answer": ideal}
        if q.qtype == "summary":
            if exact is not None:
                raise DataError(f"summary question {q.id} cannot carry an exact answer")
        else:
            if exact is None:
                raise DataError(f"question {q.id} ({q.qtype}) is missing its exact answer")
            if exact.qtype != q.qtype:
                raise DataError(
                    f"answer shape {exact.qtype} does not match question type {q.qtype}"
                )
            if q.qtype == "yesno":
                entry["exact_answer"] = exact.yesno_value
            else:
                entry["exact_answer"] = [[e] for e in exact.entities]
        out.append(entry)
    return {"questions": out}
