"""PubMed-style XML ingestion into a line-delimited canonical corpus.

Records are split out of the raw stream by scanning for ``<PubmedArticle``
boundaries and parsed individually, so one corrupted record never aborts the
pass: it is counted as malformed and the stream continues. Duplicate PMIDs
keep the last occurrence seen (later baseline files supersede earlier ones).
"""

from __future__ import annotations

import gzip
import io
import json
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import DataError

logger = logging.getLogger(__name__)

# lookahead keeps <PubmedArticleSet> from matching as a record start
_START_RE = re.compile(r"<PubmedArticle(?=[\s>/])")
_START_TAIL = len("<PubmedArticle")
_RECORD_END = "</PubmedArticle>"
_READ_CHUNK = 1 << 20


@dataclass
class Document:
    pmid: str
    title: str
    abstract: str

    def validate(self) -> None:
        if not self.pmid or not self.pmid.isdigit():
            raise DataError(f"pmid must be decimal digits, got {self.pmid!r}")
        if not self.abstract.strip():
            raise DataError(f"empty abstract for pmid {self.pmid}")


@dataclass
class IngestReport:
    records_seen: int = 0
    kept: int = 0
    dropped_no_abstract: int = 0
    dropped_duplicate: int = 0
    dropped_malformed: int = 0
    empty_title: int = 0  # warning count, outside the reconciliation identity

    def reconciles(self) -> bool:
        return self.records_seen == (
            self.kept
            + self.dropped_no_abstract
            + self.dropped_duplicate
            + self.dropped_malformed
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _open_text(path: Path) -> IO[str]:
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def iter_record_chunks(stream: IO[str]) -> Iterator[str]:
    """Yield raw text chunks, one per (possibly truncated) PubmedArticle record."""
    buffer = ""
    in_record = False
    while True:
        piece = stream.read(_READ_CHUNK)
        if not piece:
            break
        buffer += piece
        while True:
            if not in_record:
                match = _START_RE.search(buffer)
                if match is None:
                    # keep a tail in case a start tag straddles the chunk edge
                    buffer = buffer[-_START_TAIL:]
                    break
                buffer = buffer[match.start() :]
                in_record = True
            end = buffer.find(_RECORD_END)
            next_match = _START_RE.search(buffer, 1)
            next_start = next_match.start() if next_match else -1
            if end >= 0 and (next_start < 0 or end < next_start):
                cut = end + len(_RECORD_END)
                yield buffer[:cut]
                buffer = buffer[cut:]
                in_record = False
            elif next_start >= 0 and (end < 0 or next_start < end):
                # new record opens before this one closes: emit the fragment
                yield buffer[:next_start]
                buffer = buffer[next_start:]
            else:
                break
    if in_record and buffer.strip():
        yield buffer


def _element_text(elem: ET.Element | None) -> str:
    if elem is None:
        return ""
    return "".join(elem.itertext()).strip()


def parse_record(chunk: str) -> Document:
    """Parse one record chunk. Raises DataError for any malformation."""
    try:
        root = ET.fromstring(chunk)
    except ET.ParseError as exc:
        raise DataError(f"unparseable record: {exc}") from exc
    pmid = _element_text(root.find(".//PMID"))
    if not pmid or not pmid.isdigit():
        raise DataError(f"missing or non-numeric PMID: {pmid!r}")
    title = " ".join(_element_text(root.find(".//ArticleTitle")).split())
    sections = [_element_text(el) for el in root.findall(".//AbstractText")]
    abstract = " ".join(" ".join(s.split()) for s in sections if s.strip())
    return Document(pmid=pmid, title=title, abstract=abstract)


def _expand_inputs(inputs: Iterable[str | Path]) -> list[Path]:
    paths: list[Path] = []
    for entry in inputs:
        p = Path(entry)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.is_file()))
        else:
            paths.append(p)
    return paths


def ingest_xml(inputs: Iterable[str | Path], out_path: str | Path) -> IngestReport:
    """Stream XML files into the canonical corpus file, last-wins on duplicates."""
    report = IngestReport()
    kept: dict[str, Document] = {}
    for path in _expand_inputs(inputs):
        with _open_text(path) as stream:
            for chunk in iter_record_chunks(stream):
                report.records_seen += 1
                try:
                    doc = parse_record(chunk)
                except DataError:
                    report.dropped_malformed += 1
                    continue
                if not doc.abstract:
                    report.dropped_no_abstract += 1
                    continue
                if not doc.title:
                    report.empty_title += 1
                    logger.warning("pmid %s has empty title", doc.pmid)
                if doc.pmid in kept:
                    report.dropped_duplicate += 1
                kept[doc.pmid] = doc

    report.kept = len(kept)
    with open(out_path, "w", encoding="utf-8") as out:
        for doc in kept.values():
            out.write(
                json.dumps(
                    {"pmid": doc.pmid, "title": doc.title, "abstract": doc.abstract},
                    ensure_ascii=False,
                )
                + "\n"
            )
    if not report.reconciles():
        raise DataError(f"ingest report does not reconcile: {report.to_json()}")
    return report


def read_corpus(path: str | Path) -> Iterator[Document]:
    """Yield validated documents in file order.

    Invariant violations raise DataError naming the line number and pmid.
    """
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                doc = Document(
                    pmid=str(obj["pmid"]),
                    title=str(obj.get("title", "")),
                    abstract=str(obj["abstract"]),
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed corpus line: {exc}") from exc
            try:
                doc.validate()
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: pmid {obj.get('pmid')!r}: {exc}") from exc
            if doc.pmid in seen:
                raise DataError(f"{path}:{lineno}: duplicate pmid {doc.pmid}")
            seen.add(doc.pmid)
            yield doc


def load_corpus_map(path: str | Path) -> dict[str, Document]:
    return {doc.pmid: doc for doc in read_corpus(path)}
