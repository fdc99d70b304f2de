import gzip
import random

import pytest

from pubrank.corpus import Document, ingest_xml, load_corpus_map, parse_record, read_corpus
from pubrank.errors import DataError

from conftest import make_record, wrap_records


def ingest_text(tmp_path, text, name="input.xml"):
    src = tmp_path / name
    src.write_text(text, encoding="utf-8")
    out = tmp_path / "corpus.jsonl"
    report = ingest_xml([src], out)
    return report, out


def test_basic_ingest_roundtrip(tmp_path):
    records = [make_record(i, f"T{i}", f"Abstract number {i}.") for i in (1, 2, 3)]
    report, out = ingest_text(tmp_path, wrap_records(records))
    assert report.records_seen == 3
    assert report.kept == 3
    assert report.reconciles()
    docs = list(read_corpus(out))
    assert [d.pmid for d in docs] == ["1", "2", "3"]
    assert docs[0].title == "T1"


def test_empty_abstract_dropped(tmp_path):
    records = [
        make_record(1),
        "<PubmedArticle><MedlineCitation><PMID>2</PMID><Article>"
        "<ArticleTitle>T</ArticleTitle><Abstract><AbstractText></AbstractText>"
        "</Abstract></Article></MedlineCitation></PubmedArticle>",
        "<PubmedArticle><MedlineCitation><PMID>3</PMID><Article>"
        "<ArticleTitle>T</ArticleTitle></Article></MedlineCitation></PubmedArticle>",
        "<PubmedArticle><MedlineCitation><PMID>4</PMID><Article>"
        "<ArticleTitle>T</ArticleTitle><Abstract><AbstractText>   </AbstractText>"
        "</Abstract></Article></MedlineCitation></PubmedArticle>",
    ]
    report, out = ingest_text(tmp_path, wrap_records(records))
    assert report.records_seen == 4
    assert report.kept == 1
    assert report.dropped_no_abstract == 3
    assert report.reconciles()


def test_duplicate_keeps_last(tmp_path):
    records = [
        make_record(123, "first title", "First version."),
        make_record(200, "other", "Other abstract."),
        make_record(123, "second title", "Second version."),
    ]
    report, out = ingest_text(tmp_path, wrap_records(records))
    assert report.kept == 2
    assert report.dropped_duplicate == 1
    docs = load_corpus_map(out)
    assert docs["123"].title == "second title"
    assert docs["123"].abstract == "Second version."


def test_malformed_record_skipped_stream_continues(tmp_path):
    records = [
        make_record(1),
        "<PubmedArticle><MedlineCitation><PMID>2</PMID><ArticleTi",  # truncated tag
        make_record(3),
    ]
    report, out = ingest_text(tmp_path, wrap_records(records))
    assert report.records_seen == 3
    assert report.dropped_malformed == 1
    assert report.kept == 2
    assert set(load_corpus_map(out)) == {"1", "3"}


def test_non_numeric_pmid_malformed(tmp_path):
    records = [make_record("12a4"), make_record(7)]
    report, _ = ingest_text(tmp_path, wrap_records(records))
    assert report.dropped_malformed == 1
    assert report.kept == 1


def test_multiple_abstract_sections_concatenated(tmp_path):
    record = (
        "<PubmedArticle><MedlineCitation><PMID>5</PMID><Article>"
        "<ArticleTitle>T</ArticleTitle>"
        "<Abstract>"
        '<AbstractText Label="BACKGROUND">Part one.</AbstractText>'
        '<AbstractText Label="METHODS">Part two.</AbstractText>'
        "</Abstract></Article></MedlineCitation></PubmedArticle>"
    )
    doc = parse_record(record)
    assert doc.abstract == "Part one. Part two."


def test_empty_title_kept_with_warning_count(tmp_path):
    records = [
        "<PubmedArticle><MedlineCitation><PMID>9</PMID><Article>"
        "<Abstract><AbstractText>Kept anyway.</AbstractText></Abstract>"
        "</Article></MedlineCitation></PubmedArticle>"
    ]
    report, out = ingest_text(tmp_path, wrap_records(records))
    assert report.kept == 1
    assert report.empty_title == 1
    assert load_corpus_map(out)["9"].title == ""


def test_gzip_input(tmp_path):
    src = tmp_path / "input.xml.gz"
    with gzip.open(src, "wt", encoding="utf-8") as fh:
        fh.write(wrap_records([make_record(11), make_record(12)]))
    out = tmp_path / "corpus.jsonl"
    report = ingest_xml([src], out)
    assert report.kept == 2


def test_directory_input_and_last_wins_across_files(tmp_path):
    d = tmp_path / "xml"
    d.mkdir()
    (d / "a_base.xml").write_text(wrap_records([make_record(1, "old", "Old abstract.")]))
    (d / "b_update.xml").write_text(wrap_records([make_record(1, "new", "New abstract.")]))
    out = tmp_path / "corpus.jsonl"
    report = ingest_xml([d], out)
    assert report.dropped_duplicate == 1
    assert load_corpus_map(out)["1"].title == "new"


def test_idempotence_of_self_concatenation(tmp_path):
    records = [make_record(i, f"T{i}", f"Abstract {i}.") for i in range(1, 8)]
    once_report, once_out = ingest_text(tmp_path, wrap_records(records), "once.xml")
    doubled = wrap_records(records) + wrap_records(records)
    twice_src = tmp_path / "twice.xml"
    twice_src.write_text(doubled)
    twice_out = tmp_path / "twice.jsonl"
    twice_report = ingest_xml([twice_src], twice_out)
    assert twice_report.dropped_duplicate == len(records)
    assert set(load_corpus_map(once_out)) == set(load_corpus_map(twice_out))


def test_kept_set_order_independent(tmp_path):
    base = [make_record(i, f"T{i}", f"Abstract {i}.") for i in range(1, 10)]
    base += [make_record(4, "dup", "Replacement abstract.")]
    rng = random.Random(5)
    reference = None
    for trial in range(4):
        shuffled = base[:]
        rng.shuffle(shuffled)
        _, out = ingest_text(tmp_path, wrap_records(shuffled), f"in{trial}.xml")
        kept = set(load_corpus_map(out))
        if reference is None:
            reference = kept
        assert kept == reference


def test_read_corpus_validates_lines(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"pmid": "1", "title": "t", "abstract": "ok"}\n'
        '{"pmid": "2", "title": "t", "abstract": "   "}\n',
        encoding="utf-8",
    )
    with pytest.raises(DataError) as err:
        list(read_corpus(path))
    assert ":2" in str(err.value)
    assert "2" in str(err.value)


def test_read_corpus_rejects_duplicates(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"pmid": "1", "title": "t", "abstract": "a"}\n'
        '{"pmid": "1", "title": "t", "abstract": "b"}\n',
        encoding="utf-8",
    )
    with pytest.raises(DataError, match="duplicate"):
        list(read_corpus(path))


def test_read_corpus_empty_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("", encoding="utf-8")
    assert list(read_corpus(path)) == []


def test_document_validate():
    with pytest.raises(DataError):
        Document("x1", "t", "a").validate()
    with pytest.raises(DataError):
        Document("12", "t", " ").validate()
    Document("12", "", "abstract").validate()
