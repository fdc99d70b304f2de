"""Walk through corpus ingestion: PubMed-style XML in, clean JSONL out.

Synthesizes a tiny baseline file containing the three failure modes the
ingester must survive (missing abstract, duplicate PMID, corrupted record),
then shows the report reconciling exactly.

Run: python demos/01_ingest_corpus.py
"""

import tempfile
from pathlib import Path

from pubrank.corpus import ingest_xml, read_corpus


def record(pmid, title, abstract):
    return (
        "<PubmedArticle><MedlineCitation>"
        f"<PMID>{pmid}</PMID><Article><ArticleTitle>{title}</ArticleTitle>"
        f"<Abstract><AbstractText>{abstract}</AbstractText></Abstract>"
        "</Article></MedlineCitation></PubmedArticle>"
    )


XML = f"""<?xml version="1.0"?>
<PubmedArticleSet>
{record(101, "Insulin therapy", "Insulin replacement is standard care in type 1 diabetes.")}
{record(102, "Metformin", "Metformin is first-line therapy for type 2 diabetes.")}
<PubmedArticle><MedlineCitation><PMID>103</PMID><Article>
<ArticleTitle>A record with no abstract</ArticleTitle></Article>
</MedlineCitation></PubmedArticle>
{record(101, "Insulin therapy (revised)", "Revised abstract: insulin replacement remains standard care.")}
<PubmedArticle><MedlineCitation><PMID>104</PMID><ArticleTi
{record(105, "TREM2 variants", "The R47H variant of TREM2 raises Alzheimer disease risk.")}
</PubmedArticleSet>
"""


def main():
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "baseline.xml"
        src.write_text(XML, encoding="utf-8")
        out = Path(tmp) / "corpus.jsonl"

        report = ingest_xml([src], out)
        print("ingest report:", report.to_json())
        print("reconciles:", report.reconciles())
        print()
        print("canonical corpus lines:")
        for doc in read_corpus(out):
            print(f"  pmid={doc.pmid:>4}  title={doc.title!r}")
        print()
        print("note: pmid 101 kept its LAST version (baseline updates supersede),")
        print("the abstract-less and corrupted records were counted, not fatal.")


if __name__ == "__main__":
    main()
