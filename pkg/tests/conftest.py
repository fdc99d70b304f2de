import json
import random
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def bioasq_path() -> Path:
    return DATA_DIR / "bioasq_mini.json"


@pytest.fixture
def bioasq_questions(bioasq_path):
    from pubrank.dataset import load_bioasq

    return load_bioasq(bioasq_path)


def make_record(pmid, title="Title", abstract="Some abstract text.") -> str:
    return (
        "<PubmedArticle><MedlineCitation>"
        f"<PMID>{pmid}</PMID>"
        "<Article>"
        f"<ArticleTitle>{title}</ArticleTitle>"
        f"<Abstract><AbstractText>{abstract}</AbstractText></Abstract>"
        "</Article>"
        "</MedlineCitation></PubmedArticle>"
    )


def wrap_records(records) -> str:
    return (
        '<?xml version="1.0" encoding="utf-8"?>\n<PubmedArticleSet>\n'
        + "\n".join(records)
        + "\n</PubmedArticleSet>\n"
    )


def unit_rows(count: int, dim: int, seed: int = 0) -> np.ndarray:
    """Random unit-norm float32 rows."""
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(count, dim))
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


@pytest.fixture
def synthetic_questions():
    """Factory for small synthetic gold/run pairs used by metric tests."""

    def build(num_questions: int, seed: int = 0):
        rng = random.Random(seed)
        runs, golds = {}, {}
        for i in range(num_questions):
            qid = f"q{i}"
            pool = [str(p) for p in rng.sample(range(1, 200), 20)]
            k = rng.randint(1, 10)
            runs[qid] = pool[:k]
            golds[qid] = set(rng.sample(pool, rng.randint(1, 8)))
        return runs, golds

    return build


def write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    return path
