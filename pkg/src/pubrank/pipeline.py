"""End-to-end orchestration: retrieve, re-rank twice, fuse, evaluate.

Every stage's run file is persisted and a manifest records the config hash,
seed and fixture digests, so a replay-mode run is byte-reproducible. Paths in
the manifest are reduced to basenames to keep it location-independent.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import dataset as ds
from .clients import ChatClient, EmbedClient, FixtureStore, ScoreClient
from .corpus import load_corpus_map
from .embedding import MockEmbeddingProvider, RemoteEmbeddingProvider, embed_batch
from .errors import DataError, PubrankError, UsageError
from .fusion import FusionConfig, fuse_nominate, fuse_weighted
from .index import load_index
from .metrics import evaluate_phase_a
from .rerank import llm_rerank, pointwise_rerank
from .runs import RankedRun, write_run_file

logger = logging.getLogger(__name__)

_QUESTION_BATCH = 32

_PATH_KEYS = ("corpus", "index", "questions", "out_dir", "fixtures_dir", "audit_dir")
_INT_KEYS = ("dimension", "seed", "retrieve_k", "cross_k", "final_k", "ka",
             "rank_points_k", "jobs")
_FLOAT_KEYS = ("w1", "w2")


@dataclass
class PipelineConfig:
    corpus: str = ""
    index: str = ""
    questions: str = ""
    out_dir: str = "runs"
    provider: str = "mock"
    dimension: int = 1024
    seed: int = 0
    retrieve_k: int = 1000
    cross_k: int = 30
    final_k: int = 10
    fusion_mode: str = "weighted"
    w1: float = 1.0
    w2: float = 7.0
    ka: int = 6
    rank_points_k: int = 10
    jobs: int = 1
    fixtures_dir: str = ""
    fixture_mode: str = "replay"
    audit_dir: str = ""
    evaluate: bool = True
    recall_ns: tuple[int, ...] = (10, 100)

    def validate(self) -> None:
        if self.provider not in ("mock", "remote"):
            raise UsageError(f"provider must be mock or remote, got {self.provider!r}")
        for name in ("retrieve_k", "cross_k", "final_k"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if not self.retrieve_k >= self.cross_k >= self.final_k:
            raise UsageError(
                f"need retrieve_k >= cross_k >= final_k, got "
                f"{self.retrieve_k} >= {self.cross_k} >= {self.final_k}"
            )
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")
        for name in ("corpus", "index", "questions"):
            path = getattr(self, name)
            if not path:
                raise UsageError(f"config is missing the {name} path")
            if not Path(path).exists():
                raise UsageError(f"{name} file does not exist: {path}")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """Parse the key = value config format (# starts a comment)."""
        values: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise UsageError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
        config = cls()
        config.apply(values)
        return config

    def apply(self, values: dict) -> None:
        for key, value in values.items():
            if value is None:
                continue
            if not hasattr(self, key):
                raise UsageError(f"unknown config key {key!r}")
            if key in _INT_KEYS:
                value = int(value)
            elif key in _FLOAT_KEYS:
                value = float(value)
            elif key == "evaluate" and isinstance(value, str):
                value = value.lower() in ("1", "true", "yes")
            elif key == "recall_ns" and isinstance(value, str):
                value = tuple(int(v) for v in value.split(","))
            setattr(self, key, value)

    def portable(self) -> dict:
        """Location-independent view: input paths as basenames, output paths
        dropped, so the same experiment hashes identically anywhere."""
        payload = asdict(self)
        for key in _PATH_KEYS:
            payload[key] = Path(payload[key]).name if payload[key] else ""
        payload["out_dir"] = ""
        payload["audit_dir"] = ""
        payload["recall_ns"] = list(payload["recall_ns"])
        return payload

    def config_hash(self) -> str:
        canonical = json.dumps(self.portable(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _fixtures_digest(directory: str) -> str:
    """Stable digest over the fixture directory contents."""
    if not directory or not Path(directory).is_dir():
        return ""
    digest = hashlib.sha256()
    for path in sorted(Path(directory).glob("*.json")):
        digest.update(path.name.encode("utf-8"))
        digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _map_questions(jobs: int, fn: Callable, items: Sequence) -> list:
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class _stage:
    """Re-raise pipeline errors with the failing stage named."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, PubrankError):
            raise type(exc)(f"stage {self.name}: {exc}") from exc
        return False


class Pipeline:
    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fixtures = None
        if config.fixtures_dir:
            fixtures = FixtureStore(config.fixtures_dir, config.fixture_mode)
        self.fixtures = fixtures
        self.embed_client = EmbedClient(fixtures=fixtures)
        self.score_client = ScoreClient(fixtures=fixtures)
        self.chat_client = ChatClient(fixtures=fixtures)
        for client, env in (
            (self.embed_client, "PUBRANK_EMBED_URL"),
            (self.score_client, "PUBRANK_SCORE_URL"),
            (self.chat_client, "PUBRANK_CHAT_URL"),
        ):
            client.base_url = (os.environ.get(env) or "").rstrip("/")

    def _provider(self):
        if self.config.provider == "mock":
            return MockEmbeddingProvider(self.config.dimension, self.config.seed)
        return RemoteEmbeddingProvider(self.embed_client, self.config.dimension)

    def _embed_questions(self, questions: Sequence[ds.Question]) -> np.ndarray:
        provider = self._provider()
        rows = []
        for start in range(0, len(questions), _QUESTION_BATCH):
            batch = [q.body for q in questions[start : start + _QUESTION_BATCH]]
            rows.append(embed_batch(provider, batch))
        return np.concatenate(rows, axis=0)

    def run(self) -> dict:
        try:
            return self._run()
        except PubrankError:
            raise
        except OSError as exc:
            raise DataError(f"pipeline I/O failure: {exc}") from exc

    def _run(self) -> dict:
        config = self.config
        docs = load_corpus_map(config.corpus)
        questions = ds.load_bioasq(config.questions)
        if not questions:
            raise DataError(f"no questions in {config.questions}")
        searcher = load_index(config.index)

        logger.info("retrieval over %d questions", len(questions))
        with _stage("retrieval"):
            vectors = self._embed_questions(questions)
            retrieval: dict[str, RankedRun] = {}
            for q, vec in zip(questions, vectors):
                hits = searcher.query(vec, config.retrieve_k)
                retrieval[q.id] = RankedRun(
                    q.id, [(h.pmid, h.score) for h in hits], stage_tag="retrieval"
                )

        logger.info("pointwise re-ranking to top-%d", config.cross_k)

        def cross_for(q: ds.Question) -> RankedRun:
            return pointwise_rerank(
                q.body, retrieval[q.id], self.score_client.score, docs, config.cross_k
            )

        with _stage("crossencoder"):
            cross30_list = _map_questions(self.config.jobs, cross_for, questions)
        cross30 = {run.question_id: run for run in cross30_list}
        cross10 = {
            qid: run.truncated(config.final_k) for qid, run in cross30.items()
        }

        logger.info("listwise re-ranking to top-%d", config.final_k)
        audit_dir = config.audit_dir or None

        def llm_for(q: ds.Question) -> RankedRun:
            return llm_rerank(
                q.body,
                cross30[q.id],
                self.chat_client,
                docs,
                k=config.final_k,
                audit_dir=audit_dir,
            )

        with _stage("llm"):
            llm10_list = _map_questions(self.config.jobs, llm_for, questions)
        llm10 = {run.question_id: run for run in llm10_list}

        fusion_config = FusionConfig(
            mode=config.fusion_mode,
            ka=config.ka,
            k_total=config.final_k,
            w1=config.w1,
            w2=config.w2,
            rank_points_k=config.rank_points_k,
        )
        fuse = fuse_weighted if config.fusion_mode == "weighted" else fuse_nominate
        with _stage("fusion"):
            fused = {qid: fuse(cross10[qid], llm10[qid], fusion_config) for qid in cross10}

        stage_runs = {
            "retrieval": retrieval,
            "cross30": cross30,
            "cross10": cross10,
            "llm10": llm10,
            "fused": fused,
        }
        stages_manifest = {}
        for name, runs in stage_runs.items():
            path = self.out_dir / f"{name}.jsonl"
            write_run_file(path, [runs[q.id] for q in questions])
            stages_manifest[name] = {"file": path.name, "sha256": _file_sha256(path)}

        metrics_block = {}
        if config.evaluate:
            golds = {q.id: set(q.gold_documents) for q in questions}
            full_reports = {}
            for name in ("retrieval", "cross10", "llm10", "fused"):
                runs10 = {
                    qid: run.truncated(10)
                    for qid, run in stage_runs[name].items()
                    if golds[qid]
                }
                report = evaluate_phase_a(
                    runs10, {qid: golds[qid] for qid in runs10}, recall_ns=config.recall_ns
                )
                metrics_block[name] = report.aggregates
                full_reports[name] = {
                    "aggregates": report.aggregates,
                    "per_question": report.per_question,
                }
            report_path = self.out_dir / "phase_a_report.json"
            report_path.write_text(
                json.dumps(full_reports, indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )

        manifest = {
            "config": self.config.portable(),
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "fixtures_digest": _fixtures_digest(config.fixtures_dir),
            "stages": stages_manifest,
            "metrics": metrics_block,
            "question_count": len(questions),
        }
        manifest_path = self.out_dir / "manifest.json"
        manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return manifest


def run_pipeline(config: PipelineConfig) -> dict:
    return Pipeline(config).run()
