"""Single entry point exposing every pipeline stage as a subcommand.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 upstream
service error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from . import prompts
from .clients import fixture_store_from_env
from .corpus import ingest_xml, load_corpus_map
from .embedding import (
    MockEmbeddingProvider,
    RemoteEmbeddingProvider,
    document_text,
    embed_batch,
)
from .errors import DataError, PubrankError, ServiceError, UsageError
from .fusion import (
    FusionConfig,
    default_weight_grid,
    fuse_nominate,
    fuse_weighted,
    grid_search_weights,
)
from .index import build_from_store, load_index, save_index
from .metrics import evaluate_phase_a, evaluate_phase_b
from .pipeline import PipelineConfig, run_pipeline
from .rerank import llm_rerank, pointwise_rerank
from .runs import RankedRun, read_run_file, runs_by_question, write_run_file
from .vectors import read_vectors, write_vectors

logger = logging.getLogger(__name__)

_BATCH = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: A003 - argparse API
        raise UsageError(message)


def _provider(args):
    if args.provider == "mock":
        return MockEmbeddingProvider(args.dim, args.seed)
    from .clients import EmbedClient
    import os

    client = EmbedClient(
        os.environ.get("PUBRANK_EMBED_URL"), fixtures=fixture_store_from_env()
    )
    return RemoteEmbeddingProvider(client, args.dim)


def _clients():
    from .clients import clients_from_env

    return clients_from_env()


# -- subcommand implementations ----------------------------------------------

def cmd_ingest(args) -> int:
    report = ingest_xml(args.inputs, args.out)
    print(report.to_json())
    return 0


def cmd_embed(args) -> int:
    provider = _provider(args)
    docs = list(load_corpus_map(args.corpus).values())
    if not docs:
        raise DataError(f"corpus {args.corpus} is empty")
    pmids = [d.pmid for d in docs]
    texts = [
        d.abstract if args.text == "abstract" else document_text(d.title, d.abstract)
        for d in docs
    ]
    import numpy as np

    rows = [
        embed_batch(provider, texts[start : start + _BATCH])
        for start in range(0, len(texts), _BATCH)
    ]
    write_vectors(args.out, pmids, np.concatenate(rows, axis=0))
    print(json.dumps({"embedded": len(pmids), "dimension": provider.info.dimension}))
    return 0


def cmd_index_build(args) -> int:
    store = read_vectors(args.vectors)
    index = build_from_store(
        store,
        kind=args.kind,
        m=args.m,
        ef_construction=args.efc,
        ef_search=args.efs,
        seed=args.seed,
    )
    save_index(index, args.out)
    print(json.dumps({"kind": args.kind, "count": len(index), "out": str(args.out)}))
    return 0


def cmd_search(args) -> int:
    index = load_index(args.index)
    questions = ds.load_bioasq(args.questions)
    provider = _provider(args)
    runs = []
    for start in range(0, len(questions), _BATCH):
        batch = questions[start : start + _BATCH]
        matrix = embed_batch(provider, [q.body for q in batch])
        for q, vec in zip(batch, matrix):
            hits = index.query(vec, args.k)
            runs.append(
                RankedRun(q.id, [(h.pmid, h.score) for h in hits], stage_tag="retrieval")
            )
    write_run_file(args.out, runs)
    print(json.dumps({"questions": len(runs), "k": args.k, "out": str(args.out)}))
    return 0


def cmd_rerank(args) -> int:
    runs = read_run_file(args.infile)
    questions = {q.id: q for q in ds.load_bioasq(args.questions)}
    docs = load_corpus_map(args.corpus)
    _, score_client, chat_client = _clients()
    out = []
    for run in runs:
        if run.question_id not in questions:
            raise DataError(f"run question {run.question_id} not in {args.questions}")
        body = questions[run.question_id].body
        if args.stage == "cross":
            out.append(pointwise_rerank(body, run, score_client.score, docs, args.k))
        else:
            out.append(
                llm_rerank(body, run, chat_client, docs, k=args.k, audit_dir=args.audit)
            )
    write_run_file(args.out, out)
    print(json.dumps({"stage": args.stage, "questions": len(out), "k": args.k}))
    return 0


def cmd_fuse(args) -> int:
    runs_a = runs_by_question(read_run_file(args.a))
    runs_b = runs_by_question(read_run_file(args.b))
    if set(runs_a) != set(runs_b):
        diff = sorted(set(runs_a) ^ set(runs_b))
        raise DataError(f"question id mismatch between run files: {diff}")
    config = FusionConfig(
        mode=args.mode,
        ka=args.ka,
        k_total=args.k,
        w1=args.w1,
        w2=args.w2,
        rank_points_k=args.rank_points_k,
    )
    fuse = fuse_weighted if args.mode == "weighted" else fuse_nominate
    fused = [fuse(runs_a[qid], runs_b[qid], config) for qid in sorted(runs_a)]
    write_run_file(args.out, fused)
    print(json.dumps({"mode": args.mode, "questions": len(fused)}))
    return 0


def cmd_gridsearch(args) -> int:
    runs_a = runs_by_question(read_run_file(args.a))
    runs_b = runs_by_question(read_run_file(args.b))
    questions = ds.load_bioasq(args.gold)
    golds = {q.id: set(q.gold_documents) for q in questions if q.id in runs_a}
    w1, w2, table = grid_search_weights(
        runs_a, runs_b, golds, grid=default_weight_grid(args.grid_max)
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        for row_w1, row_w2, score in table:
            fh.write(f"{row_w1}\t{row_w2}\t{score:.10f}\n")
    print(json.dumps({"w1": w1, "w2": w2, "grid_points": len(table)}))
    return 0


def cmd_dataset_split(args) -> int:
    questions = ds.load_bioasq(args.infile)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    if len(ratios) != 3:
        raise UsageError(f"need three ratios, got {args.ratios!r}")
    train, val, test = ds.stratified_split(questions, ratios, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("val", val), ("test", test)):
        ids = [q.id for q in split]
        (out_dir / f"{name}.json").write_text(
            json.dumps({"question_ids": ids}, indent=1) + "\n", encoding="utf-8"
        )
    print(json.dumps({"train": len(train), "val": len(val), "test": len(test)}))
    return 0


def cmd_dataset_mine(args) -> int:
    questions = ds.load_bioasq(args.infile)
    if args.split != "all":
        train, val, test = ds.stratified_split(
            questions, tuple(float(r) for r in args.ratios.split(",")), args.seed
        )
        questions = {"train": train, "val": val, "test": test}[args.split]
    runs = runs_by_question(read_run_file(args.run))
    docs = load_corpus_map(args.corpus) if args.corpus else None
    pairs = []
    for q in questions:
        if q.id not in runs:
            logger.warning("no retrieval run for question %s, skipped", q.id)
            continue
        pairs.extend(ds.mine_hard_negatives(q, runs[q.id], args.depth, docs))
    pairs.sort(key=lambda p: (p.question_id, -p.label, int(p.pmid)))
    ds.write_pairs_tsv(pairs, args.out)
    print(json.dumps({"pairs": len(pairs), "out": str(args.out)}))
    return 0


def _hints_from_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    hints: dict[str, str] = {}
    for entry in payload.get("questions", []):
        exact = entry.get("exact_answer")
        if isinstance(exact, str):
            hints[str(entry["id"])] = exact
        elif isinstance(exact, list):
            names = [e[0] if isinstance(e, list) else str(e) for e in exact]
            hints[str(entry["id"])] = ", ".join(names)
    return hints


def cmd_prompt_build(args) -> int:
    questions = ds.load_bioasq(args.gold)
    by_id = {q.id: q for q in questions}
    if args.question_id not in by_id:
        raise DataError(f"question {args.question_id} not found in {args.gold}")
    question = by_id[args.question_id]
    spec = prompts.PromptSpec(
        style=args.style,
        n_shots=args.shots,
        qtype=question.qtype,
        answer_kind=args.answer_kind,
    )
    train, _, _ = ds.stratified_split(questions, seed=args.seed)
    pool = [q for q in train if q.id != question.id]
    fewshot = (
        ds.sample_fewshot(pool, question.qtype, args.shots, args.seed)
        if args.shots
        else []
    )
    hints = _hints_from_file(args.answers_hint)
    hint = hints.get(question.id)
    if hint is None and spec.answer_kind == "ideal" and spec.query_template == 2:
        hint = prompts.short_answer_hint(question) if question.qtype != "summary" else None
    snippets = [text for _, text in question.gold_snippets]
    messages = prompts.build_prompt(question, snippets, spec, fewshot, answer_hint=hint)
    Path(args.out).write_text(
        json.dumps({"messages": [m.to_dict() for m in messages]}, indent=1, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
    print(json.dumps({"messages": len(messages), "out": str(args.out)}))
    return 0


def cmd_answers_parse(args) -> int:
    questions = ds.load_bioasq(args.gold)
    raw_dir = Path(args.raw)
    answers: dict[str, tuple[prompts.ExactAnswer | None, str]] = {}
    failures = []
    for q in questions:
        exact_path = raw_dir / f"{q.id}.exact.txt"
        ideal_path = raw_dir / f"{q.id}.ideal.txt"
        bare_path = raw_dir / f"{q.id}.txt"
        exact_raw = None
        if exact_path.exists():
            exact_raw = exact_path.read_text(encoding="utf-8")
        elif bare_path.exists():
            exact_raw = bare_path.read_text(encoding="utf-8")
        ideal = ""
        if ideal_path.exists():
            ideal = ideal_path.read_text(encoding="utf-8").strip()
        elif bare_path.exists():
            ideal = bare_path.read_text(encoding="utf-8").strip()
        if exact_raw is None and not ideal:
            continue
        exact = None
        if q.qtype != "summary" and exact_raw is not None:
            try:
                exact = prompts.parse_exact_answer(exact_raw, q.qtype)
            except PubrankError as exc:
                failures.append(q.id)
                logger.warning("question %s: %s", q.id, exc)
        answers[q.id] = (exact, ideal)
    submission = _render_submission(questions, answers)
    Path(args.out).write_text(
        json.dumps(submission, indent=1, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    print(json.dumps({"answered": len(answers), "parse_failures": failures}))
    return 0


def _render_submission(questions, answers) -> dict:
    """Like prompts.render_answers_file but keeps failed parses as null."""
    entries = []
    for q in questions:
        if q.id not in answers:
            continue
        exact, ideal = answers[q.id]
        entry: dict = {"id": q.id, "ideal_answer": ideal}
        if q.qtype != "summary":
            if exact is None:
                entry["exact_answer"] = None
            elif q.qtype == "yesno":
                entry["exact_answer"] = exact.yesno_value
            else:
                entry["exact_answer"] = [[e] for e in exact.entities]
        entries.append(entry)
    return {"questions": entries}


def cmd_eval(args) -> int:
    questions = ds.load_bioasq(args.gold)
    if args.phase == "phase-a":
        runs = runs_by_question(read_run_file(args.run))
        golds = {q.id: set(q.gold_documents) for q in questions if q.id in runs}
        recall_ns = tuple(int(n) for n in args.recall_ns.split(","))
        report = evaluate_phase_a(runs, golds, recall_ns)
    else:
        answers = json.loads(Path(args.answers).read_text(encoding="utf-8"))
        report = evaluate_phase_b(questions, answers)
    report.write(args.report)
    print(report.to_json())
    return 0


def cmd_pipeline(args) -> int:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    overrides = {
        key: getattr(args, key)
        for key in (
            "corpus", "index", "questions", "out_dir", "provider", "seed", "jobs",
            "fixtures_dir", "fixture_mode",
        )
        if getattr(args, key, None) is not None
    }
    config.apply(overrides)
    manifest = run_pipeline(config)
    print(json.dumps({"config_hash": manifest["config_hash"], "metrics": manifest["metrics"]}))
    return 0


# -- parser assembly ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pubrank", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest PubMed-style XML into a corpus file")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("embed", help="embed a corpus into a vector file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--provider", choices=("mock", "remote"), default="mock")
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--text", choices=("title_abstract", "abstract"), default="title_abstract")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("index", help="index operations")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    pb = index_sub.add_parser("build", help="build an index from a vector file")
    pb.add_argument("--vectors", required=True)
    pb.add_argument("--kind", choices=("exact", "hnsw"), default="exact")
    pb.add_argument("--m", type=int, default=16)
    pb.add_argument("--efc", type=int, default=200)
    pb.add_argument("--efs", type=int, default=128)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--out", required=True)
    pb.set_defaults(fn=cmd_index_build)

    p = sub.add_parser("search", help="retrieve top-k documents per question")
    p.add_argument("--index", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--provider", choices=("mock", "remote"), default="mock")
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("rerank", help="re-rank a run file")
    p.add_argument("--stage", choices=("cross", "llm"), required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--audit", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_rerank)

    p = sub.add_parser("fuse", help="fuse two run files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mode", choices=("nominate", "weighted"), default="weighted")
    p.add_argument("--ka", type=int, default=6)
    p.add_argument("--w1", type=float, default=1.0)
    p.add_argument("--w2", type=float, default=7.0)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--rank-points-k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("gridsearch", help="grid-search fusion weights by MAP@10")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--grid-max", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gridsearch)

    p = sub.add_parser("dataset", help="dataset operations")
    data_sub = p.add_subparsers(dest="dataset_command", required=True)
    pd = data_sub.add_parser("split", help="stratified train/val/test split")
    pd.add_argument("--in", dest="infile", required=True)
    pd.add_argument("--ratios", default="0.8,0.1,0.1")
    pd.add_argument("--seed", type=int, default=7)
    pd.add_argument("--out-dir", required=True)
    pd.set_defaults(fn=cmd_dataset_split)
    pm = data_sub.add_parser("mine-negatives", help="emit cross-encoder training pairs")
    pm.add_argument("--in", dest="infile", required=True)
    pm.add_argument("--split", choices=("train", "val", "test", "all"), default="train")
    pm.add_argument("--ratios", default="0.8,0.1,0.1")
    pm.add_argument("--seed", type=int, default=7)
    pm.add_argument("--run", required=True)
    pm.add_argument("--depth", type=int, default=1000)
    pm.add_argument("--corpus", default=None)
    pm.add_argument("--out", required=True)
    pm.set_defaults(fn=cmd_dataset_mine)

    p = sub.add_parser("prompt", help="prompt operations")
    prompt_sub = p.add_subparsers(dest="prompt_command", required=True)
    pp = prompt_sub.add_parser("build", help="build a Phase B prompt")
    pp.add_argument("--gold", required=True)
    pp.add_argument("--question-id", required=True)
    pp.add_argument("--style", type=int, choices=(1, 2, 3), default=1)
    pp.add_argument("--shots", type=int, default=0)
    pp.add_argument("--answer-kind", choices=("exact", "ideal"), default="exact")
    pp.add_argument("--answers-hint", default=None)
    pp.add_argument("--seed", type=int, default=7)
    pp.add_argument("--out", required=True)
    pp.set_defaults(fn=cmd_prompt_build)

    p = sub.add_parser("answers", help="answer operations")
    ans_sub = p.add_subparsers(dest="answers_command", required=True)
    pa = ans_sub.add_parser("parse", help="parse raw model answers into a submission")
    pa.add_argument("--raw", required=True)
    pa.add_argument("--gold", required=True)
    pa.add_argument("--out", required=True)
    pa.set_defaults(fn=cmd_answers_parse)

    p = sub.add_parser("eval", help="evaluate runs or answers")
    p.add_argument("phase", choices=("phase-a", "phase-b"))
    p.add_argument("--run", default=None)
    p.add_argument("--answers", default=None)
    p.add_argument("--gold", required=True)
    p.add_argument("--recall-ns", default="10,100,1000")
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="run the full retrieval + rerank + fuse pipeline")
    p.add_argument("--config", default=None)
    p.add_argument("--corpus", default=None)
    p.add_argument("--index", default=None)
    p.add_argument("--questions", default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--provider", choices=("mock", "remote"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--fixtures-dir", dest="fixtures_dir", default=None)
    p.add_argument("--fixture-mode", dest="fixture_mode", default=None)
    p.set_defaults(fn=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "eval":
            if args.phase == "phase-a" and not args.run:
                raise UsageError("eval phase-a needs --run")
            if args.phase == "phase-b" and not args.answers:
                raise UsageError("eval phase-b needs --answers")
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ServiceError as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except PubrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
