import json

import pytest

from pubrank.cli import main
from pubrank.runs import read_run_file

from conftest import make_record, wrap_records
from pipeline_helpers import build_workspace


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    return {**build_workspace(root, num_docs=60, num_questions=6), "root": root}


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def test_ingest_prints_report(tmp_path, capsys):
    xml = tmp_path / "in.xml"
    xml.write_text(wrap_records([make_record(1), make_record(2)]), encoding="utf-8")
    out = tmp_path / "corpus.jsonl"
    assert run_cli("ingest", "--in", xml, "--out", out) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kept"] == 2
    assert report["records_seen"] == 2


def test_ingest_missing_input_exits_2(tmp_path):
    assert run_cli("ingest", "--in", tmp_path / "nope.xml", "--out", tmp_path / "o") == 2


def test_embed_and_index_and_search(cli_workspace, tmp_path, capsys):
    vectors = tmp_path / "v.bin"
    assert (
        run_cli(
            "embed", "--corpus", cli_workspace["corpus"], "--provider", "mock",
            "--dim", 64, "--seed", 42, "--out", vectors,
        )
        == 0
    )
    index_path = tmp_path / "index.bin"
    assert (
        run_cli("index", "build", "--vectors", vectors, "--kind", "hnsw",
                "--m", 8, "--efc", 40, "--out", index_path)
        == 0
    )
    run_path = tmp_path / "run.jsonl"
    assert (
        run_cli(
            "search", "--index", index_path, "--questions", cli_workspace["questions"],
            "--provider", "mock", "--dim", 64, "--seed", 42, "--k", 50,
            "--out", run_path,
        )
        == 0
    )
    runs = read_run_file(run_path)
    assert len(runs) == 6
    assert all(len(r.items) == 50 for r in runs)


def test_eval_phase_a(cli_workspace, tmp_path, capsys):
    vectors = tmp_path / "v.bin"
    run_cli("embed", "--corpus", cli_workspace["corpus"], "--dim", 64, "--seed", 42,
            "--out", vectors)
    index_path = tmp_path / "index.bin"
    run_cli("index", "build", "--vectors", vectors, "--out", index_path)
    run_path = tmp_path / "run.jsonl"
    run_cli("search", "--index", index_path, "--questions", cli_workspace["questions"],
            "--dim", 64, "--seed", 42, "--k", 60, "--out", run_path)
    report_path = tmp_path / "report.json"
    capsys.readouterr()
    assert (
        run_cli("eval", "phase-a", "--run", run_path, "--gold", cli_workspace["questions"],
                "--recall-ns", "10,60", "--report", report_path)
        == 0
    )
    report = json.loads(report_path.read_text())
    assert report["aggregates"]["recall@60"] == 1.0
    assert "map@10" in report["aggregates"]


def test_fuse_and_gridsearch(tmp_path, bioasq_path, capsys):
    from pubrank.runs import RankedRun, write_run_file
    from pubrank.dataset import load_bioasq

    questions = load_bioasq(bioasq_path)
    runs_a, runs_b = [], []
    for q in questions:
        gold = sorted(q.gold_documents, key=int)
        noise = [str(900 + i) for i in range(6)]
        runs_a.append(RankedRun(q.id, [(p, 10.0 - i) for i, p in enumerate(noise + gold)], "crossencoder"))
        runs_b.append(RankedRun(q.id, [(p, 10.0 - i) for i, p in enumerate(gold + noise)], "llm"))
    a_path, b_path = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_run_file(a_path, runs_a)
    write_run_file(b_path, runs_b)

    fused = tmp_path / "fused.jsonl"
    assert run_cli("fuse", "--a", a_path, "--b", b_path, "--mode", "weighted",
                   "--w1", 1, "--w2", 7, "--k", 10, "--out", fused) == 0
    assert len(read_run_file(fused)) == len(questions)

    table_path = tmp_path / "grid.tsv"
    capsys.readouterr()
    assert run_cli("gridsearch", "--a", a_path, "--b", b_path, "--gold", bioasq_path,
                   "--out", table_path) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["w1"] == 0 and result["w2"] == 1  # B dominates by construction
    assert len(table_path.read_text().splitlines()) == 120


def test_dataset_split_and_mine(tmp_path, bioasq_path, capsys):
    out_dir = tmp_path / "splits"
    assert run_cli("dataset", "split", "--in", bioasq_path, "--ratios", "0.5,0.25,0.25",
                   "--seed", 7, "--out-dir", out_dir) == 0
    split = json.loads((out_dir / "train.json").read_text())
    assert split["question_ids"]

    from pubrank.runs import RankedRun, write_run_file
    run_path = tmp_path / "run.jsonl"
    from pubrank.dataset import load_bioasq
    questions = load_bioasq(bioasq_path)
    write_run_file(
        run_path,
        [RankedRun(q.id, [(str(500 + i), 5.0 - i) for i in range(3)], "retrieval") for q in questions],
    )
    pairs_path = tmp_path / "pairs.tsv"
    capsys.readouterr()
    assert run_cli("dataset", "mine-negatives", "--in", bioasq_path, "--split", "all",
                   "--run", run_path, "--depth", 3, "--out", pairs_path) == 0
    lines = [l for l in pairs_path.read_text().splitlines() if l]
    assert lines
    assert all(len(line.split("\t")) == 5 for line in lines)


def test_prompt_build_and_answers_parse(tmp_path, bioasq_path, capsys):
    prompt_path = tmp_path / "prompt.json"
    assert run_cli("prompt", "build", "--gold", bioasq_path, "--question-id", "q-yn-1",
                   "--style", 1, "--shots", 1, "--out", prompt_path) == 0
    payload = json.loads(prompt_path.read_text())
    assert len(payload["messages"]) == 4  # system + one shot pair + final user

    raw_dir = tmp_path / "raw"
    raw_dir.mkdir()
    (raw_dir / "q-yn-1.exact.txt").write_text("Yes.", encoding="utf-8")
    (raw_dir / "q-yn-1.ideal.txt").write_text("Yes, insulin is standard.", encoding="utf-8")
    (raw_dir / "q-f-1.exact.txt").write_text("1. TREM2\n2. APOE", encoding="utf-8")
    (raw_dir / "q-yn-2.exact.txt").write_text("hard to say", encoding="utf-8")
    answers_path = tmp_path / "answers.json"
    capsys.readouterr()
    assert run_cli("answers", "parse", "--raw", raw_dir, "--gold", bioasq_path,
                   "--out", answers_path) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["parse_failures"] == ["q-yn-2"]
    submission = json.loads(answers_path.read_text())
    entries = {e["id"]: e for e in submission["questions"]}
    assert entries["q-yn-1"]["exact_answer"] == "yes"
    assert entries["q-f-1"]["exact_answer"] == [["trem2"], ["apoe"]]
    assert entries["q-yn-2"]["exact_answer"] is None

    report_path = tmp_path / "phase_b.json"
    assert run_cli("eval", "phase-b", "--answers", answers_path, "--gold", bioasq_path,
                   "--report", report_path) == 0
    report = json.loads(report_path.read_text())
    assert report["aggregates"]["mrr"] == 1.0
    assert 0.0 <= report["aggregates"]["maf1"] <= 1.0


def test_pipeline_subcommand_with_config(cli_workspace, tmp_path, capsys):
    config_path = tmp_path / "run.cfg"
    config_path.write_text(
        f"corpus = {cli_workspace['corpus']}\n"
        f"index = {cli_workspace['index']}\n"
        f"questions = {cli_workspace['questions']}\n"
        f"out_dir = {tmp_path / 'out'}\n"
        "provider = mock\n"
        "dimension = 64\n"
        "seed = 42\n"
        "retrieve_k = 60\n"
        "cross_k = 30\n"
        "final_k = 10\n"
        "fixture_mode = passthrough\n",
        encoding="utf-8",
    )
    # mock provider still needs score/chat endpoints: run offline via a local server
    from pipeline_helpers import start_gold_server
    import os

    server, url = start_gold_server(cli_workspace["questions"])
    try:
        os.environ["PUBRANK_SCORE_URL"] = url
        os.environ["PUBRANK_CHAT_URL"] = url
        capsys.readouterr()
        assert run_cli("pipeline", "--config", config_path) == 0
    finally:
        server.shutdown()
        os.environ.pop("PUBRANK_SCORE_URL", None)
        os.environ.pop("PUBRANK_CHAT_URL", None)
    result = json.loads(capsys.readouterr().out)
    assert result["metrics"]["fused"]["map@10"] >= result["metrics"]["retrieval"]["map@10"]
    assert (tmp_path / "out" / "manifest.json").exists()


def test_missing_index_exit_code(cli_workspace, tmp_path):
    code = run_cli(
        "pipeline", "--corpus", cli_workspace["corpus"], "--index", tmp_path / "missing.bin",
        "--questions", cli_workspace["questions"], "--out-dir", tmp_path / "o",
    )
    assert code == 1  # config error: file does not exist


def test_eval_requires_run_argument(bioasq_path, tmp_path):
    assert run_cli("eval", "phase-a", "--gold", bioasq_path, "--report", tmp_path / "r") == 1
