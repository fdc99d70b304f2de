"""Client contract suite run against a live model sidecar.

Skipped when the sidecar has not been built (sidecar/dist) or node is
missing; `cd sidecar && npm install && npm run build` enables it.
"""

import json
import shutil
import socket
import subprocess
import time
import urllib.request

import numpy as np
import pytest

from pubrank.clients import ChatClient, ChatMessage, EmbedClient, FixtureStore, ScoreClient
from pubrank.errors import DataError
from pubrank.rerank import llm_rerank, pointwise_rerank
from pubrank.runs import RankedRun

SIDECAR_ENTRY = __file__.rsplit("/", 2)[0] + "/sidecar/dist/src/server.js"
DIMENSION = 64

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not __import__("pathlib").Path(SIDECAR_ENTRY).exists(),
    reason="sidecar not built (cd sidecar && npm install && npm run build)",
)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def sidecar_url():
    port = _free_port()
    process = subprocess.Popen(
        ["node", SIDECAR_ENTRY, "--port", str(port), "--dim", str(DIMENSION)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                EmbedClient(url, backoff=0, attempts=1).embed(["ping"])
                break
            except Exception:
                if process.poll() is not None:
                    raise RuntimeError("sidecar exited during startup")
                time.sleep(0.1)
        else:
            raise RuntimeError("sidecar did not become ready")
        yield url
    finally:
        process.terminate()
        process.wait(timeout=10)


def test_embed_contract(sidecar_url):
    client = EmbedClient(sidecar_url, backoff=0)
    matrix = client.embed(["insulin", "aspirin", "metformin"])
    assert matrix.shape == (3, DIMENSION)
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-3)


def test_embed_stable_within_process(sidecar_url):
    client = EmbedClient(sidecar_url, backoff=0)
    first = client.embed(["a fixed reference string"])
    second = client.embed(["a fixed reference string"])
    assert np.array_equal(first, second)


def test_score_contract(sidecar_url):
    client = ScoreClient(sidecar_url, backoff=0)
    docs = [(str(i), f"document {i} about insulin signalling") for i in range(1, 31)]
    scored = client.score("insulin signalling pathways", docs)
    assert len(scored) == 30
    assert all(0.0 <= s <= 1.0 for _, s in scored)
    assert [p for p, _ in scored] == [p for p, _ in docs]


def test_chat_contract(sidecar_url):
    client = ChatClient(sidecar_url, backoff=0)
    reply = client.chat(
        [
            ChatMessage("system", "You answer questions."),
            ChatMessage("user", "Question: is insulin a hormone?"),
        ]
    )
    assert reply


def test_error_body_shape(sidecar_url):
    request = urllib.request.Request(
        sidecar_url + "/embed",
        data=json.dumps({"texts": []}).encode(),
        headers={"Content-Type": "application/json"},
    )
    try:
        urllib.request.urlopen(request)
        raise AssertionError("empty texts should be rejected")
    except urllib.error.HTTPError as err:
        assert err.code == 400
        payload = json.loads(err.read().decode())
        assert payload["error"]["retryable"] is False
        assert payload["error"]["message"]


def test_two_stage_rerank_against_live_sidecar(sidecar_url):
    score_client = ScoreClient(sidecar_url, backoff=0)
    chat_client = ChatClient(sidecar_url, backoff=0)
    pmids = [str(i) for i in range(1, 31)]
    docs = {
        p: f"Doc {p} about {'insulin therapy' if int(p) % 3 == 0 else 'other topics'}"
        for p in pmids
    }
    retrieval = RankedRun("q1", [(p, 31.0 - int(p)) for p in pmids], "retrieval")
    cross = pointwise_rerank("insulin therapy", retrieval, score_client.score, docs, k=30)
    assert len(cross.items) == 30
    top = llm_rerank("insulin therapy", cross, chat_client, docs, k=10)
    assert len(top.items) == 10
    assert set(top.pmids) <= set(pmids)
    # the sidecar favors lexical matches, so insulin docs should dominate
    insulin_docs = {p for p in pmids if int(p) % 3 == 0}
    assert len(set(top.pmids[:5]) & insulin_docs) >= 3


def test_fixture_record_replay_through_sidecar(sidecar_url, tmp_path):
    record = EmbedClient(sidecar_url, fixtures=FixtureStore(tmp_path, "record"), backoff=0)
    recorded = record.embed(["fixture text"])
    offline = EmbedClient(
        "http://127.0.0.1:1", fixtures=FixtureStore(tmp_path, "replay"), backoff=0
    )
    assert np.array_equal(offline.embed(["fixture text"]), recorded)


def test_duplicate_ids_rejected_client_side(sidecar_url):
    client = ScoreClient(sidecar_url, backoff=0)
    with pytest.raises(DataError):
        client.score("q", [("1", "a"), ("1", "b")])
