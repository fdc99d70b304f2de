import assert from "node:assert/strict";
import { after, before, describe, it } from "node:test";
import type { AddressInfo } from "node:net";
import type http from "node:http";

import { DEFAULT_CONFIG, createSidecar } from "../src/server.js";
import { DeterministicEmbedder, RuleBasedChat } from "../src/backends.js";

let server: http.Server;
let base: string;

before(async () => {
  server = createSidecar({ ...DEFAULT_CONFIG, port: 0, dimension: 64, maxBatch: 8 });
  await new Promise<void>((resolve) => server.listen(0, resolve));
  base = `http://127.0.0.1:${(server.address() as AddressInfo).port}`;
});

after(() => server.close());

async function post(path: string, body: unknown) {
  const response = await fetch(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  return { status: response.status, payload: await response.json() };
}

describe("/embed", () => {
  it("returns one unit-norm vector of the declared dimension per text", async () => {
    const { status, payload } = await post("/embed", { texts: ["insulin", "aspirin", "x"] });
    assert.equal(status, 200);
    assert.equal(payload.dimension, 64);
    assert.equal(payload.embeddings.length, 3);
    for (const row of payload.embeddings) {
      assert.equal(row.length, 64);
      const norm = Math.sqrt(row.reduce((acc: number, v: number) => acc + v * v, 0));
      assert.ok(Math.abs(norm - 1) < 1e-3, `norm ${norm}`);
    }
  });

  it("is deterministic for identical input text", async () => {
    const first = await post("/embed", { texts: ["stable text"] });
    const second = await post("/embed", { texts: ["stable text"] });
    assert.deepEqual(first.payload.embeddings, second.payload.embeddings);
  });

  it("chunks requests above the batch limit without changing results", async () => {
    const texts = Array.from({ length: 20 }, (_, i) => `text number ${i}`);
    const batched = await post("/embed", { texts });
    const single = await post("/embed", { texts: [texts[13]] });
    assert.deepEqual(batched.payload.embeddings[13], single.payload.embeddings[0]);
  });

  it("rejects an empty text list with a non-retryable error body", async () => {
    const { status, payload } = await post("/embed", { texts: [] });
    assert.equal(status, 400);
    assert.equal(payload.error.retryable, false);
    assert.match(payload.error.message, /texts/);
  });

  it("distinct texts map to distinct directions", async () => {
    const { payload } = await post("/embed", { texts: ["insulin", "aspirin"] });
    const [a, b] = payload.embeddings;
    const cos = a.reduce((acc: number, v: number, i: number) => acc + v * b[i], 0);
    assert.ok(cos < 0.999);
  });
});

describe("/score", () => {
  it("returns one score in [0, 1] per doc, aligned by position", async () => {
    const docs = Array.from({ length: 30 }, (_, i) => ({
      id: String(i + 1),
      text: `document ${i} about ${i % 2 ? "insulin therapy" : "unrelated topics"}`,
    }));
    const { status, payload } = await post("/score", { query: "insulin therapy", docs });
    assert.equal(status, 200);
    assert.equal(payload.scores.length, 30);
    for (const score of payload.scores) {
      assert.ok(score >= 0 && score <= 1, `score ${score}`);
    }
  });

  it("scores lexically matching docs above unrelated ones", async () => {
    const { payload } = await post("/score", {
      query: "insulin lowers blood glucose",
      docs: [
        { id: "1", text: "insulin lowers blood glucose in type 1 diabetes" },
        { id: "2", text: "volcanic activity in iceland" },
      ],
    });
    assert.ok(payload.scores[0] > payload.scores[1]);
  });

  it("rejects malformed docs", async () => {
    const { status, payload } = await post("/score", { query: "q", docs: [{ id: 1 }] });
    assert.equal(status, 400);
    assert.equal(payload.error.retryable, false);
  });
});

describe("/chat", () => {
  it("answers a listwise re-rank prompt with a bracketed ordinal list", async () => {
    const user = [
      "Question: which document is about insulin?",
      "",
      "Candidate documents:",
      "[1] a study of volcanic rock formations",
      "[2] insulin therapy in type 1 diabetes",
      "[3] the migration of arctic terns",
      "",
      "Output exactly the 2 most relevant candidate numbers, most relevant first, " +
        "as a bracketed comma-separated list (for example [2, 5, 1]) and nothing else.",
    ].join("\n");
    const { status, payload } = await post("/chat", {
      messages: [
        { role: "system", content: "You rank documents." },
        { role: "user", content: user },
      ],
    });
    assert.equal(status, 200);
    assert.match(payload.content, /^\[\d+(, \d+)*\]$/);
    assert.ok(payload.content.startsWith("[2"));
  });

  it("returns non-empty content for free-form prompts", async () => {
    const { status, payload } = await post("/chat", {
      messages: [{ role: "user", content: "Question: is water wet?" }],
    });
    assert.equal(status, 200);
    assert.ok(payload.content.length > 0);
  });

  it("rejects malformed messages", async () => {
    const { status } = await post("/chat", { messages: [{ role: "robot", content: "x" }] });
    assert.equal(status, 400);
  });
});

describe("routing and errors", () => {
  it("unknown endpoint is a 404 with an error body", async () => {
    const { status, payload } = await post("/nope", {});
    assert.equal(status, 404);
    assert.ok(payload.error.message.includes("/nope"));
  });

  it("invalid JSON is a 400", async () => {
    const response = await fetch(base + "/embed", { method: "POST", body: "{not json" });
    assert.equal(response.status, 400);
  });

  it("GET is rejected", async () => {
    const response = await fetch(base + "/embed");
    assert.equal(response.status, 405);
  });
});

describe("backends", () => {
  it("embedder rejects tiny dimensions", () => {
    assert.throws(() => new DeterministicEmbedder(4));
  });

  it("dimension mismatch with config fails at startup", () => {
    assert.throws(() =>
      createSidecar({ ...DEFAULT_CONFIG, dimension: 32 }, new DeterministicEmbedder(64)),
    );
  });

  it("rule-based chat caps the ordinal list at the requested count", async () => {
    const chat = new RuleBasedChat();
    const lines = ["Question: topic?", ""];
    for (let i = 1; i <= 30; i++) lines.push(`[${i}] document ${i} about topic`);
    lines.push("Output exactly the 10 most relevant candidate numbers, most relevant first, as a bracketed comma-separated list and nothing else.");
    const reply = await chat.chat([{ role: "user", content: lines.join("\n") }], 0);
    const ordinals = reply.slice(1, -1).split(", ").map(Number);
    assert.equal(ordinals.length, 10);
    assert.equal(new Set(ordinals).size, 10);
  });
});
