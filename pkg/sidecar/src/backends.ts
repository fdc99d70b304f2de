/**
 * Model backends behind the /embed, /score and /chat endpoints.
 *
 * The built-in backends are fully deterministic so fixture recording and
 * contract tests never depend on downloaded weights: the embedder expands a
 * hash of the normalized text into Gaussian coordinates and L2-normalizes,
 * the scorer pushes a lexical-overlap logit through a sigmoid, and the chat
 * responder understands listwise re-ranking prompts well enough to return a
 * plausible bracketed ordinal list.
 *
 * Real models plug in by replacing these with implementations backed by an
 * inference runtime (e.g. transformers.js); the server only cares about the
 * Embedder/Scorer/ChatBackend interfaces.
 */

import { createHash } from "node:crypto";

export interface Embedder {
  dimension: number;
  embed(texts: string[]): Promise<number[][]>;
}

export interface Scorer {
  score(query: string, docs: { id: string; text: string }[]): Promise<number[]>;
}

export interface ChatMessage {
  role: "system" | "user" | "assistant";
  content: string;
}

export interface ChatBackend {
  chat(messages: ChatMessage[], temperature: number): Promise<string>;
}

const MAX_TOKENS = 512;

function normalizeText(text: string): string {
  return text.split(/\s+/).filter(Boolean).slice(0, MAX_TOKENS).join(" ").toLowerCase();
}

function hashBytes(payload: string): Buffer {
  return createHash("sha256").update(payload, "utf-8").digest();
}

/** Uniform draws in (0, 1) from counter-extended hashing of a seed string. */
function* uniformStream(seed: string): Generator<number> {
  for (let counter = 0; ; counter++) {
    const block = hashBytes(`${seed}:${counter}`);
    for (let offset = 0; offset + 4 <= block.length; offset += 4) {
      yield (block.readUInt32LE(offset) + 0.5) / 4294967296;
    }
  }
}

export class DeterministicEmbedder implements Embedder {
  readonly dimension: number;
  private readonly seed: number;

  constructor(dimension = 1024, seed = 0) {
    if (dimension < 8) throw new Error(`embedding dimension must be >= 8, got ${dimension}`);
    this.dimension = dimension;
    this.seed = seed;
  }

  embedOne(text: string): number[] {
    const uniforms = uniformStream(`embed:${this.seed}:${normalizeText(text)}`);
    const values: number[] = [];
    while (values.length < this.dimension) {
      const u1 = uniforms.next().value as number;
      const u2 = uniforms.next().value as number;
      // Box-Muller transform: two uniforms to two standard normals
      const radius = Math.sqrt(-2 * Math.log(u1));
      values.push(radius * Math.cos(2 * Math.PI * u2));
      if (values.length < this.dimension) {
        values.push(radius * Math.sin(2 * Math.PI * u2));
      }
    }
    const norm = Math.sqrt(values.reduce((acc, v) => acc + v * v, 0));
    return values.map((v) => v / norm);
  }

  async embed(texts: string[]): Promise<number[][]> {
    return texts.map((t) => this.embedOne(t));
  }
}

function tokenSet(text: string): Set<string> {
  const tokens = normalizeText(text)
    .split(" ")
    .map((t) => t.replace(/[^\p{L}\p{N}-]+/gu, ""))
    .filter(Boolean);
  return new Set(tokens);
}

function overlapFraction(query: Set<string>, doc: Set<string>): number {
  if (query.size === 0) return 0;
  let hits = 0;
  for (const token of query) if (doc.has(token)) hits++;
  return hits / query.size;
}

export class DeterministicScorer implements Scorer {
  async score(query: string, docs: { id: string; text: string }[]): Promise<number[]> {
    const queryTokens = tokenSet(query);
    return docs.map((doc) => {
      const overlap = overlapFraction(queryTokens, tokenSet(doc.text));
      const jitterByte = hashBytes(`score:${query}:${doc.id}`)[0];
      const jitter = (jitterByte / 255 - 0.5) * 0.5;
      const logit = overlap * 8 - 3 + jitter;
      return 1 / (1 + Math.exp(-logit));
    });
  }
}

const ORDINAL_LINE = /^\[(\d+)\] (.*)$/;
const WANT_COUNT = /exactly the (\d+) most relevant/;

/**
 * Rule-based chat: listwise re-rank prompts get a bracketed ordinal list
 * ranked by lexical overlap with the question; anything else gets a short
 * deterministic reply quoting the question.
 */
export class RuleBasedChat implements ChatBackend {
  async chat(messages: ChatMessage[], _temperature: number): Promise<string> {
    const user = messages[messages.length - 1]?.content ?? "";
    const questionMatch = user.match(/^Question: (.+)$/m);
    const candidates: { ordinal: number; text: string }[] = [];
    for (const line of user.split("\n")) {
      const match = line.match(ORDINAL_LINE);
      if (match) candidates.push({ ordinal: Number(match[1]), text: match[2] });
    }
    if (candidates.length > 0 && questionMatch) {
      const want = Number(user.match(WANT_COUNT)?.[1] ?? 10);
      const queryTokens = tokenSet(questionMatch[1]);
      const ranked = candidates
        .map((c) => ({ ordinal: c.ordinal, value: overlapFraction(queryTokens, tokenSet(c.text)) }))
        .sort((a, b) => b.value - a.value || a.ordinal - b.ordinal)
        .slice(0, want)
        .map((c) => c.ordinal);
      return `[${ranked.join(", ")}]`;
    }
    const question = questionMatch ? questionMatch[1] : user.split("\n")[0];
    return `Based on the passage, the answer to "${question.slice(0, 120)}" follows from the cited evidence.`;
  }
}

/** Forwards the conversation to an upstream chat service with pinned temperature. */
export class UpstreamChat implements ChatBackend {
  constructor(private readonly url: string, private readonly apiKey?: string) {}

  async chat(messages: ChatMessage[], temperature: number): Promise<string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.apiKey) headers["Authorization"] = `Bearer ${this.apiKey}`;
    const response = await fetch(this.url, {
      method: "POST",
      headers,
      body: JSON.stringify({ messages, temperature }),
    });
    if (!response.ok) {
      throw new Error(`chat upstream returned HTTP ${response.status}`);
    }
    const payload = (await response.json()) as { content?: string };
    if (!payload.content) throw new Error("chat upstream returned empty content");
    return payload.content;
  }
}
