/**
 * HTTP sidecar serving the pubrank model protocol:
 *
 *   POST /embed  {"texts": [...]}            -> {"dimension": d, "embeddings": [[...], ...]}
 *   POST /score  {"query": q, "docs": [...]} -> {"scores": [...]}
 *   POST /chat   {"messages": [...]}         -> {"content": "..."}
 *
 * Errors use a structured body {"error": {"message", "retryable"}}: client
 * mistakes answer 400 (not retryable), server faults answer 500 (retryable).
 * Requests larger than the batch limit are processed in chunks internally.
 */

import http from "node:http";
import {
  ChatBackend,
  ChatMessage,
  DeterministicEmbedder,
  DeterministicScorer,
  Embedder,
  RuleBasedChat,
  Scorer,
  UpstreamChat,
} from "./backends.js";

export interface SidecarConfig {
  port: number;
  dimension: number;
  seed: number;
  maxBatch: number;
  temperature: number;
  chatUpstream?: string;
  chatApiKey?: string;
}

export const DEFAULT_CONFIG: SidecarConfig = {
  port: 8380,
  dimension: 1024,
  seed: 0,
  maxBatch: 64,
  temperature: 0,
};

class BadRequest extends Error {}

function errorBody(message: string, retryable: boolean): string {
  return JSON.stringify({ error: { message, retryable } });
}

function requireStringArray(value: unknown, field: string): string[] {
  if (!Array.isArray(value) || value.length === 0 || !value.every((v) => typeof v === "string")) {
    throw new BadRequest(`${field} must be a non-empty array of strings`);
  }
  return value;
}

async function inChunks<T, R>(
  items: T[],
  size: number,
  fn: (chunk: T[]) => Promise<R[]>,
): Promise<R[]> {
  const out: R[] = [];
  for (let start = 0; start < items.length; start += size) {
    out.push(...(await fn(items.slice(start, start + size))));
  }
  return out;
}

export function createSidecar(
  config: SidecarConfig,
  embedder?: Embedder,
  scorer?: Scorer,
  chat?: ChatBackend,
): http.Server {
  const embedBackend = embedder ?? new DeterministicEmbedder(config.dimension, config.seed);
  if (embedBackend.dimension !== config.dimension) {
    throw new Error(
      `declared dimension ${config.dimension} does not match embedder output ${embedBackend.dimension}`,
    );
  }
  const scoreBackend = scorer ?? new DeterministicScorer();
  const chatBackend =
    chat ??
    (config.chatUpstream
      ? new UpstreamChat(config.chatUpstream, config.chatApiKey)
      : new RuleBasedChat());

  return http.createServer(async (req, res) => {
    const respond = (status: number, body: string) => {
      res.writeHead(status, { "Content-Type": "application/json" });
      res.end(body);
    };
    if (req.method !== "POST") {
      respond(405, errorBody("only POST is supported", false));
      return;
    }
    let raw = "";
    for await (const chunk of req) raw += chunk;
    let body: Record<string, unknown>;
    try {
      body = JSON.parse(raw) as Record<string, unknown>;
    } catch {
      respond(400, errorBody("request body is not valid JSON", false));
      return;
    }
    try {
      switch (req.url) {
        case "/embed": {
          const texts = requireStringArray(body.texts, "texts");
          const embeddings = await inChunks(texts, config.maxBatch, (chunk) =>
            embedBackend.embed(chunk),
          );
          respond(200, JSON.stringify({ dimension: embedBackend.dimension, embeddings }));
          return;
        }
        case "/score": {
          const docs = body.docs;
          if (
            !Array.isArray(docs) ||
            docs.length === 0 ||
            !docs.every(
              (d) => d && typeof d.id === "string" && typeof d.text === "string",
            )
          ) {
            throw new BadRequest("docs must be a non-empty array of {id, text}");
          }
          if (typeof body.query !== "string" || !body.query) {
            throw new BadRequest("query must be a non-empty string");
          }
          const query = body.query;
          const scores = await inChunks(
            docs as { id: string; text: string }[],
            config.maxBatch,
            (chunk) => scoreBackend.score(query, chunk),
          );
          respond(200, JSON.stringify({ scores }));
          return;
        }
        case "/chat": {
          const messages = body.messages;
          if (
            !Array.isArray(messages) ||
            messages.length === 0 ||
            !messages.every(
              (m) =>
                m &&
                ["system", "user", "assistant"].includes(m.role) &&
                typeof m.content === "string",
            )
          ) {
            throw new BadRequest("messages must be a non-empty array of chat messages");
          }
          const content = await chatBackend.chat(messages as ChatMessage[], config.temperature);
          respond(200, JSON.stringify({ content }));
          return;
        }
        default:
          respond(404, errorBody(`unknown endpoint ${req.url}`, false));
          return;
      }
    } catch (err) {
      if (err instanceof BadRequest) {
        respond(400, errorBody(err.message, false));
      } else {
        respond(500, errorBody(`backend failure: ${(err as Error).message}`, true));
      }
    }
  });
}

function parseArgs(argv: string[]): SidecarConfig {
  const config = { ...DEFAULT_CONFIG };
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    switch (key) {
      case "--port":
        config.port = Number(value);
        break;
      case "--dim":
        config.dimension = Number(value);
        break;
      case "--seed":
        config.seed = Number(value);
        break;
      case "--max-batch":
        config.maxBatch = Number(value);
        break;
      case "--temperature":
        config.temperature = Number(value);
        break;
      case "--chat-upstream":
        config.chatUpstream = value;
        break;
      case "--embedder":
      case "--scorer":
        if (value !== "deterministic") {
          throw new Error(
            `${key} ${value}: only the deterministic backend ships in this build; ` +
              "wire a model-backed Embedder/Scorer through createSidecar()",
          );
        }
        break;
      default:
        throw new Error(`unknown flag ${key}`);
    }
  }
  return config;
}

const entrypoint = process.argv[1] ?? "";
if (entrypoint.endsWith("server.js")) {
  const config = parseArgs(process.argv.slice(2));
  const server = createSidecar(config);
  server.listen(config.port, () => {
    const address = server.address();
    const port = typeof address === "object" && address ? address.port : config.port;
    console.log(
      JSON.stringify({ listening: port, dimension: config.dimension, temperature: config.temperature }),
    );
  });
}
