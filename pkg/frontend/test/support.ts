/** Shared test doubles: an in-memory service speaking the documented HTTP
 * contract (search, judgments with idempotency/conflicts, pooled acceptance
 * metrics) and small helpers for driving views. */

import type { FetchFn, SearchHit } from "../src/api.js";
import type { KeyValueStore } from "../src/judgments.js";

export class MemoryStorage implements KeyValueStore {
  private readonly entries = new Map<string, string>();

  getItem(key: string): string | null {
    return this.entries.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.entries.set(key, value);
  }
}

/** Deterministic judgment-id generator. */
export function sequentialIds(prefix = "j"): () => string {
  let n = 0;
  return () => `${prefix}-${++n}`;
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

interface StoredJudgment {
  id: string;
  policy_text: string;
  snippet_id: string;
  facet: string;
  model_tag: string;
  decision: string;
  reviewer: string;
}

export interface FakeServiceOptions {
  modelHash?: string;
  modelTags?: string[];
  resultsFor?: (policyText: string, facet: string, k: number) => SearchHit[];
}

/** Hits with multi-line code, markup-like characters, and deliberately
 * non-monotone distances: clients must mirror the server's rank order, not
 * re-sort, and must render values verbatim. */
export function defaultHits(policyText: string, facet: string, k: number): SearchHit[] {
  const hits: SearchHit[] = [];
  for (let i = 0; i < k; i++) {
    hits.push({
      snippet_id: `s:${facet}:${i}`,
      code: `// ${policyText}\nint value_${i} = compute("<${facet}>");\n`,
      distance: i === 0 ? 1 : 0.125 + i * 0.0625,
      rank: i + 1,
    });
  }
  return hits;
}

/** Speaks the review service's HTTP API over an injectable fetch. */
export class FakeService {
  modelHash: string;
  modelTags: string[];
  judgmentFailure: { status: number; error: string } | null = null;
  searchFailure: { status: number; error: string } | null = null;

  readonly judgments = new Map<string, StoredJudgment>();
  readonly calls: { method: string; path: string; body?: unknown }[] = [];
  /** Gate awaited before answering /search; tests can hold responses open. */
  searchGate: Promise<void> = Promise.resolve();

  private readonly resultsFor: (policyText: string, facet: string, k: number) => SearchHit[];

  constructor(options: FakeServiceOptions = {}) {
    this.modelHash = options.modelHash ?? "hash-a".padEnd(64, "0");
    this.modelTags = options.modelTags ?? ["m-aaaaaaaaaa"];
    this.resultsFor = options.resultsFor ?? defaultHits;
  }

  searchCalls(): { policy_text: string; facet: string; k: number; model_tag?: string }[] {
    return this.calls
      .filter((c) => c.method === "POST" && c.path === "/search")
      .map((c) => c.body as { policy_text: string; facet: string; k: number; model_tag?: string });
  }

  readonly fetch: FetchFn = async (input, init) => {
    const method = init?.method ?? "GET";
    const url = new URL(input, "http://service.test");
    const path = url.pathname;
    const body = init?.body !== undefined ? (JSON.parse(String(init.body)) as unknown) : undefined;
    this.calls.push({ method, path, body });

    if (method === "GET" && path === "/health") {
      return json(200, { status: "ok", model_hash: this.modelHash });
    }
    if (method === "GET" && path === "/models") {
      // the real server shuffles per request; reversing exercises client-side
      // ordering rules the same way without randomness
      return json(200, { model_tags: [...this.modelTags].reverse() });
    }
    if (method === "POST" && path === "/search") {
      await this.searchGate;
      if (this.searchFailure !== null) {
        return json(this.searchFailure.status, { error: this.searchFailure.error });
      }
      const request = body as { policy_text: string; facet: string; k: number; model_tag?: string };
      if (typeof request.policy_text !== "string" || request.policy_text.trim() === "") {
        return json(400, { error: "policy_text must be a non-empty string" });
      }
      const tag = request.model_tag ?? this.modelTags[0] ?? "m-default";
      if (!this.modelTags.includes(tag)) return json(400, { error: `unknown model_tag '${tag}'` });
      return json(200, {
        results: this.resultsFor(request.policy_text, request.facet, request.k),
        model_hash: this.modelHash,
        model_tag: tag,
      });
    }
    if (method === "POST" && path === "/judgments") {
      if (this.judgmentFailure !== null) {
        return json(this.judgmentFailure.status, { error: this.judgmentFailure.error });
      }
      const record = body as StoredJudgment;
      const existing = this.judgments.get(record.id);
      if (existing !== undefined) {
        if (JSON.stringify(existing) !== JSON.stringify(record)) {
          return json(409, { error: `judgment id ${record.id} exists with a different payload` });
        }
        return json(200, { id: record.id });
      }
      this.judgments.set(record.id, record);
      return json(201, { id: record.id });
    }
    if (method === "GET" && path === "/metrics/acceptance") {
      const tag = url.searchParams.get("model_tag");
      const records = [...this.judgments.values()].filter(
        (r) => tag === null || r.model_tag === tag,
      );
      const rate = (facet: string | null): number | null => {
        const pool = facet === null ? records : records.filter((r) => r.facet === facet);
        if (pool.length === 0) return null;
        const accepted = pool.filter((r) => r.decision === "accept").length;
        return (100 * accepted) / pool.length;
      };
      return json(200, {
        model_tag: tag,
        compliant: rate("compliant"),
        noncompliant: rate("noncompliant"),
        overall: rate(null),
        n_judgments: records.length,
      });
    }
    return json(404, { error: `no route ${method} ${path}` });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
