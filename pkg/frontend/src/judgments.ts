/** Client-side registry of acknowledged judgments.
 *
 * The service's judgment log is append-only and offers no listing endpoint,
 * so the browser remembers which cards it has judged. An entry is written
 * only after the server acknowledged the judgment — what the registry
 * replays after a reload is always a recorded decision, never an attempt.
 * Keys carry the model tag, so the same snippet judged under two models
 * keeps two independent states.
 */

import type { Decision, Facet } from "./api.js";

export interface JudgedEntry {
  decision: Decision;
  judgmentId: string;
}

/** The subset of DOM Storage the registry needs; window.localStorage
 * satisfies it, and tests pass a plain in-memory stand-in. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const PREFIX = "codecomply.judgment.";

export class JudgmentRegistry {
  constructor(private readonly store: KeyValueStore) {}

  private key(modelTag: string, policyText: string, facet: Facet, snippetId: string): string {
    return PREFIX + JSON.stringify([modelTag, policyText, facet, snippetId]);
  }

  get(modelTag: string, policyText: string, facet: Facet, snippetId: string): JudgedEntry | null {
    const raw = this.store.getItem(this.key(modelTag, policyText, facet, snippetId));
    if (raw === null) return null;
    try {
      const parsed = JSON.parse(raw) as JudgedEntry;
      if (parsed.decision !== "accept" && parsed.decision !== "reject") return null;
      return parsed;
    } catch {
      return null;
    }
  }

  record(
    modelTag: string,
    policyText: string,
    facet: Facet,
    snippetId: string,
    entry: JudgedEntry,
  ): void {
    this.store.setItem(this.key(modelTag, policyText, facet, snippetId), JSON.stringify(entry));
  }
}
