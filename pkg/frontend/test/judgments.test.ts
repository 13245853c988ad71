import { describe, expect, it } from "vitest";

import { JudgmentRegistry } from "../src/judgments.js";
import { MemoryStorage } from "./support.js";

describe("JudgmentRegistry", () => {
  it("returns null for unseen cards", () => {
    const registry = new JudgmentRegistry(new MemoryStorage());
    expect(registry.get("m-a", "policy", "compliant", "s1")).toBeNull();
  });

  it("round-trips a recorded decision", () => {
    const registry = new JudgmentRegistry(new MemoryStorage());
    registry.record("m-a", "policy", "compliant", "s1", {
      decision: "reject",
      judgmentId: "j-9",
    });

    expect(registry.get("m-a", "policy", "compliant", "s1")).toEqual({
      decision: "reject",
      judgmentId: "j-9",
    });
  });

  it("keys on every coordinate of the judgment", () => {
    const registry = new JudgmentRegistry(new MemoryStorage());
    registry.record("m-a", "policy", "compliant", "s1", {
      decision: "accept",
      judgmentId: "j-1",
    });

    expect(registry.get("m-b", "policy", "compliant", "s1")).toBeNull();
    expect(registry.get("m-a", "other policy", "compliant", "s1")).toBeNull();
    expect(registry.get("m-a", "policy", "noncompliant", "s1")).toBeNull();
    expect(registry.get("m-a", "policy", "compliant", "s2")).toBeNull();
  });

  it("is unambiguous for key components containing delimiters", () => {
    const registry = new JudgmentRegistry(new MemoryStorage());
    registry.record('m-a", "x', "policy", "compliant", "s1", {
      decision: "accept",
      judgmentId: "j-1",
    });

    expect(registry.get("m-a", 'x", "policy', "compliant", "s1")).toBeNull();
  });

  it("ignores corrupt stored entries", () => {
    const storage = new MemoryStorage();
    const registry = new JudgmentRegistry(storage);
    registry.record("m-a", "policy", "compliant", "s1", {
      decision: "accept",
      judgmentId: "j-1",
    });
    // clobber the stored value the way a foreign writer might
    storage.setItem(
      'codecomply.judgment.["m-a","policy","compliant","s1"]',
      "{not json",
    );

    expect(registry.get("m-a", "policy", "compliant", "s1")).toBeNull();
  });
});
