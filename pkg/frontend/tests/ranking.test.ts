import { describe, expect, it } from "vitest";

import {
  effectiveRelevant,
  precisionAtK,
  rankByCoefficient,
  rankingAuc,
  rankingPreview,
} from "../src/ranking.js";

describe("rankByCoefficient", () => {
  it("sorts descending with ties broken by query id", () => {
    const ranked = rankByCoefficient({ b: 1.0, a: 1.0, c: 2.0, d: -1.0 });
    expect(ranked).toEqual(["c", "a", "b", "d"]);
  });
});

describe("precision and AUC", () => {
  const coefficients = { q1: 3, q2: 2, q3: 1, q4: -1 };
  const relevant = new Set(["q1", "q3"]);

  it("reproduces the worked example", () => {
    const ranked = rankByCoefficient(coefficients);
    expect(precisionAtK(ranked, relevant, 1)).toBe(1.0);
    expect(precisionAtK(ranked, relevant, 2)).toBe(0.5);
    expect(rankingAuc(coefficients, relevant)).toBe(0.75);
  });

  it("keeps k in the denominator beyond the feature count", () => {
    const ranked = rankByCoefficient({ a: 1, b: 0.5 });
    expect(precisionAtK(ranked, new Set(["a", "b"]), 5)).toBe(2 / 5);
  });

  it("gives tied pairs half credit", () => {
    expect(rankingAuc({ a: 1, b: 1 }, new Set(["a"]))).toBe(0.5);
  });

  it("is null when relevance is single-class", () => {
    expect(rankingAuc(coefficients, new Set())).toBeNull();
    expect(rankingAuc(coefficients, new Set(Object.keys(coefficients)))).toBeNull();
  });

  it("scores a relevant item ranked last as zero", () => {
    const coefs = { q0: 5, q1: 4, q2: 3, q3: 2, q4: 1 };
    expect(rankingAuc(coefs, new Set(["q4"]))).toBe(0.0);
    expect(precisionAtK(rankByCoefficient(coefs), new Set(["q4"]), 1)).toBe(0.0);
  });
});

describe("rankingPreview", () => {
  it("bundles ranked order, P@k, and AUC", () => {
    const preview = rankingPreview({
      coefficients: { q1: 3, q2: 2, q3: 1, q4: -1 },
      relevant: new Set(["q1", "q3"]),
      ks: [1, 2],
    });
    expect(preview.ranked[0]).toBe("q1");
    expect(preview.precisionAt).toEqual({ 1: 1.0, 2: 0.5 });
    expect(preview.auc).toBe(0.75);
  });
});

describe("effectiveRelevant", () => {
  it("prefers the expert annotation and falls back to the badge", () => {
    const relevant = effectiveRelevant([
      { query_id: "a", expected_support: "supports", annotation: null },
      { query_id: "b", expected_support: "not-relevant", annotation: "supports" },
      { query_id: "c", expected_support: "supports", annotation: "not-relevant" },
      { query_id: "d", expected_support: null, annotation: null },
    ]);
    expect([...relevant].sort()).toEqual(["a", "b"]);
  });
});
