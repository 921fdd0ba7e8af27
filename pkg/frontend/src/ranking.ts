/** Client-side ranking preview: precision@k and ranking AUC over the
 * coefficient ordering, given the expert's current relevance judgements.
 *
 * This is deliberately the one number the UI computes itself (the
 * annotation loop must feel instant); on save it is cross-checked against
 * the service's /models/{id}/ranking value. The definitions mirror the
 * service: ranking sorts by coefficient descending with ties broken by
 * query id, precision@k divides by k even when fewer features exist, and
 * AUC gives tied coefficient pairs half credit.
 */

export interface RankingInputs {
  /** query_id -> coefficient */
  coefficients: Record<string, number>;
  /** query ids currently judged relevant ("supports") */
  relevant: Set<string>;
  ks?: number[];
}

export interface RankingPreview {
  ranked: string[];
  precisionAt: Record<number, number>;
  auc: number | null;
}

export const DEFAULT_KS = [1, 5, 10, 20];

export function rankByCoefficient(coefficients: Record<string, number>): string[] {
  return Object.keys(coefficients).sort((a, b) => {
    const diff = coefficients[b] - coefficients[a];
    if (diff !== 0) return diff;
    return a < b ? -1 : a > b ? 1 : 0;
  });
}

export function precisionAtK(ranked: string[], relevant: Set<string>, k: number): number {
  let hits = 0;
  for (const queryId of ranked.slice(0, k)) {
    if (relevant.has(queryId)) hits += 1;
  }
  return hits / k;
}

/** Probability a relevant feature's coefficient outranks a non-relevant
 * one's, ties counted half; null when either side is empty. */
export function rankingAuc(
  coefficients: Record<string, number>,
  relevant: Set<string>,
): number | null {
  const positives: number[] = [];
  const negatives: number[] = [];
  for (const [queryId, value] of Object.entries(coefficients)) {
    (relevant.has(queryId) ? positives : negatives).push(value);
  }
  if (positives.length === 0 || negatives.length === 0) return null;
  let total = 0;
  for (const p of positives) {
    for (const n of negatives) {
      if (p > n) total += 1;
      else if (p === n) total += 0.5;
    }
  }
  return total / (positives.length * negatives.length);
}

export function rankingPreview(inputs: RankingInputs): RankingPreview {
  const ks = inputs.ks ?? DEFAULT_KS;
  const ranked = rankByCoefficient(inputs.coefficients);
  const precisionAt: Record<number, number> = {};
  for (const k of ks) precisionAt[k] = precisionAtK(ranked, inputs.relevant, k);
  return { ranked, precisionAt, auc: rankingAuc(inputs.coefficients, inputs.relevant) };
}

/** Effective relevance set: the expert's annotation wins where present,
 * otherwise the a-priori badge. Mirrors the service's fallback rule. */
export function effectiveRelevant(
  entries: {
    query_id: string;
    expected_support: "supports" | "not-relevant" | null;
    annotation: "supports" | "not-relevant" | null;
  }[],
): Set<string> {
  const relevant = new Set<string>();
  for (const entry of entries) {
    const effective = entry.annotation ?? entry.expected_support;
    if (effective === "supports") relevant.add(entry.query_id);
  }
  return relevant;
}
