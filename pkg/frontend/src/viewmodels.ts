/** View models: the workbench logic behind each pane, kept DOM-free so the
 * integration tests can drive the exact code paths the views render. */

import {
  CoefficientEntry,
  ExplanationResponse,
  Judgement,
  ModelMetrics,
  QueryModel,
  WorkbenchApi,
} from "./api.js";
import { effectiveRelevant, rankingPreview, RankingPreview } from "./ranking.js";

export const PREVIEW_DOC_LIMIT = 10;

export interface PreviewCell {
  doc_id: string;
  value: number;
}

export class QueryEditorViewModel {
  queries: QueryModel[] = [];
  version = 0;

  constructor(private api: WorkbenchApi) {}

  async load(): Promise<void> {
    const response = await this.api.listQueries();
    this.queries = response.queries;
    this.version = response.version;
  }

  private applyResponse(response: { version: number; queries: QueryModel[] }): void {
    this.queries = response.queries;
    this.version = response.version;
  }

  async add(query: QueryModel): Promise<void> {
    this.applyResponse(await this.api.addQuery(query));
  }

  async update(queryId: string, update: Omit<QueryModel, "query_id">): Promise<void> {
    this.applyResponse(await this.api.updateQuery(queryId, update));
  }

  async remove(queryId: string): Promise<void> {
    this.applyResponse(await this.api.deleteQuery(queryId));
  }

  /** Extract the current query set on a small sample and return the chosen
   * query's calibrated value per document. Edits are never eagerly applied
   * locally; the server response after each mutation is the state. */
  async preview(queryId: string, docIds: string[]): Promise<PreviewCell[]> {
    if (docIds.length === 0 || docIds.length > PREVIEW_DOC_LIMIT) {
      throw new Error(`preview needs 1..${PREVIEW_DOC_LIMIT} documents`);
    }
    const job = await this.api.startExtract({ doc_ids: docIds, include_custom: true });
    const finished = await this.api.waitForJob(job.job_id);
    if (finished.status === "failed") {
      throw new Error(finished.error ?? "extraction failed");
    }
    const result = (await this.api.getJobResult(finished.job_id)) as {
      doc_ids: string[];
      query_ids: string[];
      values: number[][];
    };
    const column = result.query_ids.indexOf(queryId);
    if (column < 0) throw new Error(`query ${queryId} missing from extraction result`);
    return result.doc_ids.map((docId, row) => ({
      doc_id: docId,
      value: result.values[row][column],
    }));
  }
}

export interface SaveCheck {
  /** value recomputed client-side just before saving */
  liveAuc: number | null;
  /** value the service computed from the saved annotations */
  serverAuc: number | null;
  /** |live - server| <= 1e-9 (both null counts as consistent) */
  consistent: boolean;
  serverPrecisionAt: Record<string, number>;
}

export class CoefficientInspectorViewModel {
  modelId = "";
  task = "";
  stale = false;
  entries: CoefficientEntry[] = [];
  /** unsaved annotation edits layered over the fetched entries */
  pending: Record<string, Judgement | null> = {};

  constructor(private api: WorkbenchApi) {}

  async load(modelId: string): Promise<void> {
    const response = await this.api.coefficients(modelId);
    this.modelId = modelId;
    this.task = response.task;
    this.stale = response.stale;
    this.entries = response.coefficients;
    this.pending = {};
  }

  /** The judgement currently in effect for a query (pending edit wins). */
  currentAnnotation(queryId: string): Judgement | null {
    if (queryId in this.pending) return this.pending[queryId];
    const entry = this.entries.find((e) => e.query_id === queryId);
    return entry?.annotation ?? null;
  }

  /** Cycle supports -> not-relevant -> cleared -> supports. */
  toggle(queryId: string): Judgement | null {
    const current = this.currentAnnotation(queryId);
    const next: Judgement | null =
      current === "supports" ? "not-relevant" : current === "not-relevant" ? null : "supports";
    this.pending[queryId] = next;
    return next;
  }

  /** Live ranking preview from the current (possibly unsaved) judgements. */
  livePreview(): RankingPreview {
    const coefficients: Record<string, number> = {};
    for (const entry of this.entries) coefficients[entry.query_id] = entry.weight;
    const relevant = effectiveRelevant(
      this.entries.map((entry) => ({
        query_id: entry.query_id,
        expected_support: entry.expected_support,
        annotation:
          entry.query_id in this.pending ? this.pending[entry.query_id] : entry.annotation,
      })),
    );
    return rankingPreview({ coefficients, relevant });
  }

  /** Persist pending edits, then cross-check the live AUC against the
   * service's; the saved view refreshes from the server. */
  async save(): Promise<SaveCheck> {
    const live = this.livePreview();
    if (Object.keys(this.pending).length > 0) {
      await this.api.saveAnnotations(this.modelId, this.pending);
    }
    const server = await this.api.ranking(this.modelId);
    await this.load(this.modelId);
    const bothNull = live.auc === null && server.auc === null;
    const consistent =
      bothNull ||
      (live.auc !== null &&
        server.auc !== null &&
        Math.abs(live.auc - server.auc) <= 1e-9);
    return {
      liveAuc: live.auc,
      serverAuc: server.auc,
      consistent,
      serverPrecisionAt: server.precision_at,
    };
  }
}

export interface CoefficientDiffRow {
  query_id: string;
  before: number;
  after: number;
}

export interface WhatIfResult {
  newModelId: string;
  before: ModelMetrics;
  after: ModelMetrics;
  coefficientDiff: CoefficientDiffRow[];
}

export class WhatIfPruneViewModel {
  modelId = "";
  drop = new Set<string>();
  lastResult: WhatIfResult | null = null;

  constructor(private api: WorkbenchApi) {}

  async load(modelId: string): Promise<void> {
    this.modelId = modelId;
    this.drop = new Set();
    this.lastResult = null;
  }

  toggleDrop(queryId: string): void {
    if (this.drop.has(queryId)) this.drop.delete(queryId);
    else this.drop.add(queryId);
  }

  /** Prune on the server and fetch before/after numbers; the new model id
   * becomes the next iteration target. */
  async run(retrain: boolean): Promise<WhatIfResult> {
    const before = await this.api.metrics(this.modelId);
    const beforeDetail = await this.api.getModel(this.modelId);
    const pruned = await this.api.prune(this.modelId, [...this.drop].sort(), retrain);
    const after = await this.api.metrics(pruned.model_id);
    const afterDetail = await this.api.getModel(pruned.model_id);
    const afterWeights = new Map(
      afterDetail.query_ids.map((queryId, i) => [queryId, afterDetail.weights[i]]),
    );
    const diff: CoefficientDiffRow[] = beforeDetail.query_ids.map((queryId, i) => ({
      query_id: queryId,
      before: beforeDetail.weights[i],
      after: afterWeights.get(queryId) ?? 0,
    }));
    this.lastResult = {
      newModelId: pruned.model_id,
      before,
      after,
      coefficientDiff: diff,
    };
    return this.lastResult;
  }

  /** Side-by-side explanations for one document (both fetched). */
  async explanationDiff(
    docId: string,
    newModelId: string,
  ): Promise<{ before: ExplanationResponse; after: ExplanationResponse }> {
    const before = await this.api.explain(this.modelId, docId);
    const after = await this.api.explain(newModelId, docId);
    return { before, after };
  }

  /** Adopt the pruned model for the next round of iteration. */
  iterateOn(newModelId: string): void {
    this.modelId = newModelId;
    this.drop = new Set();
    this.lastResult = null;
  }
}
