/** Typed client for the workbench REST API. Every number the UI displays is
 * fetched through here; the only client-side computation is the live
 * ranking preview in ranking.ts, which is cross-checked on save. */

export interface SessionInfo {
  dataset_id: string;
  n_documents: number;
  n_train: number;
  n_test: number;
  query_set_version: number;
  tasks: { name: string; kind: string; labels: string[] }[];
  scorer_identity: string;
}

export interface QueryModel {
  query_id: string;
  question: string;
  template_id: string;
  custom: boolean;
  expected_support: Record<string, "supports" | "not-relevant">;
}

export interface QuerySetResponse {
  name: string;
  version: number;
  queries: QueryModel[];
}

export interface DocumentSummary {
  doc_id: string;
  split: string;
  labels: Record<string, number>;
}

export interface DocumentDetail extends DocumentSummary {
  text: string;
  reference_features: Record<string, number>;
}

export interface JobResponse {
  job_id: string;
  kind: "extract" | "train" | "experiment";
  status: "queued" | "running" | "done" | "failed";
  progress: { completed: number; total: number };
  result: Record<string, unknown> | null;
  error: string | null;
}

export interface ModelSummary {
  model_id: string;
  task: string;
  variant: string;
  n_features: number;
  query_set_version: number;
  stale: boolean;
  train_fingerprint: string;
  parent: string | null;
}

export interface ModelDetail extends ModelSummary {
  query_ids: string[];
  weights: number[];
  intercept: number;
  config: Record<string, unknown>;
}

export type Judgement = "supports" | "not-relevant";

export interface CoefficientEntry {
  query_id: string;
  question: string;
  weight: number;
  rank: number;
  expected_support: Judgement | null;
  annotation: Judgement | null;
  alignment: "aligned" | "misaligned" | "unannotated";
}

export interface CoefficientsResponse {
  model_id: string;
  task: string;
  stale: boolean;
  intercept: number;
  coefficients: CoefficientEntry[];
}

export interface RankingResponse {
  model_id: string;
  relevant: string[];
  precision_at: Record<string, number>;
  auc: number | null;
}

export interface ModelMetrics {
  model_id: string;
  split: string;
  auroc: number | null;
  n: number;
  note: string;
}

export interface ExplanationItem {
  query_id: string;
  question: string;
  feature_value: number;
  score: number;
}

export interface ExplanationResponse {
  model_id: string;
  doc_id: string;
  items: ExplanationItem[];
  intercept: number;
  predicted_probability: number;
  predicted_label: number;
  reference_label: number | null;
}

export interface PruneResponse {
  model_id: string;
  parent: string;
  dropped: string[];
  retrained: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class WorkbenchApi {
  constructor(private baseUrl: string, private token?: string) {}

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
      ...(init.headers as Record<string, string> | undefined),
    };
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const response = await fetch(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
        else detail = JSON.stringify(body);
      } catch {
        /* non-JSON error body; keep statusText */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  session(): Promise<SessionInfo> {
    return this.request("/session");
  }

  // -- queries ------------------------------------------------------------

  listQueries(): Promise<QuerySetResponse> {
    return this.request("/queries");
  }

  addQuery(query: QueryModel): Promise<QuerySetResponse> {
    return this.request("/queries", { method: "POST", body: JSON.stringify(query) });
  }

  updateQuery(queryId: string, update: Omit<QueryModel, "query_id">): Promise<QuerySetResponse> {
    return this.request(`/queries/${encodeURIComponent(queryId)}`, {
      method: "PUT",
      body: JSON.stringify(update),
    });
  }

  deleteQuery(queryId: string): Promise<QuerySetResponse> {
    return this.request(`/queries/${encodeURIComponent(queryId)}`, { method: "DELETE" });
  }

  // -- documents ------------------------------------------------------------

  listDocuments(params: { split?: string; limit?: number; offset?: number } = {}): Promise<DocumentSummary[]> {
    const search = new URLSearchParams();
    if (params.split) search.set("split", params.split);
    if (params.limit) search.set("limit", String(params.limit));
    if (params.offset) search.set("offset", String(params.offset));
    const suffix = search.toString() ? `?${search}` : "";
    return this.request(`/documents${suffix}`);
  }

  getDocument(docId: string): Promise<DocumentDetail> {
    return this.request(`/documents/${encodeURIComponent(docId)}`);
  }

  // -- jobs ------------------------------------------------------------

  startExtract(body: { doc_ids?: string[]; include_custom?: boolean }): Promise<JobResponse> {
    return this.request("/extract", { method: "POST", body: JSON.stringify(body) });
  }

  getJob(jobId: string): Promise<JobResponse> {
    return this.request(`/jobs/${encodeURIComponent(jobId)}`);
  }

  /** Inline result payload of a finished job (matrix values for small
   * extractions, report JSON for experiments). */
  getJobResult(jobId: string): Promise<Record<string, unknown>> {
    return this.request(`/jobs/${encodeURIComponent(jobId)}/result`);
  }

  /** Poll a job until it reaches a terminal state. */
  async waitForJob(jobId: string, intervalMs = 150, timeoutMs = 120_000): Promise<JobResponse> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.getJob(jobId);
      if (job.status === "done" || job.status === "failed") return job;
      if (Date.now() > deadline) throw new ApiError(408, `job ${jobId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  // -- models ------------------------------------------------------------

  train(body: {
    task: string;
    variant?: "binary" | "continuous";
    include_custom?: boolean;
    config?: Record<string, unknown>;
  }): Promise<ModelSummary> {
    return this.request("/train", { method: "POST", body: JSON.stringify(body) });
  }

  listModels(): Promise<ModelSummary[]> {
    return this.request("/models");
  }

  getModel(modelId: string): Promise<ModelDetail> {
    return this.request(`/models/${encodeURIComponent(modelId)}`);
  }

  coefficients(modelId: string): Promise<CoefficientsResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/coefficients`);
  }

  metrics(modelId: string, split = "test"): Promise<ModelMetrics> {
    return this.request(`/models/${encodeURIComponent(modelId)}/metrics?split=${split}`);
  }

  annotations(modelId: string): Promise<{ model_id: string; annotations: Record<string, Judgement> }> {
    return this.request(`/models/${encodeURIComponent(modelId)}/annotations`);
  }

  saveAnnotations(
    modelId: string,
    annotations: Record<string, Judgement | null>,
  ): Promise<{ model_id: string; annotations: Record<string, Judgement> }> {
    return this.request(`/models/${encodeURIComponent(modelId)}/annotations`, {
      method: "PUT",
      body: JSON.stringify({ annotations }),
    });
  }

  ranking(modelId: string): Promise<RankingResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/ranking`);
  }

  explain(modelId: string, docId: string): Promise<ExplanationResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/explain`, {
      method: "POST",
      body: JSON.stringify({ doc_id: docId }),
    });
  }

  prune(modelId: string, drop: string[], retrain: boolean): Promise<PruneResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/prune`, {
      method: "POST",
      body: JSON.stringify({ drop, retrain }),
    });
  }
}
