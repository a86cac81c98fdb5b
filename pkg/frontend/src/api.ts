// Typed client for the review service. Every call stays inside the
// documented endpoint set; tests swap in a recorded-fixture fetch.

import type {
  EnrichmentView,
  Entry,
  JobDetail,
  JobSummary,
  PageDetail,
  TriageLabel,
  Violation,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  code: string;
  violations: Violation[];

  constructor(status: number, code: string, message: string, violations: Violation[] = []) {
    super(message);
    this.status = status;
    this.code = code;
    this.violations = violations;
  }
}

async function raise(response: Response): Promise<never> {
  let code = "error";
  let message = `HTTP ${response.status}`;
  let violations: Violation[] = [];
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
    violations = body.details?.violations ?? [];
  } catch {
    // non-JSON error body; keep the status-line message
  }
  throw new ApiError(response.status, code, message, violations);
}

export class ApiClient {
  private fetcher: FetchLike;
  private base: string;

  constructor(fetcher: FetchLike = fetch.bind(globalThis), base = "") {
    this.fetcher = fetcher;
    this.base = base;
  }

  private async call<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetcher(this.base + path, init);
    if (!response.ok) {
      await raise(response);
    }
    return (await response.json()) as T;
  }

  listJobs(): Promise<JobSummary[]> {
    return this.call("/api/jobs");
  }

  getJob(jobId: string): Promise<JobDetail> {
    return this.call(`/api/jobs/${jobId}`);
  }

  getPage(jobId: string, page: number): Promise<PageDetail> {
    return this.call(`/api/jobs/${jobId}/pages/${page}`);
  }

  advancePage(jobId: string, page: number): Promise<{ state: string }> {
    return this.call(`/api/jobs/${jobId}/pages/${page}/advance`, { method: "POST" });
  }

  saveEntries(jobId: string, page: number, entries: Entry[]): Promise<{ state: string }> {
    return this.call(`/api/jobs/${jobId}/pages/${page}/entries`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ entries }),
    });
  }

  approvePage(jobId: string, page: number): Promise<{ state: string }> {
    return this.call(`/api/jobs/${jobId}/pages/${page}/approve`, { method: "POST" });
  }

  async downloadExport(jobId: string, format: "csv" | "tei"): Promise<string> {
    const response = await this.fetcher(`${this.base}/api/jobs/${jobId}/export?format=${format}`);
    if (!response.ok) {
      await raise(response);
    }
    return response.text();
  }

  getReport(jobId: string): Promise<Record<string, unknown>> {
    return this.call(`/api/jobs/${jobId}/report`);
  }

  getEnrichment(jobId: string): Promise<EnrichmentView> {
    return this.call(`/api/jobs/${jobId}/enrichment`);
  }

  saveTriage(jobId: string, labels: TriageLabel[]): Promise<{ stats: Record<string, number> | null }> {
    return this.call(`/api/jobs/${jobId}/triage`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ labels }),
    });
  }
}
