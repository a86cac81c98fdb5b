// View model for the review workflow. All state derives from the HTTP API;
// the only client-side data is the in-progress edit buffer.

import { ApiClient, ApiError } from "./api";
import type {
  Entry,
  EnrichmentView,
  JobDetail,
  JobSummary,
  PageDetail,
  TriageLabel,
  Violation,
} from "./types";

export interface UiError {
  message: string;
  code: string;
  violations: Violation[];
}

export interface ReviewState {
  jobs: JobSummary[];
  job: JobDetail | null;
  page: PageDetail | null;
  draft: Entry[];
  dirty: boolean;
  error: UiError | null;
  notice: string;
  lastExport: string;
  enrichment: EnrichmentView | null;
}

type Listener = (state: ReviewState) => void;

function cloneEntries(entries: Entry[]): Entry[] {
  return entries.map((entry) => ({
    ...entry,
    synonyms_et: [...entry.synonyms_et],
    synonyms_de: [...entry.synonyms_de],
    mwe_et: [...entry.mwe_et],
    mwe_de: [...entry.mwe_de],
    provenance: { ...entry.provenance },
  }));
}

export class ReviewStore {
  readonly state: ReviewState = {
    jobs: [],
    job: null,
    page: null,
    draft: [],
    dirty: false,
    error: null,
    notice: "",
    lastExport: "",
    enrichment: null,
  };

  private api: ApiClient;
  private listeners: Listener[] = [];

  constructor(api: ApiClient) {
    this.api = api;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  private fail(error: unknown): void {
    if (error instanceof ApiError) {
      this.state.error = {
        message: error.message,
        code: error.code,
        violations: error.violations,
      };
    } else {
      this.state.error = { message: String(error), code: "error", violations: [] };
    }
    this.emit();
  }

  clearError(): void {
    this.state.error = null;
    this.emit();
  }

  async loadJobs(): Promise<void> {
    try {
      this.state.jobs = await this.api.listJobs();
      this.emit();
    } catch (error) {
      this.fail(error);
    }
  }

  async openJob(jobId: string): Promise<void> {
    try {
      this.state.job = await this.api.getJob(jobId);
      this.state.page = null;
      this.state.draft = [];
      this.state.dirty = false;
      this.state.enrichment = null;
      this.emit();
    } catch (error) {
      this.fail(error);
    }
  }

  async openPage(page: number): Promise<void> {
    if (!this.state.job) return;
    try {
      const detail = await this.api.getPage(this.state.job.job_id, page);
      this.state.page = detail;
      this.state.draft = cloneEntries(detail.entries);
      this.state.dirty = false;
      this.state.error = null;
      this.emit();
    } catch (error) {
      this.fail(error);
    }
  }

  editField(index: number, field: keyof Entry, value: string | string[]): void {
    const entry = this.state.draft[index];
    if (!entry) return;
    Object.assign(entry, { [field]: value });
    this.state.dirty = true;
    this.emit();
  }

  /** Entry indexes whose draft differs from the reference transcription. */
  diffAgainstReference(index: number): boolean {
    const reference = this.state.page?.reference_entries?.[index];
    const draft = this.state.draft[index];
    if (!reference || !draft) return false;
    return JSON.stringify({ ...draft, provenance: null })
      !== JSON.stringify({ ...reference, provenance: null });
  }

  async advancePage(page: number): Promise<void> {
    if (!this.state.job) return;
    try {
      await this.api.advancePage(this.state.job.job_id, page);
      await this.openJob(this.state.job.job_id);
      await this.openPage(page);
    } catch (error) {
      this.fail(error);
    }
  }

  async saveDraft(): Promise<boolean> {
    if (!this.state.job || !this.state.page) return false;
    const { job_id } = this.state.job;
    const pageNumber = this.state.page.number;
    try {
      const result = await this.api.saveEntries(job_id, pageNumber, this.state.draft);
      this.state.page.state = result.state;
      this.state.page.entries = cloneEntries(this.state.draft);
      this.state.dirty = false;
      this.state.error = null;
      this.state.notice = "Corrections saved.";
      this.emit();
      return true;
    } catch (error) {
      // the page on screen keeps the server's committed content; the draft
      // stays editable with the violation list attached
      if (error instanceof ApiError && error.status === 409) {
        await this.openPage(pageNumber); // conflict: reload, dropping the draft
      }
      this.fail(error);
      return false;
    }
  }

  /**
   * Approve the current page. Unsaved edits trigger the confirmation
   * callback: resolve true to save-then-approve, false to abort.
   */
  async approvePage(confirmSavePending: () => boolean | Promise<boolean>): Promise<boolean> {
    if (!this.state.job || !this.state.page) return false;
    if (this.state.dirty) {
      const proceed = await confirmSavePending();
      if (!proceed) {
        this.state.notice = "Approval cancelled; unsaved edits kept.";
        this.emit();
        return false;
      }
      const saved = await this.saveDraft();
      if (!saved) return false;
    }
    try {
      const result = await this.api.approvePage(this.state.job.job_id, this.state.page.number);
      this.state.page.state = result.state;
      this.state.notice = "Page approved.";
      this.state.error = null;
      this.emit();
      return true;
    } catch (error) {
      this.fail(error);
      return false;
    }
  }

  async downloadExport(format: "csv" | "tei"): Promise<string | null> {
    if (!this.state.job) return null;
    try {
      const text = await this.api.downloadExport(this.state.job.job_id, format);
      this.state.lastExport = text;
      this.state.notice = `Export ready (${format}).`;
      this.emit();
      return text;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  async loadEnrichment(): Promise<void> {
    if (!this.state.job) return;
    try {
      this.state.enrichment = await this.api.getEnrichment(this.state.job.job_id);
      this.emit();
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.state.enrichment = null; // job simply has no enrichment output
        this.emit();
        return;
      }
      this.fail(error);
    }
  }

  async setTriageLabel(row: number, label: TriageLabel): Promise<void> {
    if (!this.state.job || !this.state.enrichment) return;
    const labels = [...this.state.enrichment.labels];
    while (labels.length < this.state.enrichment.rows.length) {
      labels.push("correct");
    }
    labels[row] = label;
    try {
      const result = await this.api.saveTriage(this.state.job.job_id, labels);
      this.state.enrichment.labels = labels;
      this.state.enrichment.stats = result.stats;
      this.emit();
    } catch (error) {
      this.fail(error);
    }
  }
}
