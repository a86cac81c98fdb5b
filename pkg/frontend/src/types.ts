// Wire types mirroring the review service's JSON bodies.

export interface Provenance {
  source_id: string;
  page: number;
  column: number;
  segment: number | string;
  order_on_page: number;
}

export interface Entry {
  headword_et: string;
  synonyms_et: string[];
  equivalent_de: string;
  synonyms_de: string[];
  explanation_la: string;
  part_of_speech: string;
  grammar_info: string;
  mwe_et: string[];
  mwe_de: string[];
  provenance: Provenance;
}

export const ENTRY_FIELDS = [
  "headword_et",
  "synonyms_et",
  "equivalent_de",
  "synonyms_de",
  "explanation_la",
  "part_of_speech",
  "grammar_info",
  "mwe_et",
  "mwe_de",
] as const;

export type EntryField = (typeof ENTRY_FIELDS)[number];

export const SEQUENCE_FIELDS: ReadonlySet<EntryField> = new Set([
  "synonyms_et",
  "synonyms_de",
  "mwe_et",
  "mwe_de",
]);

export interface JobSummary {
  job_id: string;
  created_at: string;
  updated_at: string;
  schema: string;
  page_count: number;
  states: Record<string, number>;
}

export interface PageRecord {
  number: number;
  source: string;
  file: string;
  state: string;
  failed_stage: string;
  failed_error: string;
  retry_count: number;
}

export interface JobDetail {
  job_id: string;
  config: Record<string, unknown>;
  pages: Record<string, PageRecord>;
  created_at: string;
  updated_at: string;
}

export interface TileRef {
  name: string;
  bbox: [number, number, number, number];
  url: string;
}

export interface EvalSummary {
  page_id: string;
  cer_by_field: Record<string, number>;
  structural_similarity: number;
  textual_similarity: number;
  perfect_entries: number;
  total_entries: number;
  perfect_rate: number;
}

export interface PageDetail {
  number: number;
  page_id: string;
  source: string;
  state: string;
  failed_stage: string;
  failed_error: string;
  retry_count: number;
  scan_url: string;
  entries: Entry[];
  tiles: TileRef[];
  plan?: { gutter_x: number; tiles: unknown[] };
  tei?: string;
  reference_entries?: Entry[];
  eval?: EvalSummary;
}

export interface Violation {
  entry: number;
  field: string;
  rule: string;
  message: string;
}

export interface EnrichmentRow {
  old_et: string;
  modern_et: string;
  old_de: string;
  modern_de: string;
  comment: string;
}

export type TriageLabel = "correct" | "minor_edit" | "full_revision";

export interface EnrichmentView {
  rows: EnrichmentRow[];
  labels: TriageLabel[];
  stats: Record<string, number> | null;
}
