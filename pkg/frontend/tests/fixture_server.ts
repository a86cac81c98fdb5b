// In-memory stand-in for the review service, recorded from its real
// behaviour: same routes, same status codes, same error bodies.

import type { Entry, PageRecord } from "../src/types";
import type { FetchLike } from "../src/api";

function entry(headword: string, equivalent: string, order: number): Entry {
  return {
    headword_et: headword,
    synonyms_et: [],
    equivalent_de: equivalent,
    synonyms_de: [],
    explanation_la: "",
    part_of_speech: "",
    grammar_info: "",
    mwe_et: [],
    mwe_de: [],
    provenance: { source_id: "job-001", page: 1, column: 1, segment: 0, order_on_page: order },
  };
}

interface PageData {
  record: PageRecord;
  entries: Entry[];
  reference: Entry[];
}

export interface FixtureServer {
  fetch: FetchLike;
  requests: string[];
  exportedCsv(): string;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function errorBody(status: number, code: string, message: string, details: unknown = {}): Response {
  return json(status, { code, message, details });
}

export function makeFixtureServer(): FixtureServer {
  const pages = new Map<number, PageData>();
  pages.set(1, {
    record: {
      number: 1, source: "page1.png", file: "001.png", state: "recognized",
      failed_stage: "", failed_error: "", retry_count: 0,
    },
    entries: [entry("lahbutaminne", "Scheidung", 0), entry("körts", "Krug", 1)],
    reference: [entry("lahhutaminne", "Scheidung", 0), entry("körts", "Krug", 1)],
  });
  pages.set(2, {
    record: {
      number: 2, source: "page2.png", file: "002.png", state: "pending",
      failed_stage: "", failed_error: "", retry_count: 0,
    },
    entries: [],
    reference: [],
  });

  const requests: string[] = [];

  function jobDetail() {
    const pagesRecord: Record<string, PageRecord> = {};
    for (const [number, data] of pages) {
      pagesRecord[String(number)] = data.record;
    }
    return {
      job_id: "job-001",
      config: { schema: "ninefield" },
      pages: pagesRecord,
      created_at: "2025-01-01T00:00:00+00:00",
      updated_at: "2025-01-01T00:00:00+00:00",
    };
  }

  function pageDetail(number: number) {
    const data = pages.get(number)!;
    return {
      ...data.record,
      page_id: `p${String(number).padStart(3, "0")}`,
      scan_url: `/api/jobs/job-001/pages/${number}/scan`,
      entries: data.entries,
      reference_entries: data.reference,
      tiles: [
        { name: "00", bbox: [0, 0, 320, 450], url: "/api/jobs/job-001/tiles/p001_00.png" },
      ],
    };
  }

  function validate(entries: Entry[]) {
    const violations = [];
    for (let index = 0; index < entries.length; index += 1) {
      if (!entries[index].headword_et.trim()) {
        violations.push({
          entry: index,
          field: "headword_et",
          rule: "non_empty",
          message: "headword is empty",
        });
      }
    }
    return violations;
  }

  function exportedCsv(): string {
    const rows = ["headword_et,equivalent_de"];
    for (const [, data] of [...pages.entries()].sort((a, b) => a[0] - b[0])) {
      if (["recognized", "in_review", "approved"].includes(data.record.state)) {
        for (const item of data.entries) {
          rows.push(`${item.headword_et},${item.equivalent_de}`);
        }
      }
    }
    return rows.join("\r\n") + "\r\n";
  }

  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    requests.push(`${method} ${url}`);
    const path = url.replace(/^https?:\/\/[^/]+/, "");

    if (method === "GET" && path === "/api/jobs") {
      return json(200, [{
        job_id: "job-001", created_at: "", updated_at: "", schema: "ninefield",
        page_count: pages.size,
        states: { recognized: 1, pending: 1 },
      }]);
    }
    if (method === "GET" && path === "/api/jobs/job-001") {
      return json(200, jobDetail());
    }
    const pageMatch = path.match(/^\/api\/jobs\/job-001\/pages\/(\d+)(\/(entries|approve|advance))?$/);
    if (pageMatch) {
      const number = Number(pageMatch[1]);
      const action = pageMatch[3];
      const data = pages.get(number);
      if (!data) {
        return errorBody(404, "unknown_id", `job job-001 has no page ${number}`);
      }
      if (!action && method === "GET") {
        return json(200, pageDetail(number));
      }
      if (action === "advance" && method === "POST") {
        return json(200, { state: data.record.state });
      }
      if (action === "entries" && method === "PUT") {
        if (!["recognized", "in_review"].includes(data.record.state)) {
          return errorBody(
            409, "illegal_transition",
            `page ${number} is ${data.record.state}; corrections need a recognized page`,
          );
        }
        const body = JSON.parse(String(init?.body ?? "{}"));
        const entries: Entry[] = body.entries ?? [];
        const violations = validate(entries);
        if (violations.length > 0) {
          return errorBody(422, "schema_violation", "corrected entries are invalid", { violations });
        }
        data.entries = entries;
        data.record.state = "in_review";
        return json(200, { state: "in_review" });
      }
      if (action === "approve" && method === "POST") {
        if (!["recognized", "in_review"].includes(data.record.state)) {
          return errorBody(
            409, "illegal_transition",
            `cannot approve page ${number} in state ${data.record.state}`,
          );
        }
        data.record.state = "approved";
        return json(200, { state: "approved" });
      }
    }
    if (method === "GET" && path.startsWith("/api/jobs/job-001/export")) {
      return new Response(exportedCsv(), { status: 200, headers: { "Content-Type": "text/csv" } });
    }
    if (method === "GET" && path === "/api/jobs/job-001/enrichment") {
      return errorBody(404, "unknown_id", "job job-001 has no enrichment output");
    }
    return errorBody(404, "unknown_id", `unrecorded route: ${method} ${path}`);
  };

  return { fetch: fetchImpl, requests, exportedCsv };
}
