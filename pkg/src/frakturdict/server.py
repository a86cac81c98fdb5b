"""HTTP surface over the job store for the review workflow.

Bodies mirror the domain types as plain JSON; errors come back as
``{"code", "message", "details"}`` with 404 for unknown ids, 409 for
illegal transitions and 422 for validation failures.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import tei
from .entries import DictionaryEntry, SchemaId
from .enrich import TriageLabel, load_triage_labels, triage_stats
from .errors import (
    FrakturError,
    IllegalTransition,
    InvalidConfig,
    MalformedPayload,
    NothingToExport,
    SchemaViolation,
    SubsetViolation,
    UnknownId,
    UnreadableScan,
    XmlSyntax,
)
from .evaluation import report_html
from .jobs import Job, JobConfig, JobStore, PageState

log = logging.getLogger(__name__)

_STATUS_BY_ERROR = (
    (UnknownId, 404),
    (IllegalTransition, 409),
    (NothingToExport, 409),
    ((SchemaViolation, SubsetViolation, MalformedPayload, XmlSyntax), 422),
    ((InvalidConfig, UnreadableScan), 422),
)


def _status_for(exc: FrakturError) -> int:
    for types, status in _STATUS_BY_ERROR:
        if isinstance(exc, types):
            return status
    return 500


def _job_summary(job: Job) -> dict:
    counts: dict[str, int] = {}
    for record in job.pages.values():
        counts[record.state.value] = counts.get(record.state.value, 0) + 1
    return {
        "job_id": job.job_id,
        "created_at": job.created_at,
        "updated_at": job.updated_at,
        "schema": job.config.schema.value,
        "page_count": len(job.pages),
        "states": counts,
    }


def _page_detail(store: JobStore, job: Job, number: int) -> dict:
    record = job.page(number)
    detail: dict = {
        "number": record.number,
        "page_id": record.page_id,
        "source": record.source,
        "state": record.state.value,
        "failed_stage": record.failed_stage,
        "failed_error": record.failed_error,
        "retry_count": record.retry_count,
        "scan_url": f"/api/jobs/{job.job_id}/pages/{number}/scan",
        "entries": [],
        "tiles": [],
    }
    tiles_dir = store.job_dir(job.job_id) / "tiles"
    plan_path = tiles_dir / f"{record.page_id}.plan.json"
    if plan_path.is_file():
        plan = json.loads(plan_path.read_text(encoding="utf-8"))
        detail["plan"] = plan
        detail["tiles"] = [
            {
                "name": f"{tile['column_index']}{tile['segment_index']}",
                "bbox": tile["bbox"],
                "url": f"/api/jobs/{job.job_id}/tiles/{record.page_id}_"
                f"{tile['column_index']}{tile['segment_index']}.png",
            }
            for tile in plan["tiles"]
        ]
    if record.state in (PageState.RECOGNIZED, PageState.IN_REVIEW, PageState.APPROVED):
        content = store.load_page_content(job, record)
        if isinstance(content, tei.TeiDocument):
            detail["tei"] = tei.serialize_tei(content)
            detail["entries"] = [
                entry.to_dict() for entry in tei.document_to_entries(content).entries
            ]
        else:
            detail["entries"] = [entry.to_dict() for entry in content]
    reference = store._reference_path(job, record)
    if reference is not None:
        text = reference.read_text(encoding="utf-8")
        if job.config.schema is SchemaId.NINE_FIELD:
            from .entries import csv_to_entries

            detail["reference_entries"] = [entry.to_dict() for entry in csv_to_entries(text)]
        else:
            doc = tei.parse_tei_fragment(text)
            detail["reference_entries"] = [
                entry.to_dict() for entry in tei.document_to_entries(doc).entries
            ]
    eval_path = store.job_dir(job.job_id) / "eval" / f"{record.page_id}.json"
    if eval_path.is_file():
        detail["eval"] = json.loads(eval_path.read_text(encoding="utf-8"))
    return detail


def create_app(store: JobStore, frontend_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="frakturdict review service")

    @app.exception_handler(FrakturError)
    async def domain_error(request: Request, exc: FrakturError):  # noqa: ARG001
        return JSONResponse(status_code=_status_for(exc), content=exc.as_dict())

    @app.get("/api/jobs")
    def list_jobs() -> list[dict]:
        return [_job_summary(store.load(job_id)) for job_id in store.list_jobs()]

    @app.post("/api/jobs", status_code=201)
    def create_job(body: dict) -> dict:
        pages = body.get("pages") or []
        config = JobConfig.from_dict(body.get("config") or {})
        job = store.create_job(pages, config, job_id=body.get("job_id"))
        return job.to_dict()

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        return store.load(job_id).to_dict()

    @app.post("/api/jobs/{job_id}/pages/{number}/advance")
    def advance(job_id: str, number: int, body: dict | None = None) -> dict:
        stop_after = (body or {}).get("stop_after")
        state = store.advance(job_id, number, stop_after=stop_after)
        return {"state": state.value}

    @app.get("/api/jobs/{job_id}/pages/{number}")
    def get_page(job_id: str, number: int) -> dict:
        return _page_detail(store, store.load(job_id), number)

    @app.get("/api/jobs/{job_id}/pages/{number}/scan")
    def get_scan(job_id: str, number: int):
        job = store.load(job_id)
        record = job.page(number)
        return FileResponse(store.job_dir(job_id) / "pages" / record.file)

    @app.get("/api/jobs/{job_id}/tiles/{name}")
    def get_tile(job_id: str, name: str):
        path = store.job_dir(job_id) / "tiles" / name
        if not path.is_file() or path.suffix != ".png":
            raise UnknownId(f"no tile {name!r} in job {job_id}", tile=name)
        return FileResponse(path, media_type="image/png")

    @app.put("/api/jobs/{job_id}/pages/{number}/entries")
    def put_entries(job_id: str, number: int, body: dict) -> dict:
        if "tei" in body:
            job = store.set_tei(job_id, number, body["tei"])
        else:
            entries = [DictionaryEntry.from_dict(item) for item in body.get("entries", [])]
            job = store.set_entries(job_id, number, entries)
        return {"state": job.page(number).state.value}

    @app.post("/api/jobs/{job_id}/pages/{number}/approve")
    def approve(job_id: str, number: int) -> dict:
        job = store.approve(job_id, number)
        return {"state": job.page(number).state.value}

    @app.get("/api/jobs/{job_id}/export")
    def export(job_id: str, format: str = "csv"):
        path = store.export_unified(job_id, format=format)
        media = "text/csv" if format == "csv" else "application/xml"
        return PlainTextResponse(
            path.read_text(encoding="utf-8"),
            media_type=media,
            headers={"Content-Disposition": f'attachment; filename="{path.name}"'},
        )

    @app.get("/api/jobs/{job_id}/report")
    def report(job_id: str) -> dict:
        return store.corpus_report(job_id).to_dict()

    @app.get("/api/jobs/{job_id}/report.html")
    def report_page(job_id: str) -> HTMLResponse:
        corpus = store.corpus_report(job_id)
        return HTMLResponse(report_html(corpus, title=f"Report for {job_id}"))

    @app.get("/api/jobs/{job_id}/enrichment")
    def get_enrichment(job_id: str) -> dict:
        directory = store.job_dir(job_id) / "enrichment"
        rows_path = directory / "enrichment.csv"
        if not rows_path.is_file():
            raise UnknownId(f"job {job_id} has no enrichment output", job=job_id)
        import csv as _csv
        import io as _io

        rows = list(_csv.DictReader(_io.StringIO(rows_path.read_text(encoding="utf-8"))))
        labels_path = directory / "triage.csv"
        labels = []
        stats = None
        if labels_path.is_file():
            labels = [label.value for label in load_triage_labels(labels_path)]
            if labels:
                stats = triage_stats(load_triage_labels(labels_path))
        return {"rows": rows, "labels": labels, "stats": stats}

    @app.put("/api/jobs/{job_id}/triage")
    def put_triage(job_id: str, body: dict) -> dict:
        labels = body.get("labels") or []
        parsed = []
        for raw in labels:
            try:
                parsed.append(TriageLabel(raw))
            except ValueError:
                raise SchemaViolation(f"unknown triage label {raw!r}", label=raw) from None
        directory = store.job_dir(job_id) / "enrichment"
        if not directory.is_dir():
            raise UnknownId(f"job {job_id} has no enrichment output", job=job_id)
        lines = ["label"] + [label.value for label in parsed]
        (directory / "triage.csv").write_text("\r\n".join(lines) + "\r\n", encoding="utf-8")
        return {"stats": triage_stats(parsed) if parsed else None}

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def serve(store: JobStore, bind: str = "127.0.0.1:8077", frontend_dir: Path | None = None) -> None:
    """Run the review service until interrupted."""
    host, _, port = bind.partition(":")
    app = create_app(store, frontend_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8077), log_level="info")
