"""Command-line surface over the whole pipeline.

Everything the HTTP service can do is reachable here, so scripted runs and
CI never need the UI. Results go to stdout as JSON; diagnostics go to
stderr. Exit codes: 0 success, 1 domain error, 2 usage error.

Option precedence for job configuration: command-line flags beat
``FRAKTUR_*`` environment variables, which beat the config file, which
beats built-in defaults.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import yaml

from .enrich import (
    adjudicate,
    candidate_matches,
    enrich as enrich_rows,
    enrichment_rows_to_csv,
    load_source_rows,
    load_triage_labels,
    mapping_rows_to_csv,
    triage_stats,
)
from .errors import FrakturError, InvalidConfig
from .evaluation import methods_csv, report_csv, report_html
from .gateway import Gateway, HttpProvider, MockProvider, ModelParams
from .jobs import JobConfig, JobStore, PageState
from .tiling import TilingMode, crop, load_page, plan_tiles

ENV_PREFIX = "FRAKTUR_"

# config-file / environment keys that map straight onto JobConfig fields
_ENV_KEYS = (
    "schema", "mode", "provider", "fixtures_dir", "reference_dir",
    "prompt_assets_dir", "model_id", "jobs_root",
)


def _env(name: str) -> str | None:
    return os.environ.get(ENV_PREFIX + name.upper())


def _emit(payload) -> None:
    click.echo(json.dumps(payload, indent=2, ensure_ascii=False, default=str))


def _fail(exc: FrakturError) -> None:
    click.echo(json.dumps(exc.as_dict(), ensure_ascii=False, default=str), err=True)
    sys.exit(1)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"config file {path} must hold a mapping")
    return data


def _build_config(config_path: str | None, flag_overrides: dict) -> JobConfig:
    data = _load_config_file(config_path)
    for key in ("schema", "mode", "provider", "fixtures_dir", "reference_dir", "prompt_assets_dir"):
        value = _env(key)
        if value is not None:
            data[key] = value
    model_id = _env("model_id")
    if model_id is not None:
        data.setdefault("params", {})
        if isinstance(data["params"], dict):
            data["params"]["model_id"] = model_id
    for key, value in flag_overrides.items():
        if value is not None:
            data[key] = value
    return JobConfig.from_dict(data)


def _store(jobs_root: str | None) -> JobStore:
    root = jobs_root or _env("jobs_root") or "jobs"
    return JobStore(root)


def _pages_of(store: JobStore, job_id: str, page: int | None) -> list[int]:
    job = store.load(job_id)
    return [page] if page is not None else sorted(job.pages)


@click.group()
@click.option("--jobs-root", default=None, help="Job store directory (FRAKTUR_JOBS_ROOT, ./jobs).")
@click.pass_context
def main(ctx: click.Context, jobs_root: str | None) -> None:
    """Digitisation pipeline for Fraktur-printed dictionary scans."""
    ctx.obj = {"jobs_root": jobs_root}


@main.command()
@click.argument("scans", nargs=-1, required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), help="Job config YAML.")
@click.option("--schema", type=click.Choice(["ninefield", "tei"]), default=None)
@click.option("--mode", type=click.Choice(["whole", "columns", "segments"]), default=None)
@click.option("--segments", "segments_per_column", type=int, default=None)
@click.option("--overlap", "overlap_fraction", type=float, default=None)
@click.option("--provider", type=click.Choice(["mock", "http"]), default=None)
@click.option("--fixtures", "fixtures_dir", type=click.Path(), default=None)
@click.option("--reference", "reference_dir", type=click.Path(), default=None)
@click.option("--llm-merge/--no-llm-merge", "llm_merge", default=None)
@click.option("--job-id", default=None)
@click.pass_context
def create(ctx: click.Context, scans, config_path, job_id, **overrides) -> None:
    """Create a job from page scans; all pages start pending."""
    try:
        config = _build_config(config_path, overrides)
        store = _store(ctx.obj["jobs_root"])
        job = store.create_job(list(scans), config, job_id=job_id)
        _emit({"job_id": job.job_id, "pages": len(job.pages), "schema": config.schema.value})
    except FrakturError as exc:
        _fail(exc)


@main.command()
@click.argument("scan", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["whole", "columns", "segments"]), default="segments")
@click.option("--segments", type=int, default=4, show_default=True)
@click.option("--overlap", type=float, default=0.25, show_default=True)
@click.option("--gutter", type=float, default=0.5, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Output directory for tiles.")
def tile(scan, mode, segments, overlap, gutter, out) -> None:
    """Tile one scan into PNG segments plus a plan file."""
    try:
        page = load_page(scan)
        plan = plan_tiles(
            page,
            TilingMode(mode),
            segments_per_column=segments,
            overlap_fraction=overlap,
            gutter_ratio=gutter,
        )
        out_dir = Path(out) if out else Path(scan).with_suffix("").parent / f"{page.page_id}_tiles"
        out_dir.mkdir(parents=True, exist_ok=True)
        for tile_def in plan.tiles:
            tile_image = crop(page, tile_def)
            (out_dir / tile_image.file_name).write_bytes(tile_image.png_bytes)
        plan_path = out_dir / f"{page.page_id}.plan.json"
        plan_path.write_text(json.dumps(plan.to_dict(), indent=2), encoding="utf-8")
        _emit({"plan": str(plan_path), "tiles": len(plan.tiles), "out": str(out_dir)})
    except FrakturError as exc:
        _fail(exc)


@main.command()
@click.argument("job_id")
@click.option("--page", type=int, default=None, help="One page only (default: all).")
@click.pass_context
def ocr(ctx: click.Context, job_id: str, page: int | None) -> None:
    """Tile (if needed) and recognize pages through the model gateway."""
    try:
        store = _store(ctx.obj["jobs_root"])
        states = {}
        for number in _pages_of(store, job_id, page):
            state = store.advance(job_id, number, stop_after="recognize")
            states[number] = state.value
        _emit({"job_id": job_id, "states": states})
    except FrakturError as exc:
        _fail(exc)


@main.command()
@click.argument("job_id")
@click.option("--page", type=int, default=None)
@click.option("--llm", is_flag=True, default=False, help="Delegate the merge to a second model.")
@click.pass_context
def merge(ctx: click.Context, job_id: str, page: int | None, llm: bool) -> None:
    """Reassemble recognized fragments into page documents."""
    try:
        store = _store(ctx.obj["jobs_root"])
        states = {}
        for number in _pages_of(store, job_id, page):
            state = store.advance(job_id, number, llm_merge=llm or None)
            states[number] = state.value
        _emit({"job_id": job_id, "states": states})
    except FrakturError as exc:
        _fail(exc)


@main.command("eval")
@click.argument("job_id")
@click.option("--reference", required=True, type=click.Path(exists=True), help="Ground truth dir.")
@click.pass_context
def eval_cmd(ctx: click.Context, job_id: str, reference: str) -> None:
    """Score recognized pages against reference files and write reports."""
    try:
        store = _store(ctx.obj["jobs_root"])
        job = store.load(job_id)
        suffix = ".csv" if job.config.schema.value == "ninefield" else ".xml"
        scored = []
        for number in sorted(job.pages):
            record = job.pages[number]
            if record.state not in (PageState.RECOGNIZED, PageState.IN_REVIEW, PageState.APPROVED):
                continue
            ref_path = None
            for stem in (Path(record.source).stem, record.page_id, f"{number:03d}"):
                candidate = Path(reference) / f"{stem}{suffix}"
                if candidate.is_file():
                    ref_path = candidate
                    break
            if ref_path is None:
                click.echo(f"no reference for page {number}", err=True)
                continue
            report = store.evaluate_page(job, record, ref_path)
            (store.job_dir(job_id) / "eval" / f"{record.page_id}.json").write_text(
                json.dumps(report.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
            )
            scored.append(report.to_dict())
        corpus = store.corpus_report(job_id)
        eval_dir = store.job_dir(job_id) / "eval"
        (eval_dir / "report.csv").write_text(report_csv(corpus), encoding="utf-8")
        (eval_dir / "report.html").write_text(report_html(corpus), encoding="utf-8")
        _emit({"job_id": job_id, "pages_scored": len(scored), "report": str(eval_dir / "report.csv")})
    except FrakturError as exc:
        _fail(exc)


@main.command("enrich")
@click.option("--anchor", required=True, type=click.Path(exists=True), help="Anchor dictionary CSV.")
@click.option("--sources", multiple=True, required=True,
              help="Other source CSVs; append :de when headwords are German.")
@click.option("--adjudicate", "use_adjudicator", is_flag=True, default=False,
              help="Let the model adjudicate ambiguous matches.")
@click.option("--map-only", is_flag=True, default=False, help="Skip the model enrichment step.")
@click.option("--threshold", type=float, default=0.75, show_default=True)
@click.option("--batch-size", type=int, default=25, show_default=True)
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--fixtures", type=click.Path(), default=None, help="Mock provider fixture dir.")
@click.option("--out", type=click.Path(), default="enrichment", show_default=True)
@click.option("--triage", "triage_path", type=click.Path(exists=True), default=None,
              help="Triage label CSV to summarize.")
def enrich_cmd(anchor, sources, use_adjudicator, map_only, threshold, batch_size,
               provider, fixtures, out, triage_path) -> None:
    """Map anchor headwords across sources, then enrich with modern forms."""
    try:
        anchor_rows = load_source_rows(Path(anchor), Path(anchor).stem)
        others: dict[str, list] = {}
        order: list[str] = []
        for spec_item in sources:
            path_part, _, lang = spec_item.partition(":")
            source_path = Path(path_part)
            source_id = source_path.stem
            others[source_id] = load_source_rows(source_path, source_id, headword_lang=lang or "et")
            order.append(source_id)

        gateway = None
        if use_adjudicator or not map_only:
            if provider == "mock":
                gateway = Gateway(MockProvider(fixtures_dir=Path(fixtures) if fixtures else None))
            else:
                gateway = Gateway(HttpProvider())

        mapping_rows = []
        for row in anchor_rows:
            candidates = candidate_matches(row, others, threshold)
            mapping_rows.append(
                adjudicate(row, candidates, gateway=gateway if use_adjudicator else None)
            )
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "mapping.csv").write_text(
            mapping_rows_to_csv(mapping_rows, order), encoding="utf-8"
        )
        result = {"mapping": str(out_dir / "mapping.csv"), "rows": len(mapping_rows)}

        if not map_only:
            enriched = enrich_rows(
                mapping_rows,
                gateway,
                params=ModelParams(provider_id=provider),
                batch_size=batch_size,
                checkpoint_path=out_dir / "enrichment.checkpoint.jsonl",
            )
            (out_dir / "enrichment.csv").write_text(
                enrichment_rows_to_csv(enriched), encoding="utf-8"
            )
            result["enrichment"] = str(out_dir / "enrichment.csv")

        if triage_path:
            labels = load_triage_labels(Path(triage_path))
            result["triage"] = triage_stats(labels)
        _emit(result)
    except FrakturError as exc:
        _fail(exc)


@main.command()
@click.argument("job_id")
@click.option("--format", "fmt", type=click.Choice(["csv", "tei"]), default="csv", show_default=True)
@click.pass_context
def export(ctx: click.Context, job_id: str, fmt: str) -> None:
    """Write the unified export across all recognized/approved pages."""
    try:
        store = _store(ctx.obj["jobs_root"])
        path = store.export_unified(job_id, format=fmt)
        _emit({"job_id": job_id, "export": str(path)})
    except FrakturError as exc:
        _fail(exc)


@main.command()
@click.argument("job_id")
@click.pass_context
def report(ctx: click.Context, job_id: str) -> None:
    """Print the corpus report and refresh its CSV/HTML renderings."""
    try:
        store = _store(ctx.obj["jobs_root"])
        corpus = store.corpus_report(job_id)
        eval_dir = store.job_dir(job_id) / "eval"
        eval_dir.mkdir(parents=True, exist_ok=True)
        (eval_dir / "report.csv").write_text(report_csv(corpus), encoding="utf-8")
        (eval_dir / "report.html").write_text(report_html(corpus), encoding="utf-8")
        if corpus.method_comparison:
            (eval_dir / "methods.csv").write_text(methods_csv(corpus), encoding="utf-8")
        _emit(corpus.to_dict())
    except FrakturError as exc:
        _fail(exc)


@main.command()
@click.option("--bind", default="127.0.0.1:8077", show_default=True)
@click.option("--frontend", type=click.Path(), default=None, help="Static UI directory to serve.")
@click.pass_context
def serve(ctx: click.Context, bind: str, frontend: str | None) -> None:
    """Run the review HTTP service."""
    from .server import serve as run_server

    store = _store(ctx.obj["jobs_root"])
    frontend_dir = Path(frontend) if frontend else None
    run_server(store, bind=bind, frontend_dir=frontend_dir)


if __name__ == "__main__":
    main()
