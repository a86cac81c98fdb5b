"""Job orchestration and file-based persistence for multi-page runs.

One directory per job holds the manifest, copied scans, tile images, raw
provider bodies, merged documents, eval reports and exports. The manifest
is rewritten atomically (write-new-then-rename) and every stage writes its
artifacts before the state transition, so a crash at any point is healed by
re-running ``advance``: recognition requests are content-addressed and
replay from the response store instead of charging the provider again.

Page lifecycle::

    pending -> tiled -> recognizing -> merging -> recognized
                                                   -> in_review -> approved
    any stage may park the page in ``failed`` (retryable up to a limit)
"""

from __future__ import annotations

import base64
import datetime as dt
import json
import logging
import shutil
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from . import tei
from .entries import (
    DictionaryEntry,
    EntryProvenance,
    SchemaId,
    csv_to_entries,
    entries_to_csv,
    parse_entry_payload,
    validate_entry,
)
from .errors import (
    AuthError,
    FrakturError,
    IllegalTransition,
    InvalidConfig,
    NothingToExport,
    RefusalDetected,
    SchemaViolation,
    UnknownId,
    UnreadableScan,
)
from .evaluation import CorpusReport, EvalReport, MethodResult, aggregate, score_page
from .gateway import (
    Gateway,
    HttpProvider,
    MockProvider,
    ModelParams,
    PriceTable,
    UsageLedger,
    build_vision_request,
)
from .merge import Fragment, FragmentSet, llm_merge, merge_fragments
from .tiling import PageImage, TilePlan, TilingMode, crop, load_page, plan_tiles

log = logging.getLogger(__name__)

DEFAULT_RETRY_LIMIT = 3


class PageState(Enum):
    PENDING = "pending"
    TILED = "tiled"
    RECOGNIZING = "recognizing"
    MERGING = "merging"
    RECOGNIZED = "recognized"
    IN_REVIEW = "in_review"
    APPROVED = "approved"
    FAILED = "failed"


# States whose artifacts are complete enough to export.
EXPORTABLE = (PageState.RECOGNIZED, PageState.IN_REVIEW, PageState.APPROVED)
TERMINAL = (PageState.APPROVED,)

_STAGES = ("tile", "recognize", "merge")


@dataclass(frozen=True)
class JobConfig:
    schema: SchemaId = SchemaId.NINE_FIELD
    mode: TilingMode = TilingMode.SEGMENTS
    segments_per_column: int = 4
    overlap_fraction: float = 0.25
    gutter_ratio: float = 0.5
    params: ModelParams = field(default_factory=ModelParams)
    duplicate_threshold: float = 0.8
    recognize_prompt: str = ""
    merge_prompt: str = ""
    llm_merge: bool = False
    provider: str = "mock"  # mock | http
    fixtures_dir: str = ""
    prompt_assets_dir: str = ""
    reference_dir: str = ""
    retry_limit: int = DEFAULT_RETRY_LIMIT
    prices: dict = field(default_factory=dict)  # model_id -> [in, out] per 1M tokens

    def resolved_recognize_prompt(self) -> str:
        if self.recognize_prompt:
            return self.recognize_prompt
        return "helle_nine_field" if self.schema is SchemaId.NINE_FIELD else "hupel_tei"

    def resolved_merge_prompt(self) -> str:
        if self.merge_prompt:
            return self.merge_prompt
        return "merge_nine_field" if self.schema is SchemaId.NINE_FIELD else "merge_tei"

    def to_dict(self) -> dict:
        data = asdict(self)
        data["schema"] = self.schema.value
        data["mode"] = self.mode.value
        return data

    @staticmethod
    def from_dict(data: dict) -> "JobConfig":
        known = dict(data)
        params = known.pop("params", {})
        try:
            return JobConfig(
                schema=SchemaId(known.pop("schema", "ninefield")),
                mode=TilingMode(known.pop("mode", "segments")),
                params=ModelParams(**params) if isinstance(params, dict) else params,
                **known,
            )
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad job config: {exc}") from exc


@dataclass
class PageRecord:
    number: int
    source: str  # original scan filename
    file: str  # filename under pages/
    state: PageState = PageState.PENDING
    failed_stage: str = ""
    failed_error: str = ""
    retry_count: int = 0

    @property
    def page_id(self) -> str:
        return f"p{self.number:03d}"

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "source": self.source,
            "file": self.file,
            "state": self.state.value,
            "failed_stage": self.failed_stage,
            "failed_error": self.failed_error,
            "retry_count": self.retry_count,
        }

    @staticmethod
    def from_dict(data: dict) -> "PageRecord":
        return PageRecord(
            number=data["number"],
            source=data["source"],
            file=data["file"],
            state=PageState(data["state"]),
            failed_stage=data.get("failed_stage", ""),
            failed_error=data.get("failed_error", ""),
            retry_count=data.get("retry_count", 0),
        )


@dataclass
class Job:
    job_id: str
    config: JobConfig
    pages: dict[int, PageRecord]
    created_at: str
    updated_at: str

    def page(self, number: int) -> PageRecord:
        try:
            return self.pages[number]
        except KeyError:
            raise UnknownId(f"job {self.job_id} has no page {number}", page=number) from None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "config": self.config.to_dict(),
            "pages": {str(number): record.to_dict() for number, record in self.pages.items()},
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @staticmethod
    def from_dict(data: dict) -> "Job":
        return Job(
            job_id=data["job_id"],
            config=JobConfig.from_dict(data["config"]),
            pages={
                int(number): PageRecord.from_dict(record)
                for number, record in data["pages"].items()
            },
            created_at=data["created_at"],
            updated_at=data["updated_at"],
        )


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


class _StoredTile:
    """Adapter giving the gateway the base64 of an already-saved tile PNG."""

    def __init__(self, png_bytes: bytes) -> None:
        self.b64 = base64.b64encode(png_bytes).decode("ascii")


class JobStore:
    """All jobs under one root directory; one writer per job assumed."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- paths ---------------------------------------------------------------

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def _manifest_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "manifest.json"

    def ledger(self, job_id: str) -> UsageLedger:
        return UsageLedger(self.job_dir(job_id) / "usage.jsonl")

    # -- creation and persistence --------------------------------------------

    def list_jobs(self) -> list[str]:
        return sorted(
            path.name for path in self.root.iterdir() if (path / "manifest.json").is_file()
        )

    def _next_job_id(self) -> str:
        existing = self.list_jobs()
        number = 1
        while f"job-{number:03d}" in existing:
            number += 1
        return f"job-{number:03d}"

    def create_job(
        self, scans: list[str | Path], config: JobConfig, job_id: str | None = None
    ) -> Job:
        """Copy the scans in, validate them, persist all pages as pending."""
        if not scans:
            raise InvalidConfig("a job needs at least one page scan")
        names = [Path(scan).name for scan in scans]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise InvalidConfig(f"duplicate page filenames: {', '.join(duplicates)}")
        job_id = job_id or self._next_job_id()
        if self._manifest_path(job_id).exists():
            raise InvalidConfig(f"job {job_id} already exists", job=job_id)
        job_dir = self.job_dir(job_id)
        for sub in ("pages", "tiles", "raw", "merged", "eval", "exports"):
            (job_dir / sub).mkdir(parents=True, exist_ok=True)
        pages: dict[int, PageRecord] = {}
        for number, scan in enumerate(scans, start=1):
            scan_path = Path(scan)
            if not scan_path.is_file():
                raise UnreadableScan(f"scan {scan_path} does not exist", path=str(scan_path))
            load_page(scan_path)  # validates the raster up front
            target = job_dir / "pages" / f"{number:03d}{scan_path.suffix.lower()}"
            shutil.copyfile(scan_path, target)
            pages[number] = PageRecord(number=number, source=scan_path.name, file=target.name)
        job = Job(
            job_id=job_id,
            config=config,
            pages=pages,
            created_at=_now(),
            updated_at=_now(),
        )
        self.save(job)
        return job

    def save(self, job: Job) -> None:
        job.updated_at = _now()
        path = self._manifest_path(job.job_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(job.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    def load(self, job_id: str) -> Job:
        path = self._manifest_path(job_id)
        if not path.is_file():
            raise UnknownId(f"unknown job {job_id!r}", job=job_id)
        return Job.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def update_model_params(self, job_id: str, params: ModelParams) -> Job:
        """The one post-creation config change allowed: model params for retries."""
        job = self.load(job_id)
        job.config = replace(job.config, params=params)
        self.save(job)
        return job

    # -- gateway ---------------------------------------------------------------

    def gateway_for(self, job: Job, provider=None) -> Gateway:
        """Gateway wired to this job's usage ledger and raw response store.

        Passing ``provider`` (e.g. an audited mock) keeps the store wiring
        while substituting the backend.
        """
        config = job.config
        if provider is None:
            if config.provider == "mock":
                provider = MockProvider(
                    fixtures_dir=Path(config.fixtures_dir) if config.fixtures_dir else None
                )
            elif config.provider == "http":
                provider = HttpProvider()
            else:
                raise InvalidConfig(f"unknown provider {config.provider!r}")
        return Gateway(
            provider,
            ledger=self.ledger(job.job_id),
            response_store=self.job_dir(job.job_id) / "raw",
        )

    # -- stage execution -------------------------------------------------------

    def _page_image(self, job: Job, record: PageRecord) -> PageImage:
        path = self.job_dir(job.job_id) / "pages" / record.file
        return load_page(path, page_id=record.page_id)

    def _plan_path(self, job: Job, record: PageRecord) -> Path:
        return self.job_dir(job.job_id) / "tiles" / f"{record.page_id}.plan.json"

    def _run_tile(self, job: Job, record: PageRecord, gateway: Gateway) -> None:
        page = self._page_image(job, record)
        config = job.config
        plan = plan_tiles(
            page,
            config.mode,
            segments_per_column=config.segments_per_column,
            overlap_fraction=config.overlap_fraction,
            gutter_ratio=config.gutter_ratio,
        )
        tiles_dir = self.job_dir(job.job_id) / "tiles"
        for tile in plan.tiles:
            tile_image = crop(page, tile)
            (tiles_dir / tile_image.file_name).write_bytes(tile_image.png_bytes)
        self._plan_path(job, record).write_text(
            json.dumps(plan.to_dict(), indent=2), encoding="utf-8"
        )

    def load_plan(self, job: Job, record: PageRecord) -> TilePlan:
        path = self._plan_path(job, record)
        if not path.is_file():
            raise IllegalTransition(f"page {record.number} has no tile plan yet")
        return TilePlan.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def _index_path(self, job: Job, record: PageRecord) -> Path:
        return self.job_dir(job.job_id) / "raw" / f"{record.page_id}.index.json"

    def _run_recognize(self, job: Job, record: PageRecord, gateway: Gateway) -> None:
        config = job.config
        plan = self.load_plan(job, record)
        tiles_dir = self.job_dir(job.job_id) / "tiles"
        index: dict[str, str] = {}
        assets = Path(config.prompt_assets_dir) if config.prompt_assets_dir else None
        for tile in plan.tiles:
            png = (tiles_dir / f"{record.page_id}_{tile.name}.png").read_bytes()
            request = build_vision_request(
                _StoredTile(png), config.resolved_recognize_prompt(), config.params, assets
            )
            response = gateway.submit(request)
            if response.usage.outcome == "refusal":
                raise RefusalDetected(
                    f"model declined tile {tile.name}: {response.body[:200]}",
                    tile=tile.name,
                )
            index[tile.name] = request.request_id
        self._index_path(job, record).write_text(
            json.dumps(index, indent=2), encoding="utf-8"
        )

    def _tile_bodies(self, job: Job, record: PageRecord, gateway: Gateway) -> dict[str, str]:
        index_path = self._index_path(job, record)
        if not index_path.is_file():
            raise IllegalTransition(f"page {record.number} has not been recognized yet")
        index = json.loads(index_path.read_text(encoding="utf-8"))
        bodies: dict[str, str] = {}
        raw_dir = self.job_dir(job.job_id) / "raw"
        for tile_name, request_id in index.items():
            stored = json.loads((raw_dir / f"{request_id}.json").read_text(encoding="utf-8"))
            bodies[tile_name] = stored["body"]
        return bodies

    def merged_path(self, job: Job, record: PageRecord, corrected: bool = False) -> Path:
        suffix = "csv" if job.config.schema is SchemaId.NINE_FIELD else "xml"
        stem = f"{record.page_id}.corrected" if corrected else record.page_id
        return self.job_dir(job.job_id) / "merged" / f"{stem}.{suffix}"

    def _run_merge(
        self, job: Job, record: PageRecord, gateway: Gateway, llm_override: bool | None = None
    ) -> None:
        config = job.config
        use_llm = config.llm_merge if llm_override is None else llm_override
        plan = self.load_plan(job, record)
        bodies = self._tile_bodies(job, record, gateway)
        fragments = []
        for tile in plan.tiles:
            body = bodies[tile.name]
            base = EntryProvenance(
                source_id=job.job_id,
                page=record.number,
                column=tile.column_index + 1,
                segment="whole" if config.mode is TilingMode.WHOLE_PAGE else tile.segment_index,
            )
            if config.schema is SchemaId.NINE_FIELD:
                parsed = parse_entry_payload(body, SchemaId.NINE_FIELD, base)
                payload = parsed.entries
            else:
                payload = tei.parse_tei_fragment(body)
            fragments.append(Fragment(tile=tile, payload=payload))
        frag_set = FragmentSet(page_id=record.page_id, plan=plan, fragments=tuple(fragments))

        meta: dict = {"llm_merge": False, "used_fallback": False}
        if use_llm:
            assets = Path(config.prompt_assets_dir) if config.prompt_assets_dir else None
            result = llm_merge(
                frag_set,
                gateway,
                config.resolved_merge_prompt(),
                config.params,
                threshold=config.duplicate_threshold,
                assets_dir=assets,
            )
            payload, decisions = result.payload, list(result.decisions)
            meta = {
                "llm_merge": True,
                "used_fallback": result.used_fallback,
                "fallback_reason": result.fallback_reason,
                "request_id": result.request_id,
            }
        else:
            payload, decisions = merge_fragments(frag_set, config.duplicate_threshold)

        merged_path = self.merged_path(job, record)
        if config.schema is SchemaId.NINE_FIELD:
            entries = payload if isinstance(payload, tuple) else tuple(payload)
            entries = tuple(
                entry.with_provenance(
                    replace(
                        entry.provenance,
                        source_id=job.job_id,
                        page=record.number,
                        order_on_page=order,
                    )
                )
                for order, entry in enumerate(entries)
            )
            merged_path.write_text(entries_to_csv(entries), encoding="utf-8")
        else:
            merged_path.write_text(tei.serialize_tei(payload), encoding="utf-8")
        decisions_path = merged_path.parent / f"{record.page_id}.decisions.jsonl"
        with decisions_path.open("w", encoding="utf-8") as handle:
            for decision in decisions:
                handle.write(json.dumps(decision.to_dict(), ensure_ascii=False) + "\n")
        (merged_path.parent / f"{record.page_id}.merge.json").write_text(
            json.dumps(meta, indent=2), encoding="utf-8"
        )

    def _reference_path(self, job: Job, record: PageRecord) -> Optional[Path]:
        if not job.config.reference_dir:
            return None
        suffix = ".csv" if job.config.schema is SchemaId.NINE_FIELD else ".xml"
        directory = Path(job.config.reference_dir)
        for stem in (Path(record.source).stem, record.page_id, f"{record.number:03d}"):
            candidate = directory / f"{stem}{suffix}"
            if candidate.is_file():
                return candidate
        return None

    def load_page_content(self, job: Job, record: PageRecord, prefer_corrected: bool = True):
        """Merged (or corrected) content of one page in the job's schema."""
        corrected = self.merged_path(job, record, corrected=True)
        path = corrected if prefer_corrected and corrected.is_file() else self.merged_path(job, record)
        if not path.is_file():
            raise IllegalTransition(f"page {record.number} has no merged document yet")
        text = path.read_text(encoding="utf-8")
        if job.config.schema is SchemaId.NINE_FIELD:
            return csv_to_entries(text)
        return tei.parse_tei_fragment(text)

    def _run_eval(self, job: Job, record: PageRecord) -> None:
        reference = self._reference_path(job, record)
        if reference is None:
            return
        report = self.evaluate_page(job, record, reference)
        (self.job_dir(job.job_id) / "eval" / f"{record.page_id}.json").write_text(
            json.dumps(report.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )

    def evaluate_page(self, job: Job, record: PageRecord, reference: Path) -> EvalReport:
        hyp = self.load_page_content(job, record, prefer_corrected=False)
        text = reference.read_text(encoding="utf-8")
        if job.config.schema is SchemaId.NINE_FIELD:
            ref = csv_to_entries(text)
        else:
            ref = tei.parse_tei_fragment(text)
        return score_page(hyp, ref, page_id=record.page_id)

    # -- the state machine -----------------------------------------------------

    def advance(
        self,
        job_id: str,
        page_number: int,
        gateway: Gateway | None = None,
        stop_after: str | None = None,
        llm_merge: bool | None = None,
    ) -> PageState:
        """Run the page through its remaining automatic stages.

        Stops after ``stop_after`` ("tile" | "recognize" | "merge") or at
        ``recognized``; review and approval are human actions. Re-running on
        a finished page is a no-op.
        """
        if stop_after is not None and stop_after not in _STAGES:
            raise InvalidConfig(f"unknown stage {stop_after!r}")
        job = self.load(job_id)
        record = job.page(page_number)
        if record.state in (PageState.RECOGNIZED, PageState.IN_REVIEW, PageState.APPROVED):
            return record.state

        retrying = record.state is PageState.FAILED
        if retrying and record.retry_count >= job.config.retry_limit:
            raise IllegalTransition(
                f"page {page_number} exhausted its {job.config.retry_limit} retries "
                f"(failed at {record.failed_stage}: {record.failed_error})"
            )
        gateway = gateway or self.gateway_for(job)

        stage = self._next_stage(record)
        while stage is not None:
            try:
                self._enter_stage(job, record, stage)
                self._run_stage(job, record, stage, gateway, llm_merge)
            except AuthError:
                # Missing credentials are a configuration problem, not a
                # page failure; leave the page state untouched.
                raise
            except FrakturError as exc:
                if retrying:
                    record.retry_count += 1
                record.state = PageState.FAILED
                record.failed_stage = stage
                record.failed_error = str(exc)
                self.save(job)
                log.warning("page %s failed at %s: %s", page_number, stage, exc)
                return record.state
            self._leave_stage(job, record, stage)
            if record.state is PageState.RECOGNIZED:
                try:
                    self._run_eval(job, record)
                except FrakturError as exc:
                    record.state = PageState.FAILED
                    record.failed_stage = "evaluate"
                    record.failed_error = str(exc)
                    self.save(job)
                    return record.state
            if stage == stop_after:
                break
            stage = self._next_stage(record)
        return record.state

    def _next_stage(self, record: PageRecord) -> str | None:
        if record.state is PageState.FAILED:
            return record.failed_stage if record.failed_stage in _STAGES else "tile"
        return {
            PageState.PENDING: "tile",
            PageState.TILED: "recognize",
            PageState.RECOGNIZING: "recognize",
            PageState.MERGING: "merge",
        }.get(record.state)

    def _enter_stage(self, job: Job, record: PageRecord, stage: str) -> None:
        # Persist the in-progress marker first: a crash mid-stage leaves
        # evidence of where work stopped, and re-running is idempotent.
        if stage == "recognize":
            record.state = PageState.RECOGNIZING
            self.save(job)

    def _run_stage(
        self,
        job: Job,
        record: PageRecord,
        stage: str,
        gateway: Gateway,
        llm_merge: bool | None = None,
    ) -> None:
        if stage == "tile":
            self._run_tile(job, record, gateway)
        elif stage == "recognize":
            self._run_recognize(job, record, gateway)
        elif stage == "merge":
            self._run_merge(job, record, gateway, llm_merge)

    def _leave_stage(self, job: Job, record: PageRecord, stage: str) -> None:
        record.failed_stage = ""
        record.failed_error = ""
        record.state = {
            "tile": PageState.TILED,
            "recognize": PageState.MERGING,
            "merge": PageState.RECOGNIZED,
        }[stage]
        self.save(job)

    # -- review actions ----------------------------------------------------------

    def set_entries(self, job_id: str, page_number: int, entries: list[DictionaryEntry]) -> Job:
        """Replace a page's entry sequence with the editor's correction."""
        job = self.load(job_id)
        record = job.page(page_number)
        if record.state not in (PageState.RECOGNIZED, PageState.IN_REVIEW):
            raise IllegalTransition(
                f"page {page_number} is {record.state.value}; corrections need a recognized page"
            )
        violations = []
        for index, entry in enumerate(entries):
            for violation in validate_entry(entry):
                violations.append(
                    {"entry": index, "field": violation.field, "rule": violation.rule,
                     "message": violation.message}
                )
        if violations:
            raise SchemaViolation("corrected entries are invalid", violations=violations)
        renumbered = tuple(
            entry.with_provenance(
                replace(entry.provenance, page=record.number, order_on_page=index)
            )
            for index, entry in enumerate(entries)
        )
        corrected = self.merged_path(job, record, corrected=True)
        if job.config.schema is SchemaId.NINE_FIELD:
            corrected.write_text(entries_to_csv(renumbered), encoding="utf-8")
        else:
            corrected.write_text(tei.serialize_tei(tei.entries_to_document(renumbered)), encoding="utf-8")
        record.state = PageState.IN_REVIEW
        self.save(job)
        return job

    def set_tei(self, job_id: str, page_number: int, xml: str) -> Job:
        """TEI-flavored correction: the body is a full fragment."""
        job = self.load(job_id)
        record = job.page(page_number)
        if record.state not in (PageState.RECOGNIZED, PageState.IN_REVIEW):
            raise IllegalTransition(
                f"page {page_number} is {record.state.value}; corrections need a recognized page"
            )
        if job.config.schema is not SchemaId.TEI_SUBSET:
            raise InvalidConfig("TEI corrections only apply to TEI jobs")
        document = tei.parse_tei_fragment(xml)
        self.merged_path(job, record, corrected=True).write_text(
            tei.serialize_tei(document), encoding="utf-8"
        )
        record.state = PageState.IN_REVIEW
        self.save(job)
        return job

    def approve(self, job_id: str, page_number: int) -> Job:
        job = self.load(job_id)
        record = job.page(page_number)
        if record.state not in (PageState.RECOGNIZED, PageState.IN_REVIEW):
            raise IllegalTransition(
                f"cannot approve page {page_number} in state {record.state.value}"
            )
        record.state = PageState.APPROVED
        self.save(job)
        return job

    # -- export and report ---------------------------------------------------------

    def export_unified(self, job_id: str, format: str = "csv") -> Path:
        """Single file across all exportable pages, in page order.

        Approved and in-review pages export their corrected content. The
        coverage banner naming excluded pages rides in an XML comment for
        TEI and in a sidecar JSON for CSV (RFC 4180 has no comment syntax).
        """
        if format not in ("csv", "tei"):
            raise InvalidConfig(f"unknown export format {format!r}")
        job = self.load(job_id)
        included: list[PageRecord] = []
        excluded: list[PageRecord] = []
        for number in sorted(job.pages):
            record = job.pages[number]
            (included if record.state in EXPORTABLE else excluded).append(record)
        if not included:
            raise NothingToExport(f"job {job_id} has no recognized or approved pages")

        all_entries: list[DictionaryEntry] = []
        tei_documents: list[tei.TeiDocument] = []
        for record in included:
            content = self.load_page_content(job, record)
            if isinstance(content, tei.TeiDocument):
                tei_documents.append(content)
                if format == "csv":
                    base = EntryProvenance(source_id=job.job_id, page=record.number)
                    all_entries.extend(tei.document_to_entries(content, base).entries)
            else:
                all_entries.extend(content)
                if format == "tei":
                    tei_documents.append(tei.entries_to_document(content))

        exports_dir = self.job_dir(job_id) / "exports"
        coverage = {
            "included": [record.number for record in included],
            "excluded": [
                {"page": record.number, "state": record.state.value} for record in excluded
            ],
        }
        if format == "csv":
            target = exports_dir / "unified.csv"
            target.write_text(entries_to_csv(tuple(all_entries)), encoding="utf-8")
            (exports_dir / "unified.csv.coverage.json").write_text(
                json.dumps(coverage, indent=2), encoding="utf-8"
            )
        else:
            merged_entries = []
            counter = 1
            for document in tei_documents:
                for entry in document.entries:
                    merged_entries.append(replace(entry, entry_id=f"e{counter}"))
                    counter += 1
            xml = tei.serialize_tei(tei.TeiDocument(tuple(merged_entries)))
            banner = (
                f"<!-- pages included: {coverage['included']}; "
                f"excluded: {[item['page'] for item in coverage['excluded']]} -->"
            )
            lines = xml.splitlines()
            xml = "\n".join([lines[0], banner] + lines[1:]) + "\n"
            target = exports_dir / "unified.xml"
            target.write_text(xml, encoding="utf-8")
        return target

    def page_reports(self, job_id: str) -> list[EvalReport]:
        job = self.load(job_id)
        reports = []
        for number in sorted(job.pages):
            record = job.pages[number]
            path = self.job_dir(job_id) / "eval" / f"{record.page_id}.json"
            if path.is_file():
                data = json.loads(path.read_text(encoding="utf-8"))
                reports.append(
                    EvalReport(
                        page_id=data["page_id"],
                        cer_by_field=data["cer_by_field"],
                        structural_similarity=data["structural_similarity"],
                        textual_similarity=data["textual_similarity"],
                        perfect_entries=data["perfect_entries"],
                        total_entries=data["total_entries"],
                    )
                )
        return reports

    def corpus_report(self, job_id: str) -> CorpusReport:
        job = self.load(job_id)
        reports = self.page_reports(job_id)
        prices = PriceTable({model: tuple(rates) for model, rates in job.config.prices.items()}) \
            if job.config.prices else None
        ledger = self.ledger(job_id) if prices else None
        methods_path = self.job_dir(job_id) / "eval" / "methods.json"
        methods = None
        if methods_path.is_file():
            methods = [
                MethodResult(**row) for row in json.loads(methods_path.read_text(encoding="utf-8"))
            ]
        return aggregate(reports, ledger=ledger, prices=prices, methods=methods)
