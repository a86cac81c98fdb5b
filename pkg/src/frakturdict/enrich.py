"""Cross-source headword mapping, model-driven enrichment, triage stats.

Matching runs on normalized keys rather than raw forms: 17th/18th-century
Estonian spelling varies too much for byte equality, and every source in
the corpus shares German glosses, which gives a reliable pivot. The model
is an optional adjudicator on top of the deterministic pass, never the
first filter.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .entries import strip_code_fence
from .errors import EmptyInput, FrakturError, InvalidConfig
from .gateway import Gateway, ModelParams, build_text_request
from .metrics import ro_ratio

log = logging.getLogger(__name__)

DEFAULT_MATCH_THRESHOLD = 0.75
DEFAULT_BATCH_SIZE = 25

PARSE_FAILED = "PARSE-FAILED"

GERMAN_ARTICLES = ("der", "die", "das")

EXTRA_COLUMNS = ("modernized", "example", "example_translation")


class TriageLabel(enum.Enum):
    CORRECT = "correct"
    MINOR_EDIT = "minor_edit"
    FULL_REVISION = "full_revision"


@dataclass(frozen=True)
class SourceRow:
    """One row of a source dictionary CSV."""

    source_id: str
    headword: str
    equivalent: str
    extra: dict[str, str] = field(default_factory=dict)
    headword_lang: str = "et"  # "et" or "de"

    def __post_init__(self) -> None:
        if not self.headword.strip():
            raise ValueError("headword must be non-empty")

    @property
    def et_text(self) -> str:
        return self.headword if self.headword_lang == "et" else self.equivalent

    @property
    def de_text(self) -> str:
        return self.equivalent if self.headword_lang == "et" else self.headword


@dataclass(frozen=True)
class Candidate:
    row: SourceRow
    status: str  # exact | fuzzy
    ratio: float
    side: str  # et | de


@dataclass(frozen=True)
class MatchCell:
    headword: str = ""
    modernized: str = ""
    equivalent: str = ""
    example: str = ""
    example_translation: str = ""
    status: str = "none"  # exact | fuzzy | llm | none


@dataclass(frozen=True)
class MappingRow:
    anchor_headword: str
    anchor_equivalent: str
    matches: dict[str, MatchCell] = field(default_factory=dict)

    def status(self, source_id: str) -> str:
        cell = self.matches.get(source_id)
        return cell.status if cell else "none"


@dataclass(frozen=True)
class EnrichmentRow:
    old_et: str
    modern_et: str
    old_de: str
    modern_de: str
    comment: str

    def __post_init__(self) -> None:
        if not self.old_et.strip() or not self.old_de.strip():
            raise ValueError("historical forms must be non-empty")


_RUN_RE = re.compile(r"(.)\1+")


def normalize_form(word: str, lang: str) -> str:
    """Matching key for one form; never shown to users as a word form.

    Lowercase, NFC, diacritics folded; German drops leading articles;
    Estonian folds w to v and collapses doubled letters, both induced from
    the orthography drift between the sources.
    """
    key = unicodedata.normalize("NFC", word.strip().lower())
    if lang == "de":
        words = key.split()
        while len(words) > 1 and words[0] in GERMAN_ARTICLES:
            words = words[1:]
        key = " ".join(words)
    else:
        key = " ".join(key.split())
    key = "".join(
        char for char in unicodedata.normalize("NFD", key) if not unicodedata.combining(char)
    )
    if lang == "et":
        key = key.replace("w", "v")
        key = _RUN_RE.sub(r"\1", key)
    return key


def candidate_matches(
    anchor: SourceRow,
    others: dict[str, list[SourceRow]],
    threshold: float = DEFAULT_MATCH_THRESHOLD,
) -> dict[str, list[Candidate]]:
    """Per-source candidate lists via Estonian keys or the German pivot.

    Exact key equality ranks above fuzzy similarity; within a rank, higher
    ratio first, then source order.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be within [0, 1]")
    anchor_et = normalize_form(anchor.et_text, "et") if anchor.et_text else ""
    anchor_de = normalize_form(anchor.de_text, "de") if anchor.de_text else ""
    results: dict[str, list[Candidate]] = {}
    for source_id, rows in others.items():
        candidates: list[tuple[int, Candidate]] = []
        for order, row in enumerate(rows):
            row_et = normalize_form(row.et_text, "et") if row.et_text else ""
            row_de = normalize_form(row.de_text, "de") if row.de_text else ""
            best: Candidate | None = None
            for side, anchor_key, row_key in (("et", anchor_et, row_et), ("de", anchor_de, row_de)):
                if not anchor_key or not row_key:
                    continue
                if anchor_key == row_key:
                    best = Candidate(row, "exact", 1.0, side)
                    break
                ratio = ro_ratio(anchor_key, row_key)
                if ratio >= threshold and (best is None or ratio > best.ratio):
                    best = Candidate(row, "fuzzy", ratio, side)
            if best is not None:
                candidates.append((order, best))
        candidates.sort(key=lambda item: (item[1].status != "exact", -item[1].ratio, item[0]))
        results[source_id] = [candidate for _, candidate in candidates]
    return results


def _cell_from(candidate: Candidate, status: str | None = None) -> MatchCell:
    row = candidate.row
    return MatchCell(
        headword=row.headword,
        modernized=row.extra.get("modernized", ""),
        equivalent=row.equivalent,
        example=row.extra.get("example", ""),
        example_translation=row.extra.get("example_translation", ""),
        status=status or candidate.status,
    )


def _candidate_context(candidate: Candidate) -> dict:
    row = candidate.row
    return {
        "headword": row.headword,
        "equivalent": row.equivalent,
        **{key: value for key, value in row.extra.items() if value},
    }


def adjudicate(
    anchor: SourceRow,
    candidates: dict[str, list[Candidate]],
    gateway: Gateway | None = None,
    params: ModelParams | None = None,
    assets_dir: Path | None = None,
) -> MappingRow:
    """Pick one candidate per source.

    Ambiguous sets (two or more candidates, or fuzzy-only) go to the model
    when a gateway is supplied; any model failure degrades to the
    deterministic choice with a warning. Deterministic choice: highest
    ratio, exact before fuzzy, then source order.
    """
    matches: dict[str, MatchCell] = {}
    for source_id, source_candidates in candidates.items():
        if not source_candidates:
            matches[source_id] = MatchCell(status="none")
            continue
        ambiguous = len(source_candidates) >= 2 or all(
            candidate.status == "fuzzy" for candidate in source_candidates
        )
        chosen = source_candidates[0]
        status = None
        if gateway is not None and ambiguous:
            try:
                choice = _ask_model(anchor, source_candidates, gateway, params, assets_dir)
            except FrakturError as exc:
                log.warning("adjudication degraded to deterministic pick: %s", exc)
                choice = None
            if choice is not None:
                chosen = source_candidates[choice]
                status = "llm"
        matches[source_id] = _cell_from(chosen, status)
    return MappingRow(
        anchor_headword=anchor.headword,
        anchor_equivalent=anchor.equivalent,
        matches=matches,
    )


def _ask_model(
    anchor: SourceRow,
    candidates: list[Candidate],
    gateway: Gateway,
    params: ModelParams | None,
    assets_dir: Path | None,
) -> int | None:
    body = json.dumps(
        {
            "anchor": {"headword": anchor.headword, "equivalent": anchor.equivalent},
            "candidates": [
                {"number": index, **_candidate_context(candidate)}
                for index, candidate in enumerate(candidates, start=1)
            ],
        },
        ensure_ascii=False,
        indent=2,
    )
    request = build_text_request(body, "adjudicate_match", params or ModelParams(), assets_dir)
    response = gateway.submit(request)
    if response.usage.outcome != "ok":
        return None
    try:
        reply = json.loads(strip_code_fence(response.body))
        choice = reply.get("choice")
    except (json.JSONDecodeError, AttributeError):
        return None
    if choice is None:
        return None
    if isinstance(choice, int) and 1 <= choice <= len(candidates):
        return choice - 1
    return None


def _parse_enrichment_item(item: object, old_et: str, old_de: str) -> EnrichmentRow:
    if not isinstance(item, dict):
        return EnrichmentRow(old_et, "", old_de, "", PARSE_FAILED)
    modern_et = item.get("modern_et")
    modern_de = item.get("modern_de")
    comment = item.get("comment")
    if not isinstance(modern_et, str) or not isinstance(modern_de, str):
        return EnrichmentRow(old_et, "", old_de, "", PARSE_FAILED)
    return EnrichmentRow(
        old_et=old_et,
        modern_et=modern_et.strip(),
        old_de=old_de,
        modern_de=modern_de.strip(),
        comment=comment.strip() if isinstance(comment, str) else "",
    )


def enrich(
    rows: list[MappingRow],
    gateway: Gateway,
    params: ModelParams | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    checkpoint_path: Path | None = None,
    assets_dir: Path | None = None,
) -> list[EnrichmentRow]:
    """One enrichment row per mapping row, order preserved.

    Rows the model reply does not cover parse as PARSE-FAILED instead of
    stopping the run; gateway failures re-raise after checkpointing the
    batches already done, so a rerun resumes instead of re-spending.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    done: dict[int, EnrichmentRow] = {}
    if checkpoint_path and Path(checkpoint_path).exists():
        for line in Path(checkpoint_path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                data = json.loads(line)
                done[data["index"]] = EnrichmentRow(
                    data["old_et"], data["modern_et"], data["old_de"], data["modern_de"],
                    data["comment"],
                )

    results: dict[int, EnrichmentRow] = dict(done)
    for start in range(0, len(rows), batch_size):
        batch = list(enumerate(rows))[start : start + batch_size]
        pending = [(index, row) for index, row in batch if index not in results]
        if not pending:
            continue
        body = json.dumps(
            [
                {
                    "old_et": row.anchor_headword,
                    "old_de": row.anchor_equivalent,
                    "context": {
                        source_id: _match_context(cell)
                        for source_id, cell in row.matches.items()
                        if cell.status != "none"
                    },
                }
                for _, row in pending
            ],
            ensure_ascii=False,
            indent=2,
        )
        request = build_text_request(body, "enrich_rows", params or ModelParams(), assets_dir)
        response = gateway.submit(request)  # gateway errors propagate; checkpoint holds
        items: list[object]
        try:
            parsed = json.loads(strip_code_fence(response.body))
            items = parsed if isinstance(parsed, list) else []
        except json.JSONDecodeError:
            items = []
        for position, (index, row) in enumerate(pending):
            item = items[position] if position < len(items) else None
            enriched = _parse_enrichment_item(item, row.anchor_headword, row.anchor_equivalent)
            results[index] = enriched
            if checkpoint_path:
                _append_checkpoint(Path(checkpoint_path), index, enriched)
    return [results[index] for index in range(len(rows))]


def _match_context(cell: MatchCell) -> dict:
    return {
        key: value
        for key, value in (
            ("headword", cell.headword),
            ("modernized", cell.modernized),
            ("equivalent", cell.equivalent),
            ("example", cell.example),
            ("example_translation", cell.example_translation),
        )
        if value
    }


def _append_checkpoint(path: Path, index: int, row: EnrichmentRow) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "index": index,
        "old_et": row.old_et,
        "modern_et": row.modern_et,
        "old_de": row.old_de,
        "modern_de": row.modern_de,
        "comment": row.comment,
    }
    with path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def triage_stats(labels: list[TriageLabel]) -> dict[str, float]:
    """Percentages to one decimal; they sum to 100 up to rounding."""
    if not labels:
        raise EmptyInput("no triage labels to summarize")
    total = len(labels)

    def percent(count: int) -> float:
        value = (Decimal(count) * 100 / Decimal(total)).quantize(
            Decimal("0.1"), rounding=ROUND_HALF_UP
        )
        return float(value)

    return {
        "correct": percent(sum(1 for label in labels if label is TriageLabel.CORRECT)),
        "minor_edit": percent(sum(1 for label in labels if label is TriageLabel.MINOR_EDIT)),
        "full_revision": percent(sum(1 for label in labels if label is TriageLabel.FULL_REVISION)),
    }


# --- CSV I/O -----------------------------------------------------------------

def load_source_rows(
    path: Path,
    source_id: str,
    headword_lang: str = "et",
    columns: dict[str, str] | None = None,
) -> list[SourceRow]:
    """Read one source dictionary CSV.

    ``columns`` maps canonical names (headword, equivalent, modernized,
    example, example_translation) onto the file's actual header names;
    canonical headers are assumed when omitted.
    """
    mapping = {name: name for name in ("headword", "equivalent") + EXTRA_COLUMNS}
    mapping.update(columns or {})
    rows: list[SourceRow] = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or mapping["headword"] not in reader.fieldnames:
            raise InvalidConfig(
                f"{path}: missing headword column {mapping['headword']!r}", path=str(path)
            )
        for record in reader:
            headword = (record.get(mapping["headword"]) or "").strip()
            if not headword:
                continue
            rows.append(
                SourceRow(
                    source_id=source_id,
                    headword=headword,
                    equivalent=(record.get(mapping["equivalent"]) or "").strip(),
                    extra={
                        name: (record.get(mapping[name]) or "").strip()
                        for name in EXTRA_COLUMNS
                        if record.get(mapping[name])
                    },
                    headword_lang=headword_lang,
                )
            )
    return rows


def mapping_rows_to_csv(rows: list[MappingRow], source_order: list[str]) -> str:
    """Mapping table in the anchor-plus-per-source column layout."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    header = ["anchor_headword", "anchor_equivalent"]
    for source_id in source_order:
        header += [
            f"{source_id}_headword",
            f"{source_id}_modernized",
            f"{source_id}_equivalent",
            f"{source_id}_example",
            f"{source_id}_example_translation",
            f"{source_id}_status",
        ]
    writer.writerow(header)
    for row in rows:
        record = [row.anchor_headword, row.anchor_equivalent]
        for source_id in source_order:
            cell = row.matches.get(source_id, MatchCell())
            record += [
                cell.headword,
                cell.modernized,
                cell.equivalent,
                cell.example,
                cell.example_translation,
                cell.status,
            ]
        writer.writerow(record)
    return buffer.getvalue()


def enrichment_rows_to_csv(rows: list[EnrichmentRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(["old_et", "modern_et", "old_de", "modern_de", "comment"])
    for row in rows:
        writer.writerow([row.old_et, row.modern_et, row.old_de, row.modern_de, row.comment])
    return buffer.getvalue()


_LABEL_ALIASES = {
    "correct": TriageLabel.CORRECT,
    "minor_edit": TriageLabel.MINOR_EDIT,
    "minor": TriageLabel.MINOR_EDIT,
    "full_revision": TriageLabel.FULL_REVISION,
    "revision": TriageLabel.FULL_REVISION,
}


def load_triage_labels(path: Path) -> list[TriageLabel]:
    """Import labels from a CSV with a ``label`` column."""
    labels: list[TriageLabel] = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "label" not in reader.fieldnames:
            raise InvalidConfig(f"{path}: missing 'label' column", path=str(path))
        for line_number, record in enumerate(reader, start=2):
            raw = (record.get("label") or "").strip().lower()
            if raw not in _LABEL_ALIASES:
                raise InvalidConfig(
                    f"{path}:{line_number}: unknown triage label {raw!r}", path=str(path)
                )
            labels.append(_LABEL_ALIASES[raw])
    return labels
