"""Nine-field dictionary entry model and its JSON/CSV serialization.

An entry is one headword article. The canonical field set is frozen here:
two synonym fields and two multiword-unit fields alongside the headword,
translation equivalent, Latin explanation, part of speech and grammar note.
All values are single-line text; sequence-valued fields are tuples without
empty members or exact duplicates.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import re
import unicodedata
from dataclasses import dataclass, field, fields, replace

from .errors import MalformedPayload, SchemaViolation

# Canonical machine names for the nine content fields, in column order.
FIELD_NAMES = (
    "headword_et",
    "synonyms_et",
    "equivalent_de",
    "synonyms_de",
    "explanation_la",
    "part_of_speech",
    "grammar_info",
    "mwe_et",
    "mwe_de",
)

SEQUENCE_FIELDS = frozenset({"synonyms_et", "synonyms_de", "mwe_et", "mwe_de"})

PROVENANCE_COLUMNS = ("source_id", "page", "column", "segment", "order_on_page")

# Cell-level join token for sequence fields; the sources use commas inside
# glosses, so a comma join would be ambiguous.
JOIN_TOKEN = "; "

WHOLE_PAGE = "whole"


class SchemaId(enum.Enum):
    """Names the wire schema of a recognition payload."""

    NINE_FIELD = "ninefield"
    TEI_SUBSET = "tei"


@dataclass(frozen=True)
class EntryProvenance:
    """Where on the scanned source an entry was recognized."""

    source_id: str = ""
    page: int = 1
    column: int = 1
    segment: int | str = WHOLE_PAGE
    order_on_page: int = 0

    def key(self) -> tuple:
        return (self.page, self.column, self.segment, self.order_on_page)


@dataclass(frozen=True)
class DictionaryEntry:
    """One headword article with the nine content fields plus provenance."""

    headword_et: str
    synonyms_et: tuple[str, ...] = ()
    equivalent_de: str = ""
    synonyms_de: tuple[str, ...] = ()
    explanation_la: str = ""
    part_of_speech: str = ""
    grammar_info: str = ""
    mwe_et: tuple[str, ...] = ()
    mwe_de: tuple[str, ...] = ()
    provenance: EntryProvenance = field(default_factory=EntryProvenance)

    def cell(self, name: str) -> str:
        """Text form of one field as it appears in a CSV cell."""
        value = getattr(self, name)
        if name in SEQUENCE_FIELDS:
            return JOIN_TOKEN.join(value)
        return value

    def content_cells(self) -> tuple[str, ...]:
        return tuple(self.cell(name) for name in FIELD_NAMES)

    def content_text(self) -> str:
        """All nine fields flattened to one comparison string."""
        return "\n".join(self.content_cells())

    def content_equals(self, other: "DictionaryEntry") -> bool:
        """Byte-equality of the nine content fields, provenance ignored."""
        return self.content_cells() == other.content_cells()

    def with_provenance(self, provenance: EntryProvenance) -> "DictionaryEntry":
        return replace(self, provenance=provenance)

    def to_dict(self) -> dict:
        data: dict = {}
        for name in FIELD_NAMES:
            value = getattr(self, name)
            data[name] = list(value) if name in SEQUENCE_FIELDS else value
        prov = self.provenance
        data["provenance"] = {
            "source_id": prov.source_id,
            "page": prov.page,
            "column": prov.column,
            "segment": prov.segment,
            "order_on_page": prov.order_on_page,
        }
        return data

    @staticmethod
    def from_dict(data: dict) -> "DictionaryEntry":
        values: dict[str, object] = {}
        for name in FIELD_NAMES:
            raw = data.get(name)
            if name in SEQUENCE_FIELDS:
                values[name] = tuple(raw) if raw else ()
            else:
                values[name] = raw or ""
        prov = data.get("provenance") or {}
        return DictionaryEntry(
            provenance=EntryProvenance(
                source_id=prov.get("source_id", ""),
                page=prov.get("page", 1),
                column=prov.get("column", 1),
                segment=prov.get("segment", WHOLE_PAGE),
                order_on_page=prov.get("order_on_page", 0),
            ),
            **values,  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class Violation:
    """One breached entry invariant."""

    field: str
    rule: str
    message: str


@dataclass(frozen=True)
class ParsedEntries:
    """Parse result: entries in document order plus non-fatal warnings."""

    entries: tuple[DictionaryEntry, ...]
    warnings: tuple[str, ...] = ()


_CONTROL_RE = re.compile(r"[\x00-\x1f\x7f]")
_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*\n(.*)\n\s*```\s*$", re.DOTALL)


def validate_entry(entry: DictionaryEntry) -> list[Violation]:
    """Check every entry invariant; empty result means the entry is valid."""
    violations: list[Violation] = []
    if not entry.headword_et.strip():
        violations.append(Violation("headword_et", "non_empty", "headword is empty"))
    for name in FIELD_NAMES:
        value = getattr(entry, name)
        items = value if name in SEQUENCE_FIELDS else (value,)
        for item in items:
            if _CONTROL_RE.search(item):
                violations.append(
                    Violation(name, "single_line", f"{name} contains a control character")
                )
                break
    for name in sorted(SEQUENCE_FIELDS):
        seq = getattr(entry, name)
        if any(not member.strip() for member in seq):
            violations.append(Violation(name, "no_empty_members", f"{name} has an empty member"))
        if len(set(seq)) != len(seq):
            violations.append(Violation(name, "no_duplicates", f"{name} has a duplicate member"))
    prov = entry.provenance
    if prov.page < 1:
        violations.append(Violation("provenance", "page_positive", "page must be >= 1"))
    if prov.column not in (1, 2):
        violations.append(Violation("provenance", "column_range", "column must be 1 or 2"))
    if isinstance(prov.segment, int):
        if prov.segment < 0:
            violations.append(Violation("provenance", "segment_range", "segment must be >= 0"))
    elif prov.segment != WHOLE_PAGE:
        violations.append(Violation("provenance", "segment_range", "segment must be an index or 'whole'"))
    if prov.order_on_page < 0:
        violations.append(Violation("provenance", "order_range", "order_on_page must be >= 0"))
    return violations


def strip_code_fence(raw: str) -> str:
    """Unwrap a single fenced code block; model replies often add one."""
    match = _FENCE_RE.match(raw)
    if match:
        return match.group(1)
    return raw


def _clean_text(value: object, where: str, warnings: list[str]) -> str:
    if not isinstance(value, str):
        warnings.append(f"{where}: coerced non-text value {value!r} to text")
        value = "" if value is None else str(value)
    value = unicodedata.normalize("NFC", value)
    if _CONTROL_RE.search(value):
        warnings.append(f"{where}: replaced control characters")
        value = _CONTROL_RE.sub(" ", value)
    return value.strip()


def _clean_sequence(value: object, where: str, warnings: list[str]) -> tuple[str, ...]:
    if isinstance(value, str):
        raw_members = value.split(JOIN_TOKEN) if value else []
    elif isinstance(value, (list, tuple)):
        raw_members = list(value)
    elif value is None:
        raw_members = []
    else:
        warnings.append(f"{where}: expected a list, got {type(value).__name__}")
        raw_members = [value]
    members: list[str] = []
    for member in raw_members:
        cleaned = _clean_text(member, where, warnings)
        if not cleaned:
            warnings.append(f"{where}: dropped empty member")
            continue
        if cleaned in members:
            warnings.append(f"{where}: dropped duplicate member {cleaned!r}")
            continue
        members.append(cleaned)
    return tuple(members)


def entry_from_mapping(
    obj: dict,
    index: int,
    provenance: EntryProvenance,
    warnings: list[str],
) -> DictionaryEntry:
    """Build one validated entry from a parsed JSON object."""
    where = f"entry {index}"
    for key in obj:
        if key not in FIELD_NAMES:
            warnings.append(f"{where}: unknown key {key!r} ignored")
    values: dict[str, object] = {}
    for name in FIELD_NAMES:
        raw_value = obj.get(name)
        if name in SEQUENCE_FIELDS:
            values[name] = _clean_sequence(raw_value, f"{where}.{name}", warnings)
        else:
            values[name] = _clean_text(raw_value, f"{where}.{name}", warnings) if raw_value is not None else ""
    if not str(values["headword_et"]).strip():
        raise SchemaViolation(f"{where}: required headword_et is missing or empty", index=index)
    return DictionaryEntry(provenance=provenance, **values)  # type: ignore[arg-type]


def parse_entry_payload(
    raw: str,
    schema: SchemaId = SchemaId.NINE_FIELD,
    provenance: EntryProvenance | None = None,
) -> ParsedEntries:
    """Parse a model reply body into entries.

    The nine-field schema expects a JSON array of flat objects, optionally
    wrapped in one fenced code block. The TEI schema expects a fragment in
    the frozen TEI subset, converted field-by-field. Missing optional fields
    become empty; unknown keys are warnings, not errors.
    """
    base = provenance or EntryProvenance()
    if schema is SchemaId.TEI_SUBSET:
        from . import tei

        doc = tei.parse_tei_fragment(raw)
        return tei.document_to_entries(doc, base)

    body = strip_code_fence(raw)
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedPayload(
            f"payload is not valid JSON: {exc.msg}", offset=exc.pos
        ) from exc
    if not isinstance(data, list):
        raise MalformedPayload(
            f"expected a JSON array of entry objects, got {type(data).__name__}", offset=0
        )
    warnings: list[str] = []
    entries: list[DictionaryEntry] = []
    for index, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise MalformedPayload(f"entry {index} is not an object", index=index)
        prov = replace(base, order_on_page=base.order_on_page + index)
        entries.append(entry_from_mapping(obj, index, prov, warnings))
    return ParsedEntries(tuple(entries), tuple(warnings))


def entries_to_csv(entries: list[DictionaryEntry] | tuple[DictionaryEntry, ...]) -> str:
    """Serialize entries to RFC 4180 CSV with a mandatory header row."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(FIELD_NAMES + PROVENANCE_COLUMNS)
    for entry in entries:
        prov = entry.provenance
        writer.writerow(
            entry.content_cells()
            + (prov.source_id, prov.page, prov.column, prov.segment, prov.order_on_page)
        )
    return buffer.getvalue()


def csv_to_entries(text: str) -> tuple[DictionaryEntry, ...]:
    """Inverse of :func:`entries_to_csv` for values free of the join token."""
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise MalformedPayload("CSV is empty; header row is mandatory", offset=0)
    header = tuple(rows[0])
    expected = FIELD_NAMES + PROVENANCE_COLUMNS
    if header != expected:
        raise SchemaViolation(
            f"CSV header {header!r} does not match the canonical column set",
            expected=list(expected),
        )
    entries: list[DictionaryEntry] = []
    for row_index, row in enumerate(rows[1:]):
        if not row:
            continue
        record = dict(zip(header, row))
        values: dict[str, object] = {}
        for name in FIELD_NAMES:
            cell = record.get(name, "")
            if name in SEQUENCE_FIELDS:
                values[name] = tuple(part for part in cell.split(JOIN_TOKEN) if part) if cell else ()
            else:
                values[name] = cell
        segment_cell = record.get("segment", WHOLE_PAGE)
        segment: int | str = int(segment_cell) if segment_cell.isdigit() else segment_cell
        prov = EntryProvenance(
            source_id=record.get("source_id", ""),
            page=int(record.get("page", "1") or 1),
            column=int(record.get("column", "1") or 1),
            segment=segment,
            order_on_page=int(record.get("order_on_page", "0") or row_index),
        )
        if not values["headword_et"]:
            raise SchemaViolation(f"row {row_index + 1}: empty headword", index=row_index)
        entries.append(DictionaryEntry(provenance=prov, **values))  # type: ignore[arg-type]
    return tuple(entries)
