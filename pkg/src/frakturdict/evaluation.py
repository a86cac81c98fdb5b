"""Accuracy reports: per-field CER, structural/textual similarity, rollups.

Entries are aligned by order index, not by headword, so a misplaced but
correctly recognized entry inflates CER; the order-insensitive similarity
pair next to it is what separates recognition errors from placement errors
in the report.
"""

from __future__ import annotations

import io
import csv
import html
import statistics
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence, Union

from . import tei
from .entries import FIELD_NAMES, DictionaryEntry
from .errors import SchemaMismatch
from .gateway import PriceTable, UsageLedger, estimate_cost
from .metrics import cer, ro_ratio
from .tei import TeiDocument

PageContent = Union[TeiDocument, Sequence[DictionaryEntry]]

TEI_FIELDS = ("orth", "pos", "gram", "quote", "usg", "xr")


def structure_sequence(content: PageContent) -> tuple[str, ...]:
    """Markup-shape tokens, depth-first, attributes sorted by name."""
    if isinstance(content, TeiDocument):
        return tei.structure_tokens(content)
    tokens = ["entries"]
    for entry in content:
        tokens.append("entry")
        tokens.extend(name for name in FIELD_NAMES if entry.cell(name))
    return tuple(tokens)


def content_sequence(content: PageContent) -> tuple[str, ...]:
    """Text characters in document order, whitespace-only nodes dropped."""
    if isinstance(content, TeiDocument):
        return tuple("".join(tei.text_nodes(content)))
    cells = [entry.cell(name) for entry in content for name in FIELD_NAMES]
    return tuple("".join(cell.strip() for cell in cells if cell.strip()))


def _tei_fields(entry: tei.TeiEntry) -> dict[str, str]:
    joined = "; "
    return {
        "orth": entry.orth,
        "pos": entry.pos,
        "gram": entry.gram,
        "quote": joined.join(sense.quote for sense in entry.senses if sense.quote),
        "usg": joined.join(sense.usg for sense in entry.senses if sense.usg),
        "xr": joined.join(sense.xr for sense in entry.senses if sense.xr),
    }


def _field_rows(content: PageContent) -> tuple[tuple[str, ...], list[dict[str, str]]]:
    if isinstance(content, TeiDocument):
        return TEI_FIELDS, [_tei_fields(entry) for entry in content.entries]
    rows = [{name: entry.cell(name) for name in FIELD_NAMES} for entry in content]
    return FIELD_NAMES, rows


def _entries_equal(a, b) -> bool:
    if isinstance(a, tei.TeiEntry):
        return (a.orth, a.pos, a.gram, a.senses) == (b.orth, b.pos, b.gram, b.senses)
    return a.content_equals(b)


@dataclass(frozen=True)
class EvalReport:
    page_id: str
    cer_by_field: dict[str, float]
    structural_similarity: float
    textual_similarity: float
    perfect_entries: int
    total_entries: int

    @property
    def perfect_rate(self) -> float:
        return self.perfect_entries / self.total_entries if self.total_entries else 1.0

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "cer_by_field": self.cer_by_field,
            "structural_similarity": self.structural_similarity,
            "textual_similarity": self.textual_similarity,
            "perfect_entries": self.perfect_entries,
            "total_entries": self.total_entries,
            "perfect_rate": self.perfect_rate,
        }


def score_page(hyp: PageContent, ref: PageContent, page_id: str = "") -> EvalReport:
    """Score one recognized page against its reference.

    Per-field CER runs over the concatenation of that field across entries
    aligned by position; fields empty in the reference are omitted (CER is
    undefined there). A perfect entry matches the reference byte for byte.
    """
    hyp_is_tei = isinstance(hyp, TeiDocument)
    if hyp_is_tei != isinstance(ref, TeiDocument):
        raise SchemaMismatch("hypothesis and reference use different schemas")
    fields, hyp_rows = _field_rows(hyp)
    _, ref_rows = _field_rows(ref)

    cer_by_field: dict[str, float] = {}
    count = max(len(hyp_rows), len(ref_rows))
    for name in fields:
        ref_concat = "".join(row[name] for row in ref_rows)
        if not ref_concat:
            continue
        hyp_concat = "".join(row[name] for row in hyp_rows)
        cer_by_field[name] = cer(hyp_concat, ref_concat)

    hyp_entries = hyp.entries if hyp_is_tei else tuple(hyp)
    ref_entries = ref.entries if hyp_is_tei else tuple(ref)
    perfect = sum(
        1
        for hyp_entry, ref_entry in zip(hyp_entries, ref_entries)
        if _entries_equal(hyp_entry, ref_entry)
    )
    return EvalReport(
        page_id=page_id,
        cer_by_field=cer_by_field,
        structural_similarity=ro_ratio(structure_sequence(hyp), structure_sequence(ref)),
        textual_similarity=ro_ratio(content_sequence(hyp), content_sequence(ref)),
        perfect_entries=perfect,
        total_entries=count,
    )


@dataclass(frozen=True)
class MethodResult:
    """Raw numbers for one preprocessing method, baseline first."""

    method: str
    structural: float
    textual: float
    cost: float
    input_tokens: int


def _delta(value, baseline, decimals: int) -> str:
    ratio = (Decimal(str(value)) / Decimal(str(baseline)) - 1) * 100
    quantum = Decimal("1") if decimals == 0 else Decimal("0.1")
    rounded = ratio.quantize(quantum, rounding=ROUND_HALF_UP)
    sign = "+" if rounded > 0 else ""
    return f"{sign}{rounded}%"


@dataclass(frozen=True)
class MethodRow:
    method: str
    structural: float
    textual: float
    cost: float
    input_tokens: int
    structural_delta: str = ""
    textual_delta: str = ""
    cost_delta: str = ""
    tokens_delta: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "structural": self.structural,
            "structural_delta": self.structural_delta,
            "textual": self.textual,
            "textual_delta": self.textual_delta,
            "cost": self.cost,
            "cost_delta": self.cost_delta,
            "input_tokens": self.input_tokens,
            "tokens_delta": self.tokens_delta,
        }


def compare_methods(methods: Sequence[MethodResult]) -> list[MethodRow]:
    """Method table with percent deltas against the first (baseline) row.

    Similarity deltas render to one decimal, cost and token deltas to whole
    percent.
    """
    if not methods:
        return []
    baseline = methods[0]
    rows = [
        MethodRow(
            baseline.method, baseline.structural, baseline.textual, baseline.cost,
            baseline.input_tokens,
        )
    ]
    for method in methods[1:]:
        rows.append(
            MethodRow(
                method=method.method,
                structural=method.structural,
                textual=method.textual,
                cost=method.cost,
                input_tokens=method.input_tokens,
                structural_delta=_delta(method.structural, baseline.structural, 1),
                textual_delta=_delta(method.textual, baseline.textual, 1),
                cost_delta=_delta(method.cost, baseline.cost, 0),
                tokens_delta=_delta(method.input_tokens, baseline.input_tokens, 0),
            )
        )
    return rows


@dataclass(frozen=True)
class CorpusReport:
    pages: tuple[EvalReport, ...]
    mean_cer_by_field: dict[str, float]
    perfect_entries: int
    total_entries: int
    method_comparison: tuple[MethodRow, ...] = ()
    total_cost: str = ""

    @property
    def perfect_rate(self) -> float:
        return self.perfect_entries / self.total_entries if self.total_entries else 1.0

    def to_dict(self) -> dict:
        return {
            "pages": [page.to_dict() for page in self.pages],
            "mean_cer_by_field": self.mean_cer_by_field,
            "perfect_entries": self.perfect_entries,
            "total_entries": self.total_entries,
            "perfect_rate": self.perfect_rate,
            "method_comparison": [row.to_dict() for row in self.method_comparison],
            "total_cost": self.total_cost,
        }


def aggregate(
    reports: Sequence[EvalReport],
    ledger: UsageLedger | None = None,
    prices: PriceTable | None = None,
    methods: Sequence[MethodResult] | None = None,
) -> CorpusReport:
    """Roll per-page reports into corpus means plus the method table."""
    fields = sorted({name for report in reports for name in report.cer_by_field})
    mean_cer = {
        name: statistics.fmean(
            report.cer_by_field[name] for report in reports if name in report.cer_by_field
        )
        for name in fields
    }
    total_cost = ""
    if ledger is not None and prices is not None:
        total_cost = str(estimate_cost(ledger, prices))
    return CorpusReport(
        pages=tuple(reports),
        mean_cer_by_field=mean_cer,
        perfect_entries=sum(report.perfect_entries for report in reports),
        total_entries=sum(report.total_entries for report in reports),
        method_comparison=tuple(compare_methods(methods or [])),
        total_cost=total_cost,
    )


# --- rendering ---------------------------------------------------------------

def report_csv(corpus: CorpusReport) -> str:
    """Per-page CER series plus similarity columns, RFC 4180."""
    fields = sorted({name for page in corpus.pages for name in page.cer_by_field})
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(
        ["page_id"]
        + [f"cer_{name}" for name in fields]
        + ["structural_similarity", "textual_similarity", "perfect_entries", "total_entries"]
    )
    for page in corpus.pages:
        writer.writerow(
            [page.page_id]
            + [f"{page.cer_by_field[name]:.6f}" if name in page.cer_by_field else "" for name in fields]
            + [
                f"{page.structural_similarity:.6f}",
                f"{page.textual_similarity:.6f}",
                page.perfect_entries,
                page.total_entries,
            ]
        )
    return buffer.getvalue()


def methods_csv(corpus: CorpusReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(
        ["method", "structural", "structural_delta", "textual", "textual_delta",
         "cost", "cost_delta", "input_tokens", "tokens_delta"]
    )
    for row in corpus.method_comparison:
        writer.writerow(
            [row.method, row.structural, row.structural_delta, row.textual, row.textual_delta,
             row.cost, row.cost_delta, row.input_tokens, row.tokens_delta]
        )
    return buffer.getvalue()


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")


def _polyline(values: list[float], max_y: float, width: int, height: int, pad: int) -> str:
    if len(values) == 1:
        xs = [pad + (width - 2 * pad) / 2]
    else:
        step = (width - 2 * pad) / (len(values) - 1)
        xs = [pad + index * step for index in range(len(values))]
    points = " ".join(
        f"{x:.1f},{height - pad - (value / max_y) * (height - 2 * pad):.1f}"
        for x, value in zip(xs, values)
    )
    return points


def report_html(corpus: CorpusReport, title: str = "Recognition report") -> str:
    """Self-contained HTML report with an inline SVG CER-by-page chart."""
    fields = sorted({name for page in corpus.pages for name in page.cer_by_field})
    width, height, pad = 840, 320, 45
    max_y = max(
        [page.cer_by_field.get(name, 0.0) for page in corpus.pages for name in fields] + [1.0]
    )
    series = []
    for index, name in enumerate(fields):
        values = [page.cer_by_field.get(name, 0.0) for page in corpus.pages]
        color = _PALETTE[index % len(_PALETTE)]
        dash = ' stroke-dasharray="6 4"' if "head" in name or name == "orth" else ""
        series.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} '
            f'points="{_polyline(values, max_y, width, height, pad)}" />'
        )
        series.append(
            f'<text x="{pad + 6}" y="{pad + 14 + index * 16}" fill="{color}" '
            f'font-size="12">{html.escape(name)}</text>'
        )
    axis = (
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="#333"/>'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#333"/>'
        f'<text x="{pad}" y="{pad - 8}" font-size="11" fill="#333">CER (max {max_y:.2f})</text>'
        f'<text x="{width - pad - 30}" y="{height - pad + 28}" font-size="11" fill="#333">page</text>'
    )
    method_rows = "".join(
        "<tr>"
        f"<td>{html.escape(row.method)}</td>"
        f"<td>{row.structural:.3f} {html.escape(row.structural_delta)}</td>"
        f"<td>{row.textual:.3f} {html.escape(row.textual_delta)}</td>"
        f"<td>{row.cost:.3f} {html.escape(row.cost_delta)}</td>"
        f"<td>{row.input_tokens:,} {html.escape(row.tokens_delta)}</td>"
        "</tr>"
        for row in corpus.method_comparison
    )
    methods_table = (
        "<h2>Method comparison</h2><table><tr><th>method</th><th>structural</th>"
        f"<th>textual</th><th>cost</th><th>input tokens</th></tr>{method_rows}</table>"
        if corpus.method_comparison
        else ""
    )
    mean_cells = "".join(
        f"<tr><td>{html.escape(name)}</td><td>{value:.4f}</td></tr>"
        for name, value in corpus.mean_cer_by_field.items()
    )
    cost_line = f"<p>Estimated cost: {html.escape(corpus.total_cost)}</p>" if corpus.total_cost else ""
    return f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>{html.escape(title)}</title>
<style>
body {{ font-family: system-ui, sans-serif; margin: 2rem; color: #222; }}
table {{ border-collapse: collapse; margin: 1rem 0; }}
td, th {{ border: 1px solid #bbb; padding: 4px 10px; text-align: left; }}
</style></head>
<body>
<h1>{html.escape(title)}</h1>
<p>{len(corpus.pages)} pages scored; perfect entries {corpus.perfect_entries}/{corpus.total_entries}
({corpus.perfect_rate:.1%}).</p>
{cost_line}
<h2>CER by page</h2>
<svg viewBox="0 0 {width} {height}" width="{width}" height="{height}" role="img">
{axis}
{''.join(series)}
</svg>
<h2>Mean CER by field</h2>
<table><tr><th>field</th><th>mean CER</th></tr>{mean_cells}</table>
{methods_table}
</body></html>
"""
