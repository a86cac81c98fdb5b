"""Reassembly of per-tile recognition output into one page document.

The deterministic path walks each column top to bottom, drops entries that
the tile overlap duplicated, and stitches an entry that a cut left without
its senses back together with the continuation from the next tile. The
model-assisted path delegates the same job to a second model and falls back
to the deterministic merge when the reply does not validate.

Duplicate detection is similarity-based rather than exact because the two
recognitions of an overlap band rarely agree byte-for-byte; the default
0.80 gestalt threshold tolerates single-character recognition noise while
keeping neighbouring entries apart.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Union

from .entries import FIELD_NAMES, DictionaryEntry, SchemaId, parse_entry_payload
from .errors import EmptyFragmentSet, FrakturError, InvalidConfig
from .gateway import Gateway, ModelParams, build_text_request
from .metrics import ro_ratio
from .tei import TeiDocument, TeiEntry, parse_tei_fragment, serialize_tei
from .tiling import Tile, TilePlan, TilingMode

log = logging.getLogger(__name__)

DEFAULT_DUPLICATE_THRESHOLD = 0.80

PagePayload = Union[TeiDocument, tuple[DictionaryEntry, ...]]


@dataclass(frozen=True)
class Fragment:
    tile: Tile
    payload: PagePayload


@dataclass(frozen=True)
class FragmentSet:
    page_id: str
    plan: TilePlan
    fragments: tuple[Fragment, ...]

    def __post_init__(self) -> None:
        if not self.fragments:
            raise EmptyFragmentSet(f"page {self.page_id}: no fragments to merge")
        plan_tiles = [tile.name for tile in self.plan.tiles]
        fragment_tiles = [fragment.tile.name for fragment in self.fragments]
        if plan_tiles != fragment_tiles:
            raise InvalidConfig(
                f"fragments {fragment_tiles} do not match the plan tiles {plan_tiles}",
                page=self.page_id,
            )
        kinds = {isinstance(fragment.payload, TeiDocument) for fragment in self.fragments}
        if len(kinds) > 1:
            raise InvalidConfig("fragments mix TEI and nine-field payloads", page=self.page_id)

    @property
    def is_tei(self) -> bool:
        return isinstance(self.fragments[0].payload, TeiDocument)


@dataclass(frozen=True)
class EntryRef:
    tile: str
    index: int
    headword: str

    def to_dict(self) -> dict:
        return {"tile": self.tile, "index": self.index, "headword": self.headword}


@dataclass(frozen=True)
class MergeDecision:
    kind: str  # kept | dropped_duplicate | stitched
    entry: EntryRef
    source_tiles: tuple[str, ...]
    similarity: float | None = None
    keeper: EntryRef | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "entry": self.entry.to_dict(),
            "source_tiles": list(self.source_tiles),
            "similarity": self.similarity,
            "keeper": self.keeper.to_dict() if self.keeper else None,
        }


@dataclass(frozen=True)
class DuplicatePair:
    tail_index: int
    head_index: int
    headword_ratio: float
    text_ratio: float
    keep: str  # "tail" | "head"


@dataclass
class _Unit:
    ref: EntryRef
    obj: object  # TeiEntry or DictionaryEntry
    stitched_from: tuple[EntryRef, ...] = ()


def _headword(obj) -> str:
    if isinstance(obj, TeiEntry):
        return obj.orth
    return obj.headword_et


def _full_text(obj) -> str:
    if isinstance(obj, TeiEntry):
        parts = [obj.orth, obj.pos, obj.gram]
        for sense in obj.senses:
            parts += [sense.quote, sense.usg, sense.xr]
        return "\n".join(part for part in parts if part)
    return obj.content_text()


def _field_count(obj) -> int:
    if isinstance(obj, TeiEntry):
        count = 1 + bool(obj.pos) + bool(obj.gram)
        for sense in obj.senses:
            count += bool(sense.quote) + bool(sense.usg) + bool(sense.xr)
        return count
    return sum(1 for cell in obj.content_cells() if cell)


def _is_open(obj) -> bool:
    """An entry with a lemma but nothing else: the likely top half of a cut."""
    if isinstance(obj, TeiEntry):
        return obj.is_open()
    cells = obj.content_cells()
    return bool(cells[0]) and not any(cells[1:])


def _stitch(open_obj, continuation):
    if isinstance(open_obj, TeiEntry):
        return TeiEntry(
            entry_id=open_obj.entry_id,
            orth=open_obj.orth,
            pos=open_obj.pos or continuation.pos,
            gram=open_obj.gram or continuation.gram,
            senses=continuation.senses,
        )
    merged = {"headword_et": open_obj.headword_et}
    for name in (
        "synonyms_et",
        "equivalent_de",
        "synonyms_de",
        "explanation_la",
        "part_of_speech",
        "grammar_info",
        "mwe_et",
        "mwe_de",
    ):
        own = getattr(open_obj, name)
        merged[name] = own if own else getattr(continuation, name)
    return replace(open_obj, **merged)  # type: ignore[arg-type]


def dedupe_pair(
    tail_entries, head_entries, threshold: float = DEFAULT_DUPLICATE_THRESHOLD
) -> list[DuplicatePair]:
    """Pair up entries that two adjacent tiles both recognized.

    A pair is a duplicate when both the headwords and the full entry texts
    reach the gestalt threshold. The variant with more filled fields wins;
    ties keep the earlier tile's variant.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be within [0, 1]")
    pairs: list[DuplicatePair] = []
    used_tails: set[int] = set()
    for head_index, head in enumerate(head_entries):
        best: DuplicatePair | None = None
        best_score = -1.0
        for tail_index, tail in enumerate(tail_entries):
            if tail_index in used_tails:
                continue
            headword_ratio = ro_ratio(_headword(tail), _headword(head))
            if headword_ratio < threshold:
                continue
            text_ratio = ro_ratio(_full_text(tail), _full_text(head))
            if text_ratio < threshold:
                continue
            score = headword_ratio + text_ratio
            if score > best_score:
                keep = "head" if _field_count(head) > _field_count(tail) else "tail"
                best = DuplicatePair(tail_index, head_index, headword_ratio, text_ratio, keep)
                best_score = score
        if best is not None:
            used_tails.add(best.tail_index)
            pairs.append(best)
    return pairs


def _window(count: int, overlap_px: int, tile_height: int) -> int:
    if overlap_px <= 0 or count == 0:
        return 0
    share = overlap_px / tile_height
    return min(count, math.ceil(count * share) + 2)


def _units(fragment: Fragment) -> list[_Unit]:
    payload = fragment.payload
    objs = payload.entries if isinstance(payload, TeiDocument) else payload
    return [
        _Unit(ref=EntryRef(fragment.tile.name, index, _headword(obj)), obj=obj)
        for index, obj in enumerate(objs)
    ]


def merge_fragments(
    frags: FragmentSet, threshold: float = DEFAULT_DUPLICATE_THRESHOLD
) -> tuple[PagePayload, list[MergeDecision]]:
    """Deterministic merge: overlap deduplication plus split-entry stitching.

    Every input entry is accounted for by exactly one decision; with zero
    overlap the merge degenerates to concatenation in plan order.
    """
    decisions: list[MergeDecision] = []
    merged: list[_Unit] = []

    for column in sorted({fragment.tile.column_index for fragment in frags.fragments}):
        column_fragments = [
            fragment for fragment in frags.fragments if fragment.tile.column_index == column
        ]
        column_units: list[_Unit] = []
        previous: Fragment | None = None
        previous_survivors: list[_Unit] = []
        for fragment in column_fragments:
            units = _units(fragment)
            if previous is None:
                column_units.extend(units)
                previous, previous_survivors = fragment, list(units)
                continue

            overlap_px = fragment.tile.overlap_above_px
            prev_height = previous.tile.bbox[3] - previous.tile.bbox[1]
            height = fragment.tile.bbox[3] - fragment.tile.bbox[1]
            tail_count = _window(len(previous_survivors), overlap_px, prev_height)
            head_count = _window(len(units), overlap_px, height)
            tail_units = previous_survivors[-tail_count:] if tail_count else []
            head_units = units[:head_count]

            pairs = dedupe_pair(
                [unit.obj for unit in tail_units], [unit.obj for unit in head_units], threshold
            )
            tiles_pair = (previous.tile.name, fragment.tile.name)
            dropped_heads: set[int] = set()
            for pair in pairs:
                tail_unit = tail_units[pair.tail_index]
                head_unit = head_units[pair.head_index]
                similarity = min(pair.headword_ratio, pair.text_ratio)
                dropped_heads.add(pair.head_index)
                if pair.keep == "head":
                    # The later tile saw more of the entry; it takes the
                    # earlier variant's position in reading order.
                    position = column_units.index(tail_unit)
                    column_units[position] = _Unit(ref=head_unit.ref, obj=head_unit.obj)
                    previous_survivors[previous_survivors.index(tail_unit)] = column_units[position]
                    decisions.append(
                        MergeDecision(
                            "dropped_duplicate", tail_unit.ref, tiles_pair, similarity, head_unit.ref
                        )
                    )
                else:
                    decisions.append(
                        MergeDecision(
                            "dropped_duplicate", head_unit.ref, tiles_pair, similarity, tail_unit.ref
                        )
                    )

            remaining = [unit for index, unit in enumerate(units) if index not in dropped_heads]

            if column_units and remaining and _is_open(column_units[-1].obj):
                open_unit = column_units[-1]
                candidate = remaining[0]
                headword_ratio = ro_ratio(_headword(open_unit.obj), _headword(candidate.obj))
                if headword_ratio >= threshold:
                    stitched_obj = _stitch(open_unit.obj, candidate.obj)
                    column_units[-1] = _Unit(
                        ref=open_unit.ref,
                        obj=stitched_obj,
                        stitched_from=(open_unit.ref, candidate.ref),
                    )
                    if open_unit in previous_survivors:
                        previous_survivors[previous_survivors.index(open_unit)] = column_units[-1]
                    for ref in (open_unit.ref, candidate.ref):
                        decisions.append(
                            MergeDecision("stitched", ref, tiles_pair, headword_ratio)
                        )
                    remaining = remaining[1:]

            column_units.extend(remaining)
            previous, previous_survivors = fragment, _surviving(units, remaining)
        merged.extend(column_units)

    stitched_refs = {
        ref for unit in merged for ref in unit.stitched_from
    }
    decided = {decision.entry for decision in decisions}
    for unit in merged:
        if unit.ref not in decided and unit.ref not in stitched_refs:
            decisions.append(MergeDecision("kept", unit.ref, (unit.ref.tile,)))

    return _build_payload(frags, merged), decisions


def _surviving(units: list[_Unit], remaining: list[_Unit]) -> list[_Unit]:
    """Units of the fragment still present after dedupe/stitch, in order."""
    remaining_refs = {unit.ref for unit in remaining}
    return [unit for unit in units if unit.ref in remaining_refs]


def _build_payload(frags: FragmentSet, merged: list[_Unit]) -> PagePayload:
    if frags.is_tei:
        entries = tuple(
            replace(unit.obj, entry_id=f"e{index}")  # type: ignore[arg-type]
            for index, unit in enumerate(merged, start=1)
        )
        return TeiDocument(entries)
    mode = frags.plan.mode
    entries_out: list[DictionaryEntry] = []
    tiles_by_name = {tile.name: tile for tile in frags.plan.tiles}
    for order, unit in enumerate(merged):
        entry: DictionaryEntry = unit.obj  # type: ignore[assignment]
        tile = tiles_by_name[unit.ref.tile]
        segment: int | str = "whole" if mode is TilingMode.WHOLE_PAGE else tile.segment_index
        prov = replace(
            entry.provenance,
            column=tile.column_index + 1,
            segment=segment,
            order_on_page=order,
        )
        entries_out.append(entry.with_provenance(prov))
    return tuple(entries_out)


@dataclass(frozen=True)
class LlmMergeResult:
    payload: PagePayload
    used_fallback: bool
    fallback_reason: str = ""
    decisions: tuple[MergeDecision, ...] = ()
    request_id: str = ""


def _serialize_fragments(frags: FragmentSet) -> str:
    blocks = []
    for fragment in frags.fragments:
        tile = fragment.tile
        header = f"### column {tile.column_index} segment {tile.segment_index}"
        if isinstance(fragment.payload, TeiDocument):
            blocks.append(header + "\n" + serialize_tei(fragment.payload))
        else:
            rows = [
                {name: entry.cell(name) for name in FIELD_NAMES} for entry in fragment.payload
            ]
            blocks.append(header + "\n" + json.dumps(rows, ensure_ascii=False, indent=2))
    return "\n\n".join(blocks)


def llm_merge(
    frags: FragmentSet,
    gateway: Gateway,
    merge_prompt: str,
    params: ModelParams,
    threshold: float = DEFAULT_DUPLICATE_THRESHOLD,
    assets_dir=None,
) -> LlmMergeResult:
    """Hand the fragments to a second model for reassembly.

    The reply must validate against the job schema; otherwise the
    deterministic merge takes over and the fallback is recorded.
    """
    request = build_text_request(_serialize_fragments(frags), merge_prompt, params, assets_dir)
    response = gateway.submit(request)
    if response.usage.outcome == "refusal":
        payload, decisions = merge_fragments(frags, threshold)
        return LlmMergeResult(
            payload, True, "model refused the merge", tuple(decisions), request.request_id
        )
    try:
        if frags.is_tei:
            payload: PagePayload = parse_tei_fragment(response.body)
        else:
            parsed = parse_entry_payload(response.body, SchemaId.NINE_FIELD)
            payload = parsed.entries
        return LlmMergeResult(payload, False, "", (), request.request_id)
    except FrakturError as exc:
        log.warning("model merge reply rejected (%s); falling back", exc)
        payload, decisions = merge_fragments(frags, threshold)
        return LlmMergeResult(payload, True, str(exc), tuple(decisions), request.request_id)
