"""Shared fixtures: the ground-truth TEI page, fragment splitting helpers,
synthetic scans and deterministic entry generators."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from PIL import Image, ImageDraw

from frakturdict.entries import DictionaryEntry, EntryProvenance
from frakturdict.merge import Fragment, FragmentSet
from frakturdict.tei import TeiDocument, parse_tei_fragment
from frakturdict.tiling import PageImage, TilePlan

FIXTURES = Path(__file__).parent / "fixtures"

GERMAN_GLOSSES = (
    "Haus", "Stein", "Wald", "Berg", "Fluss", "Krug", "Kette", "Brod", "Feld", "Pferd",
    "Vogel", "Fisch", "Wort", "Hand", "Dorf", "Weg", "Nacht", "Licht", "Korn", "Baum",
)
ESTONIAN_STEMS = (
    "maja", "kivvi", "mets", "mäggi", "jöggi", "körts", "keed", "leib", "nurm", "hobbone",
    "lind", "kalla", "sönna", "kässi", "külla", "tee", "öö", "walgus", "terra", "pu",
)


@pytest.fixture(scope="session")
def gt_page_doc() -> TeiDocument:
    """The hand-built 86-entry ground-truth page."""
    return parse_tei_fragment((FIXTURES / "gt_page_149.xml").read_text(encoding="utf-8"))


def make_entries(count: int, prefix: str = "", page: int = 1) -> tuple[DictionaryEntry, ...]:
    """Deterministic nine-field entries, varied enough to stay distinct."""
    rng = random.Random(count * 7919 + len(prefix))
    entries = []
    for index in range(count):
        stem = ESTONIAN_STEMS[index % len(ESTONIAN_STEMS)]
        headword = f"{prefix}{stem}{index:02d}"
        gloss = GERMAN_GLOSSES[index % len(GERMAN_GLOSSES)]
        entries.append(
            DictionaryEntry(
                headword_et=headword,
                equivalent_de=f"{gloss} {index:02d}",
                synonyms_et=(f"{stem}ke{index:02d}",) if index % 5 == 0 else (),
                part_of_speech="s." if index % 3 == 0 else "",
                grammar_info="G. Sg." if index % 4 == 0 else "",
                provenance=EntryProvenance(page=page, order_on_page=index),
            )
        )
        rng.random()
    return tuple(entries)


def entries_to_payload(entries) -> str:
    """Model-reply JSON body for a sequence of entries."""
    rows = []
    for entry in entries:
        rows.append(
            {
                "headword_et": entry.headword_et,
                "synonyms_et": list(entry.synonyms_et),
                "equivalent_de": entry.equivalent_de,
                "synonyms_de": list(entry.synonyms_de),
                "explanation_la": entry.explanation_la,
                "part_of_speech": entry.part_of_speech,
                "grammar_info": entry.grammar_info,
                "mwe_et": list(entry.mwe_et),
                "mwe_de": list(entry.mwe_de),
            }
        )
    return json.dumps(rows, ensure_ascii=False)


def chunk_with_overlap(items, pieces: int) -> list[tuple[int, int]]:
    """Index ranges splitting ``items`` into pieces sharing one boundary item."""
    cuts = [len(items) * k // pieces for k in range(1, pieces)]
    bounds = []
    start = 0
    for cut in cuts:
        bounds.append((start, cut + 1))
        start = cut
    bounds.append((start, len(items)))
    return bounds


def split_tei_fragments(doc: TeiDocument, plan: TilePlan) -> FragmentSet:
    """Distribute a page document over the plan's tiles, duplicating one
    entry at each same-column boundary the way overlapping tiles do."""
    per_column = max(tile.column_index for tile in plan.tiles) + 1
    halves = []
    size = len(doc.entries)
    half = (size + per_column - 1) // per_column
    for column in range(per_column):
        halves.append(doc.entries[column * half : (column + 1) * half])
    fragments = []
    for column in range(per_column):
        col_tiles = [tile for tile in plan.tiles if tile.column_index == column]
        bounds = chunk_with_overlap(halves[column], len(col_tiles))
        for tile, (lo, hi) in zip(col_tiles, bounds):
            fragments.append(Fragment(tile=tile, payload=TeiDocument(tuple(halves[column][lo:hi]))))
    return FragmentSet(page_id=plan.page_id, plan=plan, fragments=tuple(fragments))


def split_entry_fragments(entries, plan: TilePlan) -> FragmentSet:
    per_column = max(tile.column_index for tile in plan.tiles) + 1
    size = len(entries)
    half = (size + per_column - 1) // per_column
    fragments = []
    for column in range(per_column):
        chunk = entries[column * half : (column + 1) * half]
        col_tiles = [tile for tile in plan.tiles if tile.column_index == column]
        bounds = chunk_with_overlap(chunk, len(col_tiles))
        for tile, (lo, hi) in zip(col_tiles, bounds):
            fragments.append(Fragment(tile=tile, payload=tuple(chunk[lo:hi])))
    return FragmentSet(page_id=plan.page_id, plan=plan, fragments=tuple(fragments))


def make_scan(path: Path, width: int = 640, height: int = 900, seed: int = 0) -> Path:
    """Synthetic two-column page scan: grey line blocks on white."""
    rng = random.Random(seed)
    image = Image.new("L", (width, height), color=245)
    draw = ImageDraw.Draw(image)
    for column_x in (width // 16, width // 2 + width // 16):
        y = height // 20
        while y < height - height // 20:
            line_width = rng.randint(width // 4, width * 3 // 8)
            draw.rectangle([column_x, y, column_x + line_width, y + 6], fill=40)
            y += 14
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG")
    return path


def script_recognition_fixtures(store, job, page_number: int, entries, fixtures_dir: Path) -> None:
    """Write mock-provider replies for one tiled page.

    The page content is split over the plan's tiles with one entry
    duplicated at every same-column boundary, exactly the way overlapping
    tiles re-read a boundary entry; fixture files are keyed by the
    content-hash request ids the recognizer will compute.
    """
    from frakturdict.gateway import build_vision_request
    from frakturdict.jobs import _StoredTile

    record = job.pages[page_number]
    plan = store.load_plan(job, record)
    frag_set = split_entry_fragments(entries, plan)
    tiles_dir = store.job_dir(job.job_id) / "tiles"
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    for fragment in frag_set.fragments:
        png = (tiles_dir / f"{record.page_id}_{fragment.tile.name}.png").read_bytes()
        request = build_vision_request(
            _StoredTile(png), job.config.resolved_recognize_prompt(), job.config.params
        )
        (fixtures_dir / f"{request.request_id}.json").write_text(
            json.dumps({"body": entries_to_payload(fragment.payload)}, ensure_ascii=False),
            encoding="utf-8",
        )


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                verdict = "PASS" if status == "passed" else "FAIL"
                lines.append(f"{verdict}  {name}")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda item: item.split(None, 1)[1]):
            terminalreporter.write_line(line)
