"""Digitisation pipeline for Fraktur-printed historical dictionaries.

Scanned pages go through deterministic tiling, vision-model recognition,
overlap-aware reassembly and accuracy scoring, with a file-backed job store,
a CLI and a review HTTP service on top.
"""

from .entries import (
    DictionaryEntry,
    EntryProvenance,
    SchemaId,
    csv_to_entries,
    entries_to_csv,
    parse_entry_payload,
    validate_entry,
)
from .evaluation import EvalReport, aggregate, score_page
from .jobs import Job, JobConfig, JobStore, PageState
from .merge import FragmentSet, dedupe_pair, llm_merge, merge_fragments
from .metrics import cer, levenshtein, ro_ratio
from .tei import TeiDocument, TeiEntry, parse_tei_fragment, serialize_tei
from .tiling import PageImage, Tile, TilePlan, TilingMode, crop, plan_tiles, split_columns

__version__ = "0.1.0"

__all__ = [
    "DictionaryEntry",
    "EntryProvenance",
    "EvalReport",
    "FragmentSet",
    "Job",
    "JobConfig",
    "JobStore",
    "PageImage",
    "PageState",
    "SchemaId",
    "TeiDocument",
    "TeiEntry",
    "Tile",
    "TilePlan",
    "TilingMode",
    "aggregate",
    "cer",
    "crop",
    "csv_to_entries",
    "dedupe_pair",
    "entries_to_csv",
    "levenshtein",
    "llm_merge",
    "merge_fragments",
    "parse_entry_payload",
    "parse_tei_fragment",
    "plan_tiles",
    "ro_ratio",
    "score_page",
    "serialize_tei",
    "split_columns",
    "validate_entry",
]
