"""Deterministic page geometry: column split and overlapping segments.

All arithmetic runs on exact fractions so a plan is a pure function of
(dimensions, mode, segment count, overlap). Segment starts follow the floor
of the ideal positions; only the last segment's end is clamped to the page,
so every segment keeps the nominal height except possibly the final one.
"""

from __future__ import annotations

import base64
import enum
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from PIL import Image

from .errors import DegenerateGeometry, OutOfBounds, UnreadableScan

MIN_SEGMENT_PX = 8


class TilingMode(enum.Enum):
    WHOLE_PAGE = "whole"
    TWO_COLUMNS = "columns"
    SEGMENTS = "segments"


@dataclass(frozen=True)
class PageImage:
    """A page scan; ``pixels`` may be None when only geometry is needed."""

    page_id: str
    width_px: int
    height_px: int
    pixels: Optional[Image.Image] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.width_px < 2 or self.height_px < 2:
            raise ValueError("page must be at least 2x2 pixels")


@dataclass(frozen=True)
class Tile:
    column_index: int
    segment_index: int
    bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open
    overlap_above_px: int = 0
    overlap_below_px: int = 0

    @property
    def name(self) -> str:
        return f"{self.column_index}{self.segment_index}"

    def to_dict(self) -> dict:
        return {
            "column_index": self.column_index,
            "segment_index": self.segment_index,
            "bbox": list(self.bbox),
            "overlap_above_px": self.overlap_above_px,
            "overlap_below_px": self.overlap_below_px,
        }

    @staticmethod
    def from_dict(data: dict) -> "Tile":
        return Tile(
            column_index=data["column_index"],
            segment_index=data["segment_index"],
            bbox=tuple(data["bbox"]),
            overlap_above_px=data.get("overlap_above_px", 0),
            overlap_below_px=data.get("overlap_below_px", 0),
        )


@dataclass(frozen=True)
class TilePlan:
    page_id: str
    mode: TilingMode
    gutter_x: int
    segments_per_column: int
    overlap_fraction: float
    tiles: tuple[Tile, ...]

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "mode": self.mode.value,
            "gutter_x": self.gutter_x,
            "segments_per_column": self.segments_per_column,
            "overlap_fraction": self.overlap_fraction,
            "tiles": [tile.to_dict() for tile in self.tiles],
        }

    @staticmethod
    def from_dict(data: dict) -> "TilePlan":
        return TilePlan(
            page_id=data["page_id"],
            mode=TilingMode(data["mode"]),
            gutter_x=data["gutter_x"],
            segments_per_column=data["segments_per_column"],
            overlap_fraction=data["overlap_fraction"],
            tiles=tuple(Tile.from_dict(item) for item in data["tiles"]),
        )


@dataclass(frozen=True)
class TileImage:
    """Cropped tile raster plus the encodings the gateway needs."""

    page_id: str
    tile: Tile
    image: Image.Image = field(compare=False, repr=False)
    png_bytes: bytes = field(compare=False, repr=False)

    @property
    def b64(self) -> str:
        return base64.b64encode(self.png_bytes).decode("ascii")

    @property
    def file_name(self) -> str:
        return f"{self.page_id}_{self.tile.name}.png"


def _exact(value: float) -> Fraction:
    return Fraction(value).limit_denominator(1_000_000)


def _round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def load_page(path: str | Path, page_id: str | None = None) -> PageImage:
    """Read a PNG/JPEG/TIFF scan into a PageImage."""
    path = Path(path)
    try:
        image = Image.open(path)
        image.load()
    except (OSError, ValueError) as exc:
        raise UnreadableScan(f"cannot read scan {path}: {exc}", path=str(path)) from exc
    if image.mode not in ("L", "RGB"):
        image = image.convert("RGB")
    return PageImage(
        page_id=page_id or path.stem,
        width_px=image.width,
        height_px=image.height,
        pixels=image,
    )


def split_columns(
    page: PageImage, gutter_ratio: float = 0.5
) -> tuple[int, tuple[tuple[int, int, int, int], tuple[int, int, int, int]]]:
    """Split the page at ``round(width * gutter_ratio)`` (half rounds up)."""
    if not 0.25 <= gutter_ratio <= 0.75:
        raise ValueError("gutter_ratio must be within [0.25, 0.75]")
    gutter_x = _round_half_up(page.width_px * _exact(gutter_ratio))
    left = (0, 0, gutter_x, page.height_px)
    right = (gutter_x, 0, page.width_px, page.height_px)
    return gutter_x, (left, right)


def _segment_bounds(height: int, n: int, overlap: Fraction) -> list[tuple[int, int]]:
    segment_height = math.ceil(Fraction(height) / (n - (n - 1) * overlap))
    if segment_height < MIN_SEGMENT_PX:
        raise DegenerateGeometry(
            f"segment height {segment_height}px is below the {MIN_SEGMENT_PX}px minimum",
            segment_height=segment_height,
        )
    step = segment_height * (1 - overlap)
    bounds = []
    for index in range(n):
        start = math.floor(index * step)
        end = min(start + segment_height, height)
        if start >= end:
            raise DegenerateGeometry(
                f"segment {index} is empty for height={height}, n={n}", segment=index
            )
        bounds.append((start, end))
    return bounds


def plan_tiles(
    page: PageImage,
    mode: TilingMode = TilingMode.SEGMENTS,
    segments_per_column: int = 4,
    overlap_fraction: float = 0.25,
    gutter_ratio: float = 0.5,
) -> TilePlan:
    """Lay out tiles column-major: column 0 top to bottom, then column 1."""
    if segments_per_column < 1:
        raise ValueError("segments_per_column must be >= 1")
    if not 0 <= overlap_fraction <= 0.5:
        raise ValueError("overlap_fraction must be within [0, 0.5]")
    gutter_x, columns = split_columns(page, gutter_ratio)

    tiles: list[Tile] = []
    if mode is TilingMode.WHOLE_PAGE:
        tiles.append(Tile(0, 0, (0, 0, page.width_px, page.height_px)))
    elif mode is TilingMode.TWO_COLUMNS:
        for column_index, bbox in enumerate(columns):
            tiles.append(Tile(column_index, 0, bbox))
    else:
        overlap = _exact(overlap_fraction)
        bounds = _segment_bounds(page.height_px, segments_per_column, overlap)
        for column_index, (x0, _, x1, _) in enumerate(columns):
            for segment_index, (y0, y1) in enumerate(bounds):
                above = 0 if segment_index == 0 else max(0, bounds[segment_index - 1][1] - y0)
                below = (
                    0
                    if segment_index == len(bounds) - 1
                    else max(0, y1 - bounds[segment_index + 1][0])
                )
                tiles.append(Tile(column_index, segment_index, (x0, y0, x1, y1), above, below))
    return TilePlan(
        page_id=page.page_id,
        mode=mode,
        gutter_x=gutter_x,
        segments_per_column=segments_per_column if mode is TilingMode.SEGMENTS else 1,
        overlap_fraction=overlap_fraction,
        tiles=tuple(tiles),
    )


def crop(page: PageImage, tile: Tile) -> TileImage:
    """Cut one tile out of the page raster and encode it as PNG."""
    if page.pixels is None:
        raise OutOfBounds("page carries no raster to crop", page=page.page_id)
    x0, y0, x1, y1 = tile.bbox
    if not (0 <= x0 < x1 <= page.width_px and 0 <= y0 < y1 <= page.height_px):
        raise OutOfBounds(
            f"tile bbox {tile.bbox} is outside the {page.width_px}x{page.height_px} page",
            bbox=list(tile.bbox),
        )
    image = page.pixels.crop((x0, y0, x1, y1))
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return TileImage(page_id=page.page_id, tile=tile, image=image, png_bytes=buffer.getvalue())
