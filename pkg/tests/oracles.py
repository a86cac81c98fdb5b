"""Independent brute-force oracles the production code is checked against.

Everything here trades speed for obviousness and stays independent of the
implementations under test: full-matrix DP for edit distance, naive
quadratic block scans for the gestalt ratio, pixel-row scans for tiling.
"""

from __future__ import annotations


def levenshtein_oracle(a, b) -> int:
    """Full-matrix dynamic programming, no memory optimization."""
    rows, cols = len(a) + 1, len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            substitution = table[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            table[i][j] = min(table[i - 1][j] + 1, table[i][j - 1] + 1, substitution)
    return table[-1][-1]


def _naive_longest_blocks(a, b, alo, ahi, blo, bhi):
    best = 0
    starts = []
    for i in range(alo, ahi):
        for j in range(blo, bhi):
            k = 0
            while i + k < ahi and j + k < bhi and a[i + k] == b[j + k]:
                k += 1
            if k > best:
                best, starts = k, [(i, j)]
            elif k == best and k:
                starts.append((i, j))
    return best, starts


def gestalt_matches_oracle(a, b, alo=0, ahi=None, blo=0, bhi=None) -> int:
    """Recursive longest-common-block splitting, maximized over tied blocks."""
    if ahi is None:
        ahi = len(a)
    if bhi is None:
        bhi = len(b)
    size, starts = _naive_longest_blocks(a, b, alo, ahi, blo, bhi)
    if size == 0:
        return 0
    return max(
        size
        + gestalt_matches_oracle(a, b, alo, i, blo, j)
        + gestalt_matches_oracle(a, b, i + size, ahi, j + size, bhi)
        for i, j in starts
    )


def ro_ratio_oracle(a, b) -> float:
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * gestalt_matches_oracle(a, b) / total


def column_coverage_gaps(tiles, column_index: int, y_range: tuple[int, int]) -> list[int]:
    """Pixel rows of the column not covered by any tile (brute-force scan)."""
    rows = []
    for y in range(*y_range):
        covered = any(
            tile.column_index == column_index and tile.bbox[1] <= y < tile.bbox[3]
            for tile in tiles
        )
        if not covered:
            rows.append(y)
    return rows


def pairwise_overlap_rows(tile_a, tile_b) -> int:
    """Shared pixel rows of two tiles in the same column (brute force)."""
    shared = 0
    for y in range(min(tile_a.bbox[1], tile_b.bbox[1]), max(tile_a.bbox[3], tile_b.bbox[3])):
        in_a = tile_a.bbox[1] <= y < tile_a.bbox[3]
        in_b = tile_b.bbox[1] <= y < tile_b.bbox[3]
        if in_a and in_b:
            shared += 1
    return shared


def row_bitmap(tiles, column_index: int, height: int) -> bytearray:
    """Per-pixel-row coverage marks for one column."""
    rows = bytearray(height)
    for tile in tiles:
        if tile.column_index == column_index:
            for y in range(tile.bbox[1], tile.bbox[3]):
                rows[y] = 1
    return rows


def shared_row_count(tile_a, tile_b, height: int) -> int:
    """Rows marked by both tiles, counted row by row."""
    rows_a = row_bitmap([tile_a], tile_a.column_index, height)
    rows_b = row_bitmap([tile_b], tile_b.column_index, height)
    return sum(1 for y in range(height) if rows_a[y] and rows_b[y])
