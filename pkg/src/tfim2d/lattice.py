"""Square-lattice geometry: sites, nearest-neighbor edges, snake order.

Sites of an ``rows x cols`` open-boundary grid are indexed row-major,
``i = r * cols + c``.  The snake order maps the grid onto a 1D chain by
traversing rows alternately left-to-right and right-to-left, so consecutive
chain positions are always lattice-adjacent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSizeError

MAX_LINEAR_SIZE = 16


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of an open-boundary rectangular grid.

    ``snake_order[p]`` is the site occupying chain position ``p``; for square
    grids ``L == rows == cols``.  ``center_site`` is the row-major index of
    ``(floor((rows-1)/2), floor((cols-1)/2))``.
    """

    rows: int
    cols: int
    nn_edges: tuple[tuple[int, int], ...]
    snake_order: tuple[int, ...]
    center_site: int
    orientation: str = field(default="row")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def L(self) -> int:
        """Linear size; only meaningful for square grids."""
        return self.cols

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def site_index(self, r: int, c: int) -> int:
        return r * self.cols + c

    def site_coords(self, i: int) -> tuple[int, int]:
        return divmod(i, self.cols)

    def positions(self) -> np.ndarray:
        """(n_sites, 2) array of (row, col) coordinates in site order."""
        coords = [divmod(i, self.cols) for i in range(self.n_sites)]
        return np.asarray(coords, dtype=float)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.nn_edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def center_row_sites(self) -> list[int]:
        """All sites on the same horizontal line as the center site."""
        r0, _ = self.site_coords(self.center_site)
        return [self.site_index(r0, c) for c in range(self.cols)]

    def corr_line_pairs(self) -> list[tuple[int, int]]:
        """Correlation pairs (r0, site) for sites right of r0 along its row."""
        r0_row, r0_col = self.site_coords(self.center_site)
        return [
            (self.center_site, self.site_index(r0_row, c))
            for c in range(r0_col + 1, self.cols)
        ]

    def corr_line_distances(self) -> np.ndarray:
        """Euclidean distances (in lattice units) of the corr_line pairs."""
        _, r0_col = self.site_coords(self.center_site)
        return np.arange(1, self.cols - r0_col, dtype=float)


def _snake(rows: int, cols: int) -> tuple[int, ...]:
    order = []
    for r in range(rows):
        cs = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        order.extend(r * cols + c for c in cs)
    return tuple(order)


def build_grid(rows: int, cols: int, orientation: str = "row") -> LatticeSpec:
    """Build a rows x cols open-boundary grid.

    ``orientation`` selects the snake direction: ``"row"`` traverses rows
    (the default mapping), ``"col"`` traverses columns.  Grids with a single
    row or column are allowed (chains are the loop-free test bed).
    """
    if rows < 1 or cols < 1:
        raise InvalidSizeError(f"grid {rows}x{cols} is too small")
    if max(rows, cols) > MAX_LINEAR_SIZE:
        raise InvalidSizeError(f"grid {rows}x{cols} exceeds linear size {MAX_LINEAR_SIZE}")
    if orientation not in ("row", "col"):
        raise InvalidSizeError(f"unknown snake orientation {orientation!r}")

    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))

    if orientation == "row":
        order = _snake(rows, cols)
    else:
        # Column snake: walk the transposed grid, then map back.
        order = tuple(
            c * cols + r for r, c in (divmod(p, rows) for p in _snake(cols, rows))
        )

    center = (rows - 1) // 2 * cols + (cols - 1) // 2
    return LatticeSpec(
        rows=rows,
        cols=cols,
        nn_edges=tuple(sorted((min(a, b), max(a, b)) for a, b in edges)),
        snake_order=order,
        center_site=center,
        orientation=orientation,
    )


def build_lattice(L: int, orientation: str = "row") -> LatticeSpec:
    """Build the L x L square lattice used throughout the protocols."""
    if L < 2:
        raise InvalidSizeError(f"L = {L} is below the minimum linear size 2")
    if L > MAX_LINEAR_SIZE:
        raise InvalidSizeError(f"L = {L} exceeds the maximum linear size {MAX_LINEAR_SIZE}")
    return build_grid(L, L, orientation=orientation)
