"""Colored m x n tori with mesh, cordalis and serpentinus wiring."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

Coord = tuple[int, int]


class GridError(ValueError):
    pass


class GridFormatError(GridError):
    """Raised by the grid file parser; carries the offending line/column."""

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class Topology(enum.Enum):
    MESH = "mesh"
    CORDALIS = "cordalis"
    SERPENTINUS = "serpentinus"

    @classmethod
    def parse(cls, name: str | Topology) -> Topology:
        if isinstance(name, Topology):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise GridError(f"unknown topology {name!r}") from None

    def __str__(self) -> str:
        return self.value


def neighbors_of(topology: Topology, m: int, n: int, i: int, j: int) -> list[Coord]:
    """The four neighbor slots of (i, j) in order up, down, left, right.

    Slots may repeat when m == 2 or n == 2.
    """
    if not (0 <= i < m and 0 <= j < n):
        raise IndexError(f"position ({i}, {j}) outside {m}x{n} grid")
    up = ((i - 1) % m, j)
    down = ((i + 1) % m, j)
    left = (i, (j - 1) % n)
    right = (i, (j + 1) % n)
    if topology is not Topology.MESH:
        # rows are chained end to start
        if j == n - 1:
            right = ((i + 1) % m, 0)
        if j == 0:
            left = ((i - 1) % m, n - 1)
    if topology is Topology.SERPENTINUS:
        # column j's bottom is chained to the top of column j-1
        if i == m - 1:
            down = (0, (j - 1) % n)
        if i == 0:
            up = (m - 1, (j + 1) % n)
    return [up, down, left, right]


@lru_cache(maxsize=256)
def neighbor_table(topology: Topology, m: int, n: int) -> np.ndarray:
    """(m*n, 4) array of flat neighbor indices, row-major; read-only."""
    table = np.empty((m * n, 4), dtype=np.intp)
    for i in range(m):
        for j in range(n):
            for s, (a, b) in enumerate(neighbors_of(topology, m, n, i, j)):
                table[i * n + j, s] = a * n + b
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """An immutable colored torus. Colors are integers in 1..k_max."""

    m: int
    n: int
    k_max: int
    topology: Topology
    cells: np.ndarray  # flat, row-major, int16

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise GridError(f"grid must be at least 2x2, got {self.m}x{self.n}")
        if self.k_max < 1:
            raise GridError(f"palette size must be >= 1, got {self.k_max}")
        object.__setattr__(self, "topology", Topology.parse(self.topology))
        cells = np.array(self.cells, dtype=np.int16).reshape(-1)
        if cells.size != self.m * self.n:
            raise GridError(f"expected {self.m * self.n} cells, got {cells.size}")
        if cells.size and (cells.min() < 1 or cells.max() > self.k_max):
            bad = int(np.flatnonzero((cells < 1) | (cells > self.k_max))[0])
            raise GridError(
                f"cell {divmod(bad, self.n)} has color {int(cells[bad])}, "
                f"outside 1..{self.k_max}"
            )
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], k_max: int | None = None,
                  topology: Topology | str = Topology.MESH) -> TorusGrid:
        arr = np.asarray(rows, dtype=np.int16)
        if arr.ndim != 2:
            raise GridError("rows must form a rectangular 2-D array")
        if k_max is None:
            k_max = int(arr.max())
        return cls(arr.shape[0], arr.shape[1], k_max, Topology.parse(topology), arr.ravel())

    @classmethod
    def filled(cls, m: int, n: int, color: int, k_max: int | None = None,
               topology: Topology | str = Topology.MESH) -> TorusGrid:
        return cls(m, n, k_max or color, Topology.parse(topology), np.full(m * n, color))

    def with_cells(self, cells) -> TorusGrid:
        return TorusGrid(self.m, self.n, self.k_max, self.topology, cells)

    def with_colors(self, assignments: dict[Coord, int]) -> TorusGrid:
        cells = self.cells.copy()
        for (i, j), c in assignments.items():
            cells[self.index((i, j))] = c
        return self.with_cells(cells)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def size(self) -> int:
        return self.m * self.n

    def as_array(self) -> np.ndarray:
        return self.cells.reshape(self.m, self.n)

    def index(self, pos: Coord) -> int:
        i, j = pos
        if not (0 <= i < self.m and 0 <= j < self.n):
            raise IndexError(f"position {pos} outside {self.m}x{self.n} grid")
        return i * self.n + j

    def coord(self, index: int) -> Coord:
        return divmod(index, self.n)

    def __getitem__(self, pos: Coord) -> int:
        return int(self.cells[self.index(pos)])

    def neighbors(self, pos: Coord) -> list[Coord]:
        return neighbors_of(self.topology, self.m, self.n, *pos)

    def table(self) -> np.ndarray:
        return neighbor_table(self.topology, self.m, self.n)

    def color_set(self, color: int) -> frozenset[Coord]:
        return frozenset(self.coord(int(p)) for p in np.flatnonzero(self.cells == color))

    def is_monochromatic(self) -> bool:
        return bool((self.cells == self.cells[0]).all())

    def digest(self) -> bytes:
        return self.cells.tobytes()

    def __eq__(self, other):
        if not isinstance(other, TorusGrid):
            return NotImplemented
        return (self.shape == other.shape and self.k_max == other.k_max
                and self.topology is other.topology
                and np.array_equal(self.cells, other.cells))

    def __hash__(self):
        return hash((self.m, self.n, self.k_max, self.topology, self.digest()))

    def __repr__(self):
        return f"TorusGrid({self.topology.value} {self.m}x{self.n}, k_max={self.k_max})"


@dataclass(frozen=True)
class BoundingRect:
    rows: int
    cols: int


def _circular_extent(occupied: Iterable[int], length: int) -> int:
    hit = [False] * length
    for x in occupied:
        hit[x] = True
    if not any(hit):
        raise GridError("empty set has no rectangle")
    if all(hit):
        return length
    # longest circular run of empty positions; doubling the ring handles the wrap
    best = run = 0
    for x in hit + hit:
        run = 0 if x else run + 1
        best = max(best, run)
    return length - min(best, length)


def bounding_rect(grid: TorusGrid, cells: Iterable[Coord]) -> BoundingRect:
    """Smallest row/column extents covering ``cells`` under cyclic shifts.

    Each axis is handled independently: the extent is the axis length minus
    the longest circular run of unoccupied rows (or columns).
    """
    cells = list(cells)
    if not cells:
        raise GridError("empty set has no rectangle")
    for pos in cells:
        grid.index(pos)
    return BoundingRect(
        _circular_extent((i for i, _ in cells), grid.m),
        _circular_extent((j for _, j in cells), grid.n),
    )


def collapse_colors(grid: TorusGrid, k: int) -> TorusGrid:
    """Map color k to 2 and every other color to 1."""
    if not 1 <= k <= grid.k_max:
        raise GridError(f"color {k} outside palette 1..{grid.k_max}")
    cells = np.where(grid.cells == k, 2, 1)
    return TorusGrid(grid.m, grid.n, 2, grid.topology, cells)


# grid file format ---------------------------------------------------------


def format_grid(grid: TorusGrid) -> str:
    lines = [f"{grid.topology.value} {grid.m} {grid.n} {grid.k_max}"]
    for row in grid.as_array():
        lines.append(" ".join(str(int(c)) for c in row))
    return "\n".join(lines) + "\n"


def parse_grid(text: str) -> TorusGrid:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise GridFormatError("empty grid file", 1)
    header = lines[0].split()
    if len(header) != 4:
        raise GridFormatError(f"header needs 4 tokens, got {len(header)}", 1)
    try:
        topology = Topology.parse(header[0])
    except GridError as exc:
        raise GridFormatError(str(exc), 1, 1) from None
    dims = []
    for col, tok in enumerate(header[1:], start=2):
        try:
            dims.append(int(tok))
        except ValueError:
            raise GridFormatError(f"expected an integer, got {tok!r}", 1, col) from None
    m, n, k_max = dims
    if m < 2 or n < 2:
        raise GridFormatError(f"grid must be at least 2x2, got {m}x{n}", 1)
    if k_max < 1:
        raise GridFormatError(f"palette size must be >= 1, got {k_max}", 1, 4)
    if len(lines) - 1 != m:
        raise GridFormatError(f"expected {m} rows, got {len(lines) - 1}", len(lines))
    cells = []
    for r, line in enumerate(lines[1:], start=2):
        toks = line.split()
        if len(toks) != n:
            raise GridFormatError(f"expected {n} colors, got {len(toks)}", r)
        for col, tok in enumerate(toks, start=1):
            try:
                c = int(tok)
            except ValueError:
                raise GridFormatError(f"expected an integer, got {tok!r}", r, col) from None
            if not 1 <= c <= k_max:
                raise GridFormatError(f"color {c} outside 1..{k_max}", r, col)
            cells.append(c)
    return TorusGrid(m, n, k_max, topology, cells)


def read_grid(path) -> TorusGrid:
    with open(path) as fh:
        return parse_grid(fh.read())


def write_grid(grid: TorusGrid, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_grid(grid))
