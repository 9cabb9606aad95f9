"""Structural detectors: k-blocks, non-k-blocks, color forests and the
distinct-neighbor-color condition."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from .grid import Coord, GridError, TorusGrid


def _check_color(grid: TorusGrid, k: int) -> None:
    if not 1 <= k <= grid.k_max:
        raise GridError(f"color {k} outside palette 1..{grid.k_max}")


def peel(grid: TorusGrid, members: set[int], threshold: int) -> list[frozenset[Coord]]:
    """Connected components of the ``threshold``-core of ``members``.

    Degrees count neighbor slots, so a doubled neighbor counts twice.
    Components are ordered by their smallest row-major index.
    """
    table = grid.table()
    alive = set(members)
    degree = {v: sum(1 for u in table[v] if u in alive) for v in alive}
    queue = deque(v for v, d in degree.items() if d < threshold)
    while queue:
        v = queue.popleft()
        if v not in alive:
            continue
        alive.discard(v)
        for u in table[v]:
            u = int(u)
            if u in alive:
                degree[u] -= 1
                if degree[u] == threshold - 1:
                    queue.append(u)

    blocks = []
    seen: set[int] = set()
    for start in sorted(alive):
        if start in seen:
            continue
        comp = {start}
        frontier = [start]
        while frontier:
            v = frontier.pop()
            for u in table[v]:
                u = int(u)
                if u in alive and u not in comp:
                    comp.add(u)
                    frontier.append(u)
        seen |= comp
        blocks.append(frozenset(grid.coord(v) for v in comp))
    return blocks


def find_k_blocks(grid: TorusGrid, k: int) -> list[frozenset[Coord]]:
    """Maximal k-blocks: every k-block of the grid lies inside one of them."""
    _check_color(grid, k)
    return peel(grid, set(np.flatnonzero(grid.cells == k).tolist()), 2)


def find_non_k_blocks(grid: TorusGrid, k: int) -> list[frozenset[Coord]]:
    _check_color(grid, k)
    return peel(grid, set(np.flatnonzero(grid.cells != k).tolist()), 3)


def check_forest(grid: TorusGrid, c: int) -> bool:
    """True iff the cells of color ``c`` induce an acyclic graph.

    Two cells joined through both of their shared slots (m or n equal to 2)
    form a cycle of length two.
    """
    _check_color(grid, c)
    table = grid.table()
    members = set(np.flatnonzero(grid.cells == c).tolist())
    parent = {v: v for v in members}

    def root(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for v in members:
        for u, mult in Counter(int(u) for u in table[v]).items():
            if u <= v or u not in members:
                continue
            if mult > 1:
                return False
            ru, rv = root(u), root(v)
            if ru == rv:
                return False
            parent[ru] = rv
    return True


def check_distinct_neighbor_colors(grid: TorusGrid, k: int) -> list[tuple[Coord, str]]:
    """Cells x of color k' != k whose neighbor slots outside colors {k', k}
    repeat a color."""
    _check_color(grid, k)
    table = grid.table()
    cells = grid.cells
    violations = []
    for v in np.flatnonzero(cells != k):
        own = cells[v]
        others = Counter(int(cells[u]) for u in table[v] if cells[u] != own and cells[u] != k)
        repeated = sorted(c for c, mult in others.items() if mult > 1)
        if repeated:
            pos = grid.coord(int(v))
            violations.append((pos, f"color {int(own)} cell sees color {repeated[0]} "
                                    f"{others[repeated[0]]} times"))
    return violations


def check_monotone_dynamo_structure(grid: TorusGrid, k: int) -> bool:
    """Necessary structure of a monotone dynamo: the k-set is a union of
    k-blocks and the rest of the torus holds no non-k-block."""
    blocks = find_k_blocks(grid, k)
    covered = set().union(*blocks) if blocks else set()
    if covered != grid.color_set(k) or not blocks:
        return False
    return not find_non_k_blocks(grid, k)


@dataclass
class StructureReport:
    k: int
    k_blocks: list[frozenset[Coord]]
    non_k_blocks: list[frozenset[Coord]]
    forest_verdicts: dict[int, bool]
    neighbor_condition_violations: list[tuple[Coord, str]] = field(default_factory=list)

    @property
    def forests_ok(self) -> bool:
        return all(self.forest_verdicts.values())

    def summary(self) -> str:
        return (f"blocks={len(self.k_blocks)} nonblocks={len(self.non_k_blocks)} "
                f"forests={'ok' if self.forests_ok else 'fail'} "
                f"violations={len(self.neighbor_condition_violations)}")

    def to_text(self) -> str:
        def cells(block):
            return " ".join(f"({i},{j})" for i, j in sorted(block))

        out = ["BLOCKS"]
        out += [f"  {len(b)}: {cells(b)}" for b in self.k_blocks]
        out.append("NONBLOCKS")
        out += [f"  {len(b)}: {cells(b)}" for b in self.non_k_blocks]
        out.append("FORESTS")
        out += [f"  color {c}: {'ok' if ok else 'cycle'}"
                for c, ok in sorted(self.forest_verdicts.items())]
        out.append("VIOLATIONS")
        out += [f"  ({i},{j}): {why}" for (i, j), why in self.neighbor_condition_violations]
        return "\n".join(out) + "\n"


def analyze(grid: TorusGrid, k: int) -> StructureReport:
    _check_color(grid, k)
    return StructureReport(
        k=k,
        k_blocks=find_k_blocks(grid, k),
        non_k_blocks=find_non_k_blocks(grid, k),
        forest_verdicts={c: check_forest(grid, c) for c in range(1, grid.k_max + 1) if c != k},
        neighbor_condition_violations=check_distinct_neighbor_colors(grid, k),
    )
