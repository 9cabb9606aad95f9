"""Synchronous SMP recoloring: local rule, rounds, quiescence and round maps."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import GridError, TorusGrid, format_grid


def smp_local_rule(neighbor_colors: Iterable[int], current: int) -> int:
    """New color of a vertex given the colors in its four neighbor slots.

    A color held by at least two slots wins if it is the only such color;
    a 2+2 split or four distinct colors leave the vertex unchanged.
    """
    counts = Counter(neighbor_colors)
    if sum(counts.values()) != 4:
        raise ValueError(f"expected 4 neighbor slots, got {sum(counts.values())}")
    winners = [c for c, mult in counts.items() if mult >= 2]
    return winners[0] if len(winners) == 1 else current


def apply_rule(cells: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Vectorized rule over the last axis of ``cells`` (any leading batch shape)."""
    nb = cells[..., table]  # (..., mn, 4)
    # multiplicity of each slot's color within its own neighborhood
    mult = (nb[..., :, None] == nb[..., None, :]).sum(axis=-1)
    top = mult.max(axis=-1)
    paired = (mult >= 2).sum(axis=-1)
    has_winner = (top >= 3) | ((top == 2) & (paired == 2))
    winner = np.take_along_axis(nb, mult.argmax(axis=-1)[..., None], axis=-1)[..., 0]
    return np.where(has_winner, winner, cells)


def step(grid: TorusGrid) -> TorusGrid:
    return grid.with_cells(apply_rule(grid.cells, grid.table()))


class Outcome(enum.Enum):
    MONOCHROMATIC = "mono"
    FIXED_POINT = "fixed"
    CYCLE = "cycle"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class SimulationResult:
    """Outcome of iterating the protocol until it settles or hits the cap.

    ``rounds`` is the time of the first monochromatic configuration, the
    time the fixed point was first reached, the cycle's prefix length, or
    the cap, depending on ``outcome``.
    """

    outcome: Outcome
    rounds: int
    rounds_executed: int
    final: TorusGrid
    color: int | None = None
    cycle_len: int | None = None
    monotone_for: int | None = None
    monotone: bool | None = None
    trajectory: tuple[TorusGrid, ...] | None = None

    @property
    def is_monochromatic(self) -> bool:
        return self.outcome is Outcome.MONOCHROMATIC

    def reached(self, k: int) -> bool:
        return self.outcome is Outcome.MONOCHROMATIC and self.color == k

    def summary(self) -> str:
        color = self.color if self.color is not None else "-"
        mono = {None: "-", True: "yes", False: "no"}[self.monotone]
        line = f"outcome={self.outcome.value} color={color} rounds={self.rounds} monotone={mono}"
        if self.outcome is Outcome.CYCLE:
            line += f" cycle_len={self.cycle_len}"
        return line


def default_max_rounds(grid: TorusGrid) -> int:
    return 4 * grid.m * grid.n


def run(grid: TorusGrid, max_rounds: int | None = None, monotone_for: int | None = None,
        keep_trajectory: bool = False) -> SimulationResult:
    """Iterate ``step`` from ``grid`` until monochromatic, periodic, or capped."""
    if max_rounds is None:
        max_rounds = default_max_rounds(grid)
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if monotone_for is not None and not 1 <= monotone_for <= grid.k_max:
        raise GridError(f"color {monotone_for} outside palette 1..{grid.k_max}")

    table = grid.table()
    states = [grid.cells]
    seen = {grid.digest(): 0}
    monotone = True if monotone_for is not None else None

    def finish(outcome, rounds, executed, color=None, cycle_len=None):
        frames = None
        if keep_trajectory:
            frames = tuple(grid.with_cells(s) for s in states)
        return SimulationResult(outcome, rounds, executed, grid.with_cells(states[-1]),
                                color=color, cycle_len=cycle_len,
                                monotone_for=monotone_for, monotone=monotone,
                                trajectory=frames)

    cur = grid.cells
    if (cur == cur[0]).all():
        return finish(Outcome.MONOCHROMATIC, 0, 0, color=int(cur[0]))
    for t in range(1, max_rounds + 1):
        nxt = apply_rule(cur, table)
        if monotone and ((cur == monotone_for) & (nxt != monotone_for)).any():
            monotone = False
        if np.array_equal(nxt, cur):
            return finish(Outcome.FIXED_POINT, t - 1, t)
        states.append(nxt)
        if (nxt == nxt[0]).all():
            return finish(Outcome.MONOCHROMATIC, t, t, color=int(nxt[0]))
        d = nxt.tobytes()
        if d in seen:
            states.pop()  # keep one copy of each configuration in the cycle
            return finish(Outcome.CYCLE, seen[d], t, cycle_len=t - seen[d])
        seen[d] = t
        if not keep_trajectory:
            states = [nxt]
        cur = nxt
    return finish(Outcome.TRUNCATED, max_rounds, max_rounds)


@dataclass(frozen=True, eq=False)
class RoundMap:
    """sigma[i, j]: first round from which (i, j) holds color k for the rest
    of the observed run; -1 if it does not end up holding k."""

    k: int
    sigma: np.ndarray
    result: SimulationResult

    @property
    def complete(self) -> bool:
        return bool((self.sigma >= 0).all())

    @property
    def max_round(self) -> int:
        return int(self.sigma.max())

    def rows(self) -> list[list[int]]:
        return self.sigma.tolist()

    def to_csv(self) -> str:
        return format_round_csv(self.sigma)


def round_map(grid: TorusGrid, k: int, max_rounds: int | None = None) -> RoundMap:
    result = run(grid, max_rounds, monotone_for=k, keep_trajectory=True)
    frames = np.stack([f.cells for f in result.trajectory])  # (T+1, mn)
    is_k = frames == k
    # index of the first frame in the trailing all-k run of each cell
    tail_len = np.zeros(grid.size, dtype=int)
    alive = np.ones(grid.size, dtype=bool)
    for row in is_k[::-1]:
        alive &= row
        tail_len += alive
    sigma = np.where(tail_len > 0, len(frames) - tail_len, -1)
    return RoundMap(k, sigma.reshape(grid.m, grid.n), result)


def format_round_csv(sigma) -> str:
    return "".join(",".join(str(int(v)) for v in row) + "\n" for row in np.asarray(sigma))


def parse_round_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([int(tok) for tok in line.split(",")])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed round map entry") from None
        if rows[-1] and min(rows[-1]) < -1:
            raise ValueError(f"line {lineno}: round values must be >= -1")
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("round map rows must be non-empty and of equal length")
    return np.array(rows, dtype=int)


def format_trajectory(frames: Iterable[TorusGrid]) -> str:
    return "\n".join(format_grid(f) for f in frames)
