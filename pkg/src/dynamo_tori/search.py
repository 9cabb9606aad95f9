"""Exhaustive enumeration over small tori.

Colorings are indexed base k_max in row-major order, with cell (0, 0) as the
most significant digit, so index ranges split the space into shards and any
counterexample is reproducible from its index.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from . import analysis
from .dynamics import apply_rule
from .grid import GridError, Topology, TorusGrid, neighbor_table

log = logging.getLogger(__name__)

BUDGET_BITS = 40
PROGRESS_EVERY = 1_000_000
MODES = ("min", "min-monotone", "exists")


class SearchBudgetError(GridError):
    def __init__(self, configurations: int):
        self.configurations = configurations
        super().__init__(f"search space of {configurations} colorings exceeds the "
                         f"2^{BUDGET_BITS} enumeration budget")


@dataclass(frozen=True)
class SearchSpec:
    topology: Topology
    m: int
    n: int
    k_max: int
    k: int
    mode: str = "min-monotone"
    size: int | None = None  # for mode "exists"
    monotone: bool = False  # for mode "exists"
    max_rounds: int | None = None
    shards: int = 1
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology.parse(self.topology))
        if self.m < 2 or self.n < 2:
            raise GridError(f"grid must be at least 2x2, got {self.m}x{self.n}")
        if not 1 <= self.k <= self.k_max:
            raise GridError(f"color {self.k} outside palette 1..{self.k_max}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "exists" and self.size is None:
            raise ValueError("mode 'exists' needs a size")
        if self.shards < 1 or self.workers < 1:
            raise ValueError("shards and workers must be >= 1")
        if self.m * self.n * math.log2(self.k_max) > BUDGET_BITS:
            raise SearchBudgetError(self.configurations)

    @property
    def configurations(self) -> int:
        return self.k_max ** (self.m * self.n)

    @property
    def rounds_cap(self) -> int:
        return self.max_rounds if self.max_rounds is not None else 2 * self.m * self.n

    @property
    def wants_monotone(self) -> bool:
        return self.mode == "min-monotone" or (self.mode == "exists" and self.monotone)


@dataclass
class SearchResult:
    spec: SearchSpec
    minimum_size: int | None = None
    witness_index: int | None = None
    configurations_scanned: int = 0
    simulated: int = 0
    dynamos: int = 0
    truncated: int = 0
    elapsed: float = 0.0
    witness: TorusGrid | None = field(default=None, repr=False)

    def merge(self, other: SearchResult) -> SearchResult:
        """Associative, order-independent combination of shard results."""
        best = min((r for r in (self, other) if r.minimum_size is not None),
                   key=lambda r: (r.minimum_size, r.witness_index), default=self)
        return SearchResult(
            self.spec, best.minimum_size, best.witness_index,
            self.configurations_scanned + other.configurations_scanned,
            self.simulated + other.simulated, self.dynamos + other.dynamos,
            self.truncated + other.truncated, max(self.elapsed, other.elapsed),
            best.witness)

    def summary(self) -> str:
        size = "none" if self.minimum_size is None else self.minimum_size
        s = self.spec
        return (f"search topology={s.topology.value} m={s.m} n={s.n} k_max={s.k_max} k={s.k} "
                f"mode={s.mode} minimum_size={size} witness_index={self.witness_index} "
                f"scanned={self.configurations_scanned} simulated={self.simulated} "
                f"truncated={self.truncated} elapsed={self.elapsed:.2f}s")


def decode(spec: SearchSpec, indices: np.ndarray) -> np.ndarray:
    """Colorings (rows of 1..k_max) for the given configuration indices."""
    size = spec.m * spec.n
    powers = spec.k_max ** np.arange(size - 1, -1, -1, dtype=np.int64)
    return ((indices[:, None] // powers) % spec.k_max + 1).astype(np.int8)


def coloring(spec: SearchSpec, index: int) -> TorusGrid:
    cells = decode(spec, np.array([index], dtype=np.int64))[0]
    return TorusGrid(spec.m, spec.n, spec.k_max, spec.topology, cells)


def batch_reaches(cells: np.ndarray, table: np.ndarray, k: int, max_rounds: int,
                  monotone: bool) -> tuple[np.ndarray, np.ndarray]:
    """For a batch of colorings, which reach all-k within ``max_rounds``.

    Returns (reached, truncated). Runs stop early on fixed points, period-2
    cycles and, with ``monotone``, on the first k cell that loses k. Longer
    cycles run to the cap and count as truncated.
    """
    reached = (cells == k).all(axis=1)
    truncated = np.zeros(len(cells), dtype=bool)
    idx = np.flatnonzero(~reached)
    cur = cells[idx]
    prev = None
    for _ in range(max_rounds):
        if not len(idx):
            break
        nxt = apply_rule(cur, table)
        done = (nxt == k).all(axis=1)
        dead = (nxt == cur).all(axis=1)
        if monotone:
            dead |= ((cur == k) & (nxt != k)).any(axis=1)
        if prev is not None:
            dead |= (nxt == prev).all(axis=1)
        reached[idx[done & ~dead]] = True
        keep = ~(done | dead)
        idx, prev, cur = idx[keep], cur[keep], nxt[keep]
    truncated[idx] = True
    return reached, truncated


def _scan(spec: SearchSpec, lo: int, hi: int, size_ok: Callable[[np.ndarray], np.ndarray],
          stop_on_first: bool, progress: Callable[[int, int], None] | None = None,
          chunk: int = 1 << 16) -> SearchResult:
    """Simulate the colorings with index in [lo, hi) whose k-count passes
    ``size_ok``; keep the smallest (k-count, index) dynamo."""
    t0 = time.perf_counter()
    table = neighbor_table(spec.topology, spec.m, spec.n)
    res = SearchResult(spec)
    next_report = (lo // PROGRESS_EVERY + 1) * PROGRESS_EVERY
    for start in range(lo, hi, chunk):
        stop = min(start + chunk, hi)
        indices = np.arange(start, stop, dtype=np.int64)
        cells = decode(spec, indices)
        ksize = (cells == spec.k).sum(axis=1)
        sel = np.flatnonzero(size_ok(ksize))
        res.configurations_scanned += stop - start
        if len(sel):
            reached, truncated = batch_reaches(cells[sel], table, spec.k, spec.rounds_cap,
                                               spec.wants_monotone)
            res.simulated += len(sel)
            res.truncated += int(truncated.sum())
            res.dynamos += int(reached.sum())
            if reached.any():
                hits = sel[reached]
                best = hits[np.lexsort((indices[hits], ksize[hits]))[0]]
                cand = (int(ksize[best]), int(indices[best]))
                if res.minimum_size is None or cand < (res.minimum_size, res.witness_index):
                    res.minimum_size, res.witness_index = cand
                    if stop_on_first:
                        break
        if progress is not None and stop >= next_report:
            progress(stop, spec.configurations)
            next_report = (stop // PROGRESS_EVERY + 1) * PROGRESS_EVERY
    res.elapsed = time.perf_counter() - t0
    return res


def _shard_bounds(spec: SearchSpec) -> list[tuple[int, int]]:
    total = spec.configurations
    cuts = [total * i // spec.shards for i in range(spec.shards + 1)]
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def _size_filter(spec: SearchSpec, below: int | None):
    if spec.mode == "exists":
        return _Eq(spec.size)
    if below is not None:
        return _Lt(below)
    return _All()


# picklable size predicates for worker processes
class _All:
    def __call__(self, ks):
        return np.ones(len(ks), dtype=bool)


@dataclass(frozen=True)
class _Lt:
    bound: int

    def __call__(self, ks):
        return ks < self.bound


@dataclass(frozen=True)
class _Eq:
    size: int

    def __call__(self, ks):
        return ks == self.size


def _run_shards(spec: SearchSpec, size_ok, stop_on_first: bool, progress) -> SearchResult:
    t0 = time.perf_counter()
    bounds = _shard_bounds(spec)
    total = SearchResult(spec)
    if spec.workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(_scan, spec, lo, hi, size_ok, stop_on_first)
                       for lo, hi in bounds]
            for fut in futures:
                part = fut.result()
                total = total.merge(part)
                if progress is not None:
                    progress(total.configurations_scanned, spec.configurations)
                if stop_on_first and part.minimum_size is not None:
                    for f in futures:
                        f.cancel()
                    break
    else:
        for lo, hi in bounds:
            part = _scan(spec, lo, hi, size_ok, stop_on_first, progress)
            total = total.merge(part)
            if stop_on_first and part.minimum_size is not None:
                break
    total.elapsed = time.perf_counter() - t0
    if total.witness_index is not None:
        total.witness = coloring(spec, total.witness_index)
    return total


def enumerate_min_dynamo(spec: SearchSpec, progress=None) -> SearchResult:
    """Smallest initial k-set over all colorings that reach all-k (monotonically
    in mode 'min-monotone'). Mode 'exists' stops at the first dynamo whose
    k-set has exactly ``spec.size`` cells."""
    stop = spec.mode == "exists"
    return _run_shards(spec, _size_filter(spec, None), stop, progress)


@dataclass
class LowerBoundResult:
    holds: bool
    bound: int
    search: SearchResult

    @property
    def counterexample(self) -> TorusGrid | None:
        return self.search.witness

    def __bool__(self):
        return self.holds

    def summary(self) -> str:
        return (f"lower_bound={self.bound} holds={'yes' if self.holds else 'no'} "
                f"counterexample_index={self.search.witness_index} "
                f"scanned={self.search.configurations_scanned} "
                f"simulated={self.search.simulated} truncated={self.search.truncated} "
                f"elapsed={self.search.elapsed:.2f}s")


def verify_lower_bound(spec: SearchSpec, bound: int, progress=None) -> LowerBoundResult:
    """Check that no coloring with fewer than ``bound`` k cells is a monotone
    dynamo; stops at the first (lowest-index) counterexample."""
    spec = replace(spec, mode="min-monotone")
    res = _run_shards(spec, _Lt(bound), True, progress)
    return LowerBoundResult(res.minimum_size is None, bound, res)


# brute-force block oracle -------------------------------------------------


@lru_cache(maxsize=None)
def _block_shapes(topology: Topology, m: int, n: int, threshold: int) -> np.ndarray:
    """valid[mask]: the cell set ``mask`` is connected and each member has at
    least ``threshold`` neighbor slots inside it."""
    size = m * n
    if size > 20:
        raise GridError("brute-force block enumeration is limited to 20 cells")
    table = neighbor_table(topology, m, n)
    valid = np.zeros(1 << size, dtype=bool)
    for mask in range(1, 1 << size):
        members = [v for v in range(size) if mask >> v & 1]
        if any(sum(mask >> int(u) & 1 for u in table[v]) < threshold for v in members):
            continue
        seen = 1 << members[0]
        stack = [members[0]]
        while stack:
            v = stack.pop()
            for u in table[v]:
                bit = 1 << int(u)
                if mask & bit and not seen & bit:
                    seen |= bit
                    stack.append(int(u))
        valid[mask] = seen == mask
    return valid


def brute_force_blocks(grid: TorusGrid, candidates: int, threshold: int) -> set[int]:
    """Inclusion-maximal valid subsets (as bitmasks) of the cell mask ``candidates``."""
    return set(_maximal_blocks(grid.topology, grid.m, grid.n, threshold, candidates))


@lru_cache(maxsize=1 << 16)
def _maximal_blocks(topology, m, n, threshold, candidates) -> tuple[int, ...]:
    valid = _block_shapes(topology, m, n, threshold)
    found = []
    sub = candidates
    while sub:
        if valid[sub]:
            found.append(sub)
        sub = (sub - 1) & candidates
    return tuple(s for s in found if not any(s != t and s & t == s for t in found))


def _mask(cells, n) -> int:
    return sum(1 << (i * n + j) for i, j in cells)


def blocks_agree(grid: TorusGrid, k: int) -> bool:
    """Peeling detectors versus subset enumeration on one grid."""
    kmask = _mask(grid.color_set(k), grid.n)
    other = ((1 << grid.size) - 1) & ~kmask
    peeled_k = {_mask(b, grid.n) for b in analysis.find_k_blocks(grid, k)}
    peeled_nk = {_mask(b, grid.n) for b in analysis.find_non_k_blocks(grid, k)}
    return (peeled_k == brute_force_blocks(grid, kmask, 2)
            and peeled_nk == brute_force_blocks(grid, other, 3))


def cross_validate_blocks(spec: SearchSpec, samples: int = 100_000, seed: int = 0) -> bool:
    """Compare both detectors with subset enumeration on random colorings."""
    if spec.m * spec.n > 12:
        raise GridError("block cross-validation needs m*n <= 12")
    rng = np.random.default_rng(seed)
    draws = rng.integers(1, spec.k_max + 1, size=(samples, spec.m * spec.n))
    mismatches = 0
    for cells in draws:
        grid = TorusGrid(spec.m, spec.n, spec.k_max, spec.topology, cells)
        if not blocks_agree(grid, spec.k):
            mismatches += 1
            log.warning("block detectors disagree on %s", cells.tolist())
    return mismatches == 0
