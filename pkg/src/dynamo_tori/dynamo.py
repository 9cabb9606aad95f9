"""Minimum-size monotone dynamo constructions for the three tori."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

import numpy as np
from pysat.solvers import Cadical195

from . import analysis
from .dynamics import round_map, run, smp_local_rule
from .grid import Coord, GridError, Topology, TorusGrid, neighbor_table

THEOREM_TAGS = {
    Topology.MESH: "MeshT10",
    Topology.CORDALIS: "CordalisT12",
    Topology.SERPENTINUS: "SerpentinusT14",
}


class ConstructionError(GridError):
    pass


class FillerError(ConstructionError):
    """No filler found. ``exhausted`` is True when the whole search space was
    explored, i.e. no valid filler exists at all."""

    def __init__(self, message: str, exhausted: bool, nodes: int):
        super().__init__(message)
        self.exhausted = exhausted
        self.nodes = nodes


def seed_bound(topology: Topology | str, m: int, n: int) -> int:
    topology = Topology.parse(topology)
    if topology is Topology.MESH:
        return m + n - 2
    if topology is Topology.CORDALIS:
        return n + 1
    return min(m, n) + 1


def seed_cells(topology: Topology | str, m: int, n: int, offset: int = 0) -> frozenset[Coord]:
    """Initial k-set used by the construction for ``topology``.

    mesh: column 0 plus row 0 without (0, n // 2);
    cordalis: row ``offset`` plus the first cell of the next row;
    serpentinus: as cordalis when n <= m, otherwise column ``offset`` plus
    the top cell of the next column.
    """
    topology = Topology.parse(topology)
    if topology is Topology.MESH:
        cells = {(i, 0) for i in range(m)} | {(0, j) for j in range(n)}
        cells.discard((0, n // 2))
        return frozenset(cells)
    if topology is Topology.CORDALIS or n <= m:
        i = offset % m
        return frozenset({(i, j) for j in range(n)} | {((i + 1) % m, 0)})
    j = offset % n
    return frozenset({(i, j) for i in range(m)} | {(0, (j + 1) % n)})


def bootstrap_times(topology: Topology | str, m: int, n: int, seed: frozenset[Coord]) -> np.ndarray:
    """Round at which each cell first has two seed-derived neighbor slots.

    This is the spreading time of the target color when every non-target
    cell recolors exactly once it sees the target in two slots; -1 marks
    cells the seed never reaches.
    """
    table = neighbor_table(Topology.parse(topology), m, n)
    sigma = np.full(m * n, -1)
    for i, j in seed:
        sigma[i * n + j] = 0
    t = 0
    while True:
        reached = sigma >= 0
        fire = ~reached & (reached[table].sum(axis=1) >= 2)
        if not fire.any():
            return sigma.reshape(m, n)
        t += 1
        sigma[fire] = t


def predicted_rounds(topology: Topology | str, m: int, n: int) -> int:
    """Closed-form number of rounds for the construction on ``topology``."""
    topology = Topology.parse(topology)
    if m < 3 or n < 3:
        raise ConstructionError("round formulas need m, n >= 3")
    if topology is Topology.MESH:
        return 2 * max(math.ceil((n - 1) / 2) - 1, math.ceil((m - 1) / 2) - 1) + 1
    if topology is Topology.SERPENTINUS and m < n:
        raise ConstructionError(
            "no round formula for the column-seeded serpentinus (m < n)")
    half = (m - 1) // 2 - 1
    if m % 2:
        return half * n + math.ceil(n / 2)
    return half * n + 1


STATIC_CONDITIONS = ("bare", "theorem", "spreading")
TIMED_CONDITIONS = ("timed", "timed-bare")
CONDITIONS = STATIC_CONDITIONS + TIMED_CONDITIONS


class _Filler:
    """Backtracking assignment of colors C - {k} to the non-seed cells.

    Condition sets:
      bare       every non-k color class induces a forest, and around each
                 non-k cell the slots colored neither k nor the cell's own
                 color carry pairwise distinct colors;
      spreading  every cell behaves exactly as in the seed's bootstrap
                 spread: non-seed cells keep their color until the round
                 after they first see k in two slots, then turn k, and seed
                 cells never lose k;
      theorem    both of the above.
    """

    def __init__(self, grid_shape, topology, k_max, k, seed, conditions):
        if conditions not in STATIC_CONDITIONS:
            raise ValueError(f"conditions must be one of {STATIC_CONDITIONS}, got {conditions!r}")
        m, n = grid_shape
        self.table = [list(map(int, row)) for row in neighbor_table(topology, m, n)]
        self.k = k
        self.bare = conditions in ("bare", "theorem")
        self.palette = [c for c in range(1, k_max + 1) if c != k]
        size = m * n
        self.colors = [0] * size
        for i, j in seed:
            self.colors[i * n + j] = k
        self.order = [v for v in range(size) if self.colors[v] == 0]
        self.checkpoints: list[list[tuple[int, int]] | None] = [None] * size
        if conditions in ("spreading", "theorem"):
            sigma = bootstrap_times(topology, m, n, seed).ravel()
            if (sigma < 0).any():
                raise ConstructionError("seed set does not spread to the whole torus")
            self.sigma = sigma.tolist()
            for z in range(size):
                self.checkpoints[z] = self._checkpoints(z)
        # union-find with an undo log, one forest for all colors
        self.parent = list(range(size))
        self.rank = [0] * size
        self.log: list[tuple[int, int, int]] = []
        self.nodes = 0

    def _checkpoints(self, z):
        """(round, expected color) pairs at which z's neighborhood changes."""
        sigma, k = self.sigma, self.k
        slots = [sigma[u] for u in self.table[z]]
        if sigma[z] == 0:
            horizon = max(slots) - 1
            return [(t, k) for t in sorted({0, *slots}) if t <= horizon]
        fire = sigma[z] - 1
        return [(t, 0) for t in sorted({0, *slots}) if t < fire] + [(fire, k)]

    def _spreads_ok(self, z) -> bool:
        colors, sigma, k = self.colors, self.sigma, self.k
        own = colors[z]
        for t, expected in self.checkpoints[z]:
            slots = [k if sigma[u] <= t else colors[u] for u in self.table[z]]
            got = smp_local_rule(slots, own)
            if got != (expected or own):
                return False
        return True

    def _root(self, v):
        while self.parent[v] != v:
            v = self.parent[v]
        return v

    def _place(self, v, c) -> bool:
        """Assign c to v; on failure leaves state unchanged."""
        colors, table = self.colors, self.table
        mark = len(self.log)
        colors[v] = c
        ok = True
        if self.bare:
            same = [u for u in table[v] if colors[u] == c]
            if len(set(same)) != len(same):
                ok = False  # doubled slot: a 2-cycle
            for u in dict.fromkeys(same) if ok else ():
                ru, rv = self._root(u), self._root(v)
                if ru == rv:
                    ok = False
                    break
                if self.rank[ru] > self.rank[rv]:
                    ru, rv = rv, ru
                self.log.append((ru, rv, self.rank[rv]))
                self.parent[ru] = rv
                if self.rank[ru] == self.rank[rv]:
                    self.rank[rv] += 1
        if ok:
            ok = all(self._local_ok(z) for z in (v, *table[v]))
        if not ok:
            self._undo(mark)
            colors[v] = 0
        return ok

    def _local_ok(self, z) -> bool:
        colors = self.colors
        own = colors[z]
        if own == 0:
            return True
        if self.bare and own != self.k:
            seen = set()
            for u in self.table[z]:
                c = colors[u]
                if c and c != own and c != self.k:
                    if c in seen:
                        return False
                    seen.add(c)
        if self.checkpoints[z] is not None and all(colors[u] for u in self.table[z]):
            return self._spreads_ok(z)
        return True

    def _undo(self, mark):
        while len(self.log) > mark:
            ru, rv, rank = self.log.pop()
            self.parent[ru] = ru
            self.rank[rv] = rank

    def solve(self, color_orders, node_limit) -> bool | None:
        """True on success, False if exhausted, None if the budget ran out."""
        order = self.order
        depth = 0
        choice = [0] * len(order)
        marks = [0] * len(order)
        while True:
            if depth == len(order):
                return True
            v = order[depth]
            cands = color_orders[v]
            placed = False
            while choice[depth] < len(cands):
                c = cands[choice[depth]]
                choice[depth] += 1
                self.nodes += 1
                if self.nodes > node_limit:
                    return None
                mark = len(self.log)
                if self._place(v, c):
                    marks[depth] = mark
                    placed = True
                    break
            if placed:
                depth += 1
                if depth < len(order):
                    choice[depth] = 0
                continue
            if depth == 0:
                return False
            depth -= 1
            self._undo(marks[depth])
            self.colors[order[depth]] = 0


class _TimedEncoding:
    """CNF for a run of the protocol unrolled over ``rounds`` rounds.

    x(t, v, c) is true iff cell v holds color c at time t. For every cell,
    round and color an auxiliary variable holds iff c fills at least two
    neighbor slots; the rule then reads: a color with two slots wins unless
    another color also has two, otherwise the cell keeps its color.

    Schedule mode pins the k-set at every round to the seed's bootstrap
    spread; rounds mode only asks for a monotone run that is all-k for the
    first time at ``rounds``.
    """

    def __init__(self, topology, m, n, k_max, k, seed, rounds=None, structural=False):
        self.table = [list(map(int, row)) for row in neighbor_table(topology, m, n)]
        self.size = m * n
        self.k_max, self.k = k_max, k
        self.sigma = bootstrap_times(topology, m, n, seed).ravel()
        if (self.sigma < 0).any():
            raise ConstructionError("seed set does not spread to the whole torus")
        self.schedule = rounds is None
        self.rounds = int(self.sigma.max()) if rounds is None else rounds
        self.structural = structural
        self.clauses: list[list[int]] = []
        self.top = (self.rounds + 1) * self.size * k_max
        seeded = {i * n + j for i, j in seed}
        self._states()
        for t in range(self.rounds):
            for v in range(self.size):
                self._transition(t, v)
        for v in range(self.size):
            self.clauses.append([self.x(0, v, k) if v in seeded else -self.x(0, v, k)])
            self.clauses.append([self.x(self.rounds, v, k)])
        if self.schedule:
            for t in range(self.rounds + 1):
                for v in range(self.size):
                    lit = self.x(t, v, k)
                    self.clauses.append([lit if self.sigma[v] <= t else -lit])
        else:
            for t in range(self.rounds):
                for v in range(self.size):
                    self.clauses.append([-self.x(t, v, k), self.x(t + 1, v, k)])
            if self.rounds:
                self.clauses.append([-self.x(self.rounds - 1, v, k) for v in range(self.size)])
        if structural:
            self._distinct_neighbors(seeded)

    def x(self, t, v, c) -> int:
        return 1 + (t * self.size + v) * self.k_max + (c - 1)

    def _new(self) -> int:
        self.top += 1
        return self.top

    def _states(self):
        colors = range(1, self.k_max + 1)
        for t in range(self.rounds + 1):
            for v in range(self.size):
                lits = [self.x(t, v, c) for c in colors]
                self.clauses.append(lits)
                self.clauses += [[-a, -b] for a, b in itertools.combinations(lits, 2)]

    def _transition(self, t, v):
        slots = self.table[v]
        colors = range(1, self.k_max + 1)
        pair = {}
        for c in colors:
            s = pair[c] = self._new()
            lits = [self.x(t, u, c) for u in slots]
            for a, b in itertools.combinations(lits, 2):
                self.clauses.append(sorted({-a, -b}) + [s])
            for i in range(4):
                self.clauses.append([-s] + lits[:i] + lits[i + 1:])
        for c in colors:
            nxt = self.x(t + 1, v, c)
            others = [pair[d] for d in colors if d != c]
            self.clauses.append([-pair[c]] + others + [nxt])  # unique winner
            own = self.x(t, v, c)
            self.clauses.append([-own] + list(pair.values()) + [nxt])  # no winner
            for a, b in itertools.combinations(colors, 2):
                self.clauses.append([-own, -pair[a], -pair[b], nxt])  # 2+2 tie

    def _distinct_neighbors(self, seeded):
        k = self.k
        for v in range(self.size):
            if v in seeded:
                continue
            slots = self.table[v]
            for c in range(1, self.k_max + 1):
                if c == k:
                    continue
                for d in range(1, self.k_max + 1):
                    if d in (c, k):
                        continue
                    for a, b in itertools.combinations(slots, 2):
                        lits = {-self.x(0, v, c), -self.x(0, a, d), -self.x(0, b, d)}
                        self.clauses.append(sorted(lits))

    def decode(self, model) -> list[int]:
        true = {lit for lit in model if lit > 0}
        return [next(c for c in range(1, self.k_max + 1) if self.x(0, v, c) in true)
                for v in range(self.size)]

    def forest_cuts(self, colors) -> list[list[int]]:
        """One clause per color class cycle in ``colors``, forbidding it."""
        cuts = []
        for c in range(1, self.k_max + 1):
            if c == self.k:
                continue
            adj: dict[int, list[int]] = {}
            for v in range(self.size):
                if colors[v] == c:
                    adj[v] = [u for u in self.table[v] if colors[u] == c]
            parent: dict[int, int] = {}
            for root in adj:
                if root in parent:
                    continue
                parent[root] = -1
                stack = [(root, -1)]
                while stack:
                    v, via = stack.pop()
                    skipped = False
                    for u in adj[v]:
                        if u == via and not skipped:
                            skipped = True  # the tree edge back, once
                            continue
                        if u in parent:
                            cycle = self._path(parent, v, u)
                            cuts.append(sorted({-self.x(0, w, c) for w in cycle}))
                            continue
                        parent[u] = v
                        stack.append((u, v))
        return cuts

    @staticmethod
    def _path(parent, a, b) -> set[int]:
        up_a = [a]
        while parent[up_a[-1]] != -1:
            up_a.append(parent[up_a[-1]])
        seen = set(up_a)
        path = {b}
        w = b
        while w not in seen:
            w = parent[w]
            path.add(w)
        return path | set(up_a[:up_a.index(w) + 1])


def _timed_filler(topology, m, n, k_max, k, seed, rounds, structural, rng_seed,
                  conflict_budget, max_cuts=500) -> list[int]:
    enc = _TimedEncoding(topology, m, n, k_max, k, seed, rounds, structural)
    rng = random.Random(rng_seed)
    phases = [enc.x(0, v, c) * rng.choice((1, -1))
              for v in range(enc.size) for c in range(1, k_max + 1)]
    total = 0
    with Cadical195(bootstrap_with=enc.clauses) as solver:
        if rng_seed:
            solver.set_phases(phases)
        for _ in range(max_cuts + 1):
            solver.conf_budget(conflict_budget)
            verdict = solver.solve_limited()
            total += solver.accum_stats().get("conflicts", 0)
            if verdict is None:
                raise FillerError("timed filler search hit the conflict budget", False, total)
            if not verdict:
                raise FillerError("no timed filler exists", True, total)
            colors = enc.decode(solver.get_model())
            cuts = enc.forest_cuts(colors) if structural else []
            if not cuts:
                return colors
            for clause in cuts:
                solver.add_clause(clause)
    raise FillerError(f"forest repair gave up after {max_cuts} rounds of cuts", False, total)


def generate_filler(topology: Topology | str, m: int, n: int, k_max: int, k: int,
                    seed: frozenset[Coord], rng_seed: int = 0, conditions: str = "theorem",
                    node_limit: int = 200_000, restarts: int = 20, rounds: int | None = None,
                    conflict_budget: int = 2_000_000) -> TorusGrid:
    """Color every cell outside ``seed`` under ``conditions``.

    bare, spreading, theorem
        backtracking over C - {k}, cells row-major. Seed 0 first tries
        colors in ascending order; other seeds, and every restart, shuffle
        them per cell.
    timed, timed-bare
        SAT search over the unrolled run: with ``rounds`` None the k-set
        must follow the bootstrap spread exactly, otherwise the run must be
        monotone and reach all-k in exactly ``rounds`` rounds. timed-bare
        adds the forest and distinct-neighbor conditions at time 0.
    """
    topology = Topology.parse(topology)
    if not 1 <= k <= k_max:
        raise GridError(f"color {k} outside palette 1..{k_max}")
    if conditions not in CONDITIONS:
        raise ValueError(f"conditions must be one of {CONDITIONS}, got {conditions!r}")
    what = f"{conditions} filler for {topology.value} {m}x{n} with {k_max} colors"
    if conditions in TIMED_CONDITIONS:
        try:
            colors = _timed_filler(topology, m, n, k_max, k, seed, rounds,
                                   conditions == "timed-bare", rng_seed, conflict_budget)
        except FillerError as exc:
            target = "the bootstrap schedule" if rounds is None else f"{rounds} rounds"
            raise FillerError(f"{exc} ({what}, {target})", exc.exhausted, exc.nodes) from None
        return TorusGrid(m, n, k_max, topology, colors)

    rng = random.Random(rng_seed)
    total_nodes = 0
    for attempt in range(restarts):
        filler = _Filler((m, n), topology, k_max, k, seed, conditions)
        orders = {}
        for v in filler.order:
            cands = list(filler.palette)
            if rng_seed != 0 or attempt > 0:
                rng.shuffle(cands)
            orders[v] = cands
        outcome = filler.solve(orders, node_limit)
        total_nodes += filler.nodes
        if outcome:
            return TorusGrid(m, n, k_max, topology, filler.colors)
        if outcome is False:
            raise FillerError(f"no {what} exists (search exhausted after {filler.nodes} nodes)",
                              True, total_nodes)
    raise FillerError(f"{what}: search hit the node budget {restarts} times "
                      f"({total_nodes} nodes)", False, total_nodes)


@dataclass(frozen=True)
class DynamoConstruction:
    grid: TorusGrid
    k: int
    seed_set: frozenset[Coord]
    predicted_rounds: int | None
    theorem_tag: str
    rng_seed: int = 0
    conditions: str = "theorem"  # filler condition set actually satisfied
    target_rounds: int | None = None  # rounds the filler was built for

    @property
    def seed_size(self) -> int:
        return len(self.seed_set)


def _targets(predicted: int | None, fastest: int) -> list[int | None]:
    """Round targets to try first; None stands for the bootstrap schedule.

    No run can beat the bootstrap spread, so a formula below ``fastest`` is
    unreachable and the schedule is the best available.
    """
    if predicted is None or predicted <= fastest:
        return [None]
    return [predicted, None]


def _construct(topology, m, n, k_max, k, seed, offset=0, conditions="auto",
               conflict_budget=300_000, slack=None) -> DynamoConstruction:
    """Seed placement plus filler search.

    With conditions "auto" the filler is searched as timed-bare, then timed,
    first for the formula's round count (when reachable), then for the
    bootstrap schedule, then for monotone runs of fastest, fastest + 1, ...,
    fastest + ``slack`` rounds (slack defaults to max(m, n)).
    """
    topology = Topology.parse(topology)
    if m < 3 or n < 3:
        raise ConstructionError(f"construction needs m, n >= 3, got {m}x{n}")
    if k_max < 4:
        raise ConstructionError(f"insufficient palette: {k_max} colors, need at least 4")
    if k is None:
        k = k_max
    if not 1 <= k <= k_max:
        raise ConstructionError(f"color {k} outside palette 1..{k_max}")
    cells = seed_cells(topology, m, n, offset)
    sigma0 = bootstrap_times(topology, m, n, cells)
    try:
        predicted = predicted_rounds(topology, m, n)
    except ConstructionError:
        predicted = None
    fastest = int(sigma0.max())
    targets = _targets(predicted, fastest)
    slower = range(fastest, fastest + (max(m, n) if slack is None else slack) + 1)

    if conditions == "auto":
        attempts = [(c, r) for r in targets for c in TIMED_CONDITIONS[::-1]]
        attempts += [("timed", r) for r in slower if r not in targets]
    elif conditions in TIMED_CONDITIONS:
        attempts = [(conditions, r) for r in targets]
        attempts += [(conditions, r) for r in slower if r not in targets]
    else:
        attempts = [(conditions, None)]
    failures = []
    for cond, target in attempts:
        try:
            grid = generate_filler(topology, m, n, k_max, k, cells, seed, cond, rounds=target,
                                   conflict_budget=conflict_budget)
            break
        except FillerError as exc:
            failures.append(str(exc))
    else:
        raise ConstructionError("no filler found: " + "; ".join(failures))

    if cond in ("bare", "theorem", "timed-bare"):
        report = analysis.analyze(grid, k)
        if not report.forests_ok or report.neighbor_condition_violations:
            raise ConstructionError(f"generated filler failed validation: {report.summary()}")
    if cond != "bare":
        rmap = round_map(grid, k)
        if not (rmap.result.reached(k) and rmap.result.monotone):
            raise ConstructionError(f"generated filler is not a monotone dynamo: "
                                    f"{rmap.result.summary()}")
        if target is None and not np.array_equal(rmap.sigma, sigma0):
            raise ConstructionError("generated filler does not follow the bootstrap spread")
        if target is not None and rmap.result.rounds != target:
            raise ConstructionError(f"generated filler takes {rmap.result.rounds} rounds, "
                                    f"not {target}")
    reached = int(sigma0.max()) if target is None else target
    if cond == "bare":
        reached = None
    return DynamoConstruction(grid, k, cells, predicted, THEOREM_TAGS[topology], seed, cond,
                              reached)


def construct_mesh_dynamo(m, n, k_max, k=None, seed=0, **kw) -> DynamoConstruction:
    return _construct(Topology.MESH, m, n, k_max, k, seed, **kw)


def construct_cordalis_dynamo(m, n, k_max, k=None, seed=0, offset=0, **kw) -> DynamoConstruction:
    return _construct(Topology.CORDALIS, m, n, k_max, k, seed, offset, **kw)


def construct_serpentinus_dynamo(m, n, k_max, k=None, seed=0, offset=0, **kw) -> DynamoConstruction:
    return _construct(Topology.SERPENTINUS, m, n, k_max, k, seed, offset, **kw)


def construct(topology, m, n, k_max, k=None, seed=0, offset=0, **kw) -> DynamoConstruction:
    return _construct(topology, m, n, k_max, k, seed, offset, **kw)


@dataclass(frozen=True)
class Assertion:
    name: str
    status: str  # pass | fail | skip
    detail: str

    def line(self) -> str:
        return f"assertion={self.name} status={self.status} detail={self.detail}"


@dataclass(frozen=True)
class VerificationReport:
    assertions: tuple[Assertion, ...]

    @property
    def passed(self) -> bool:
        return all(a.status != "fail" for a in self.assertions)

    def __getitem__(self, name) -> Assertion:
        for a in self.assertions:
            if a.name == name:
                return a
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [a.line() for a in self.assertions]


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def verify_grid(grid: TorusGrid, k: int, max_rounds: int | None = None,
                expected_rounds: int | None = None,
                expected_seed_size: int | None = None) -> VerificationReport:
    """Dynamic and structural checks of ``grid`` as a monotone k-dynamo."""
    result = run(grid, max_rounds, monotone_for=k)
    out = []
    if expected_rounds is None:
        out.append(Assertion("rounds", "skip", f"no formula; observed {result.summary()}"))
    else:
        ok = result.reached(k) and result.rounds == expected_rounds
        out.append(Assertion("rounds", _status(ok),
                             f"expected=mono/{k}/{expected_rounds} observed={result.outcome.value}"
                             f"/{result.color}/{result.rounds}"))
    out.append(Assertion("monotone", _status(bool(result.monotone) and result.reached(k)),
                         f"monotone={result.monotone} reached_k={result.reached(k)}"))
    out.append(Assertion("structure", _status(analysis.check_monotone_dynamo_structure(grid, k)),
                         "k-set is a union of k-blocks with no non-k-block outside"))
    size = int((grid.cells == k).sum())
    if expected_seed_size is None:
        out.append(Assertion("seed_size", "skip", f"size={size}"))
    else:
        out.append(Assertion("seed_size", _status(size == expected_seed_size),
                             f"size={size} bound={expected_seed_size}"))
    forests = {c: analysis.check_forest(grid, c) for c in range(1, grid.k_max + 1) if c != k}
    bad = [c for c, ok in forests.items() if not ok]
    out.append(Assertion("forests", _status(not bad), f"cyclic_colors={bad or 'none'}"))
    viol = analysis.check_distinct_neighbor_colors(grid, k)
    out.append(Assertion("neighbor_colors", _status(not viol), f"violations={len(viol)}"))
    return VerificationReport(tuple(out))


def verify_construction(dc: DynamoConstruction, max_rounds: int | None = None) -> VerificationReport:
    g = dc.grid
    return verify_grid(g, dc.k, max_rounds, expected_rounds=dc.predicted_rounds,
                       expected_seed_size=seed_bound(g.topology, g.m, g.n))
