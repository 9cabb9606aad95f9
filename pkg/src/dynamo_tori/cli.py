"""Command-line entry point: simulate, construct, verify, search, render, batch."""

from __future__ import annotations

import argparse
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import analysis, dynamo, search
from .dynamics import format_trajectory, parse_round_csv, round_map, run
from .grid import GridError, GridFormatError, Topology, TorusGrid, format_grid, parse_grid, write_grid

log = logging.getLogger("dynamo_tori")

GLYPHS = "123456789abcdefghijklmnopqrstuvwxyz"


class CommandError(Exception):
    pass


def _read_grid(path: str) -> TorusGrid:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CommandError(f"{path}: {exc.strerror}") from None
    try:
        return parse_grid(text)
    except GridFormatError as exc:
        col = f":{exc.column}" if exc.column is not None else ""
        raise CommandError(f"{path}:{exc.line}{col}: {exc}") from None


def _write(path: str, text: str) -> None:
    Path(path).write_text(text)
    log.info("wrote %s", path)


def _target(grid: TorusGrid, k: int | None) -> int:
    k = grid.k_max if k is None else k
    if not 1 <= k <= grid.k_max:
        raise CommandError(f"color {k} outside palette 1..{grid.k_max}")
    return k


# subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    grid = _read_grid(args.grid)
    if args.k is None:
        # judge monotonicity for the color the run ends in, k_max otherwise
        probe = run(grid, args.max_rounds)
        k = probe.color if probe.color is not None else grid.k_max
    else:
        k = _target(grid, args.k)
    if args.roundmap or args.trace:
        rmap = round_map(grid, k, args.max_rounds)
        result = rmap.result
        if args.roundmap:
            _write(args.roundmap, rmap.to_csv())
        if args.trace:
            _write(args.trace, format_trajectory(result.trajectory))
    else:
        result = run(grid, args.max_rounds, monotone_for=k)
    print(result.summary())
    return 0


def cmd_construct(args) -> int:
    try:
        dc = dynamo.construct(args.topology, args.m, args.n, args.k_max, args.k,
                              seed=args.seed, offset=args.offset, conditions=args.conditions)
    except GridError as exc:
        raise CommandError(str(exc)) from None
    rounds = "none" if dc.predicted_rounds is None else dc.predicted_rounds
    print(f"seed_size={dc.seed_size} predicted_rounds={rounds} theorem={dc.theorem_tag} "
          f"k={dc.k} conditions={dc.conditions} seed={args.seed}")
    if args.out:
        write_grid(dc.grid, args.out)
    else:
        sys.stdout.write(format_grid(dc.grid))
    return 0


def construction_expectations(grid: TorusGrid, k: int) -> tuple[int | None, int | None]:
    """(expected rounds, expected seed size) when the k-set of ``grid`` is one
    of the construction seeds for its topology, else (None, None)."""
    kset = grid.color_set(k)
    offsets = range(max(grid.m, grid.n)) if grid.topology is not Topology.MESH else [0]
    if grid.m >= 3 and grid.n >= 3:
        for off in offsets:
            if kset == dynamo.seed_cells(grid.topology, grid.m, grid.n, off):
                try:
                    rounds = dynamo.predicted_rounds(grid.topology, grid.m, grid.n)
                except dynamo.ConstructionError:
                    rounds = None
                return rounds, dynamo.seed_bound(grid.topology, grid.m, grid.n)
    return None, None


def cmd_verify(args) -> int:
    grid = _read_grid(args.grid)
    k = _target(grid, args.k)
    rounds, size = construction_expectations(grid, k)
    if args.expect_rounds is not None:
        rounds = args.expect_rounds
    if args.expect_seed_size is not None:
        size = args.expect_seed_size
    report = dynamo.verify_grid(grid, k, args.max_rounds, rounds, size)
    structure = analysis.analyze(grid, k)
    print(f"verify k={k} {structure.summary()} seed={args.seed}")
    for line in report.lines():
        print(line)
    if args.report:
        _write(args.report, structure.to_text())
    return 0 if report.passed else 1


def _progress(done: int, total: int) -> None:
    print(f"progress {done}/{total} ({100 * done / total:.1f}%)", file=sys.stderr)


def cmd_search(args) -> int:
    k = args.k if args.k is not None else args.k_max
    try:
        spec = search.SearchSpec(Topology.parse(args.topology), args.m, args.n, args.k_max, k,
                                 mode=args.mode, size=args.size, monotone=args.monotone,
                                 max_rounds=args.max_rounds, shards=args.shards,
                                 workers=args.workers)
    except (GridError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    progress = None if args.quiet else _progress
    status = 0
    if args.cross_validate:
        ok = search.cross_validate_blocks(spec, args.samples, args.seed)
        print(f"cross_validate samples={args.samples} agree={'yes' if ok else 'no'} "
              f"seed={args.seed}")
        status |= not ok
    if args.bound is not None:
        res = search.verify_lower_bound(spec, args.bound, progress)
        print(res.summary() + f" seed={args.seed}")
        found = res.search
        status |= not res.holds
    else:
        found = search.enumerate_min_dynamo(spec, progress)
        print(found.summary() + f" seed={args.seed}")
    if found.witness is not None:
        if args.witness_out:
            write_grid(found.witness, args.witness_out)
        else:
            sys.stdout.write(format_grid(found.witness))
    return int(status)


def render_grid(grid: TorusGrid, highlight: int | None = None, glyph: str = "#") -> str:
    if grid.k_max > len(GLYPHS):
        raise CommandError(f"cannot render more than {len(GLYPHS)} colors")
    lines = []
    for row in grid.as_array():
        lines.append(" ".join(glyph if c == highlight else GLYPHS[c - 1] for c in row))
    return "\n".join(lines) + "\n"


def render_rounds(sigma: np.ndarray) -> str:
    width = max(len(str(int(v))) for v in sigma.ravel())
    return "".join(" ".join(str(int(v)).rjust(width) for v in row) + "\n" for row in sigma)


def cmd_render(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise CommandError(f"{args.file}: {exc.strerror}") from None
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if "," in first or first.strip().lstrip("-").isdigit():
        try:
            sigma = parse_round_csv(text)
        except ValueError as exc:
            raise CommandError(f"{args.file}: {exc}") from None
        sys.stdout.write(render_rounds(sigma))
    else:
        sys.stdout.write(render_grid(_read_grid(args.file), args.highlight, args.glyph))
    return 0


# batch ----------------------------------------------------------------------

POSITIONAL = {
    "simulate": ["grid"],
    "verify": ["grid"],
    "render": ["file"],
    "construct": ["topology", "m", "n", "k_max"],
    "search": ["topology", "m", "n", "k_max"],
}
INPUT_KEYS = {"grid", "file"}
OUTPUT_KEYS = {"out", "roundmap", "trace", "report", "witness_out"}


def parse_config(text: str) -> list[list[str]]:
    """Experiment config: one job per line, ``<command> key=value ...``;
    blank lines and ``#`` comments are ignored. Returns argv lists."""
    jobs = []
    seen_inputs: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = shlex.split(line, comments=True)
        if not toks:
            continue
        command, pairs = toks[0], toks[1:]
        if command not in POSITIONAL:
            raise CommandError(f"line {lineno}: unknown command {command!r}")
        params = {}
        for tok in pairs:
            key, eq, value = tok.partition("=")
            if not eq or not key:
                raise CommandError(f"line {lineno}: expected key=value, got {tok!r}")
            params[key.replace("-", "_")] = value
        missing = [p for p in POSITIONAL[command] if p not in params]
        if missing:
            raise CommandError(f"line {lineno}: {command} needs {', '.join(missing)}")
        job_inputs = {params[key] for key in INPUT_KEYS if key in params}
        seen_inputs |= job_inputs
        for key in OUTPUT_KEYS & params.keys():
            if params[key] in seen_inputs:
                raise CommandError(f"line {lineno}: output {params[key]!r} would overwrite an input")
        argv = [command] + [params.pop(p) for p in POSITIONAL[command]]
        for key, value in params.items():
            flag = "--" + key.replace("_", "-")
            argv += [flag] if value.lower() == "true" else [flag, value]
        jobs.append(argv)
    return jobs


def cmd_batch(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise CommandError(f"{args.config}: {exc.strerror}") from None
    jobs = parse_config(text)
    worst = 0
    for i, argv in enumerate(jobs, start=1):
        if args.seed is not None and "--seed" not in argv and argv[0] in ("construct", "search", "verify"):
            argv = argv + ["--seed", str(args.seed)]
        code = main(argv)
        print(f"job={i} command={argv[0]} exit={code}", file=sys.stderr)
        worst = max(worst, code)
    return worst


# parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynamo-tori",
                                     description="SMP recoloring on toroidal grids.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")

    p = sub.add_parser("simulate", help="run the protocol on a grid file")
    p.add_argument("grid")
    p.add_argument("--k", type=int, help="color whose monotonicity is tracked")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--roundmap", metavar="PATH", help="write the round map as CSV")
    p.add_argument("--trace", metavar="PATH", help="write every configuration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("construct", help="build a minimum-size monotone dynamo")
    p.add_argument("topology", choices=[t.value for t in Topology])
    p.add_argument("m", type=int)
    p.add_argument("n", type=int)
    p.add_argument("k_max", type=int)
    p.add_argument("--k", type=int, help="target color (default k_max)")
    p.add_argument("--offset", type=int, default=0, help="seed row/column for cordalis and serpentinus")
    p.add_argument("--conditions", default="auto", choices=("auto",) + dynamo.CONDITIONS)
    p.add_argument("--out", metavar="PATH")
    add_seed(p)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="structural and dynamic checks of a grid file")
    p.add_argument("grid")
    p.add_argument("--k", type=int, help="target color (default k_max)")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--expect-rounds", type=int)
    p.add_argument("--expect-seed-size", type=int)
    p.add_argument("--report", metavar="PATH", help="write the block/forest report")
    add_seed(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("search", help="exhaustive minimum dynamo search")
    p.add_argument("topology", choices=[t.value for t in Topology])
    p.add_argument("m", type=int)
    p.add_argument("n", type=int)
    p.add_argument("k_max", type=int)
    p.add_argument("--k", type=int, help="target color (default k_max)")
    p.add_argument("--mode", default="min-monotone", choices=search.MODES)
    p.add_argument("--size", type=int, help="k-set size for --mode exists")
    p.add_argument("--monotone", action="store_true", help="with --mode exists, require monotone runs")
    p.add_argument("--bound", type=int, help="check that no smaller monotone dynamo exists")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--witness-out", metavar="PATH")
    p.add_argument("--cross-validate", action="store_true",
                   help="also compare block detectors with brute force")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--quiet", action="store_true", help="no progress lines")
    add_seed(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("render", help="ASCII view of a grid file or round-map CSV")
    p.add_argument("file")
    p.add_argument("--highlight", type=int, metavar="K", help="draw color K with --glyph")
    p.add_argument("--glyph", default="#")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("batch", help="run jobs from an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override the seed of every job")
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
