"""Command-line entry point: ``fairgate <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .core import PopulationState, ValidationError, parse_penalty
from .dynamics import (
    DynamicsKernel,
    check_birth_death,
    contraction_factor,
    simulate,
    stationary_candidates,
)
from .genlab import (
    GENERATOR_VERSION,
    band_kernel,
    perturb_kernel,
    random_band_kernel,
    random_kernel,
    sample_band_params,
)
from .ingest import IngestConfig, load_population
from .presets import discouragement_kernel, lsac_like_state, three_level_state
from .solver import (
    ThresholdUndefined,
    is_effective,
    is_fully_satisfactory,
    solve_penalized,
)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    params: dict
    inputs: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    generator_version: str = GENERATOR_VERSION
    outputs: dict = field(default_factory=dict)
    package_version: str = __version__


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _write_manifest(manifest: RunManifest, outputs) -> None:
    outputs = [Path(p) for p in outputs if p]
    if not outputs:
        return
    manifest.outputs = {str(p): sha256_of(p) for p in outputs}
    target = outputs[0].with_name(outputs[0].name + ".manifest.json")
    write_atomic(target, json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_population(path) -> PopulationState:
    return PopulationState.from_dict(_read_json(path))


def _load_kernel(path) -> DynamicsKernel:
    return DynamicsKernel.from_dict(_read_json(path))


def _fmt(x) -> str:
    if x is None:
        return "undefined"
    return repr(float(x))


def parse_lambda_grid(spec: str) -> list[float]:
    """``start:stop:step``, stop inclusive; an empty list when start > stop."""
    try:
        start, stop, stp = (float(p) for p in spec.split(":"))
    except ValueError:
        raise ValidationError(f"bad lambda grid {spec!r}; expected start:stop:step") from None
    if not stp > 0:
        raise ValidationError("lambda grid step must be > 0")
    if start > stop:
        return []
    count = int(math.floor((stop - start) / stp + 1e-9)) + 1
    return [round(start + i * stp, 12) for i in range(count)]


def parse_grid(spec: str) -> list[float]:
    """Comma list (``-2,-1,2``), ``start:stop:step`` range, or ``lsac``."""
    spec = spec.strip()
    if spec == "lsac":
        return lsac_like_state().grid.tolist()
    try:
        if ":" in spec:
            start, stop, stp = (float(p) for p in spec.split(":"))
            if not stp > 0:
                raise ValueError
            count = int(math.floor((stop - start) / stp + 1e-9)) + 1
            return [round(start + i * stp, 12) for i in range(count)]
        return [float(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"invalid grid spec {spec!r}") from None


def _default_seed() -> int:
    return int(os.environ.get("FAIRGATE_SEED", "0"))


# -- commands ----------------------------------------------------------------

def cmd_solve(args) -> int:
    state = _load_population(args.population)
    penalty = parse_penalty(args.penalty)
    sol = solve_penalized(state, penalty, args.lam)
    try:
        eff = is_effective(state, penalty, args.lam)
    except ThresholdUndefined:
        eff = None
    sat = is_fully_satisfactory(state, penalty, args.lam)
    summary = [
        f"delta={_fmt(sol.delta)}",
        f"objective={_fmt(sol.objective)}",
        f"delta_um={_fmt(sol.delta_um)}",
        f"beta_e={_fmt(sol.beta_e)}",
        f"beta_s={_fmt(sol.beta_s)}",
        f"effective={'undefined' if eff is None else str(eff).lower()}",
        f"fully_satisfactory={str(sat).lower()}",
    ]
    print("\n".join(summary))
    if args.out:
        write_atomic(args.out, sol.to_json(indent=2) + "\n")
        _write_manifest(
            RunManifest("solve", {"penalty": penalty.label, "lambda": args.lam}, {args.population: sha256_of(args.population)}),
            [args.out],
        )
    return EXIT_OK


def cmd_sweep(args) -> int:
    state = _load_population(args.population)
    penalty = parse_penalty(args.penalty)
    lines = ["lambda delta objective"]
    for lam in parse_lambda_grid(args.lambda_grid):
        sol = solve_penalized(state, penalty, lam)
        lines.append(f"{lam!r} {sol.delta!r} {sol.objective!r}")
    _emit("\n".join(lines) + "\n", args.out)
    _write_manifest(
        RunManifest(
            "sweep",
            {"penalty": penalty.label, "lambda_grid": args.lambda_grid},
            {args.population: sha256_of(args.population)},
        ),
        [args.out],
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    state = _load_population(args.population)
    kernel = _load_kernel(args.kernel)
    penalty = parse_penalty(args.penalty)
    rec = simulate(state, kernel, penalty, args.lam, args.t_max, convergence_tol=args.tol, keep_every=0)
    _emit(rec.to_table(), args.out)
    if args.final_state:
        write_atomic(args.final_state, json.dumps(rec.final_state.to_dict(), indent=2) + "\n")
    _write_manifest(
        RunManifest(
            "simulate",
            {"penalty": penalty.label, "lambda": args.lam, "t_max": args.t_max, "tol": args.tol},
            {args.population: sha256_of(args.population), args.kernel: sha256_of(args.kernel)},
        ),
        [args.out, args.final_state],
    )
    return EXIT_OK


def cmd_stationary(args) -> int:
    kernel = _load_kernel(args.kernel)
    alpha, factor, guaranteed = contraction_factor(kernel)
    band_ok, monotone_ok, unique = check_birth_death(kernel)
    cands = stationary_candidates(kernel)
    print(f"alpha={alpha!r} factor={factor!r} guaranteed={str(guaranteed).lower()}")
    print(f"band_ok={str(band_ok).lower()} monotone_ok={str(monotone_ok).lower()} unique_stationary={str(unique).lower()}")
    print(f"candidates={len(cands)}")
    for i, c in enumerate(cands):
        dist = " ".join(repr(float(v)) for v in c.distribution)
        print(f"candidate {i}: [{dist}] residual={c.residual(kernel)!r}")
    return EXIT_OK


def cmd_gen(args) -> int:
    grid = parse_grid(args.grid)
    if args.band is not None:
        seed = args.band if args.band >= 0 else _default_seed()
        params = sample_band_params(seed)
        kernel = band_kernel(params, grid)
        manifest = RunManifest("gen", {"mode": "band", "grid": grid, "params": params.to_dict()}, seeds=[seed])
    elif args.random is not None:
        seed = args.random if args.random >= 0 else _default_seed()
        kernel = random_kernel(seed, grid)
        manifest = RunManifest("gen", {"mode": "random", "grid": grid}, seeds=[seed])
    elif args.random_band is not None:
        seed = args.random_band if args.random_band >= 0 else _default_seed()
        kernel = random_band_kernel(seed, grid)
        manifest = RunManifest("gen", {"mode": "random-band", "grid": grid}, seeds=[seed])
    else:
        path, sigma, seed = args.perturb
        sigma, seed = float(sigma), int(seed)
        kernel = perturb_kernel(_load_kernel(path), sigma, seed)
        manifest = RunManifest("gen", {"mode": "perturb", "sigma": sigma}, {path: sha256_of(path)}, seeds=[seed])
    _emit(json.dumps(kernel.to_dict(), indent=2) + "\n", args.out)
    _write_manifest(manifest, [args.out])
    return EXIT_OK


def cmd_ingest(args) -> int:
    config = IngestConfig(
        group_column=args.group_column,
        group_a_values=frozenset(args.group_a),
        value_column=args.value_column,
        offset=args.offset,
        bin_width=None if args.bin_width <= 0 else args.bin_width,
        zero_policy="nudge" if args.nudge else "error",
        nudge=args.nudge or 1e-6,
        group_b_values=frozenset(args.group_b) if args.group_b else None,
    )
    state = load_population(args.csv, config)
    _emit(json.dumps(state.to_dict(), indent=2) + "\n", args.out)
    _write_manifest(
        RunManifest("ingest", {k: v for k, v in vars(args).items() if k != "func"}, {args.csv: sha256_of(args.csv)}),
        [args.out],
    )
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.name == "three-level":
        pop, kernel = three_level_state(), discouragement_kernel()
    else:
        pop, kernel = lsac_like_state(), None
    write_atomic(args.population, json.dumps(pop.to_dict(), indent=2) + "\n")
    if args.kernel and kernel is not None:
        write_atomic(args.kernel, json.dumps(kernel.to_dict(), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairgate", description="Penalized fair selection: solve, sweep, simulate.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def penalty_args(sp):
        sp.add_argument("--penalty", default="linear", help="linear | power:p | hinge:t | exponential (default linear)")

    sp = sub.add_parser("solve", help="solve the penalized problem once")
    sp.add_argument("population")
    penalty_args(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--out", help="write the solution JSON here")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="disparity and objective over a lambda grid")
    sp.add_argument("population")
    penalty_args(sp)
    sp.add_argument("--lambda-grid", required=True, help="start:stop:step (stop inclusive)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="run the myopic population dynamics")
    sp.add_argument("population")
    sp.add_argument("kernel")
    penalty_args(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--t-max", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=1e-12, help="early-stop threshold on per-step movement")
    sp.add_argument("--out")
    sp.add_argument("--final-state", help="write the last population JSON here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("stationary", help="stationary states and convergence diagnostics of a kernel")
    sp.add_argument("kernel")
    sp.set_defaults(func=cmd_stationary)

    sp = sub.add_parser("gen", help="generate a kernel")
    mode = sp.add_mutually_exclusive_group(required=True)
    mode.add_argument("--band", type=int, nargs="?", const=-1, metavar="SEED")
    mode.add_argument("--random", type=int, nargs="?", const=-1, metavar="SEED")
    mode.add_argument("--random-band", type=int, nargs="?", const=-1, metavar="SEED")
    mode.add_argument("--perturb", nargs=3, metavar=("KERNEL", "SIGMA", "SEED"))
    sp.add_argument("--grid", default="-2,-1,2", help="comma list, start:stop:step, or 'lsac'")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("ingest", help="build a population from a CSV")
    sp.add_argument("csv")
    sp.add_argument("--group-column", required=True)
    sp.add_argument("--group-a", nargs="+", required=True, help="values of the group column that form group A")
    sp.add_argument("--group-b", nargs="+", help="values forming group B (default: everything else)")
    sp.add_argument("--value-column", required=True)
    sp.add_argument("--offset", type=float, default=2.95)
    sp.add_argument("--bin-width", type=float, default=0.1, help="<= 0 disables binning")
    sp.add_argument("--nudge", type=float, help="replace zero qualifications by this value instead of failing")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("preset", help="write a built-in population (and kernel)")
    sp.add_argument("name", choices=["three-level", "lsac-like"])
    sp.add_argument("--population", required=True)
    sp.add_argument("--kernel")
    sp.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ThresholdUndefined, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
