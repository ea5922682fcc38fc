"""Command-line harness: ``pfdsqo {hs118,epd,sweep,verify}``.

Solver flags map one-to-one onto `SolverParams` fields. ``--config FILE``
reads a JSON object whose keys are flag names (``max_iter`` or
``max-iter``); values given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import bench
from .report import FORMATS, emit_report, to_human
from .solver import SolverParams, SolveReport, SubproblemFailure, InfeasibleStart, TerminationMode, solve

log = logging.getLogger("pfdsqo")

SOLVER_FLAGS = {
    # flag dest: (type, SolverParams field)
    "c": (float, "c"),
    "rho": (float, "rho"),
    "sigma": (float, "sigma"),
    "beta": (float, "beta"),
    "xi": (float, "xi"),
    "eps": (float, "eps"),
    "termination": (str, "termination"),
    "max_iter": (int, "max_iter"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    benchmark: str  # hs118 | epd
    q: tuple[int, ...] = (5,)
    units_file: str | None = None
    T: int | None = None
    instance: int | None = None
    valve_point: bool = False
    overrides: dict = field(default_factory=dict)
    fmt: str = "human"
    out: str | None = None
    seed: int = 0
    sweep_c: tuple[float, ...] = ()
    baseline: bool = False
    parallel: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.benchmark not in ("hs118", "epd"):
            raise ConfigError(f"unknown benchmark {self.benchmark!r}; expected hs118 or epd")
        if self.fmt not in FORMATS:
            raise ConfigError(f"unknown format {self.fmt!r}; expected one of {', '.join(FORMATS)}")
        if any(q < 5 for q in self.q):
            raise ConfigError("--q values must be at least 5")
        if any(not 0 <= c <= 1 for c in self.sweep_c):
            raise ConfigError("--sweep-c values must lie in [0, 1]")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        unknown = set(self.overrides) - {f for _, f in SOLVER_FLAGS.values()}
        if unknown:
            raise ConfigError(f"unknown solver settings: {', '.join(sorted(unknown))}")


@dataclass
class RunResult:
    label: str
    c: float
    baseline: bool
    report: SolveReport


# ---------------------------------------------------------------------------
# running


def _family_params(config: RunConfig, valve_point: bool) -> SolverParams:
    if config.benchmark == "epd":
        base = SolverParams.epd(valve_point=valve_point)
    else:
        base = SolverParams.academic()
    try:
        return replace(base, parallel=config.parallel, **config.overrides)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid solver setting: {err}") from err


def _instances(config: RunConfig):
    """Yield ``(label, problem, split, lambda0, valve_point)``."""
    if config.benchmark == "hs118":
        for q in config.q:
            p, split = bench.build_hs118(q)
            yield p.name, p, split, None, False
        return
    path = config.units_file or bench.default_units_path()
    fam = bench.load_units_file(path, config.T)
    if config.instance is not None:
        fam = bench.replicate_instance(fam, config.instance)
    if config.valve_point:
        fam = bench.with_valve_point(fam)
    p, split = bench.build_epd(fam)
    yield p.name, p, split, bench.epd_lambda0(fam), config.valve_point


def _solve_one(args):
    problem, u0, lam0, params = args
    return solve(problem, u0, lam0, params)


def plan_runs(config: RunConfig):
    jobs = []
    for label, problem, split, lam0, vp in _instances(config):
        u0 = bench.find_feasible_start(problem, split)
        params = _family_params(config, vp)
        cs = config.sweep_c or (params.c,)
        for c in cs:
            jobs.append((label, c, False, (problem, u0, lam0, replace(params, c=c))))
        if config.baseline:
            jobs.append((label, params.c, True, (problem, u0, lam0, replace(params, distributed=False))))
    return jobs


def run_benchmark(config: RunConfig) -> tuple[int, list[RunResult]]:
    """Solve every (instance, c) pair; returns the exit status and the results."""
    jobs = plan_runs(config)
    payloads = [j[3] for j in jobs]
    if config.jobs > 1 and len(jobs) > 1 and config.benchmark == "hs118":
        # problems hold closures; rebuild them inside the workers instead
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            reports = list(pool.map(_solve_hs118_job, [(j[0], j[3][1], j[3][3]) for j in jobs]))
    else:
        reports = [_solve_one(pl) for pl in payloads]
    results = [RunResult(label, c, base, rep) for (label, c, base, _), rep in zip(jobs, reports)]
    status = 0 if all(r.report.converged for r in results) else 1
    return status, results


def _solve_hs118_job(args):
    label, u0, params = args
    q = int(label.rsplit("q", 1)[1])
    problem, _ = bench.build_hs118(q)
    return solve(problem, u0, None, params)


# ---------------------------------------------------------------------------
# output


def _tag(res: RunResult) -> str:
    return f"{res.label}-{'baseline' if res.baseline else f'c{res.c:g}'}"


def summary_table(results: list[RunResult]) -> str:
    lines = [f"{'run':<28} {'status':<13} {'F*':>18} {'N_Vit/N_it':>12} {'RA':>5} {'time s':>8} {'RE_F %':>8}"]
    base = {r.label: r.report for r in results if r.baseline}
    total = 0.0
    for r in results:
        rep = r.report
        total += rep.wall_time
        re_f = ""
        b = base.get(r.label)
        if b is not None and not r.baseline and b.objective != 0:
            re_f = f"{(rep.objective - b.objective) / b.objective * 100:.2f}"
        lines.append(
            f"{_tag(r):<28} {rep.termination_reason.value:<13} {rep.objective:>18.8g} "
            f"{f'{rep.n_split_iter}/{rep.n_iter}':>12} {rep.splitting_ratio:>5.0%} {rep.wall_time:>8.2f} {re_f:>8}"
        )
    lines.append(f"cumulative time {total:.2f} s")
    return "\n".join(lines) + "\n"


def write_outputs(results: list[RunResult], fmt: str, out: str | None) -> str:
    """Emit reports. One result goes to ``out`` itself; several go into ``out`` as a directory."""
    if out is None:
        if len(results) == 1 and fmt != "human":
            return emit_report(results[0].report, fmt)
        if fmt == "human":
            return "".join(to_human(r.report) + "\n" for r in results) + summary_table(results)
        return "".join(f"# {_tag(r)}\n{emit_report(r.report, fmt)}" for r in results)
    path = Path(out)
    if len(results) == 1:
        path.parent.mkdir(parents=True, exist_ok=True)
        emit_report(results[0].report, fmt, path)
    else:
        path.mkdir(parents=True, exist_ok=True)
        ext = {"json": "json", "csv": "csv", "human": "txt"}[fmt]
        for r in results:
            emit_report(r.report, fmt, path / f"{_tag(r)}.{ext}")
    return summary_table(results)


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver")
    g.add_argument("--c", type=float, help="perturbation parameter in [0, 1]")
    g.add_argument("--rho", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--xi", type=float)
    g.add_argument("--eps", type=float)
    g.add_argument("--termination", choices=[m.value for m in TerminationMode])
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--parallel", action="store_true", default=None, help="solve the two subproblems in threads")
    o = p.add_argument_group("run")
    o.add_argument("--baseline", action="store_true", default=None, help="also run the non-distributed method")
    o.add_argument("--sweep-c", dest="sweep_c", type=_float_list, help="comma-separated c values")
    o.add_argument("--format", dest="fmt", choices=FORMATS)
    o.add_argument("--out", help="output file, or directory when several reports are produced")
    o.add_argument("--seed", type=int)
    o.add_argument("--jobs", type=int, help="worker processes for sweeps")
    o.add_argument("--config", help="JSON file with default flag values")
    o.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfdsqo", description="Partially feasible distributed SQO benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hs118", help="chain model grown from HS118")
    p.add_argument("--q", type=_int_list, help="scale parameter (comma-separated for several)")
    _common(p)

    p = sub.add_parser("epd", help="economic power dispatch")
    p.add_argument("--units-file", dest="units_file", help="unit data CSV (default: bundled placeholder data)")
    p.add_argument("--T", type=int, help="use the first T load periods")
    p.add_argument("--instance", type=int, help="replicated instance number 1..20")
    p.add_argument("--valve-point", dest="valve_point", action="store_true", default=None)
    _common(p)

    p = sub.add_parser("sweep", help="hs118 over several q and c values (default c = 0,0.5,1)")
    p.add_argument("--q", type=_int_list)
    _common(p)

    p = sub.add_parser("verify", help="run the self-check suites")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--full", action="store_true", help="include the larger benchmark runs")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


_CONFIG_TYPES = {
    "q": _int_list, "units_file": str, "T": int, "instance": int, "valve_point": bool,
    "c": float, "rho": float, "sigma": float, "beta": float, "xi": float, "eps": float,
    "termination": str, "max_iter": int, "parallel": bool, "baseline": bool,
    "sweep_c": _float_list, "fmt": str, "format": str, "out": str, "seed": int, "jobs": int, "full": bool,
}


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: line {err.lineno}: {err.msg}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    out = {}
    for key, val in data.items():
        name = key.replace("-", "_")
        if name not in _CONFIG_TYPES:
            raise ConfigError(f"config {path}: unknown key {key!r}")
        conv = _CONFIG_TYPES[name]
        if conv is bool and not isinstance(val, bool):
            raise ConfigError(f"config {path}: {key!r} must be true or false")
        if conv in (int, float) and isinstance(val, bool):
            raise ConfigError(f"config {path}: {key!r} must be a number")
        try:
            val = conv(val)
        except (TypeError, ValueError, argparse.ArgumentTypeError) as err:
            raise ConfigError(f"config {path}: bad value for {key!r}: {err}") from err
        out["fmt" if name == "format" else name] = val
    return out


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        merged = load_config_file(args.config)
        merged.update(values)  # command line wins
        values = merged
    command = values.pop("command")
    overrides = {}
    for dest, (_, fname) in SOLVER_FLAGS.items():
        if dest in values:
            overrides[fname] = values[dest]
    benchmark = "hs118" if command in ("hs118", "sweep") else "epd"
    sweep_c = values.get("sweep_c", ())
    if command == "sweep" and not sweep_c:
        sweep_c = (0.0, 0.5, 1.0)
    return RunConfig(
        benchmark=benchmark,
        q=tuple(values.get("q", (5,))),
        units_file=values.get("units_file"),
        T=values.get("T"),
        instance=values.get("instance"),
        valve_point=bool(values.get("valve_point", False)),
        overrides=overrides,
        fmt=values.get("fmt", "human"),
        out=values.get("out"),
        seed=values.get("seed", 0),
        sweep_c=tuple(sweep_c),
        baseline=bool(values.get("baseline", False)),
        parallel=bool(values.get("parallel", False)),
        jobs=values.get("jobs", 1),
    )


def _run_verify(args) -> int:
    from .verify import run_all

    values = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        merged = load_config_file(args.config)
        merged.update(values)
        values = merged
    results = run_all(seed=values.get("seed", 0), quick=not values.get("full", False))
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            return _run_verify(args)
        config = config_from_args(args)
        status, results = run_benchmark(config)
    except (ConfigError, bench.UnitFileError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (InfeasibleStart, SubproblemFailure) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 1
    text = write_outputs(results, config.fmt, config.out)
    sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
