"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from chtbench import harness
from chtbench.cht import ConfigError
from chtbench.optimizer import CHT_KINDS, XOVER_KINDS, ChtConfig, DeParams
from chtbench.problem import UnknownProblemError, get_problem, registry

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULT_VERIFY_PROBLEMS = "g06,g11,g24,ring5"

# config-file key -> (field, type) per section
_CHT_KEYS = {"cht": ("kind", str), "xi_max": ("xi_max", float), "xi_min": ("xi_min", float),
             "p": ("p", float), "eps": ("eps", float), "penalty_r": ("penalty_r", float),
             "sr_pf": ("sr_pf", float)}
_DE_KEYS = {"np": ("pop_size", int), "f": ("scale_factor", float), "cr": ("crossover_rate", float),
            "xover": ("crossover_kind", str), "max_fes": ("max_fes", int)}
_TOP_KEYS = {"problem": str, "runs": int, "seed": int, "cht": dict, "de": dict}


class CliConfigError(Exception):
    pass


def _typed(value, typ, where):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is dict and isinstance(value, dict):
        return value
    if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
        raise CliConfigError(f"{where}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def _flatten(raw: dict, where: str) -> dict:
    if not isinstance(raw, dict):
        raise CliConfigError(f"{where}: top level must be an object")
    flat = {}
    for key, value in raw.items():
        if key not in _TOP_KEYS:
            raise CliConfigError(f"{where}: unknown field '{key}'")
        value = _typed(value, _TOP_KEYS[key], f"{where}: field '{key}'")
        if key in ("cht", "de"):
            table = _CHT_KEYS if key == "cht" else _DE_KEYS
            for k, v in value.items():
                if k not in table:
                    raise CliConfigError(f"{where}: unknown field '{key}.{k}'")
                name, typ = table[k]
                flat[name] = _typed(v, typ, f"{where}: field '{key}.{k}'")
        else:
            flat[key] = value
    return flat


def load_config(path: str | os.PathLike) -> dict:
    """Parse a run-config JSON file into flat keyword values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliConfigError(f"{path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return _flatten(raw, str(path))


def parse_overrides(items: list[str]) -> dict:
    """``key=value`` pairs with dotted config keys, e.g. ``cht.xi_max=0.5`` or ``de.np=20``."""
    raw: dict = {}
    for item in items:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise CliConfigError(f"--set {item!r}: expected key=value")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        head, _, tail = key.partition(".")
        if tail:
            section = raw.setdefault(head, {})
            if not isinstance(section, dict):
                raise CliConfigError(f"--set {item!r}: '{head}' is not a section")
            section[tail] = value
        else:
            raw[head] = value
    return _flatten(raw, "--set")


def _add_run_flags(p: argparse.ArgumentParser, runs_default=25):
    p.add_argument("--config", help="run-config JSON; flags override its values")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="inline config override with dotted keys, e.g. cht.xi_max=0.5")
    p.add_argument("--problem")
    p.add_argument("--cht", dest="kind", choices=CHT_KINDS)
    p.add_argument("--runs", type=int)
    p.add_argument("--max-fes", dest="max_fes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--xi-max", dest="xi_max", type=float)
    p.add_argument("--xi-min", dest="xi_min", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--penalty-r", dest="penalty_r", type=float)
    p.add_argument("--sr-pf", dest="sr_pf", type=float)
    p.add_argument("--np", dest="pop_size", type=int)
    p.add_argument("--f", dest="scale_factor", type=float)
    p.add_argument("--cr", dest="crossover_rate", type=float)
    p.add_argument("--xover", dest="crossover_kind", choices=XOVER_KINDS)
    p.set_defaults(runs_default=runs_default)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output directory (default: $CHTBENCH_OUT or ./results)")
    p.add_argument("--jobs", type=int, default=None, help="parallel trials (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chtbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="repeated DE trials; writes results CSV and aggregate JSON")
    _add_run_flags(p)
    _common(p)

    p = sub.add_parser("verify", help="sign equivalence of pi against the rank-based criterion")
    p.add_argument("--pairs", type=int, default=100_000)
    p.add_argument("--problems", default=DEFAULT_VERIFY_PROBLEMS)
    p.add_argument("--scales", default="1", help="comma-separated scale factors for (f_hat, g_hat)")
    p.add_argument("--seed", type=int, default=0)
    _common(p)

    p = sub.add_parser("relax", help="error rate of pi under an inflated objective scale")
    p.add_argument("--points", type=int, default=100_000)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    _common(p)

    p = sub.add_parser("sortbench", help="evaluation-keyed versus pairwise sorting cost")
    p.add_argument("--sizes", default="10:200:10", help="start:stop:step or comma list")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--problem", default="G24")
    p.add_argument("--comparator", choices=("qpc", "frules"), default="qpc")
    p.add_argument("--seed", type=int, default=0)
    _common(p)

    p = sub.add_parser("sweep", help="convergence traces for several starting xi values")
    _add_run_flags(p, runs_default=1)
    p.add_argument("--xi-values", dest="xi_values", default="1,0.1,0.01,0.001,0.0001,0.00001")
    _common(p)

    sub.add_parser("list", help="list registered problems")
    return parser


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("CHTBENCH_OUT") or "results"
    return Path(out)


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else (os.cpu_count() or 1)


def _run_config(args) -> harness.RunConfig:
    values = load_config(args.config) if args.config else {}
    values.update(parse_overrides(args.overrides))
    for key in ("problem", "runs", "seed", "kind", "xi_max", "xi_min", "p", "eps", "penalty_r",
                "sr_pf", "pop_size", "scale_factor", "crossover_rate", "crossover_kind", "max_fes"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "problem" not in values:
        raise CliConfigError("no problem given (use --problem or the config 'problem' field)")
    cop = get_problem(values["problem"])
    cht = ChtConfig(**{k: values[k] for k in ("kind", "xi_max", "xi_min", "p", "eps", "penalty_r", "sr_pf")
                       if k in values})
    de = DeParams(**{k: values[k] for k in ("pop_size", "scale_factor", "crossover_rate",
                                            "crossover_kind", "max_fes") if k in values})
    if de.max_fes < de.pop_size:
        raise ConfigError(f"max_fes ({de.max_fes}) is smaller than the population ({de.pop_size})")
    runs = values.get("runs", args.runs_default)
    if runs < 1:
        raise ConfigError("runs must be positive")
    return harness.RunConfig(cop.name, cht, de, runs, values.get("seed", 0))


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CliConfigError(f"{what}: {exc}") from exc


def _sizes(text: str) -> list[int]:
    try:
        if ":" in text:
            start, stop, step = (int(t) for t in text.split(":"))
            return list(range(start, stop + 1, step))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CliConfigError(f"--sizes: {exc}") from exc


def _cmd_run(args) -> int:
    cfg = _run_config(args)
    stats = harness.run_trials(cfg, jobs=_jobs(args))
    out = _out_dir(args)
    stem = f"{cfg.problem}_{cfg.cht.kind}"
    harness.atomic_write(out / f"results_{stem}.csv", harness.results_csv(stats.records))
    harness.atomic_write(out / f"aggregate_{stem}.json", harness.aggregate_json(stats))
    sr = "n/a" if stats.sr is None else f"{stats.sr:.0%}"
    print(f"{cfg.problem} {cfg.cht.kind}: FR={stats.fr:.0%} SR={sr} best={stats.best!r} "
          f"median={stats.median!r} min-FES mean={stats.min_fes_mean}")
    print(f"wrote {out / f'results_{stem}.csv'}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    problems = [get_problem(name) for name in args.problems.split(",") if name.strip()]
    if args.pairs < 0:
        raise ConfigError("--pairs must be nonnegative")
    failed = False
    for scale in _floats(args.scales, "--scales"):
        if not scale > 0:
            raise ConfigError("scale factors must be positive")
        rep = harness.verify_sign_equivalence(problems, args.pairs, seed=args.seed, scale=scale)
        status = "PASS" if rep.passed else "FAIL"
        print(f"[{status}] scale={scale:g} checked={rep.checked} mismatches={rep.mismatches} "
              f"adjudicated={rep.adjudicated} per-problem={rep.per_problem}")
        if not rep.passed:
            failed = True
            print(json.dumps(rep.worst, indent=2))
    return EXIT_FAIL if failed else EXIT_OK


def _cmd_relax(args) -> int:
    if not args.c > 1:
        raise ConfigError("--c must exceed 1")
    if not 0 < args.xi <= 1:
        raise ConfigError("--xi must lie in (0, 1]")
    rep = harness.verify_relaxation(args.points, args.c, args.xi, seed=args.seed)
    status = "PASS" if rep.passed else "FAIL"
    print(f"[{status}] c={rep.c:g} xi={rep.xi:g} n={rep.n} rate={rep.empirical_rate:.6f} "
          f"mu={rep.mu:.6f} bound={rep.bound:.6f} outside-band={rep.outside_band}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_sortbench(args) -> int:
    get_problem(args.problem)
    rows = harness.sort_benchmark(_sizes(args.sizes), args.repeats, args.problem, args.seed, args.comparator)
    out = _out_dir(args)
    harness.atomic_write(out / "sortbench.csv", harness.sortbench_csv(rows))
    for r in rows:
        print(f"l={r.size:4d} eval_calls={r.eval_calls:4d} compare_calls={r.compare_calls:5d} "
              f"eval={r.eval_sort_time * 1e6:8.1f}us pairwise={r.pairwise_sort_time * 1e6:8.1f}us")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _run_config(args)
    xis = _floats(args.xi_values, "--xi-values")
    traces = harness.xi_sensitivity_sweep(cfg.problem, xis, cfg, runs=cfg.runs, p=cfg.cht.p, jobs=_jobs(args))
    out = _out_dir(args)
    for xi, runs in traces.items():
        path = out / f"trace_{cfg.problem}_xi{xi:g}.csv"
        harness.atomic_write(path, harness.trace_csv(harness.median_trace(runs)))
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_list(args) -> int:
    for cop in registry():
        best = "n/a" if cop.best_known_f is None else repr(cop.best_known_f)
        print(f"{cop.name:8s} dim={cop.dimension:<3d} constraints={cop.n_constraints} "
              f"delta={cop.delta:g} best_known_f={best}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "verify": _cmd_verify, "relax": _cmd_relax,
            "sortbench": _cmd_sortbench, "sweep": _cmd_sweep, "list": _cmd_list}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except UnknownProblemError as exc:
        print(f"error: unknown problem {exc.args[0]!r}", file=sys.stderr)
    except (CliConfigError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_CONFIG


def main():
    sys.exit(dispatch())
