"""Command line interface.

Every subcommand reads an optional flat ``key = value`` config file
(``--config``); any key may also be given as ``--key value`` and flags win.
Unknown keys are rejected. With ``--output-dir`` the command writes its CSV
outputs there together with ``manifest.json``.

Exit codes: 0 when every check passes, 1 when one fails, 2 on usage or
config errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fracstokes import __version__
from fracstokes.fracode import NoConvergenceError, SingularSystemError, StepDegenerationError
from fracstokes.reports import CheckReport, write_reports

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


# {{{ config parsing


def _float_list(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], object]
    default: str | None = None
    required: bool = False
    help: str = ""


def read_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        out[key] = value.strip()
    return out


def resolve_config(schema: dict[str, Key], file_values: dict[str, str],
                   flag_values: dict[str, str]) -> tuple[dict[str, object], dict[str, str]]:
    """Merge file and flag values, parse them and apply defaults.

    Returns the parsed values and the raw strings echoed into the manifest.
    """
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")

    raw = {k: v for k, v in file_values.items()}
    raw.update({k: v for k, v in flag_values.items() if v is not None})

    parsed: dict[str, object] = {}
    resolved: dict[str, str | None] = {}
    for key, spec in schema.items():
        if key in raw:
            text = raw[key]
        elif spec.default is not None:
            text = spec.default
        elif spec.required:
            raise ConfigError(f"missing required key '{key}'")
        else:
            parsed[key] = resolved[key] = None
            continue
        try:
            parsed[key] = spec.parse(text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for key '{key}': {text!r} ({exc})") from None
        resolved[key] = text
    return parsed, resolved


def thread_count() -> int:
    raw = os.environ.get("FRACSTOKES_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FRACSTOKES_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("FRACSTOKES_THREADS must be non-negative")
    return n or (os.cpu_count() or 1)


def instance_seeds(seed: int, n: int) -> list[int]:
    """Independent 64-bit seeds for ``n`` sweep instances."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def parallel_map(fn, items: list) -> list:
    threads = min(thread_count(), max(len(items), 1))
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# }}}


# {{{ output


class Run:
    def __init__(self, command: str, config: dict[str, str], output_dir: str | None):
        self.command = command
        self.config = config
        self.out = None if output_dir is None else Path(output_dir)
        self.reports: list[CheckReport] = []
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            manifest = {
                "tool": "fracstokes",
                "version": __version__,
                "command": command,
                "config": dict(sorted(config.items())),
            }
            (self.out / "manifest.json").write_text(
                json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
            )

    def path(self, name: str) -> Path | None:
        return None if self.out is None else self.out / name

    def report(self, *reports: CheckReport, echo: bool = True) -> None:
        for r in reports:
            self.reports.append(r)
            if echo:
                print(r.summary())

    def finish(self) -> int:
        if self.out is not None and self.reports:
            write_reports(self.reports, self.out / "reports.csv")
        return EXIT_OK if all(r.passed for r in self.reports) else EXIT_FAIL


def worst_of(name: str, reports: list[CheckReport]) -> CheckReport:
    """The report closest to failing, renamed to summarize a sweep."""
    def key(r):
        scale = max(abs(r.lhs) + abs(r.rhs), np.finfo(float).tiny)
        return (r.passed, (r.margin + r.tol) / scale)

    w = min(reports, key=key)
    failed = sum(not r.passed for r in reports)
    note = f"worst of {len(reports)}, {failed} failed" + (f", {w.note}" if w.note else "")
    return CheckReport(name, w.lhs, w.rhs, w.tol, failed == 0, w.worst_location, note)


# }}}


# {{{ subcommands


def cmd_ml(cfg, run):
    from fracstokes.specfun import MLParams, mittag_leffler

    value = mittag_leffler(MLParams(cfg["alpha"], cfg["beta"]), cfg["z"])
    print(repr(float(value)))


def _load_trajectory(path):
    from fracstokes.fracops import read_csv

    if not Path(path).is_file():
        raise ConfigError(f"input file not found: {path}")
    return read_csv(path)


def _emit_trajectory(traj, cfg, run, name):
    from fracstokes.fracops import format_float, write_csv

    target = cfg["output"] or (run.path(name) if run.out is not None else None)
    if target is not None:
        write_csv(traj, target)
    else:
        print("t," + ",".join(f"v{i}" for i in range(traj.dim)))
        for t, row in zip(traj.t, traj.values):
            print(",".join(format_float(float(x)) for x in (t, *row)))


def cmd_fracint(cfg, run):
    from fracstokes.fracops import riemann_liouville_integral

    v = _load_trajectory(cfg["input"])
    _emit_trajectory(riemann_liouville_integral(v, cfg["alpha"]), cfg, run, "fracint.csv")


def cmd_fracdiff(cfg, run):
    from fracstokes.fracops import caputo_derivative

    v = _load_trajectory(cfg["input"])
    _emit_trajectory(caputo_derivative(v, cfg["alpha"]), cfg, run, "fracdiff.csv")


def cmd_solve_ode(cfg, run):
    from fracstokes.fracode import (
        affine_ivp,
        duhamel_closed_form,
        l1_implicit_solve,
        picard_solve,
    )
    from fracstokes.fracops import Trajectory, make_grid, sup_error, write_csv
    from fracstokes.specfun import MLParams, mittag_leffler

    alpha, T = cfg["alpha"], cfg["T"]
    lam = np.asarray(cfg["lambdas"])
    u0 = np.asarray(cfg["u0"])
    if lam.size != u0.size:
        raise ConfigError("key 'u0' must have one entry per entry of 'lambdas'")
    c = np.asarray(cfg["forcing"])
    if c.size == 1:
        c = np.full(lam.size, c[0])
    if c.size != lam.size:
        raise ConfigError("key 'forcing' must have one entry or one per entry of 'lambdas'")
    grid = make_grid(T, cfg["N"], cfg["grid"], alpha=alpha)
    f = Trajectory(grid, np.tile(c, (grid.nodes.size, 1)))

    method = cfg["method"]
    if method == "l1":
        u = l1_implicit_solve(alpha, np.diag(lam), f, u0)
    elif method == "closed_form":
        cols = [
            duhamel_closed_form(lam[i], 1.0, Trajectory(grid, f.values[:, i]), u0[i], alpha)
            .values[:, 0] for i in range(lam.size)
        ]
        u = Trajectory(grid, np.column_stack(cols))
    else:
        ivp = affine_ivp(alpha, np.diag(lam), lambda t: np.tile(c, (t.size, 1)), u0, T)
        u, trace = picard_solve(ivp, grid, tol=cfg["tol"], max_iter=cfg["max_iter"])
        for k, seg in enumerate(trace.segments):
            run.report(CheckReport.scalar(
                f"contraction_segment_{k}", seg.contraction_factor, 0.55,
                location=seg.t_end, note=f"{seg.iterations} iterations",
            ))

    if np.all(c == 0.0):
        exact = u0[None, :] * mittag_leffler(
            MLParams(alpha, 1.0), -lam[None, :] * grid.nodes[:, None] ** alpha
        )
        run.report(CheckReport.scalar("ml_oracle", sup_error(u, exact), cfg["oracle_tol"]))

    if run.out is not None:
        write_csv(u, run.path("solution.csv"))
    print(f"u(T) = {', '.join(repr(float(x)) for x in u.values[-1])}")


def _stokes_problem(cfg):
    from fracstokes.fracops import make_grid
    from fracstokes.stokes_galerkin import (
        GalerkinProblem,
        TrigForcing,
        abstract_modes,
        random_instance,
        torus_modes,
    )

    if cfg["u0"] is None and cfg["forcing"] is None and cfg["seed"] is not None:
        if cfg["lambdas"] is not None:
            raise ConfigError("random instances use torus modes; drop key 'lambdas'")
        return random_instance(cfg["seed"], K=cfg["K"], m=cfg["m"], N=cfg["N"], T=cfg["T"],
                               grid=cfg["grid"])

    for key in ("alpha", "nu"):
        if cfg[key] is None:
            raise ConfigError(f"missing required key '{key}'")
    modes = abstract_modes(cfg["lambdas"]) if cfg["lambdas"] else torus_modes(cfg["K"])
    m = cfg["m"] or len(modes)
    if m > len(modes):
        raise ConfigError(f"key 'm' = {m} exceeds the {len(modes)} available modes")
    ids = modes.ids[:m]

    u0 = np.zeros(m)
    for mid, val in (cfg["u0"] or []):
        if mid not in ids:
            raise ConfigError(f"key 'u0' names mode {mid}, outside 1..{m}")
        u0[ids.index(mid)] = val

    terms: dict[int, list] = {}
    for mid, triple in (cfg["forcing"] or []):
        if mid not in ids:
            raise ConfigError(f"key 'forcing' names mode {mid}, outside 1..{m}")
        terms.setdefault(mid, []).append(triple)
    forcing = TrigForcing({k: tuple(v) for k, v in terms.items()})

    grid = make_grid(cfg["T"], cfg["N"], cfg["grid"], alpha=cfg["alpha"])
    return GalerkinProblem(cfg["alpha"], cfg["nu"], modes, m, u0, forcing, grid, cfg["seed"])


def _parse_u0(s: str) -> list[tuple[int, float]]:
    out = []
    for item in s.split():
        head, _, val = item.partition("=")
        kind, _, mid = head.partition(":")
        if kind != "mode" or not val:
            raise ValueError(f"expected mode:<id>=<value>, got {item!r}")
        out.append((int(mid), float(val)))
    return out


def _parse_forcing(s: str) -> list[tuple[int, tuple[float, float, float]]]:
    out = []
    for item in s.split():
        parts = item.split(":")
        if len(parts) != 4 or parts[0] != "mode" or parts[2] != "trig":
            raise ValueError(f"expected mode:<id>:trig:<a,w,phi>, got {item!r}")
        triple = tuple(float(x) for x in parts[3].split(","))
        if len(triple) != 3:
            raise ValueError(f"expected three numbers in {item!r}")
        out.append((int(parts[1]), triple))
    return out


def cmd_solve_stokes(cfg, run):
    from fracstokes.stokes_galerkin import energy_report, solve, weak_residual, write_solution_csv

    problem = _stokes_problem(cfg)
    sol = solve(problem, cfg["method"])
    if run.out is not None:
        write_solution_csv(sol, run.path("solution.csv"))
    run.report(*energy_report(sol))
    print(f"weak residual = {weak_residual(sol):.17g}")


def cmd_verify_energy(cfg, run):
    from fracstokes.stokes_galerkin import energy_report, random_instance, solve

    seeds = instance_seeds(cfg["seed"], cfg["instances"])

    def one(s):
        p = random_instance(s, K=cfg["K"], m=cfg["m"], N=cfg["N"], grid=cfg["grid"])
        return energy_report(solve(p, "l1"))

    results = parallel_map(one, seeds)
    by_name: dict[str, list[CheckReport]] = {}
    for reports in results:
        for r in reports:
            by_name.setdefault(r.name, []).append(r)
            run.report(r)
    for name, reports in by_name.items():
        print(worst_of(name, reports).summary())


def _random_embedding_report(kind: str, seed: int, N: int) -> CheckReport:
    from fracstokes.fracops import TimeGrid, Trajectory
    from fracstokes.weighted_spaces import check_embedding, holder_lemma_check

    rng = np.random.default_rng(seed)
    T = rng.uniform(0.5, 3.0)
    g = TimeGrid.graded(T, N, rng.uniform(1.0, 2.0))
    v = Trajectory(g, random_smooth(rng, g.nodes, 2))
    alpha = rng.uniform(0.05, 0.95)
    p = rng.uniform(1.0, 4.0)
    if kind == "alpha_to_beta":
        return check_embedding(v, kind, alpha=alpha, beta=rng.uniform(alpha, 1.0), p=p)
    if kind == "p_to_q":
        return check_embedding(v, kind, alpha=alpha, p=p, q=p + rng.uniform(0.0, 4.0))
    if kind == "Lq_into_Lpalpha":
        return check_embedding(v, kind, alpha=alpha, p=p, q=p / alpha + rng.uniform(0.1, 4.0))
    return holder_lemma_check(v, alpha, p)


def random_smooth(rng, t, m):
    """Random trigonometric polynomial with four terms per component."""
    out = np.zeros((t.size, m))
    for i in range(m):
        a = rng.normal(size=4)
        w = rng.uniform(0.0, 6.0, size=4)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=4)
        out[:, i] = (a[:, None] * np.sin(w[:, None] * t[None, :] + phi[:, None])).sum(axis=0)
    return out


def witness_report(seed: int) -> CheckReport:
    from fracstokes.weighted_spaces import strictness_witnesses

    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.05, 0.95)
    beta = min(1.0, alpha + rng.uniform(0.01, 1.0))
    p = rng.uniform(1.0, 4.0)
    q = p + rng.uniform(0.05, 10.0)
    T = rng.uniform(0.5, 3.0)
    ws = strictness_witnesses(alpha, beta, p, q, T)
    bad = [w.name for w in ws if not w.check()[0]]
    return CheckReport.scalar(
        "strictness_witnesses", float(len(bad)), 0.0,
        note=f"alpha={alpha:.6g} beta={beta:.6g} p={p:.6g} q={q:.6g}"
        + (f" failed: {','.join(bad)}" if bad else ""),
    )


EMBEDDING_SWEEP = ("alpha_to_beta", "p_to_q", "Lq_into_Lpalpha", "holder_lemma")


def cmd_verify_embeddings(cfg, run):
    n = cfg["samples"]
    seeds = instance_seeds(cfg["seed"], n * (len(EMBEDDING_SWEEP) + 1))
    for k, kind in enumerate(EMBEDDING_SWEEP):
        chunk = seeds[k * n : (k + 1) * n]
        reports = parallel_map(lambda s, kind=kind: _random_embedding_report(kind, s, cfg["N"]),
                               chunk)
        run.report(*reports)
        print(worst_of(kind, reports).summary())
    reports = parallel_map(witness_report, seeds[len(EMBEDDING_SWEEP) * n :])
    run.report(*reports)
    print(worst_of("strictness_witnesses", reports).summary())


def cmd_shift_scaling(cfg, run):
    from fracstokes.fracops import TimeGrid
    from fracstokes.stokes_galerkin import (
        GalerkinProblem,
        TrigForcing,
        abstract_modes,
        shift_scaling,
        solve,
    )

    T, N = cfg["T"], cfg["N"]
    grid = TimeGrid.uniform(T, N)
    problem = GalerkinProblem(cfg["alpha"], cfg["nu"], abstract_modes([cfg["lambda"]]), 1,
                              [cfg["u0"]], TrigForcing(), grid)
    sol = solve(problem, cfg["method"])
    h = cfg["h"] or [T / 2**k for k in range(8, 3, -1)]
    res = shift_scaling(sol, cfg["r"], h)

    if run.out is not None:
        from fracstokes.fracops import format_float

        lines = ["h,shift_norm"] + [
            f"{format_float(a)},{format_float(b)}" for a, b in zip(res.shifts, res.shift_norms)
        ]
        run.path("shift_scaling.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    if res.degenerate:
        run.report(CheckReport("shift_scaling", 0.0, 0.0, 0.0, True, None, "degenerate"))
    else:
        run.report(CheckReport.scalar(
            "shift_scaling", res.bound - 0.1, res.slope,
            note=f"slope {res.slope:.6g}, exponent {res.bound:.6g}",
        ))


def cmd_convergence(cfg, run):
    from fracstokes.fracode import affine_ivp, l1_implicit_solve, picard_solve
    from fracstokes.fracops import empirical_orders, format_float, make_grid, sup_error
    from fracstokes.specfun import MLParams, mittag_leffler

    alpha, lam, T = cfg["alpha"], cfg["lambda"], cfg["T"]
    ns = cfg["Ns"]
    errors = []
    for n in ns:
        grid = make_grid(T, n, cfg["grid"], alpha=alpha)
        if cfg["method"] == "l1":
            u = l1_implicit_solve(alpha, [[lam]], None, [1.0], grid)
        else:
            u = picard_solve(affine_ivp(alpha, [[lam]], None, [1.0], T), grid)[0]
        exact = mittag_leffler(MLParams(alpha, 1.0), -lam * grid.nodes**alpha)
        errors.append(sup_error(u, exact))
    orders = empirical_orders(ns, errors) if len(ns) > 1 else np.array([])

    rows = ["N,error,order"]
    for i, (n, e) in enumerate(zip(ns, errors)):
        o = format_float(orders[i - 1]) if i > 0 else ""
        rows.append(f"{n},{format_float(e)},{o}")
        print(f"N = {n}: error = {e:.6e}" + (f", order = {orders[i - 1]:.4f}" if i else ""))
    if run.out is not None:
        run.path("convergence.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if cfg["min_order"] is not None and orders.size:
        run.report(CheckReport.scalar("convergence_order", cfg["min_order"], float(orders.min())))


def cmd_selftest(cfg, run):
    from fracstokes import selftest

    run.report(*selftest.run_all(quick=not cfg["full"]))


# }}}


# {{{ schemas


GRID_HELP = "uniform, graded or graded:<r>"

SCHEMAS: dict[str, tuple[Callable, dict[str, Key], str]] = {
    "ml": (cmd_ml, {
        "alpha": Key(float, required=True),
        "beta": Key(float, "1"),
        "z": Key(float, required=True),
    }, "evaluate the Mittag-Leffler function E_{alpha,beta}(z)"),
    "fracint": (cmd_fracint, {
        "alpha": Key(float, required=True),
        "input": Key(str, required=True, help="trajectory CSV (t,v0,...)"),
        "output": Key(str),
    }, "Riemann-Liouville integral of a trajectory CSV"),
    "fracdiff": (cmd_fracdiff, {
        "alpha": Key(float, required=True),
        "input": Key(str, required=True, help="trajectory CSV (t,v0,...)"),
        "output": Key(str),
    }, "L1 Caputo derivative of a trajectory CSV"),
    "solve-ode": (cmd_solve_ode, {
        "alpha": Key(float, required=True),
        "T": Key(float, "1"),
        "N": Key(int, "256"),
        "grid": Key(str, "uniform", help=GRID_HELP),
        "method": Key(str, "l1", help="picard, l1 or closed_form"),
        "tol": Key(float, "1e-10"),
        "max_iter": Key(int, "200"),
        "lambdas": Key(_float_list, "1", help="diagonal of A in cD u = c - A u"),
        "u0": Key(_float_list, "1"),
        "forcing": Key(_float_list, "0", help="constant forcing per component"),
        "oracle_tol": Key(float, "1e-3"),
    }, "solve a diagonal affine Caputo system"),
    "solve-stokes": (cmd_solve_stokes, {
        "alpha": Key(float),
        "nu": Key(float),
        "K": Key(int, "2"),
        "lambdas": Key(_float_list),
        "m": Key(int),
        "T": Key(float, "1"),
        "N": Key(int, "256"),
        "grid": Key(str, "uniform", help=GRID_HELP),
        "u0": Key(_parse_u0, help="mode:<id>=<val> pairs"),
        "forcing": Key(_parse_forcing, help="mode:<id>:trig:<a,w,phi> triples"),
        "method": Key(str, "l1", help="l1, closed_form or picard"),
        "seed": Key(int),
    }, "solve the Galerkin system and check the energy estimates"),
    "verify-embeddings": (cmd_verify_embeddings, {
        "seed": Key(int, "0"),
        "samples": Key(int, "100"),
        "N": Key(int, "200"),
    }, "random sweep of the weighted-space embeddings and witnesses"),
    "verify-energy": (cmd_verify_energy, {
        "seed": Key(int, "0"),
        "instances": Key(int, "100"),
        "N": Key(int, "256"),
        "K": Key(int, "2"),
        "m": Key(int),
        "grid": Key(str, "uniform", help=GRID_HELP),
    }, "random sweep of the Galerkin energy estimates"),
    "shift-scaling": (cmd_shift_scaling, {
        "alpha": Key(float, "0.75"),
        "r": Key(float, "2"),
        "nu": Key(float, "1"),
        "lambda": Key(float, "1"),
        "u0": Key(float, "1"),
        "T": Key(float, "1"),
        "N": Key(int, "1024"),
        "h": Key(_float_list, help="shifts, multiples of T/N"),
        "method": Key(str, "closed_form"),
    }, "fit the time-shift exponent for a single-mode solution"),
    "convergence": (cmd_convergence, {
        "alpha": Key(float, "0.6"),
        "lambda": Key(float, "1"),
        "T": Key(float, "1"),
        "grid": Key(str, "graded", help=GRID_HELP),
        "method": Key(str, "l1", help="l1 or picard"),
        "Ns": Key(_int_list, "256,512,1024,2048"),
        "min_order": Key(float),
    }, "refinement study against the Mittag-Leffler solution of cD u = -lambda u"),
    "selftest": (cmd_selftest, {
        "full": Key(_bool, "true", help="false runs a reduced-size suite"),
    }, "run the invariant suite"),
}

CHOICES = {
    ("solve-ode", "method"): ("picard", "l1", "closed_form"),
    ("solve-stokes", "method"): ("l1", "closed_form", "picard"),
    ("shift-scaling", "method"): ("l1", "closed_form"),
    ("convergence", "method"): ("l1", "picard"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracstokes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fracstokes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, schema, help_) in SCHEMAS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--output-dir", help="directory for CSV outputs and the manifest")
        for key, spec in schema.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="VALUE",
                           help=spec.help or None)
    return parser


# }}}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    fn, schema, _ = SCHEMAS[args.command]
    flags = {k: getattr(args, k) for k in schema}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg, resolved = resolve_config(schema, file_values, flags)
        allowed = CHOICES.get((args.command, "method"))
        if allowed is not None and cfg["method"] not in allowed:
            raise ConfigError(f"bad value for key 'method': {cfg['method']!r}")
        if "grid" in cfg:
            from fracstokes.fracops import make_grid

            try:
                make_grid(1.0, 2, cfg["grid"], alpha=cfg.get("alpha") or 0.5)
            except ValueError:
                raise ConfigError(f"bad value for key 'grid': {cfg['grid']!r}") from None
        thread_count()
        run = Run(args.command, resolved, args.output_dir)
        fn(cfg, run)
    except ConfigError as exc:
        print(f"fracstokes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoConvergenceError, StepDegenerationError, SingularSystemError) as exc:
        print(f"fracstokes {args.command}: solver failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, ArithmeticError) as exc:
        # domain errors from the numerical core are input errors
        print(f"fracstokes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run.finish()


if __name__ == "__main__":
    sys.exit(main())
