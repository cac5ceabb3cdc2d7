"""Command-line interface: ``adaptgof {fit,test,sdr,simulate,quantiles}``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .baselines import BASELINES, gwz, icm, stute_zhu, zheng
from .cvm import DEFAULT_LEVELS as TABLE_LEVELS
from .cvm import TABLE_FILE, cvm_quantiles, default_table
from .exceptions import IngestionError
from .gof import DEFAULT_LEVELS, run_test
from .kernel import KERNELS, SmoothingConfig
from .model import FAMILIES, Dataset
from .nls import FitOptions, fit as nls_fit
from .sdr import reduce
from .sim import Scenario, run_study

__all__ = ["ingest_csv", "main", "build_parser"]

DEFAULT_SEED = 0


def ingest_csv(path, standardize: bool = False) -> tuple[Dataset, list[str]]:
    """Read a headed CSV with a response column named ``y`` (any case).

    Returns the dataset and the predictor names in file order.  With
    ``standardize`` every column (response included) is centred and scaled
    to unit sample standard deviation.

    Raises
    ------
    IngestionError
        Missing ``y`` column, ragged rows or non-numeric cells; the message
        gives the 1-based line and the column name.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    lower = [h.lower() for h in header]
    if lower.count("y") != 1:
        what = "no" if "y" not in lower else "more than one"
        raise IngestionError(f"{path}: {what} response column named 'y' in header {header}")
    yi = lower.index("y")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestionError(
                f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}"
            )
        parsed = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                v = float("nan")
            if not np.isfinite(v):
                raise IngestionError(
                    f"{path}: line {lineno}, column '{name}': non-numeric value {cell.strip()!r}"
                )
            parsed.append(v)
        values.append(parsed)
    if not values:
        raise IngestionError(f"{path}: no data rows")
    A = np.array(values)
    if standardize:
        sd = A.std(axis=0, ddof=1)
        if np.any(sd == 0):
            bad = header[int(np.flatnonzero(sd == 0)[0])]
            raise IngestionError(f"{path}: column '{bad}' is constant and cannot be standardised")
        A = (A - A.mean(axis=0)) / sd
    names = [h for i, h in enumerate(header) if i != yi]
    X = np.delete(A, yi, axis=1)
    if X.shape[1] == 0:
        raise IngestionError(f"{path}: no predictor columns")
    return Dataset(X, A[:, yi]), names


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _levels(args) -> tuple:
    levels = set(DEFAULT_LEVELS)
    if getattr(args, "level", None) is not None:
        if not 0 < args.level < 1:
            raise ValueError("--level must lie in (0, 1)")
        levels.add(float(args.level))
    return tuple(sorted(levels, reverse=True))


def _bandwidth(text: str):
    if text == "auto":
        return text
    h = float(text)
    if not h > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive or 'auto'")
    return h


def _emit(text: str) -> None:
    sys.stdout.write(text.rstrip("\n") + "\n")


def _cmd_fit(args) -> None:
    ds, names = ingest_csv(args.data, args.standardize)
    res = nls_fit(ds.X, ds.y, args.model,
                  FitOptions(max_iterations=args.max_iter, gradient_tolerance=args.tol))
    kv = [("model", args.model), ("n", ds.n), ("p", ds.p)]
    kv += [(f"beta_{nm}", repr(float(b))) for nm, b in zip(names, res.beta)]
    kv += [(f"theta_{k + 1}", repr(float(t))) for k, t in enumerate(res.theta)]
    kv += [("rss", repr(res.rss)), ("converged", int(res.converged)),
           ("iterations", res.iterations), ("gradient_norm", repr(res.gradient_norm))]
    if args.format == "kv":
        _emit("\n".join(f"{k}={v}" for k, v in kv))
    else:
        width = max(len(k) for k, _ in kv)
        _emit("\n".join(f"{k:<{width}} : {v}" for k, v in kv))


def _cmd_test(args) -> None:
    ds, _ = ingest_csv(args.data, args.standardize)
    levels = _levels(args)
    table = default_table(args.table) if args.table else default_table()
    if args.baseline is None:
        rep = run_test(ds.X, ds.y, args.model, mode=args.mode,
                       heteroscedastic=args.heteroscedastic, n_directions=args.directions,
                       u0_quantile=args.u0_quantile, bandwidth=args.bandwidth,
                       kernel=args.kernel, levels=levels, max_iter=args.max_iter,
                       tol=args.tol, table=table)
        rep.diagnostics["seed"] = args.seed
        _emit(rep.to_keyvalue() if args.format == "kv" else rep.to_text())
        return
    fit_result = nls_fit(ds.X, ds.y, args.model,
                         FitOptions(max_iterations=args.max_iter, gradient_tolerance=args.tol))
    h = None if args.bandwidth == "auto" else args.bandwidth
    if args.baseline == "sz":
        cfg = SmoothingConfig(bandwidth=args.bandwidth, kernel=args.kernel)
        rep = stute_zhu(ds.X, ds.y, args.model, fit_result, cfg, mode=args.mode,
                        heteroscedastic=args.heteroscedastic, u0_quantile=args.u0_quantile,
                        levels=levels, table=table)
    elif args.baseline == "zheng":
        rep = zheng(ds.X, fit_result.residuals, h=h, levels=levels)
    elif args.baseline == "gwz":
        sdr = reduce(ds.X, ds.y, align_to=fit_result.beta)
        rep = gwz(ds.X, fit_result.residuals, sdr, h=h, levels=levels)
    else:
        rep = icm(ds.X, fit_result.residuals, seed=args.seed, levels=levels)
    rep.diagnostics["seed"] = args.seed
    _emit(rep.to_keyvalue() if args.format == "kv" else rep.to_text())


def _cmd_sdr(args) -> None:
    ds, names = ingest_csv(args.data, args.standardize)
    res = reduce(ds.X, ds.y, c=args.ridge, q=args.q)
    if args.format == "kv":
        kv = [("n", ds.n), ("p", ds.p), ("q_hat", res.q_hat), ("ridge", repr(res.ridge_c)),
              ("eigenvalues", " ".join(repr(float(v)) for v in res.eigenvalues))]
        for k in range(res.q_hat):
            kv.append((f"direction_{k + 1}", " ".join(repr(float(v)) for v in res.B_hat[:, k])))
        _emit("\n".join(f"{k}={v}" for k, v in kv))
        return
    lines = [f"n={ds.n} p={ds.p} ridge={res.ridge_c:.6g}",
             f"estimated structural dimension q_hat = {res.q_hat}", "eigenvalues:"]
    lines += [f"  {i + 1:>3}  {v:.6g}" for i, v in enumerate(res.eigenvalues)]
    lines.append("directions (original scale):")
    lines.append("  " + f"{'':<12}" + "".join(f"{f'dir{k + 1}':>12}" for k in range(res.q_hat)))
    for nm, row in zip(names, res.B_hat):
        lines.append("  " + f"{nm:<12}" + "".join(f"{v:>12.6f}" for v in row))
    _emit("\n".join(lines))


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_study_config(path) -> dict:
    """Parse a YAML study description.

    Keys: ``scenarios``, ``n``, ``a``, ``levels``, ``reps``, ``seed``,
    ``tests``, optional ``p``, ``workers`` and ``options`` (passed to the
    adaptive test).
    """
    cfg = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    unknown = set(cfg) - {"scenarios", "n", "a", "p", "levels", "reps", "seed", "tests",
                          "workers", "options"}
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    for key in ("scenarios", "n", "a", "reps", "seed"):
        if key not in cfg:
            raise ValueError(f"{path}: missing key '{key}'")
    return cfg


def _cmd_simulate(args) -> None:
    cfg = load_study_config(args.config)
    scenarios = [Scenario(name=str(s), a=float(a), n=int(n), p=cfg.get("p"))
                 for s in _as_list(cfg["scenarios"]) for n in _as_list(cfg["n"])
                 for a in _as_list(cfg["a"])]
    seed = int(cfg["seed"]) if args.seed is None else args.seed
    table = run_study(scenarios, tests=_as_list(cfg.get("tests", ["acm"])),
                      levels=_as_list(cfg.get("levels", list(DEFAULT_LEVELS))),
                      reps=int(cfg["reps"]), seed=seed,
                      workers=args.workers or int(cfg.get("workers", 1)),
                      test_options=cfg.get("options") or {})
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    _emit(table.to_csv() if args.format == "csv" else table.to_text())


def _cmd_quantiles(args) -> None:
    levels = tuple(args.levels) if args.levels else TABLE_LEVELS
    dist = cvm_quantiles(levels, method=args.method, n_draws=args.draws,
                         n_terms=args.terms, n_steps=args.steps, seed=args.seed)
    out = args.output or str(Path(__file__).with_name("data") / TABLE_FILE)
    dist.save(out)
    default_table.cache_clear()
    _emit(dist.to_text() + f"# written to {out}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adaptgof", description="Single-index model fitting and adaptive goodness-of-fit testing.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp, model=True):
        if model:
            sp.add_argument("--model", default="linear", choices=sorted(FAMILIES))
        sp.add_argument("--data", required=True, help="CSV file with a header and a 'y' column")
        sp.add_argument("--standardize", action="store_true", help="standardise every column first")

    f = sub.add_parser("fit", help="least-squares fit of a single-index model")
    data_args(f)
    f.add_argument("--max-iter", type=int, default=200)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--format", choices=("text", "kv"), default="text")
    f.set_defaults(func=_cmd_fit)

    t = sub.add_parser("test", help="goodness-of-fit test")
    data_args(t)
    t.add_argument("--level", type=float, default=0.05)
    t.add_argument("--mode", choices=("spherical", "general"), default="spherical")
    t.add_argument("--heteroscedastic", action="store_true")
    t.add_argument("--baseline", choices=BASELINES, default=None)
    t.add_argument("--bandwidth", type=_bandwidth, default="auto")
    t.add_argument("--kernel", choices=sorted(KERNELS), default="gaussian")
    t.add_argument("--directions", type=int, default=128)
    t.add_argument("--u0-quantile", type=float, default=0.99)
    t.add_argument("--seed", type=int, default=DEFAULT_SEED)
    t.add_argument("--max-iter", type=int, default=200)
    t.add_argument("--tol", type=float, default=1e-8)
    t.add_argument("--table", default=None, help="critical-value table file")
    t.add_argument("--format", choices=("text", "kv"), default="text")
    t.set_defaults(func=_cmd_test)

    s = sub.add_parser("sdr", help="cumulative slicing estimate of the central subspace")
    data_args(s, model=False)
    s.add_argument("--ridge", type=float, default=None)
    s.add_argument("--q", type=int, default=None, help="fix the structural dimension")
    s.add_argument("--format", choices=("text", "kv"), default="text")
    s.set_defaults(func=_cmd_sdr)

    m = sub.add_parser("simulate", help="Monte Carlo size/power study from a YAML config")
    m.add_argument("--config", required=True)
    m.add_argument("--workers", type=int, default=None)
    m.add_argument("--seed", type=int, default=None, help="override the config seed")
    m.add_argument("--csv", default=None, help="also write the table as CSV to this path")
    m.add_argument("--format", choices=("text", "csv"), default="text")
    m.set_defaults(func=_cmd_simulate)

    q = sub.add_parser("quantiles", help="regenerate the critical-value table")
    q.add_argument("--method", choices=("eigen", "paths"), default="eigen")
    q.add_argument("--draws", type=int, default=10**6)
    q.add_argument("--terms", type=int, default=1000)
    q.add_argument("--steps", type=int, default=10_000)
    q.add_argument("--seed", type=int, default=20240601)
    q.add_argument("--levels", type=float, nargs="+", default=None)
    q.add_argument("--output", default=None, help="defaults to the packaged table")
    q.set_defaults(func=_cmd_quantiles)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a one-line diagnostic
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"adaptgof: error: {type(exc).__name__}: {msg}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
