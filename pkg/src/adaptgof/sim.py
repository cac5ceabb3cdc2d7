"""Simulation scenarios, a replication driver and property checks.

Scenarios (``X ~ N(0, I_p)``, ``e ~ N(0, 1)``, ``p1 = floor(p / 2)``):

====== ============================================ =========
name   response                                     null fit
====== ============================================ =========
H11    b0'X + a exp(-(b0'X)^2)                      linear
H12    b0'X + a cos(0.6 pi b0'X)                    linear
H13    b1'X + a (b2'X)^2                            linear
H14    b1'X + a exp(b2'X)                           linear
H21    (b1'X)^3 + a (b2'X)^2                        cubic
H22    exp(b1'X) + a b2'X                           exp
LOCAL  b0'X + a n^(-1/2) G(X)                       linear
====== ============================================ =========
"""

from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .baselines import gwz, icm, stute_zhu, zheng
from .cvm import default_table
from .exceptions import StudyError
from .gof import DEFAULT_LEVELS, run_test
from .model import Dataset
from .nls import fit as nls_fit
from .process import transform_marks
from .sdr import reduce

__all__ = [
    "SCENARIOS",
    "Scenario",
    "dims_for",
    "directions",
    "generate",
    "SizePowerTable",
    "run_study",
    "replication_seed",
    "qhat_frequencies",
    "population_transform_weight",
    "transformed_covariance",
]

log = logging.getLogger(__name__)

SCENARIOS = ("H11", "H12", "H13", "H14", "H21", "H22", "LOCAL")
NULL_FAMILY = {"H21": "cubic", "H22": "exp"}
TESTS = ("acm", "sz", "zheng", "gwz", "icm")


def dims_for(n: int) -> int:
    """``floor(4 n^(1/4)) - 5``."""
    # small tolerance so exact fourth powers are not lost to rounding
    p = int(math.floor(4.0 * n ** 0.25 + 1e-9)) - 5
    if p < 1:
        raise ValueError(f"n={n} gives a non-positive dimension")
    return p


def _expected_gaussian_bump() -> float:
    val, _ = integrate.quad(lambda z: np.exp(-z * z) * norm.pdf(z), -np.inf, np.inf)
    return val


def default_local_g(index: np.ndarray) -> np.ndarray:
    """Centred ``exp(-index^2)`` for a standard normal index."""
    return np.exp(-index * index) - _LOCAL_MEAN


_LOCAL_MEAN = _expected_gaussian_bump()


@dataclass(frozen=True)
class Scenario:
    """One data-generating design.  ``p`` defaults to :func:`dims_for`."""

    name: str
    a: float = 0.0
    n: int = 100
    p: Optional[int] = None
    local_g: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        if self.a < 0:
            raise ValueError("amplitude a must be >= 0")
        if self.p is None:
            object.__setattr__(self, "p", dims_for(self.n))
        if self.name in ("H13", "H14", "H21", "H22") and self.p < 2:
            raise ValueError(f"{self.name} needs p >= 2")

    @property
    def null_family(self) -> str:
        return NULL_FAMILY.get(self.name, "linear")

    @property
    def key(self) -> str:
        return f"{self.name}|n={self.n}|p={self.p}|a={self.a!r}"


def directions(p: int):
    """``(beta0, beta1, beta2)`` of the scenario displays."""
    p1 = p // 2
    b0 = np.ones(p) / np.sqrt(p)
    b1 = np.zeros(p)
    b2 = np.zeros(p)
    if p1 >= 1:
        b1[:p1] = 1.0 / np.sqrt(p1)
        b2[p - p1:] = 1.0 / np.sqrt(p1)
    return b0, b1, b2


def generate(s: Scenario, seed, noise: bool = True) -> Dataset:
    """Draw one dataset; ``noise=False`` drops the error term."""
    rng = np.random.default_rng(seed)
    n, p, a = s.n, s.p, s.a
    X = rng.standard_normal((n, p))
    eps = rng.standard_normal(n) if noise else np.zeros(n)
    b0, b1, b2 = directions(p)
    u0, u1, u2 = X @ b0, X @ b1, X @ b2
    if s.name == "H11":
        mean = u0 + a * np.exp(-u0 * u0)
    elif s.name == "H12":
        mean = u0 + a * np.cos(0.6 * np.pi * u0)
    elif s.name == "H13":
        mean = u1 + a * u2 * u2
    elif s.name == "H14":
        mean = u1 + a * np.exp(u2)
    elif s.name == "H21":
        mean = u1**3 + a * u2 * u2
    elif s.name == "H22":
        mean = np.exp(u1) + a * u2
    else:
        G = s.local_g or default_local_g
        mean = u0 + a * G(u0) / np.sqrt(n)
    return Dataset(X, mean + eps)


def replication_seed(seed: int, scenario: Scenario, rep: int) -> np.random.SeedSequence:
    """Stream for one replication from ``(seed, scenario key, rep)``."""
    return np.random.SeedSequence([int(seed), zlib.crc32(scenario.key.encode()), int(rep)])


@dataclass
class SizePowerTable:
    """Rejection proportions keyed by ``(test, scenario, n, p, a, level)``."""

    rows: list
    reps: int
    seed: int
    failures: dict = field(default_factory=dict)

    COLUMNS = ("test", "scenario", "n", "p", "a", "level", "rejections", "valid", "reps", "proportion")

    def proportion(self, test, scenario, a, n, level) -> float:
        for r in self.rows:
            if (r["test"], r["scenario"], r["a"], r["n"], r["level"]) == (test, scenario, a, n, level):
                return r["proportion"]
        raise KeyError((test, scenario, a, n, level))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in self.COLUMNS})
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0) -> "SizePowerTable":
        rows = []
        for raw in csv.DictReader(io.StringIO(text)):
            rows.append({
                "test": raw["test"], "scenario": raw["scenario"], "n": int(raw["n"]),
                "p": int(raw["p"]), "a": float(raw["a"]), "level": float(raw["level"]),
                "rejections": int(raw["rejections"]), "valid": int(raw["valid"]),
                "reps": int(raw["reps"]), "proportion": float(raw["proportion"]),
            })
        reps = rows[0]["reps"] if rows else 0
        return cls(rows, reps, seed)

    def to_text(self) -> str:
        """One block per scenario: rows (test, level, a), columns n (p)."""
        out = []
        for scen in dict.fromkeys(r["scenario"] for r in self.rows):
            sub = [r for r in self.rows if r["scenario"] == scen]
            ns = sorted({(r["n"], r["p"]) for r in sub})
            header = f"{'test':<8}{'level':>7}{'a':>7}" + "".join(f"{f'n={n},p={p}':>14}" for n, p in ns)
            out += [f"Scenario {scen} ({self.reps} replications, seed {self.seed})", header,
                    "-" * len(header)]
            keys = dict.fromkeys((r["test"], r["level"], r["a"]) for r in sub)
            for test, level, a in keys:
                cells = []
                for n, p in ns:
                    hit = [r for r in sub if (r["test"], r["level"], r["a"], r["n"]) == (test, level, a, n)]
                    cells.append(f"{hit[0]['proportion']:>14.4f}" if hit else f"{'':>14}")
                out.append(f"{test:<8}{level:>7g}{a:>7g}" + "".join(cells))
            out.append("")
        return "\n".join(out)


def _decisions(test, ds, fit_result, family, levels, seed, opts):
    X, y = ds.X, ds.y
    if test == "acm":
        rep = run_test(X, y, family, levels=levels, fit_result=fit_result, **opts)
        return rep.reject, {"q_hat": rep.q_hat}
    if test == "sz":
        keep = {k: opts[k] for k in ("mode", "heteroscedastic", "u0_quantile") if k in opts}
        return stute_zhu(X, y, family, fit_result, levels=levels, **keep).reject, {}
    if test == "zheng":
        return zheng(X, fit_result.residuals, levels=levels).reject, {}
    if test == "gwz":
        sdr = reduce(X, y, align_to=fit_result.beta)
        return gwz(X, fit_result.residuals, sdr, levels=levels).reject, {"q_hat": sdr.q_hat}
    if test == "icm":
        return icm(X, fit_result.residuals, seed=seed, levels=levels).reject, {}
    raise ValueError(f"unknown test {test!r}; choose from {TESTS}")


def _one_replication(args):
    """Run every requested test on one replication; returns (rep, result | error)."""
    scenario, rep, seed, tests, levels, opts = args
    ss = replication_seed(seed, scenario, rep)
    data_seed, boot_seed = ss.spawn(2)
    try:
        ds = generate(scenario, data_seed)
        fam = scenario.null_family
        fit_result = nls_fit(ds.X, ds.y, fam)
        if not fit_result.converged:
            return rep, f"fit did not converge (gradient norm {fit_result.gradient_norm:.3g})"
        bseed = int(boot_seed.generate_state(1)[0])
        out = {t: _decisions(t, ds, fit_result, fam, levels, bseed, opts)[0] for t in tests}
        return rep, out
    except Exception as exc:  # noqa: BLE001 - counted as a failed replication
        return rep, f"{type(exc).__name__}: {exc}"


def run_study(scenarios: Sequence[Scenario], tests: Sequence[str] = ("acm",),
              levels: Sequence[float] = DEFAULT_LEVELS, reps: int = 100, seed: int = 0,
              workers: int = 1, test_options: Optional[dict] = None,
              max_failure_rate: float = 0.01) -> SizePowerTable:
    """Monte Carlo rejection proportions for every (scenario, test, level).

    Each replication draws from its own seed stream, so the table is
    identical for any ``workers``.  Failed replications (exceptions or a
    non-converged fit) are excluded and counted; more than
    ``max_failure_rate`` of them in any scenario raises :class:`StudyError`.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for t in tests:
        if t not in TESTS:
            raise ValueError(f"unknown test {t!r}; choose from {TESTS}")
    levels = tuple(float(lv) for lv in levels)
    opts = dict(test_options or {})
    default_table()  # load once before forking
    rows, failures = [], {}
    for s in scenarios:
        jobs = [(s, r, seed, tuple(tests), levels, opts) for r in range(reps)]
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_one_replication, jobs, chunksize=max(1, reps // (4 * workers))))
        else:
            results = [_one_replication(j) for j in jobs]
        results.sort(key=lambda x: x[0])
        good = [res for _, res in results if isinstance(res, dict)]
        errors = [res for _, res in results if not isinstance(res, dict)]
        failures[s.key] = len(errors)
        if errors:
            log.warning("%s: %d of %d replications failed (first: %s)", s.key, len(errors), reps, errors[0])
        if len(errors) > max_failure_rate * reps:
            raise StudyError(
                f"{s.key}: {len(errors)} of {reps} replications failed; first error: {errors[0]}"
            )
        for t in tests:
            for lv in levels:
                k = sum(int(res[t][lv]) for res in good)
                rows.append({
                    "test": t, "scenario": s.name, "n": s.n, "p": s.p, "a": float(s.a),
                    "level": lv, "rejections": k, "valid": len(good), "reps": reps,
                    "proportion": k / len(good) if good else float("nan"),
                })
    return SizePowerTable(rows, reps, seed, failures)


def qhat_frequencies(scenario: Scenario, reps: int, seed: int = 0) -> dict:
    """Frequencies of the MRER dimension estimate over replications."""
    counts: dict = {}
    for r in range(reps):
        ds = generate(scenario, replication_seed(seed, scenario, r))
        q = reduce(ds.X, ds.y).q_hat
        counts[q] = counts.get(q, 0) + 1
    return dict(sorted(counts.items()))


_H_GRID = None


def population_transform_weight(x) -> np.ndarray:
    """``H(x) = int_{-inf}^x z phi(z) / (z phi(z) + 1 - Phi(z)) dz``.

    This is the integrated transform kernel for a linear model with a
    standard normal index and known parameters.
    """
    global _H_GRID
    if _H_GRID is None:
        z = np.linspace(-12.0, 8.0, 200_001)
        f = z * norm.pdf(z) / (z * norm.pdf(z) + norm.sf(z))
        _H_GRID = (z, integrate.cumulative_trapezoid(f, z, initial=0.0))
    z, H = _H_GRID
    x = np.asarray(x, dtype=float)
    if np.any(x > z[-1]):
        raise ValueError(f"argument beyond tabulated range (max {z[-1]})")
    return np.interp(x, z, H, left=0.0)


@dataclass
class CovarianceCheck:
    points: np.ndarray
    empirical: np.ndarray
    target: np.ndarray
    standard_errors: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return (self.empirical - self.target) / self.standard_errors

    def within(self, k: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z_scores) <= k))


def transformed_covariance(n: int = 200, reps: int = 2000, seed: int = 0, sigma: float = 1.0,
                      probs: Sequence[float] = (0.1, 0.3, 0.5, 0.7, 0.9),
                      p: int = 3, method: str = "population") -> CovarianceCheck:
    """Covariance of the transformed known-parameter process on a grid.

    Data follow ``Y = beta0'X + sigma e`` with ``||beta0|| = 1``.  The marked
    process uses the true errors and index.  ``method="population"`` applies
    the exact transform with the population plug-ins;
    ``method="empirical"`` runs the sample transform with ``a(u) = m(u) = u``.
    The target covariance is ``sigma^2 Phi(s ^ t)``.
    """
    pts = norm.ppf(np.asarray(probs, dtype=float))
    beta0 = np.ones(p) / np.sqrt(p)
    rng = np.random.default_rng(seed)
    vals = np.empty((reps, pts.size))
    for r in range(reps):
        X = rng.standard_normal((n, p))
        u = X @ beta0
        e = sigma * rng.standard_normal(n)
        if method == "population":
            ind = (u[:, None] <= pts[None, :]).astype(float)
            corr = u[:, None] * population_transform_weight(np.minimum(pts[None, :], u[:, None]))
            vals[r] = e @ (ind - corr) / np.sqrt(n)
        elif method == "empirical":
            order = np.argsort(u)
            us, es = u[order], e[order]
            _, tv, _, _, _ = transform_marks(us, es, us, us, np.full(n, sigma**2), u0_quantile=1.0)
            idx = np.searchsorted(us, pts, side="right") - 1
            vals[r] = np.where(idx >= 0, tv[np.maximum(idx, 0)], 0.0)
        else:
            raise ValueError("method must be 'population' or 'empirical'")
    c = vals - vals.mean(axis=0)
    prod = c[:, :, None] * c[:, None, :]
    emp = prod.mean(axis=0) * reps / (reps - 1)
    se = prod.std(axis=0, ddof=1) / np.sqrt(reps)
    target = sigma**2 * norm.cdf(np.minimum(pts[:, None], pts[None, :]))
    return CovarianceCheck(pts, emp, target, se)
