"""Quantiles of ``W = int_0^1 B(t)^2 dt`` for a standard Brownian motion ``B``.

Two independent constructions are provided:

* the Karhunen-Loeve expansion ``W = sum_k Z_k^2 / ((k - 1/2)^2 pi^2)``,
  truncated at ``n_terms`` and sampled by Monte Carlo;
* direct simulation of random-walk paths with ``n_steps`` increments and a
  Riemann sum of ``B^2``.

The table shipped with the package is the first construction with 1000
terms and 10**6 draws.  Levels are upper-tail probabilities: the critical
value at level ``l`` is the ``1 - l`` quantile.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DEFAULT_LEVELS",
    "CvmDistribution",
    "eigen_expansion_sample",
    "brownian_path_sample",
    "cvm_quantiles",
    "default_table",
]

DEFAULT_LEVELS = (
    0.999, 0.99, 0.975, 0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.25, 0.2,
    0.15, 0.1, 0.075, 0.05, 0.025, 0.01, 0.005, 0.0025, 0.001,
)
DEFAULT_SEED = 20240601
TABLE_FILE = "cvm_quantiles.txt"


def eigen_expansion_sample(n_draws: int = 10**6, n_terms: int = 1000,
                           seed: int = DEFAULT_SEED, chunk: int = 4000) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k = np.arange(1, n_terms + 1)
    w = 1.0 / ((k - 0.5) ** 2 * np.pi**2)
    out = np.empty(n_draws)
    for start in range(0, n_draws, chunk):
        stop = min(start + chunk, n_draws)
        z = rng.standard_normal((stop - start, n_terms))
        out[start:stop] = (z * z) @ w
    return out


def brownian_path_sample(n_paths: int = 10**5, n_steps: int = 10_000,
                         seed: int = DEFAULT_SEED + 1, chunk: int = 500) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dt = 1.0 / n_steps
    out = np.empty(n_paths)
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        inc = rng.standard_normal((stop - start, n_steps), dtype=np.float32)
        paths = np.cumsum(inc, axis=1, dtype=np.float32)
        out[start:stop] = np.einsum("ij,ij->i", paths, paths, dtype=np.float64) * dt * dt
    return out


@dataclass
class CvmDistribution:
    """Upper-tail critical values of ``int_0^1 B^2`` with provenance metadata."""

    levels: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        values = np.asarray(self.values, dtype=float)
        order = np.argsort(-levels)
        self.levels, self.values = levels[order], values[order]
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("critical values must increase as the level decreases")

    @classmethod
    def from_sample(cls, sample, levels: Sequence[float] = DEFAULT_LEVELS, **metadata):
        levels = np.asarray(levels, dtype=float)
        if np.any((levels <= 0) | (levels >= 1)):
            raise ValueError("levels must lie in (0, 1)")
        values = np.quantile(np.asarray(sample), 1.0 - levels)
        metadata.setdefault("mean", float(np.mean(sample)))
        return cls(levels, values, metadata)

    def critical_value(self, level: float) -> float:
        """Critical value at ``level``, log-linearly interpolated off the grid."""
        if not 0 < level < 1:
            raise ValueError("level must lie in (0, 1)")
        hit = np.isclose(self.levels, level, rtol=1e-12, atol=0)
        if np.any(hit):
            return float(self.values[np.argmax(hit)])
        logl = np.log(self.levels)
        if not self.levels[-1] <= level <= self.levels[0]:
            raise ValueError(
                f"level {level} outside tabulated range [{self.levels[-1]}, {self.levels[0]}]"
            )
        return float(np.interp(-np.log(level), -logl, self.values))

    def p_value(self, statistic: float) -> tuple[float, str]:
        """P-value of ``statistic`` and a bound flag (``"="`` or ``"<"``).

        Log-linear interpolation between tabulated points; beyond the smallest
        level the p-value is reported as ``< min level``.
        """
        s = float(statistic)
        if s > self.values[-1]:
            return float(self.levels[-1]), "<"
        xs = np.concatenate([[0.0], self.values])
        logl = np.concatenate([[0.0], np.log(self.levels)])
        if s <= 0:
            return 1.0, "="
        return float(np.exp(np.interp(s, xs, logl))), "="

    def to_text(self) -> str:
        lines = [f"# {k}={v}" for k, v in sorted(self.metadata.items())]
        lines.append("# level,value")
        lines += [f"{lv!r},{val!r}" for lv, val in zip(self.levels.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "CvmDistribution":
        meta, levels, values = {}, [], []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            lv, val = line.split(",")
            levels.append(float(lv))
            values.append(float(val))
        return cls(np.array(levels), np.array(values), meta)

    @classmethod
    def load(cls, path) -> "CvmDistribution":
        return cls.from_text(Path(path).read_text())


def cvm_quantiles(levels: Sequence[float] = DEFAULT_LEVELS, method: str = "eigen",
                  n_draws: int = 10**6, n_terms: int = 1000, n_steps: int = 10_000,
                  seed: int = DEFAULT_SEED) -> CvmDistribution:
    """Tabulate critical values by Monte Carlo.

    ``method="eigen"`` samples the truncated eigen-expansion (``n_terms``
    terms); ``method="paths"`` simulates ``n_draws`` discretised Brownian
    paths with ``n_steps`` steps.
    """
    if method == "eigen":
        sample = eigen_expansion_sample(n_draws, n_terms, seed)
        meta = dict(method="eigen", n_terms=n_terms, n_draws=n_draws, seed=seed)
    elif method == "paths":
        sample = brownian_path_sample(n_draws, n_steps, seed)
        meta = dict(method="paths", n_steps=n_steps, n_draws=n_draws, seed=seed)
    else:
        raise ValueError("method must be 'eigen' or 'paths'")
    return CvmDistribution.from_sample(sample, levels, **meta)


@functools.lru_cache(maxsize=None)
def default_table(path: Optional[str] = None) -> CvmDistribution:
    """The cached critical-value table (package data unless ``path`` is given)."""
    if path is not None:
        return CvmDistribution.load(path)
    text = resources.files("adaptgof").joinpath("data", TABLE_FILE).read_text()
    return CvmDistribution.from_text(text)
