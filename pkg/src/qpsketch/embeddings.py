"""Random linear maps that serve as building blocks for matrix sketches.

Every map is described by an immutable :class:`LinearMapDescriptor` and
materialized on demand, bit-identically for the same descriptor. Scaling
constants of the estimators come from a :class:`CalibrationTable`.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .numerics import (Exponent, ExponentLike, child_seed, exponent, make_rng,
                       sample_pstable, vector_norm)

KINDS = ("ose", "dvoretzky", "pstable", "highp", "blocksign_col", "blocksign_row")

DEFAULT_CAL_SAMPLES = 1_000_000
DEFAULT_CAL_SEED = 20240917
DVORETZKY_EXPANSION = 8.0
HIGHP_C0 = 4.0


# --- calibration ------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationEntry:
    """Scaling constants for one exponent.

    median_scale: median |X| of the vector-sketch statistic -- a standard
        p-stable variate for p <= 2, or E^(-1/p) with E ~ Exp(1) for p > 2
        (the max-stability statistic of the high-p sketch).
    mean_scale: (E|g|^p)^(1/p) for g ~ N(0, 1), used by Dvoretzky maps.
    """

    p: float
    median_scale: float
    mean_scale: float
    samples: int
    seed: int

    def __post_init__(self):
        if not (self.median_scale > 0 and self.mean_scale > 0):
            raise ValueError("calibration constants must be positive")


def calibrate(p: ExponentLike, samples: int = DEFAULT_CAL_SAMPLES,
              seed: int = DEFAULT_CAL_SEED) -> CalibrationEntry:
    p = exponent(p)
    if samples < 10_000:
        raise ValueError("calibration needs at least 10^4 samples")
    rng = make_rng(child_seed(seed, 1))
    if p.value <= 2.0:
        stat = np.abs(sample_pstable(rng, p.value, samples))
    elif p.is_inf:
        stat = np.ones(samples)
    else:
        stat = rng.standard_exponential(samples) ** (-1.0 / p.value)
    g = np.abs(make_rng(child_seed(seed, 2)).standard_normal(samples))
    if p.is_inf:
        # ||.||_inf has no moment form; keep the scale neutral.
        mean_scale = 1.0
    else:
        mean_scale = float(np.mean(g ** p.value) ** (1.0 / p.value))
    return CalibrationEntry(p.value, float(np.median(stat)), mean_scale, samples, seed)


class CalibrationTable:
    """Lazily filled map p -> CalibrationEntry."""

    def __init__(self, entries: Optional[Mapping[float, CalibrationEntry]] = None,
                 samples: int = DEFAULT_CAL_SAMPLES, seed: int = DEFAULT_CAL_SEED):
        self.entries: Dict[float, CalibrationEntry] = dict(entries or {})
        self.samples = samples
        self.seed = seed

    def entry(self, p: ExponentLike) -> CalibrationEntry:
        key = exponent(p).value
        if key not in self.entries:
            self.entries[key] = calibrate(key, self.samples, self.seed)
        return self.entries[key]

    def median_scale(self, p: ExponentLike) -> float:
        return self.entry(p).median_scale

    def mean_scale(self, p: ExponentLike) -> float:
        return self.entry(p).mean_scale

    def dumps(self) -> str:
        lines = []
        for key in sorted(self.entries):
            e = self.entries[key]
            lines.append(f"{Exponent(e.p)} {e.median_scale!r} {e.mean_scale!r} {e.samples} {e.seed}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def loads(cls, text: str) -> "CalibrationTable":
        entries = {}
        for ln in text.splitlines():
            if not ln.strip() or ln.lstrip().startswith("#"):
                continue
            p, med, mean, samples, seed = ln.split()
            e = CalibrationEntry(Exponent.parse(p).value, float(med), float(mean),
                                 int(samples), int(seed))
            entries[e.p] = e
        return cls(entries)


@functools.lru_cache(maxsize=1)
def default_table() -> CalibrationTable:
    return CalibrationTable()


# --- descriptors ------------------------------------------------------------

@dataclass(frozen=True)
class LinearMapDescriptor:
    kind: str
    out_dim: int
    in_dim: int
    seed: int
    params: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown map kind {self.kind!r}")
        if self.out_dim < 1 or self.in_dim < 1:
            raise ValueError("map dimensions must be positive")

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def materialize(self, table: Optional[CalibrationTable] = None) -> np.ndarray:
        m = _materialize(self, table or default_table())
        m.setflags(write=False)
        return m

    def __call__(self, x, table: Optional[CalibrationTable] = None) -> np.ndarray:
        return self.materialize(table) @ np.asarray(x, dtype=np.float64)


def _params(**kw) -> tuple:
    return tuple(sorted(kw.items()))


def make_ose(seed: int, rows: int, d: int) -> LinearMapDescriptor:
    """Dense Gaussian subspace embedding with N(0, 1/rows) entries."""
    if rows < 1:
        raise ValueError("OSE needs at least one row")
    return LinearMapDescriptor("ose", rows, d, int(seed))


def make_dvoretzky(seed: int, p: ExponentLike, n: int,
                   expansion: float = DVORETZKY_EXPANSION) -> LinearMapDescriptor:
    """Gaussian map R^n -> R^m, m = ceil(expansion * n), with E||Tx||_p ~ ||x||_2."""
    p = exponent(p)
    if p.value > 2.0:
        raise ValueError(f"Dvoretzky embedding into l_p needs p in [1, 2], got {p}")
    if expansion < 1.0:
        raise ValueError("expansion factor must be at least 1")
    m = int(math.ceil(expansion * n))
    return LinearMapDescriptor("dvoretzky", m, n, int(seed), _params(p=p.value))


def gaussian_lp_map(seed: int, p: ExponentLike, rows: int, cols: int) -> LinearMapDescriptor:
    """Dvoretzky-scaled Gaussian map of arbitrary shape (no expansion guard).

    Used where only a low-dimensional subspace has to be embedded, so fewer
    rows than columns are acceptable.
    """
    p = exponent(p)
    if p.value > 2.0:
        raise ValueError(f"l_p scaling needs p in [1, 2], got {p}")
    return LinearMapDescriptor("dvoretzky", rows, cols, int(seed), _params(p=p.value))


def make_pstable_sketch(seed: int, p: ExponentLike, rows: int, n: int) -> LinearMapDescriptor:
    p = exponent(p)
    if not 1.0 <= p.value <= 2.0:
        raise ValueError(f"p-stable sketch needs p in [1, 2], got {p}")
    if rows < 7 or rows % 2 == 0:
        raise ValueError(f"p-stable sketch needs an odd row count >= 7, got {rows}")
    return LinearMapDescriptor("pstable", rows, n, int(seed), _params(p=p.value))


def estimate_pstable(y, p: ExponentLike, table: Optional[CalibrationTable] = None) -> float:
    """median(|y_i|) / median_scale(p)."""
    table = table or default_table()
    y = np.asarray(y, dtype=np.float64)
    return float(np.median(np.abs(y)) / table.median_scale(p))


def highp_shape(p: ExponentLike, n: int, delta: float, c0: float = HIGHP_C0):
    """(repetitions, buckets per repetition) of the high-p sketch."""
    p = exponent(p)
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    frac = 1.0 if p.is_inf else 1.0 - 2.0 / p.value
    reps = max(1, int(math.ceil(math.log(1.0 / delta))))
    buckets = max(1, int(math.ceil(c0 * n ** frac * max(math.log(n), 1.0))))
    return reps, buckets


def make_highp_sketch(seed: int, p: ExponentLike, n: int, delta: float,
                      c0: float = HIGHP_C0, allow_identity: bool = True) -> LinearMapDescriptor:
    """Precision-sampling sketch for ||x||_p with p > 2.

    Each repetition scales coordinate i by E_i^(-1/p) (E_i ~ Exp(1)) and
    hashes it with a random sign into one of ``buckets`` counters. When the
    total row count reaches n the map is the identity and estimation exact.
    """
    p = exponent(p)
    if p.value <= 2.0:
        raise ValueError(f"high-p sketch needs p > 2, got {p}")
    reps, buckets = highp_shape(p, n, delta, c0)
    if allow_identity and reps * buckets >= n:
        return LinearMapDescriptor("highp", n, n, int(seed),
                                   _params(p=p.value, reps=0, buckets=n, delta=delta))
    return LinearMapDescriptor("highp", reps * buckets, n, int(seed),
                               _params(p=p.value, reps=reps, buckets=buckets, delta=delta))


def estimate_highp(y, p: ExponentLike, table: Optional[CalibrationTable] = None,
                   reps: Optional[int] = None) -> float:
    """Median over repetitions of the largest bucket magnitude, rescaled.

    ``reps=0`` marks the identity fallback: the exact l_p norm is returned.
    """
    y = np.asarray(y, dtype=np.float64)
    if reps == 0:
        return float(vector_norm(y, p))
    table = table or default_table()
    reps = reps or 1
    peaks = np.abs(y.reshape(reps, -1)).max(axis=1)
    return float(np.median(peaks) / table.median_scale(p))


def estimate_with(desc: LinearMapDescriptor, y,
                  table: Optional[CalibrationTable] = None) -> float:
    """Dispatch to the estimator that matches ``desc``."""
    if desc.kind == "pstable":
        return estimate_pstable(y, desc.param("p"), table)
    if desc.kind == "highp":
        return estimate_highp(y, desc.param("p"), table, reps=desc.param("reps"))
    raise ValueError(f"no vector estimator for map kind {desc.kind!r}")


def make_blocksign(seed: int, n: int, block: int, orientation: str = "col") -> LinearMapDescriptor:
    """+-1 block map: n coordinates in n/block consecutive blocks, one random sign each.

    ``col`` gives the n x (n/block) matrix S used as A S; ``row`` its
    transpose, used as S A.
    """
    if block < 1 or n % block:
        raise ValueError(f"block size {block} must divide {n}")
    kind = "blocksign_col" if orientation == "col" else "blocksign_row"
    if kind == "blocksign_col":
        return LinearMapDescriptor(kind, n, n // block, int(seed), _params(block=block))
    return LinearMapDescriptor(kind, n // block, n, int(seed), _params(block=block))


def _materialize(desc: LinearMapDescriptor, table: CalibrationTable) -> np.ndarray:
    rng = make_rng(desc.seed)
    m, n = desc.out_dim, desc.in_dim
    if desc.kind == "ose":
        return rng.standard_normal((m, n)) / math.sqrt(m)
    if desc.kind == "dvoretzky":
        p = desc.param("p")
        mu = table.mean_scale(p)
        return rng.standard_normal((m, n)) / (m ** (1.0 / p) * mu)
    if desc.kind == "pstable":
        return sample_pstable(rng, desc.param("p"), m * n).reshape(m, n)
    if desc.kind == "highp":
        reps, buckets = desc.param("reps"), desc.param("buckets")
        if reps == 0:
            return np.eye(n)
        p = desc.param("p")
        out = np.zeros((reps * buckets, n))
        cols = np.arange(n)
        for r in range(reps):
            scale = rng.standard_exponential(n)
            scale = np.ones(n) if math.isinf(p) else scale ** (-1.0 / p)
            h = rng.integers(0, buckets, size=n)
            s = rng.choice((-1.0, 1.0), size=n)
            out[r * buckets + h, cols] = s * scale
        return out
    if desc.kind in ("blocksign_col", "blocksign_row"):
        block = desc.param("block")
        size = desc.in_dim if desc.kind == "blocksign_row" else desc.out_dim
        signs = rng.choice((-1.0, 1.0), size=size)
        s = np.zeros((size, size // block))
        s[np.arange(size), np.arange(size) // block] = signs
        return s if desc.kind == "blocksign_col" else s.T
    raise AssertionError(desc.kind)
