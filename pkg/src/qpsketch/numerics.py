"""Exponents, finite-array validation, norms and seeded sampling.

Matrices and vectors are plain float64 numpy arrays. The ``as_matrix`` /
``as_vector`` helpers validate them (finite entries, right rank) and return
read-only views so values can be shared freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

INF = math.inf

# Above this exponent |x|^p is evaluated after dividing by max|x|.
_LOGSPACE_P = 8.0


class DimensionError(ValueError):
    """Shapes are incompatible or exceed an enumeration cap."""


@dataclass(frozen=True)
class Exponent:
    """A norm index in [1, inf]; ``math.inf`` is the infinity sentinel."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if math.isnan(v) or v < 1.0:
            raise ValueError(f"exponent must lie in [1, inf], got {self.value!r}")
        object.__setattr__(self, "value", v)

    @classmethod
    def parse(cls, text: Union[str, float, int, "Exponent"]) -> "Exponent":
        if isinstance(text, Exponent):
            return text
        if isinstance(text, str):
            t = text.strip().lower()
            if t in ("inf", "infty", "infinity", "∞"):
                return cls(INF)
            if "/" in t:
                num, den = t.split("/", 1)
                return cls(float(num) / float(den))
            return cls(float(t))
        return cls(float(text))

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.value)

    def dual(self) -> "Exponent":
        return dual_exponent(self)

    def __float__(self):
        return self.value

    def __str__(self):
        return "inf" if self.is_inf else f"{self.value:.12g}"


ExponentLike = Union[Exponent, float, int, str]


def exponent(p: ExponentLike) -> Exponent:
    return Exponent.parse(p)


def dual_exponent(p: ExponentLike) -> Exponent:
    """Hölder conjugate: 1 <-> inf, otherwise p/(p-1)."""
    p = exponent(p)
    if p.is_inf:
        return Exponent(1.0)
    if p.value == 1.0:
        return Exponent(INF)
    # 1/p* = 1 - 1/p keeps the round trip exact for most inputs.
    return Exponent(1.0 / (1.0 - 1.0 / p.value))


def as_vector(x) -> np.ndarray:
    v = np.array(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has NaN or infinite entries")
    v.setflags(write=False)
    return v


def as_matrix(a) -> np.ndarray:
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has NaN or infinite entries")
    m.setflags(write=False)
    return m


def vector_norm(x, p: ExponentLike, axis: int = -1) -> Union[float, np.ndarray]:
    """l_p norm along ``axis``; works on batches (e.g. all columns at once)."""
    p = exponent(p)
    a = np.abs(np.asarray(x, dtype=np.float64))
    if a.size == 0:
        return 0.0 if a.ndim <= 1 else np.zeros(np.delete(a.shape, axis))
    if p.is_inf:
        out = a.max(axis=axis)
    elif p.value == 1.0:
        out = a.sum(axis=axis)
    elif p.value == 2.0:
        out = np.sqrt(np.einsum("...i,...i->...", np.moveaxis(a, axis, -1),
                                np.moveaxis(a, axis, -1)))
    elif p.value > _LOGSPACE_P:
        top = a.max(axis=axis, keepdims=True)
        safe = np.where(top > 0, top, 1.0)
        out = np.squeeze(safe, axis=axis) * np.power(
            np.power(a / safe, p.value).sum(axis=axis), 1.0 / p.value)
        out = np.where(np.squeeze(top, axis=axis) > 0, out, 0.0)
    else:
        out = np.power(np.power(a, p.value).sum(axis=axis), 1.0 / p.value)
    if np.ndim(out) == 0:
        return float(out)
    return out


def mat_apply(a, x) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot apply {a.shape} matrix to vector of shape {x.shape}")
    return a @ x


def transpose(a) -> np.ndarray:
    return as_matrix(np.asarray(a).T)


# --- randomness -------------------------------------------------------------

def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(seed: int, *lanes: int) -> int:
    """Deterministic 64-bit seed for sub-stream ``lanes`` of ``seed``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(x) for x in lanes]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_gaussian_matrix(rng, n: int, d: int, scale: float = 1.0) -> np.ndarray:
    if n < 1 or d < 1:
        raise DimensionError("matrix dimensions must be positive")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return make_rng(rng).standard_normal((n, d)) * scale


def sample_pstable(rng, p: ExponentLike, count: int) -> np.ndarray:
    """Symmetric p-stable variates by the Chambers-Mallows-Stuck transform.

    Convention: X = sin(pT)/cos(T)^(1/p) * (cos((1-p)T)/W)^((1-p)/p) with
    T ~ U(-pi/2, pi/2), W ~ Exp(1). p=1 gives standard Cauchy and p=2 gives
    N(0, 2). Estimators divide by calibrated medians, so the convention
    cancels downstream.
    """
    p = float(exponent(p).value) if not isinstance(p, (int, float)) else float(p)
    if not 0.0 < p <= 2.0:
        raise ValueError(f"p-stable sampling needs p in (0, 2], got {p}")
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = make_rng(rng)
    theta = rng.uniform(-math.pi / 2, math.pi / 2, size=count)
    w = rng.standard_exponential(size=count)
    if p == 1.0:
        return np.tan(theta)
    return (np.sin(p * theta) / np.cos(theta) ** (1.0 / p)
            * (np.cos((1.0 - p) * theta) / w) ** ((1.0 - p) / p))


# --- matrix text format -----------------------------------------------------

def format_matrix(a) -> str:
    a = as_matrix(a)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in a]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError("matrix file must start with a line 'n d'")
    n, d = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != n or any(len(r) != d for r in body):
        raise ValueError(f"matrix body does not match header {n}x{d}")
    vals = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    return as_matrix(vals)


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        return parse_matrix(fh.read())


def write_matrix(path, a) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix(a))
