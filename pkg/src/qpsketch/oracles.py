"""Ground-truth q->p norm computations used to check every sketch.

Exact routes exist for q = 1 (largest column norm), p = inf (largest dual
row norm) and q = inf (maximum over sign vectors); p = 1 reaches the sign
route through the transpose. Everything else is bracketed with an epsilon
net of the l_q unit sphere in at most six dimensions.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .numerics import (DimensionError, Exponent, ExponentLike, as_matrix, dual_exponent,
                       exponent, make_rng, vector_norm)

SIGN_ENUM_CAP = 24
NET_DIM_CAP = 6
NET_CANDIDATES = 100_000
RANK_RTOL = 1e-9
_SIGN_CHUNK = 1 << 14

METHODS = ("column_max", "row_max", "sign_enum", "net", "lowrank_net", "power_iter")
EXACT_METHODS = ("column_max", "row_max", "sign_enum")


@dataclass(frozen=True)
class NormBracket:
    lower: float
    upper: float
    method: str
    witness: Optional[object] = None
    net_size: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.lower <= self.upper:
            raise ValueError(f"invalid bracket [{self.lower}, {self.upper}]")
        if self.method in EXACT_METHODS and self.lower != self.upper:
            raise ValueError("exact methods must report lower == upper")

    @property
    def exact(self) -> bool:
        return self.method in EXACT_METHODS

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, value: float, rtol: float = 1e-12) -> bool:
        slack = rtol * max(abs(value), self.upper, 1.0)
        return self.lower - slack <= value <= self.upper + slack

    def overlaps(self, other: "NormBracket", rtol: float = 1e-12) -> bool:
        slack = rtol * max(self.upper, other.upper, 1.0)
        return self.lower <= other.upper + slack and other.lower <= self.upper + slack


def norm_one_to_p(a, p: ExponentLike) -> float:
    return float(column_max(a, p)[0])


def column_max(a, p: ExponentLike):
    """(max column l_p norm, index of the first column attaining it)."""
    a = as_matrix(a)
    norms = vector_norm(a, p, axis=0)
    j = int(np.argmax(norms))
    return float(norms[j]), j


def norm_q_to_infty(a, q: ExponentLike) -> float:
    a = as_matrix(a)
    return float(np.max(vector_norm(a, dual_exponent(q), axis=1)))


def _sign_block(start: int, stop: int, d: int) -> np.ndarray:
    """Sign vectors for codes in [start, stop); the last coordinate is fixed to +1."""
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(d - 1, dtype=np.int64)) & 1
    signs = np.ones((stop - start, d))
    signs[:, : d - 1] = 1.0 - 2.0 * bits
    return signs


def max_over_signs(a, p: ExponentLike, cap: int = SIGN_ENUM_CAP):
    """max ||a x||_p over x in {-1,1}^d and the first maximizer found.

    x and -x give the same value, so only 2^(d-1) codes are scanned.
    """
    a = np.asarray(a, dtype=np.float64)
    n, d = a.shape
    if d > cap:
        raise DimensionError(f"sign enumeration needs at most {cap} columns, got {d}")
    total = 1 << (d - 1)
    best, arg = -1.0, None
    for start in range(0, total, _SIGN_CHUNK):
        stop = min(total, start + _SIGN_CHUNK)
        signs = _sign_block(start, stop, d)
        vals = vector_norm(signs @ a.T, p, axis=1)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), signs[i].copy()
    return best, arg


def norm_infty_to_p_exact(a, p: ExponentLike) -> float:
    return max_over_signs(as_matrix(a), p)[0]


# --- epsilon nets -----------------------------------------------------------

def _unit_rows(x: np.ndarray, q: Exponent) -> np.ndarray:
    norms = vector_norm(x, q, axis=1)
    keep = norms > 1e-12
    return x[keep] / norms[keep, None]


@functools.lru_cache(maxsize=64)
def _sphere_net(d: int, q_value: float, eps: float) -> np.ndarray:
    """Greedy eps-packing of the l_q unit sphere in R^d.

    The candidate stream starts with the extreme points (+-e_i and normalized
    sign vectors) so the q = 1 and q = inf maxima are always hit exactly,
    then continues with a scrambled Sobol sequence mapped radially onto the
    sphere. A candidate is kept when it is at least eps away (in l_q) from
    every point kept before it.
    """
    q = Exponent(q_value)
    eye = np.eye(d)
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
    head = np.vstack([eye, -eye, _unit_rows(signs, q)])
    bound = ((2.0 + eps) / eps) ** d

    sobol = qmc.Sobol(d, scramble=True, seed=7919 + d)
    m = int(np.ceil(np.log2(NET_CANDIDATES)))
    stream = _unit_rows(2.0 * sobol.random_base2(m)[:NET_CANDIDATES] - 1.0, q)
    cands = np.vstack([head, stream])
    mink = np.inf if q.is_inf else q.value

    kept: list[np.ndarray] = []
    tree = None
    chunk = 4096
    for start in range(0, len(cands), chunk):
        block = cands[start:start + chunk]
        ok = np.ones(len(block), dtype=bool)
        if tree is not None:
            dist, _ = tree.query(block, k=1, p=mink)
            ok &= dist >= eps
        # within-block conflicts resolved in stream order
        btree = cKDTree(block)
        take = np.zeros(len(block), dtype=bool)
        for i in np.flatnonzero(ok):
            if not ok[i]:
                continue
            take[i] = True
            ok[btree.query_ball_point(block[i], eps * (1 - 1e-12), p=mink)] = False
        kept.append(block[take])
        total = sum(len(k) for k in kept)
        if total >= bound:
            break
        tree = cKDTree(np.vstack(kept))
    net = np.vstack(kept)
    if len(net) > bound:
        net = net[: int(bound)]
    net.setflags(write=False)
    return net


def net_points(d: int, q: ExponentLike, eps: float) -> np.ndarray:
    if not 1 <= d <= NET_DIM_CAP:
        raise DimensionError(f"net oracle supports 1..{NET_DIM_CAP} input dimensions, got {d}")
    if not 0.05 <= eps <= 0.5:
        raise ValueError(f"eps must lie in [0.05, 0.5], got {eps}")
    return _sphere_net(int(d), exponent(q).value, float(eps))


def net_norm(a, q: ExponentLike, p: ExponentLike, eps: float = 0.1) -> NormBracket:
    """Bracket ||a||_{q->p} by the max over an eps-net and that max / (1 - eps)."""
    a = as_matrix(a)
    net = net_points(a.shape[1], q, eps)
    vals = vector_norm(net @ a.T, p, axis=1)
    i = int(np.argmax(vals))
    lower = float(vals[i])
    return NormBracket(lower, lower / (1.0 - eps), "net", witness=net[i].copy(),
                       net_size=len(net))


def numerical_rank(a, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(a, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def rowspace_basis(a, rtol: float = RANK_RTOL) -> np.ndarray:
    _, s, vt = np.linalg.svd(np.asarray(a, dtype=np.float64), full_matrices=False)
    r = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    return vt[:r].T


def lowrank_norm_two_to_p(a, p: ExponentLike, eps: float = 0.1) -> NormBracket:
    """Bracket ||a||_{2->p} through the r-dimensional row space of ``a``.

    ||a x|| only depends on the row-space component of x, and an orthonormal
    basis Q keeps Euclidean lengths, so ||a||_{2->p} = ||a Q||_{2->p}.
    """
    a = as_matrix(a)
    basis = rowspace_basis(a)
    r = basis.shape[1]
    if r == 0:
        return NormBracket(0.0, 0.0, "lowrank_net")
    if r > NET_DIM_CAP:
        raise DimensionError(f"lowrank oracle needs rank <= {NET_DIM_CAP}, got {r}")
    inner = net_norm(a @ basis, 2, p, eps)
    return NormBracket(inner.lower, inner.upper, "lowrank_net",
                       witness=basis @ inner.witness, net_size=inner.net_size)


def operator_norm(a, tol: float = 1e-9, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on a^T a."""
    a = as_matrix(a)
    x = make_rng(seed).standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = a.T @ (a @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = float(np.sqrt(ny))
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return float(np.linalg.norm(a @ x)) if sigma > 0 else 0.0


# --- dispatch ---------------------------------------------------------------

def has_exact_route(shape, q: ExponentLike, p: ExponentLike) -> bool:
    q, p = exponent(q), exponent(p)
    n, d = shape
    if q.value == 1.0 or p.is_inf:
        return True
    if q.is_inf and d <= SIGN_ENUM_CAP:
        return True
    return p.value == 1.0 and n <= SIGN_ENUM_CAP


def best_norm(a, q: ExponentLike, p: ExponentLike, eps: float = 0.1) -> NormBracket:
    """Most accurate oracle available for ``a``, exact whenever possible."""
    a = as_matrix(a)
    q, p = exponent(q), exponent(p)
    n, d = a.shape
    if q.value == 1.0:
        v, j = column_max(a, p)
        return NormBracket(v, v, "column_max", witness=j)
    if p.is_inf:
        rows = vector_norm(a, q.dual(), axis=1)
        i = int(np.argmax(rows))
        v = float(rows[i])
        return NormBracket(v, v, "row_max", witness=i)
    if q.is_inf and d <= SIGN_ENUM_CAP:
        v, x = max_over_signs(a, p)
        return NormBracket(v, v, "sign_enum", witness=x)
    if p.value == 1.0 and n <= SIGN_ENUM_CAP:
        # ||a||_{q->1} = ||a^T||_{inf->q*}
        v, y = max_over_signs(a.T, q.dual())
        return NormBracket(v, v, "sign_enum", witness=y)
    if q.value == 2.0 and p.value == 2.0 and d > NET_DIM_CAP:
        v = operator_norm(a)
        return NormBracket(v, v, "power_iter")
    if d <= NET_DIM_CAP:
        return net_norm(a, q, p, eps)
    if q.value == 2.0:
        return lowrank_norm_two_to_p(a, p, eps)
    raise DimensionError(
        f"no oracle for {q}->{p} on a {n}x{d} matrix: net needs <= {NET_DIM_CAP} columns")
