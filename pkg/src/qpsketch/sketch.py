"""Linear sketching families for matrix q->p norms.

A family is planned into a :class:`SketchFamilyDescriptor`; ``apply``
compresses a matrix into a :class:`SketchState` whose payload is a linear
function of the entries, so states can be updated entry by entry and
merged. ``estimate`` turns a state back into a norm estimate.

Most families have the form payload = L @ A @ R with fixed random L and R
(either side may be the identity); ``gaussian_proj`` instead projects the
flattened matrix. The output exponent of the ``*_to_q`` families is
``q``; the other families estimate ``q -> p``.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import embeddings as emb
from .numerics import (DimensionError, Exponent, ExponentLike, as_matrix, child_seed,
                       exponent, make_rng, vector_norm)
from .oracles import NET_DIM_CAP, best_norm, has_exact_route, max_over_signs

FAMILIES = ("one_to_p", "two_to_p_lowrank", "blockcol_inf_to_q", "blockrow_q_to_p",
            "two_to_q_large", "identity", "gaussian_proj")

# ceil(48 / ln(3/2)): per-column failure <= 1/n^2 under the Hoeffding bound.
DEFAULT_COPIES_C = math.ceil(48 / math.log(1.5))
PSTABLE_ROWS = 21
BLOCK_ENUM_CAP = 20
LOCAL_SEARCH_RESTARTS = 50
_ENUM_CHUNK = 1 << 12


class GuardError(ValueError):
    """A family parameter guard was violated; the message names the guard."""


@dataclass(frozen=True)
class SketchFamilyDescriptor:
    family: str
    n: int
    d: int
    p: float
    q: float
    seed: int
    params: tuple = field(default=())

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps([self.family, self.n, self.d, repr(self.p), repr(self.q),
                           self.seed, [[k, repr(v)] for k, v in self.params]])
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def payload_shape(self) -> tuple:
        return _layout(self)["shape"]

    @property
    def k(self) -> int:
        rows, cols = self.payload_shape
        return rows * cols

    def maps(self):
        """(left, right) matrices of payload = left @ A @ right; None is identity."""
        return _maps(self)


@dataclass
class SketchState:
    """Payload L(A) with the descriptor that produced it.

    Mutated in place by :func:`update` (single writer); use ``copy`` to fork.
    """

    desc: SketchFamilyDescriptor
    payload: np.ndarray

    def __post_init__(self):
        self.payload = np.asarray(self.payload, dtype=np.float64).reshape(-1)
        if self.payload.size != self.desc.k:
            raise ValueError(f"payload has {self.payload.size} entries, expected k={self.desc.k}")

    @property
    def fingerprint(self) -> str:
        return self.desc.fingerprint

    def copy(self) -> "SketchState":
        return SketchState(self.desc, self.payload.copy())

    def matrix(self) -> np.ndarray:
        return self.payload.reshape(self.desc.payload_shape)


@dataclass(frozen=True)
class EstimateResult:
    value: float
    family: str
    witness: Optional[object] = None
    lower_bound_only: bool = False


# --- planning ---------------------------------------------------------------

def _guard(cond: bool, name: str, detail: str):
    if not cond:
        raise GuardError(f"guard '{name}' violated: {detail}")


def _odd(x: int) -> int:
    return x if x % 2 else x + 1


def plan(family: str, n: int, d: int, p: ExponentLike = 2, q: ExponentLike = 1,
         seed: int = 0, **params) -> SketchFamilyDescriptor:
    """Validate family guards and fill in default parameters."""
    _guard(family in FAMILIES, "family", f"unknown family {family!r}")
    _guard(n >= 1 and d >= 1, "dims", f"n={n}, d={d} must be positive")
    p, q = exponent(p), exponent(q)
    log2n = math.log2(max(n, 2))
    out = {}
    if family == "one_to_p":
        _guard(q.value == 1.0, "q=1", f"one_to_p estimates the 1->p norm, got q={q}")
        c = params.pop("c", DEFAULT_COPIES_C)
        out["copies"] = int(params.pop("copies", math.ceil(c * log2n)))
        _guard(out["copies"] >= 1, "copies>=1", str(out["copies"]))
        if p.value <= 2.0:
            out["t"] = int(params.pop("t", PSTABLE_ROWS))
            _guard(out["t"] >= 7 and out["t"] % 2 == 1, "t odd >= 7", str(out["t"]))
        else:
            out["delta"] = float(params.pop("delta", 1.0 / 3.0))
            out["c0"] = float(params.pop("c0", emb.HIGHP_C0))
            out["allow_identity"] = bool(params.pop("allow_identity", True))
    elif family == "two_to_p_lowrank":
        _guard(q.value == 2.0, "q=2", f"two_to_p_lowrank estimates 2->p, got q={q}")
        _guard(p.value > 2.0, "p>2", f"got p={p}")
        r = int(params.pop("r"))
        beta = int(params.pop("beta", 2))
        out.update(r=r, beta=beta, C=int(params.pop("C", 4)),
                   c0=float(params.pop("c0", emb.HIGHP_C0)),
                   allow_identity=bool(params.pop("allow_identity", True)))
        _guard(1 <= r <= NET_DIM_CAP, "r<=6", f"rank budget r={r} exceeds enumeration cap")
        _guard(beta * r <= BLOCK_ENUM_CAP, "beta*r<=20", f"beta*r={beta * r}")
    elif family == "blockcol_inf_to_q":
        B = int(params.pop("B"))
        _guard(B >= 1 and d % B == 0, "B divides d", f"B={B}, d={d}")
        out["B"] = B
    elif family == "blockrow_q_to_p":
        B = int(params.pop("B"))
        _guard(B >= 1 and n % B == 0, "B divides n", f"B={B}, n={n}")
        out["B"] = B
        out["copies"] = int(params.pop("copies", _odd(max(1, math.ceil(log2n)))))
        _guard(out["copies"] >= 1, "copies>=1", str(out["copies"]))
        nb = n // B
        _guard(has_exact_route((nb, d), q, p) or d <= NET_DIM_CAP
               or (q.value == 2.0 and p.value == 2.0),
               "reduced size within oracle caps",
               f"no oracle for {q}->{p} on the reduced {nb}x{d} matrix")
    elif family == "two_to_q_large":
        expansion = float(params.pop("expansion", emb.DVORETZKY_EXPANSION))
        m = int(math.ceil(expansion * d))
        B = int(params.pop("B"))
        _guard(B >= 1 and m % B == 0, "B divides expanded width", f"B={B}, width={m}")
        out.update(B=B, expansion=expansion)
    elif family == "gaussian_proj":
        kk = int(params.pop("k"))
        _guard(1 <= kk <= n * d, "1<=k<=n*d", f"k={kk}")
        out["k"] = kk
    _guard(not params, "known params", f"unexpected parameters {sorted(params)}")
    return SketchFamilyDescriptor(family, int(n), int(d), p.value, q.value, int(seed),
                                  tuple(sorted(out.items())))


def _layout(desc: SketchFamilyDescriptor) -> dict:
    f, n, d = desc.family, desc.n, desc.d
    P = desc.param
    if f == "one_to_p":
        return {"shape": (P("copies") * _vector_sketch(desc, 0).out_dim, d)}
    if f == "two_to_p_lowrank":
        beta_r = P("beta") * P("r")
        return {"shape": (_highp_for_lowrank(desc).out_dim, beta_r)}
    if f == "blockcol_inf_to_q":
        return {"shape": (n, d // P("B"))}
    if f == "blockrow_q_to_p":
        return {"shape": (P("copies") * (n // P("B")), d)}
    if f == "two_to_q_large":
        m = int(math.ceil(P("expansion") * d))
        return {"shape": (n, m // P("B"))}
    if f == "identity":
        return {"shape": (n, d)}
    if f == "gaussian_proj":
        return {"shape": (P("k"), 1)}
    raise AssertionError(f)


def _vector_sketch(desc: SketchFamilyDescriptor, copy: int) -> emb.LinearMapDescriptor:
    seed = child_seed(desc.seed, 1, copy)
    if desc.p <= 2.0:
        return emb.make_pstable_sketch(seed, desc.p, desc.param("t"), desc.n)
    return emb.make_highp_sketch(seed, desc.p, desc.n, desc.param("delta"),
                                 c0=desc.param("c0"),
                                 allow_identity=desc.param("allow_identity"))


def _highp_for_lowrank(desc: SketchFamilyDescriptor) -> emb.LinearMapDescriptor:
    beta_r = desc.param("beta") * desc.param("r")
    delta = 2.0 ** (-2 * beta_r)
    return emb.make_highp_sketch(child_seed(desc.seed, 3), desc.p, desc.n, delta,
                                 c0=desc.param("c0"),
                                 allow_identity=desc.param("allow_identity"))


@functools.lru_cache(maxsize=32)
def _maps(desc: SketchFamilyDescriptor):
    f, n, d = desc.family, desc.n, desc.d
    P = desc.param
    left = right = None
    if f == "one_to_p":
        left = np.vstack([_vector_sketch(desc, c).materialize() for c in range(P("copies"))])
    elif f == "two_to_p_lowrank":
        rows = P("C") * P("r")
        beta_r = P("beta") * P("r")
        ose = emb.make_ose(child_seed(desc.seed, 1), rows, d).materialize()
        g = emb.gaussian_lp_map(child_seed(desc.seed, 2), 1, beta_r, rows).materialize()
        hp = _highp_for_lowrank(desc).materialize()
        left, right = hp, ose.T @ g.T
    elif f == "blockcol_inf_to_q":
        right = emb.make_blocksign(child_seed(desc.seed, 1), d, P("B"), "col").materialize()
    elif f == "blockrow_q_to_p":
        left = np.vstack([
            emb.make_blocksign(child_seed(desc.seed, 1, c), n, P("B"), "row").materialize()
            for c in range(P("copies"))])
    elif f == "two_to_q_large":
        m = int(math.ceil(P("expansion") * d))
        g = emb.gaussian_lp_map(child_seed(desc.seed, 2), 1, m, d).materialize()
        s = emb.make_blocksign(child_seed(desc.seed, 1), m, P("B"), "col").materialize()
        right = g.T @ s
    elif f == "gaussian_proj":
        kk = P("k")
        left = make_rng(child_seed(desc.seed, 1)).standard_normal((kk, n * d)) / math.sqrt(kk)
    for m in (left, right):
        if m is not None:
            m.setflags(write=False)
    return left, right


# --- linear operations ------------------------------------------------------

def _check_dims(desc, a):
    if a.shape != (desc.n, desc.d):
        raise DimensionError(f"matrix is {a.shape}, descriptor expects {(desc.n, desc.d)}")


def apply(desc: SketchFamilyDescriptor, a) -> SketchState:
    a = as_matrix(a)
    _check_dims(desc, a)
    left, right = _maps(desc)
    if desc.family == "gaussian_proj":
        return SketchState(desc, left @ a.reshape(-1))
    out = a
    if right is not None:
        out = out @ right
    if left is not None:
        out = left @ out
    return SketchState(desc, np.array(out, dtype=np.float64).reshape(-1))


def zero_state(desc: SketchFamilyDescriptor) -> SketchState:
    return SketchState(desc, np.zeros(desc.k))


def update(state: SketchState, i: int, j: int, delta: float) -> SketchState:
    """In-place streaming update A[i, j] += delta."""
    desc = state.desc
    if not (0 <= i < desc.n and 0 <= j < desc.d):
        raise IndexError(f"entry ({i}, {j}) outside {desc.n}x{desc.d}")
    if delta == 0:
        return state
    left, right = _maps(desc)
    if desc.family == "gaussian_proj":
        state.payload += delta * left[:, i * desc.d + j]
        return state
    col = left[:, i] if left is not None else None
    row = right[j, :] if right is not None else None
    mat = state.matrix()
    if col is None and row is None:
        mat[i, j] += delta
    elif col is None:
        mat[i, :] += delta * row
    elif row is None:
        mat[:, j] += delta * col
    else:
        mat += delta * np.outer(col, row)
    return state


def merge(s1: SketchState, s2: SketchState) -> SketchState:
    if s1.fingerprint != s2.fingerprint:
        raise ValueError(f"fingerprint mismatch: {s1.fingerprint} vs {s2.fingerprint}")
    return SketchState(s1.desc, s1.payload + s2.payload)


# --- estimation -------------------------------------------------------------

def _signs_chunks(m: int):
    """All sign vectors in {-1,1}^m with last coordinate +1, in chunks."""
    total = 1 << (m - 1)
    for start in range(0, total, _ENUM_CHUNK):
        codes = np.arange(start, min(total, start + _ENUM_CHUNK), dtype=np.int64)
        bits = (codes[:, None] >> np.arange(m - 1, dtype=np.int64)) & 1
        signs = np.ones((len(codes), m))
        signs[:, : m - 1] = 1.0 - 2.0 * bits
        yield signs


def _one_to_p_columns(desc: SketchFamilyDescriptor, mat: np.ndarray) -> np.ndarray:
    """Per-column median-of-copies estimates of ||A_{*,j}||_p."""
    copies = desc.param("copies")
    table = emb.default_table()
    if desc.p <= 2.0:
        t = desc.param("t")
        per_copy = np.median(np.abs(mat.reshape(copies, t, desc.d)), axis=1)
        per_copy = per_copy / table.median_scale(desc.p)
    else:
        vs = _vector_sketch(desc, 0)
        reps, buckets = vs.param("reps"), vs.param("buckets")
        if reps == 0:
            per_copy = vector_norm(mat.reshape(copies, desc.n, desc.d), desc.p, axis=1)
        else:
            peaks = np.abs(mat.reshape(copies, reps, buckets, desc.d)).max(axis=2)
            per_copy = np.median(peaks, axis=1) / table.median_scale(desc.p)
    return np.median(per_copy, axis=0)


def _highp_batch(z: np.ndarray, hp: emb.LinearMapDescriptor) -> np.ndarray:
    """Vectorized high-p estimator over rows of z."""
    reps = hp.param("reps")
    p = hp.param("p")
    if reps == 0:
        return vector_norm(z, p, axis=1)
    peaks = np.abs(z.reshape(len(z), reps, -1)).max(axis=2)
    return np.median(peaks, axis=1) / emb.default_table().median_scale(p)


def _local_search(mat: np.ndarray, p, seed: int):
    """Best sign vector found by single-flip ascent from random starts."""
    rng = make_rng(child_seed(seed, 99))
    m = mat.shape[1]
    best, arg = -1.0, None
    for _ in range(LOCAL_SEARCH_RESTARTS):
        x = rng.choice((-1.0, 1.0), size=m)
        val = vector_norm(mat @ x, p)
        improved = True
        while improved:
            improved = False
            for j in range(m):
                x[j] = -x[j]
                v = vector_norm(mat @ x, p)
                if v > val:
                    val, improved = v, True
                else:
                    x[j] = -x[j]
        if val > best:
            best, arg = val, x.copy()
    return best, arg


def _inf_to_q(mat: np.ndarray, q, seed: int):
    """(value, witness, lower_bound_only) of ||mat||_{inf->q}."""
    if not np.any(mat):
        return 0.0, np.ones(mat.shape[1]), False
    if mat.shape[1] <= BLOCK_ENUM_CAP:
        v, x = max_over_signs(mat, q, cap=BLOCK_ENUM_CAP)
        return v, x, False
    v, x = _local_search(mat, q, seed)
    return v, x, True


def _blockrow_reduced(desc: SketchFamilyDescriptor, mat: np.ndarray) -> np.ndarray:
    """Per block, the copy whose row has median l_{q*} mass (ties: lowest copy)."""
    copies, nb = desc.param("copies"), desc.n // desc.param("B")
    rows = mat.reshape(copies, nb, desc.d)
    mass = vector_norm(rows, Exponent(desc.q).dual(), axis=2)
    order = np.argsort(mass, axis=0, kind="stable")
    pick = order[(copies - 1) // 2]
    return rows[pick, np.arange(nb)]


def estimate(state: SketchState) -> EstimateResult:
    desc = state.desc
    f = desc.family
    mat = state.matrix()
    if f == "one_to_p":
        cols = _one_to_p_columns(desc, mat)
        j = int(np.argmax(cols))
        return EstimateResult(float(cols[j]), f, witness=j)
    if f == "two_to_p_lowrank":
        hp = _highp_for_lowrank(desc)
        best, arg = -1.0, None
        for signs in _signs_chunks(mat.shape[1]):
            vals = _highp_batch(signs @ mat.T, hp)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, arg = float(vals[i]), signs[i].copy()
        return EstimateResult(best, f, witness=arg)
    if f in ("blockcol_inf_to_q", "two_to_q_large"):
        v, x, lb = _inf_to_q(mat, desc.q, desc.seed)
        return EstimateResult(float(v), f, witness=x, lower_bound_only=lb)
    if f == "blockrow_q_to_p":
        reduced = _blockrow_reduced(desc, mat)
        br = best_norm(reduced, desc.q, desc.p)
        return EstimateResult(br.lower, f, witness=br.witness,
                              lower_bound_only=not br.exact)
    if f == "identity":
        br = best_norm(mat, desc.q, desc.p)
        return EstimateResult(br.lower, f, witness=br.witness, lower_bound_only=not br.exact)
    if f == "gaussian_proj":
        # Frobenius-norm estimate; a distinguishing statistic, not a q->p estimate.
        return EstimateResult(float(np.linalg.norm(state.payload)), f)
    raise AssertionError(f)


def sketch_and_estimate(desc: SketchFamilyDescriptor, a) -> EstimateResult:
    return estimate(apply(desc, a))


def lowrank_pipeline(desc: SketchFamilyDescriptor, a) -> np.ndarray:
    """Uncompressed A S^T G^T of the low-rank family (n x beta*r)."""
    if desc.family != "two_to_p_lowrank":
        raise ValueError("only defined for two_to_p_lowrank")
    return as_matrix(a) @ _maps(desc)[1]


# --- state files ------------------------------------------------------------

def dumps_state(state: SketchState) -> str:
    desc = state.desc
    extra = " ".join(f"{k}={json.dumps(v)}" for k, v in desc.params)
    head = (f"{desc.family} {desc.n} {desc.d} {Exponent(desc.p)} {Exponent(desc.q)} "
            f"{desc.seed} {desc.k}")
    lines = [head + (" " + extra if extra else "")]
    lines += [repr(float(v)) for v in state.payload]
    return "\n".join(lines) + "\n"


def loads_state(text: str) -> SketchState:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty state file")
    head = lines[0].split()
    if len(head) < 7:
        raise ValueError("state header must be 'family n d p q seed k [param=value ...]'")
    family, n, d, p, q, seed, k = head[:7]
    params = {}
    for tok in head[7:]:
        key, val = tok.split("=", 1)
        params[key] = json.loads(val)
    desc = SketchFamilyDescriptor(family, int(n), int(d), Exponent.parse(p).value,
                                  Exponent.parse(q).value, int(seed),
                                  tuple(sorted(params.items())))
    if desc.k != int(k):
        raise ValueError(f"header k={k} disagrees with descriptor k={desc.k}")
    payload = np.array([float(v) for v in lines[1:]])
    return SketchState(desc, payload)
