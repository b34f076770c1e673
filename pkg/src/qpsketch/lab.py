"""Null/planted matrix distributions and distinguishing experiments.

The samplers draw the null matrix first and only then the planted
perturbation, so with alpha = 0 a planted sampler returns exactly the null
draw for the same generator state.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import embeddings as emb
from .numerics import (Exponent, ExponentLike, as_matrix, child_seed, exponent, make_rng,
                       vector_norm)
from .oracles import best_norm, has_exact_route, lowrank_norm_two_to_p, NET_DIM_CAP
from .sketch import SketchFamilyDescriptor, apply, estimate

KINDS = ("g1_dense", "g2_column", "g2_entry", "diag_null", "diag_planted",
         "rankr_null", "rankr_planted")
PLANTED = ("g2_column", "g2_entry", "diag_planted", "rankr_planted")

ETA_TRIALS = 2000
ETA_SEED = 4242


@dataclass(frozen=True)
class DistributionSpec:
    """One of the null/planted ensembles.

    Shapes: dense kinds are n x d, diagonal kinds n x n, rank-r kinds n x r.
    ``eta`` is the E||g||_p used by ``g2_entry``; left unset it is estimated
    by Monte Carlo with a fixed seed.
    """

    kind: str
    n: int
    d: int = 0
    r: int = 1
    alpha: float = 0.0
    kappa: float = 0.0
    p: float = 2.0
    q: float = 2.0
    eta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind in PLANTED and self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.kind.startswith("rankr") and not 1 <= self.r <= self.n:
            raise ValueError(f"rank-r kinds need 1 <= r <= n, got r={self.r}, n={self.n}")
        if self.d == 0:
            object.__setattr__(self, "d", self.n)
        object.__setattr__(self, "p", exponent(self.p).value)
        object.__setattr__(self, "q", exponent(self.q).value)

    @property
    def shape(self):
        if self.kind.startswith("diag"):
            return (self.n, self.n)
        if self.kind.startswith("rankr"):
            return (self.n, self.r)
        return (self.n, self.d)

    def null(self) -> "DistributionSpec":
        base = {"g2_column": "g1_dense", "g2_entry": "g1_dense",
                "diag_planted": "diag_null", "rankr_planted": "rankr_null"}
        return DistributionSpec(base.get(self.kind, self.kind), self.n, self.d, self.r,
                                0.0, self.kappa, self.p, self.q, self.eta)


def rankr_scale(n: int, r: int, q: ExponentLike) -> float:
    """max(n^(1/q), sqrt(r)), the row-norm scale of the rank-r pair."""
    q = exponent(q)
    return max(1.0 if q.is_inf else n ** (1.0 / q.value), math.sqrt(r))


def sample(spec: DistributionSpec, rng) -> np.ndarray:
    rng = make_rng(rng)
    n, d = spec.shape
    kind = spec.kind
    if kind.startswith("diag"):
        a = np.diag(rng.standard_normal(n))
        if kind == "diag_planted" and spec.alpha > 0:
            i = rng.integers(n)
            a[i, i] += spec.alpha * math.sqrt(math.log(n))
        return a
    a = rng.standard_normal((n, d))
    if kind not in PLANTED or spec.alpha == 0:
        return a
    if kind == "g2_column":
        j = rng.integers(d)
        a[:, j] += spec.alpha * rng.standard_normal(n)
    elif kind == "g2_entry":
        eta = spec.eta if spec.eta is not None else eta_for(spec.p, n)
        a[rng.integers(n), rng.integers(d)] += spec.alpha * eta
    elif kind == "rankr_planted":
        i = rng.integers(n)
        scale = spec.alpha * rankr_scale(n, spec.r, spec.q) / math.sqrt(spec.r)
        a[i, :] += scale * rng.standard_normal(d)
    return a


def estimate_eta_p(p: ExponentLike, n: int, trials: int, rng) -> float:
    """Monte Carlo mean of ||g||_p for g ~ N(0, I_n)."""
    if trials < 1000:
        raise ValueError("eta_p estimation needs at least 10^3 trials")
    g = make_rng(rng).standard_normal((trials, n))
    return float(np.mean(vector_norm(g, p, axis=1)))


_ETA_CACHE: dict = {}


def eta_for(p: ExponentLike, n: int) -> float:
    key = (exponent(p).value, n)
    if key not in _ETA_CACHE:
        _ETA_CACHE[key] = estimate_eta_p(p, n, ETA_TRIALS, ETA_SEED)
    return _ETA_CACHE[key]


# --- oracles for experiments ------------------------------------------------

@dataclass(frozen=True)
class NormOracle:
    """Exact q->p norm for the structured cases used in separation runs.

    mode ``auto`` needs an exact route (q = 1, p = inf, or sign enumeration);
    ``diagonal`` uses max |a_ii|, valid for diagonal inputs with q <= p;
    ``lowrank`` uses the rank-r bracket midpoint for q = 2.
    """

    q: float
    p: float
    mode: str = "auto"

    def check(self, shape) -> None:
        q, p = Exponent(self.q), Exponent(self.p)
        if self.mode == "auto" and not has_exact_route(shape, q, p):
            raise ValueError(f"no exact oracle for {q}->{p} at shape {shape}")
        if self.mode == "diagonal" and not q.value <= p.value:
            raise ValueError("diagonal oracle needs q <= p")
        if self.mode == "lowrank" and (q.value != 2.0 or min(shape) > NET_DIM_CAP):
            raise ValueError("lowrank oracle needs q = 2 and rank within the net cap")
        if self.mode not in ("auto", "diagonal", "lowrank"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")

    def __call__(self, a) -> float:
        a = as_matrix(a)
        if self.mode == "diagonal":
            if np.any(a - np.diag(np.diag(a))):
                raise ValueError("diagonal oracle applied to a non-diagonal matrix")
            return float(np.max(np.abs(np.diag(a))))
        if self.mode == "lowrank":
            return lowrank_norm_two_to_p(a, self.p).mid
        return best_norm(a, self.q, self.p).lower


# --- reports ----------------------------------------------------------------

@dataclass
class TrialRecord:
    trial_id: int
    source: str
    value: float
    decision: str = ""


@dataclass
class ExperimentReport:
    kind: str
    null: DistributionSpec
    planted: DistributionSpec
    trials: int
    seed: int
    records: List[TrialRecord] = field(default_factory=list)
    threshold: Optional[float] = None
    success_rate: Optional[float] = None

    def values(self, source: str) -> np.ndarray:
        return np.array([r.value for r in self.records if r.source == source])

    @property
    def gap(self) -> float:
        return float(self.values("planted").min() - self.values("null").max())

    def quantiles(self, source: str, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict:
        vals = self.values(source)
        return {f"q{int(100 * x):02d}": float(np.quantile(vals, x)) for x in qs}

    def median_ratio(self) -> float:
        return float(np.median(self.values("planted")) / np.median(self.values("null")))

    def summary(self) -> dict:
        out = {"kind": self.kind, "trials": self.trials, "seed": self.seed}
        if self.kind == "separation":
            out["gap"] = self.gap
            out["median_ratio"] = self.median_ratio()
        else:
            out["threshold"] = self.threshold
            out["success_rate"] = self.success_rate
        for src in ("null", "planted"):
            for key, v in self.quantiles(src).items():
                out[f"{src}_{key}"] = v
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial_id", "source", "norm_or_estimate", "decision"])
        for r in self.records:
            w.writerow([r.trial_id, r.source, f"{r.value:.12g}", r.decision])
        for key, v in self.summary().items():
            w.writerow(["#summary", key, f"{v:.12g}" if isinstance(v, float) else v, ""])
        return buf.getvalue()


def _draws(spec: DistributionSpec, trials: int, seed: int, lane: int):
    for t in range(trials):
        yield t, sample(spec, make_rng(child_seed(seed, lane, t)))


def separation_experiment(null: DistributionSpec, planted: DistributionSpec,
                          norm: Callable, trials: int, seed: int) -> ExperimentReport:
    """Exact norms of ``trials`` null and ``trials`` planted draws."""
    if hasattr(norm, "check"):
        norm.check(null.shape)
    rep = ExperimentReport("separation", null, planted, trials, seed)
    for source, spec, lane in (("null", null, 0), ("planted", planted, 1)):
        for t, a in _draws(spec, trials, seed, lane):
            rep.records.append(TrialRecord(t, source, float(norm(a))))
    return rep


def distinguisher_experiment(null: DistributionSpec, planted: DistributionSpec,
                             family_desc: SketchFamilyDescriptor, trials: int,
                             seed: int, calibration_trials: Optional[int] = None
                             ) -> ExperimentReport:
    """Classify fresh draws by thresholding the sketch estimate.

    The threshold is the midpoint of the null and planted median estimates
    over a held-out calibration run; ``trials`` fresh draws of each source
    are then scored.
    """
    cal = calibration_trials or trials

    def est(a):
        return estimate(apply(family_desc, a)).value

    med_null = np.median([est(a) for _, a in _draws(null, cal, seed, 10)])
    med_planted = np.median([est(a) for _, a in _draws(planted, cal, seed, 11)])
    threshold = 0.5 * (med_null + med_planted)
    high = "planted" if med_planted >= med_null else "null"
    low = "null" if high == "planted" else "planted"

    rep = ExperimentReport("distinguish", null, planted, trials, seed, threshold=threshold)
    correct = 0
    for source, spec, lane in (("null", null, 20), ("planted", planted, 21)):
        for t, a in _draws(spec, trials, seed, lane):
            v = est(a)
            decision = high if v > threshold else low
            correct += decision == source
            rep.records.append(TrialRecord(t, source, v, decision))
    rep.success_rate = correct / (2 * trials)
    return rep


# --- reductions -------------------------------------------------------------

def double_dvoretzky_transform(a, q: ExponentLike, p: ExponentLike, seed: int,
                               expansion: float = emb.DVORETZKY_EXPANSION) -> np.ndarray:
    """L2 A^T L1^T whose q->p norm tracks ||A||_{2->2} (q >= 2, p <= 2).

    L1 embeds l_2 into l_{q*} and L2 embeds l_2 into l_p.
    """
    a = as_matrix(a)
    q, p = exponent(q), exponent(p)
    if q.value < 2.0 or p.value > 2.0:
        raise ValueError("double Dvoretzky reduction needs q >= 2 and p <= 2")
    l1 = emb.make_dvoretzky(child_seed(seed, 1), q.dual(), a.shape[0], expansion).materialize()
    l2 = emb.make_dvoretzky(child_seed(seed, 2), p, a.shape[1], expansion).materialize()
    return l2 @ a.T @ l1.T


def dual_side_transform(a, p: ExponentLike, seed: int,
                        expansion: float = emb.DVORETZKY_EXPANSION) -> np.ndarray:
    """L1 A^T with ||L1 A^T||_{q->p} ~ ||A^T||_{q->2} = ||A||_{2->q*} (p <= 2)."""
    a = as_matrix(a)
    l1 = emb.make_dvoretzky(child_seed(seed, 1), p, a.shape[1], expansion).materialize()
    return l1 @ a.T


def spec_dict(spec: DistributionSpec) -> dict:
    return asdict(spec)
