"""Streaming Monte Carlo for boundary maxima on large trees.

One replica is one depth-first traversal of the tree.  Each vertex gets its
Gaussian the first time it is visited, from the keyed generator in
``rng``: vertex ``i`` of generation ``L`` uses counter ``off[L] + i`` where
``off[L]`` counts the vertices of generations ``0..L-1``.  Children of vertex
``p`` in generation ``L-1`` of ``T(q)`` are ``p*q_L .. p*q_L + q_L - 1``.

The traversal keeps the partial sum ``S(v)`` on an explicit stack, so memory
is ``O(depth)`` and every vertex is visited exactly once.  Levels with
``alpha_L = 0`` skip the draw, which is exact since ``s + 0*z == s``.
"""
from __future__ import annotations

import csv
import io
import math
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable

import numpy as np
from numba import njit

from . import rng
from . import sequences as seq
from .errors import DomainError, ResourceError
from .trees import DEFAULT_VERTEX_BUDGET, DegreeProfile, TreeSpec

STATISTICS = ("level_max_abs", "level_max_signed", "running_max", "tail_sup", "two_weight")


@njit(cache=True)
def _traverse(key, depth, q, ptr, ptr_off, tree_mode, a, scale, off, tail_n, stub, stub_z,
              out_abs, out_sig, out_tail):
    for i in range(depth):
        out_abs[i] = 0.0
        out_sig[i] = -np.inf
        out_tail[i] = 0.0
    if depth == 0:
        return 1
    vidx = np.zeros(depth + 1, dtype=np.int64)
    nxt = np.zeros(depth + 1, dtype=np.int64)
    end = np.zeros(depth + 1, dtype=np.int64)
    s = np.zeros(depth + 1)
    mn = np.zeros(depth + 1)
    mx = np.zeros(depth + 1)
    visited = 1
    if tree_mode:
        nxt[0] = ptr[ptr_off[0]]
        end[0] = ptr[ptr_off[0] + 1]
    else:
        nxt[0] = 0
        end[0] = q[0]
    top = 0
    while top >= 0:
        if nxt[top] >= end[top]:
            top -= 1
            continue
        L = top + 1
        ak = a[top]
        sc = scale[top]
        base = off[L]
        s0 = s[top]
        track = tail_n > 0 and L >= tail_n
        if L == depth:
            # leaf level: sweep all remaining children without pushing
            for child in range(nxt[top], end[top]):
                sv = s0
                if ak != 0.0:
                    if stub:
                        z = stub_z
                    else:
                        z = rng.normal_at(key, base + child)
                    sv = sv + ak * z
                g = sc * sv
                ag = abs(g)
                if ag > out_abs[top]:
                    out_abs[top] = ag
                if g > out_sig[top]:
                    out_sig[top] = g
                if track:
                    w = max(sv - mn[top], mx[top] - sv)
                    if w > out_tail[top]:
                        out_tail[top] = w
            visited += end[top] - nxt[top]
            nxt[top] = end[top]
            top -= 1
            continue
        child = nxt[top]
        nxt[top] += 1
        sv = s0
        if ak != 0.0:
            if stub:
                z = stub_z
            else:
                z = rng.normal_at(key, base + child)
            sv = sv + ak * z
        visited += 1
        g = sc * sv
        ag = abs(g)
        if ag > out_abs[top]:
            out_abs[top] = ag
        if g > out_sig[top]:
            out_sig[top] = g
        if track:
            w = max(sv - mn[top], mx[top] - sv)
            if w > out_tail[top]:
                out_tail[top] = w
            mn[L] = min(mn[top], sv)
            mx[L] = max(mx[top], sv)
        elif tail_n > 0 and L == tail_n - 1:
            mn[L] = sv
            mx[L] = sv
        vidx[L] = child
        s[L] = sv
        if tree_mode:
            j = ptr_off[L] + child
            nxt[L] = ptr[j]
            end[L] = ptr[j + 1]
        else:
            nxt[L] = child * q[L]
            end[L] = nxt[L] + q[L]
        top = L
    return visited


@njit(cache=True)
def _run_replicas(keys, depth, q, ptr, ptr_off, tree_mode, a, scale, off, tail_n, stub, stub_z,
                  out_abs, out_sig, out_tail):
    total = 0
    for r in range(keys.size):
        total += _traverse(keys[r], depth, q, ptr, ptr_off, tree_mode, a, scale, off, tail_n,
                           stub, stub_z, out_abs[r], out_sig[r], out_tail[r])
    return total


@njit(cache=True)
def _coupled(keys, depth, q_sub, q_sup, a, off, out_sub, out_sup):
    total = 0
    for r in range(keys.size):
        key = keys[r]
        for i in range(depth):
            out_sub[r, i] = 0.0
            out_sup[r, i] = 0.0
        if depth == 0:
            total += 1
            continue
        nxt = np.zeros(depth + 1, dtype=np.int64)
        end = np.zeros(depth + 1, dtype=np.int64)
        first = np.zeros(depth + 1, dtype=np.int64)
        marked = np.zeros(depth + 1, dtype=np.bool_)
        s = np.zeros(depth + 1)
        marked[0] = True
        first[0] = 0
        end[0] = q_sup[0]
        total += 1
        top = 0
        while top >= 0:
            if nxt[top] >= end[top]:
                top -= 1
                continue
            L = top + 1
            child = nxt[top]
            nxt[top] += 1
            sv = s[top]
            if a[top] != 0.0:
                sv = sv + a[top] * rng.normal_at(key, off[L] + child)
            total += 1
            # child j of a marked parent is marked iff j < q_sub
            mk = marked[top] and (child - first[top]) < q_sub[top]
            av = abs(sv)
            if av > out_sup[r, top]:
                out_sup[r, top] = av
            if mk and av > out_sub[r, top]:
                out_sub[r, top] = av
            if L < depth:
                marked[L] = mk
                s[L] = sv
                first[L] = child * q_sup[L]
                nxt[L] = first[L]
                end[L] = first[L] + q_sup[L]
                top = L
    return total


def warmup():
    """Compile the kernels (cheap with the on-disk cache)."""
    cfg = RunConfig(DegreeProfile.constant(2), seq.FiniteSequence([1.0]), 2, 2, 0)
    run_replicas(cfg, range(1))
    _coupled(np.zeros(1, np.uint64), 1, np.ones(1, np.int64), np.ones(1, np.int64), np.ones(1),
             np.zeros(2, np.int64), np.zeros((1, 1)), np.zeros((1, 1)))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """One Monte Carlo experiment."""

    profile: object  # DegreeProfile or TreeSpec
    model: seq.SequenceModel
    depth: int
    replicas: int = 100
    seed: int = 0
    statistic: str = "level_max_abs"
    tail_n: int = 0
    alpha_fn: Callable | None = None
    sigma_fn: Callable | None = None
    level: float = 0.99
    budget: int = DEFAULT_VERTEX_BUDGET
    stub: float | None = None  # replace every Gaussian by this constant (testing)

    def __post_init__(self):
        if isinstance(self.profile, (list, tuple, dict, int, str)):
            self.profile = DegreeProfile.from_config(self.profile)
        if self.statistic not in STATISTICS:
            raise DomainError(f"unknown statistic {self.statistic!r}")
        if self.depth < 0:
            raise DomainError("depth must be nonnegative")
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")
        if not 0 < self.level < 1:
            raise DomainError("confidence level must lie in (0, 1)")

    def level_sizes(self) -> list[int]:
        if isinstance(self.profile, TreeSpec):
            if self.depth > self.profile.depth:
                raise DomainError(f"tree has depth {self.profile.depth} < {self.depth}")
            return [self.profile.level_size(n) for n in range(self.depth + 1)]
        return self.profile.level_sizes(self.depth)

    def vertices_per_replica(self) -> int:
        return sum(self.level_sizes())

    def to_dict(self) -> dict:
        prof = self.profile
        d = {
            "profile": prof.to_config() if isinstance(prof, DegreeProfile)
            else {"tree": prof.dumps()},
            "model": self.model.spec(),
            "depth": self.depth,
            "replicas": self.replicas,
            "seed": self.seed,
            "statistic": self.statistic,
            "tail_n": self.tail_n,
            "level": self.level,
            "budget": self.budget,
        }
        return d


def _weights(config: RunConfig):
    n = config.depth
    if config.statistic == "two_weight" or config.alpha_fn is not None:
        if config.alpha_fn is None or config.sigma_fn is None:
            raise DomainError("two_weight needs alpha_fn and sigma_fn")
        a = np.empty(n)
        sc = np.empty(n)
        for k in range(1, n + 1):
            try:
                a[k - 1] = float(config.alpha_fn(k))
                sc[k - 1] = float(config.sigma_fn(k))
            except (TypeError, ValueError, ArithmeticError, IndexError, KeyError) as exc:
                raise DomainError(f"weight undefined at depth {k}: {exc}") from exc
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(sc))):
            bad = int(np.flatnonzero(~(np.isfinite(a) & np.isfinite(sc)))[0]) + 1
            raise DomainError(f"weight undefined at depth {bad}")
        return a, sc
    return np.ascontiguousarray(config.model.values(n), dtype=float), np.ones(n)


def _tree_arrays(config: RunConfig):
    n = config.depth
    sizes = config.level_sizes()
    off = np.zeros(n + 2, dtype=np.int64)
    off[1:] = np.cumsum(sizes)
    if isinstance(config.profile, TreeSpec):
        tree = config.profile
        ptrs = []
        ptr_off = np.zeros(n + 1, dtype=np.int64)
        pos = 0
        for L in range(n):
            counts = tree.child_counts(L)
            ptr_off[L] = pos
            ptrs.append(np.concatenate([[0], np.cumsum(counts)]))
            pos += counts.size + 1
        ptr = np.concatenate(ptrs).astype(np.int64) if ptrs else np.zeros(1, np.int64)
        return np.ones(n + 1, dtype=np.int64), ptr, ptr_off, True, off
    q = np.array(config.profile.first(n + 1), dtype=np.int64)
    return q, np.zeros(1, np.int64), np.zeros(1, np.int64), False, off


def _check_budget(config: RunConfig):
    v = config.vertices_per_replica()
    if v > config.budget:
        raise ResourceError(
            f"{v} vertices per replica exceeds the budget {config.budget}; reduce the depth"
        )
    return v


def run_replicas(config: RunConfig, replica_ids) -> dict:
    """Raw per-replica level statistics for the given replica ids.

    Returns arrays of shape ``(len(ids), depth)`` under ``abs``, ``signed`` and
    ``tail`` plus the total number of visited vertices.
    """
    _check_budget(config)
    ids = list(replica_ids)
    keys = rng.substreams(config.seed, ids)
    a, sc = _weights(config)
    q, ptr, ptr_off, tree_mode, off = _tree_arrays(config)
    R, n = len(ids), config.depth
    out_abs = np.zeros((R, n))
    out_sig = np.zeros((R, n))
    out_tail = np.zeros((R, n))
    if config.tail_n and not 1 <= config.tail_n <= max(n, 1):
        raise DomainError(f"tail start N = {config.tail_n} outside 1..{n}")
    stub = config.stub is not None
    visited = _run_replicas(keys, n, q, ptr, ptr_off, tree_mode, a, sc, off,
                            int(config.tail_n), stub, float(config.stub or 0.0),
                            out_abs, out_sig, out_tail)
    return {"abs": out_abs, "signed": out_sig, "tail": out_tail, "visited": int(visited)}


def _statistic_matrix(raw: dict, statistic: str) -> np.ndarray:
    if statistic in ("level_max_abs", "two_weight"):
        return raw["abs"]
    if statistic == "level_max_signed":
        return raw["signed"]
    if statistic == "running_max":
        return np.maximum.accumulate(raw["abs"], axis=1)
    if statistic == "tail_sup":
        return np.maximum.accumulate(raw["tail"], axis=1)
    raise DomainError(f"unknown statistic {statistic!r}")


def sample_level_maxima(config: RunConfig, replica_id: int = 0, signed: bool = False) -> np.ndarray:
    """``(M_1, ..., M_n)`` for one replica (signed maxima if ``signed``)."""
    raw = run_replicas(config, [replica_id])
    return raw["signed" if signed else "abs"][0]


def two_weight_sample(config: RunConfig, alpha_fn: Callable, sigma_fn: Callable,
                      replica_id: int = 0) -> np.ndarray:
    """Per-level maxima of ``|sigma(|v|) sum_{u <= v} alpha(|u|) Z(u)|`` for one replica."""
    cfg = RunConfig(config.profile, config.model, config.depth, config.replicas, config.seed,
                    "two_weight", alpha_fn=alpha_fn, sigma_fn=sigma_fn, budget=config.budget,
                    stub=config.stub)
    return run_replicas(cfg, [replica_id])["abs"][0]


# ---------------------------------------------------------------------------
# moments


@dataclass
class RunStats:
    """Per-depth sample moments of one statistic."""

    statistic: str
    depths: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    half_width: np.ndarray
    second_moment_half_width: np.ndarray
    replicas: int
    level: float
    wall_time: float = 0.0
    visited: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    CSV_HEADER = ("depth", "mean", "second_moment", "half_width", "replicas",
                  "second_moment_half_width")

    @classmethod
    def from_samples(cls, statistic, samples: np.ndarray, level: float, **kw) -> "RunStats":
        R, n = samples.shape
        z = NormalDist().inv_cdf(0.5 + level / 2)
        sq = samples * samples
        mean = samples.mean(axis=0)
        m2 = sq.mean(axis=0)
        if R > 1:
            hw = z * samples.std(axis=0, ddof=1) / math.sqrt(R)
            hw2 = z * sq.std(axis=0, ddof=1) / math.sqrt(R)
        else:
            hw = np.full(n, np.inf)
            hw2 = np.full(n, np.inf)
        return cls(statistic, np.arange(1, n + 1), mean, m2, hw, hw2, R, level,
                   samples=samples, **kw)

    def row(self, depth: int) -> dict:
        i = depth - 1
        return {"depth": depth, "mean": float(self.mean[i]),
                "second_moment": float(self.second_moment[i]),
                "half_width": float(self.half_width[i]),
                "second_moment_half_width": float(self.second_moment_half_width[i])}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for i, d in enumerate(self.depths):
            w.writerow([int(d), repr(float(self.mean[i])), repr(float(self.second_moment[i])),
                        repr(float(self.half_width[i])), self.replicas,
                        repr(float(self.second_moment_half_width[i]))])
        return buf.getvalue()


def _chunk_worker(args):
    config, ids = args
    return run_replicas(config, ids)


def _split(R: int, parts: int):
    parts = max(1, min(parts, R))
    bounds = np.linspace(0, R, parts + 1).round().astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(parts)]


def collect(config: RunConfig, workers: int = 1) -> dict:
    """Run all replicas, optionally in worker processes, merged in replica order."""
    _check_budget(config)
    chunks = _split(config.replicas, workers)
    if workers <= 1 or len(chunks) == 1:
        parts = [run_replicas(config, c) for c in chunks]
    else:
        warmup()
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=len(chunks), mp_context=ctx) as ex:
            parts = list(ex.map(_chunk_worker, [(config, c) for c in chunks]))
    return {
        k: np.concatenate([p[k] for p in parts]) for k in ("abs", "signed", "tail")
    } | {"visited": sum(p["visited"] for p in parts)}


def estimate_moments(config: RunConfig, workers: int = 1) -> RunStats:
    """Mean and second moment of ``config.statistic`` at each depth, with CIs."""
    if config.replicas < 2:
        raise DomainError("estimate_moments needs at least 2 replicas")
    t0 = time.perf_counter()
    raw = collect(config, workers)
    samples = _statistic_matrix(raw, config.statistic)
    return RunStats.from_samples(config.statistic, samples, config.level,
                                 wall_time=time.perf_counter() - t0, visited=raw["visited"])


def tail_sup_statistic(config: RunConfig, N: int, workers: int = 1) -> RunStats:
    """Moments of ``Sigma_N`` truncated at each depth: the sup over rays and windows
    ``N <= n <= n + m <= depth`` of ``|sum_{k=n}^{n+m} alpha_k Z(pi_k xi)|``."""
    if N < 1:
        raise DomainError("N must be >= 1")
    if N > config.depth:
        raise DomainError(f"N = {N} exceeds depth {config.depth}")
    cfg = RunConfig(config.profile, config.model, config.depth, config.replicas, config.seed,
                    "tail_sup", tail_n=N, level=config.level, budget=config.budget,
                    stub=config.stub)
    return estimate_moments(cfg, workers)


def brw_displacement(config: RunConfig, workers: int = 1) -> tuple[RunStats, RunStats]:
    """(signed, absolute) maximal displacement statistics from one set of traversals."""
    if config.replicas < 2:
        raise DomainError("brw_displacement needs at least 2 replicas")
    t0 = time.perf_counter()
    raw = collect(config, workers)
    wall = time.perf_counter() - t0
    signed = RunStats.from_samples("level_max_signed", raw["signed"], config.level,
                                   wall_time=wall, visited=raw["visited"])
    absolute = RunStats.from_samples("level_max_abs", raw["abs"], config.level,
                                     wall_time=wall, visited=raw["visited"])
    return signed, absolute


@dataclass
class CouplingResult:
    sub: np.ndarray  # (R, depth) level maxima over the embedded sub-tree
    sup: np.ndarray  # (R, depth) level maxima over the super-tree
    visited: int

    @property
    def pairs(self) -> list[tuple[float, float]]:
        """``(M_sub, M_super)`` at the final depth, one pair per replica."""
        if self.sub.shape[1] == 0:
            return [(0.0, 0.0)] * self.sub.shape[0]
        return list(zip(self.sub[:, -1].tolist(), self.sup[:, -1].tolist()))

    def order_fraction(self) -> float:
        """Fraction of replicas with ``M_sub <= M_super`` at every depth."""
        return float(np.mean(np.all(self.sub <= self.sup, axis=1)))


def coupled_domination(sub: DegreeProfile, sup: DegreeProfile, model: seq.SequenceModel,
                       depth: int, seed: int, R: int,
                       budget: int = DEFAULT_VERTEX_BUDGET) -> CouplingResult:
    """Sample ``M_n`` on ``T(sub)`` embedded in ``T(sup)`` from shared draws."""
    for n in range(1, depth + 1):
        if sub.at(n) > sup.at(n):
            raise DomainError(f"sub q_{n} = {sub.at(n)} exceeds super q_{n} = {sup.at(n)}")
    if R < 1:
        raise DomainError("R must be >= 1")
    sizes = sup.level_sizes(depth)
    if sum(sizes) > budget:
        raise ResourceError(f"{sum(sizes)} vertices per replica exceeds the budget {budget}")
    off = np.zeros(depth + 2, dtype=np.int64)
    off[1:] = np.cumsum(sizes)
    keys = rng.substreams(seed, range(R))
    qs = np.array(sub.first(depth + 1), dtype=np.int64)
    qS = np.array(sup.first(depth + 1), dtype=np.int64)
    a = np.ascontiguousarray(model.values(depth), dtype=float)
    out_sub = np.zeros((R, depth))
    out_sup = np.zeros((R, depth))
    visited = _coupled(keys, depth, qs, qS, a, off, out_sub, out_sup)
    return CouplingResult(out_sub, out_sup, int(visited))
