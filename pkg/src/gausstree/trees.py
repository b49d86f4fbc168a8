"""Degree profiles, explicit rooted trees and the tree-dependent criteria.

Index convention: ``DegreeProfile.q[n-1]`` is ``q_n``, the number of children
of each vertex in generation ``n-1``.  Profiles are finite lists whose last
entry repeats indefinitely, so ``[2]`` is the binary tree and ``[3, 5, 2]``
continues with ``2, 2, ...``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import sequences as seq
from .errors import DomainError, ResourceError

DEFAULT_VERTEX_BUDGET = 2 ** 26
DEFAULT_RATIO_CAP = 16.0


@dataclass(frozen=True)
class DegreeProfile:
    """Per-generation child counts; the last entry repeats forever."""

    q: tuple

    def __post_init__(self):
        q = tuple(int(x) for x in self.q)
        if not q:
            raise DomainError("degree profile must be nonempty")
        if any(x < 1 for x in q):
            raise DomainError("degree profile entries must be >= 1")
        object.__setattr__(self, "q", q)

    @classmethod
    def constant(cls, q: int) -> "DegreeProfile":
        return cls((q,))

    def at(self, n: int) -> int:
        """``q_n`` for ``n >= 1``."""
        if n < 1:
            raise DomainError("profile index starts at 1")
        return self.q[min(n, len(self.q)) - 1]

    def first(self, n: int) -> list[int]:
        """``[q_1, ..., q_n]``."""
        return [self.at(i) for i in range(1, n + 1)]

    @property
    def is_constant(self) -> bool:
        return len(set(self.q)) == 1

    def level_sizes(self, depth: int) -> list[int]:
        """Vertex counts of generations ``0..depth`` (exact ints)."""
        sizes = [1]
        for n in range(1, depth + 1):
            sizes.append(sizes[-1] * self.at(n))
        return sizes

    def vertex_count(self, depth: int) -> int:
        return sum(self.level_sizes(depth))

    def check_branching(self, n: int):
        """Raise unless ``q_i >= 2`` for ``i <= n`` (and on the repeating tail)."""
        bad = [i for i in range(1, max(n, len(self.q)) + 1) if self.at(i) < 2]
        if bad:
            raise DomainError(f"profile has q_{bad[0]} = {self.at(bad[0])} < 2")

    def to_config(self):
        if self.is_constant:
            return {"constant": self.q[0]}
        return list(self.q)

    @classmethod
    def from_config(cls, cfg) -> "DegreeProfile":
        if isinstance(cfg, DegreeProfile):
            return cfg
        if isinstance(cfg, dict):
            if "constant" not in cfg:
                raise DomainError("profile dict needs a 'constant' key")
            return cls.constant(cfg["constant"])
        if isinstance(cfg, int):
            return cls.constant(cfg)
        if isinstance(cfg, str):
            return parse_tree(cfg)
        return cls(tuple(cfg))


_NAMED = {"binary": 2, "ternary": 3, "ray": 1}


def parse_tree(text: str) -> DegreeProfile:
    """``binary``, ``ternary``, ``ray``, ``constant:q`` or ``profile:3,5,2``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name in _NAMED:
            return DegreeProfile.constant(_NAMED[name])
        if name == "constant":
            return DegreeProfile.constant(int(arg))
        if name == "profile":
            return DegreeProfile(tuple(int(a) for a in arg.split(",")))
    except ValueError as exc:
        raise DomainError(f"bad tree spec {text!r}") from exc
    raise DomainError(f"unknown tree spec {text!r}")


class TreeSpec:
    """Explicit finite rooted tree stored generation by generation.

    ``parents[n-1][i]`` is the index (within generation ``n-1``) of the parent
    of vertex ``i`` of generation ``n``.  Parent arrays must be sorted so that
    children of one vertex are contiguous.
    """

    def __init__(self, parents: Sequence[Sequence[int]]):
        gens = []
        prev = 1
        for n, p in enumerate(parents, 1):
            arr = np.asarray(p, dtype=np.int64)
            if arr.ndim != 1:
                raise DomainError("parent lists must be one-dimensional")
            if arr.size and (arr.min() < 0 or arr.max() >= prev):
                raise DomainError(f"generation {n} refers to a missing parent")
            if np.any(np.diff(arr) < 0):
                raise DomainError(f"generation {n} parent list must be non-decreasing")
            counts = np.bincount(arr, minlength=prev)
            if np.any(counts == 0):
                raise DomainError(f"a vertex of generation {n - 1} has no children")
            arr.setflags(write=False)
            gens.append(arr)
            prev = arr.size
        self.parents = tuple(gens)

    @property
    def depth(self) -> int:
        return len(self.parents)

    def level_size(self, n: int) -> int:
        return 1 if n == 0 else int(self.parents[n - 1].size)

    def vertex_count(self) -> int:
        return 1 + sum(p.size for p in self.parents)

    def child_counts(self, n: int) -> np.ndarray:
        """``D(v)`` for the vertices of generation ``n < depth``."""
        return np.bincount(self.parents[n], minlength=self.level_size(n))

    def children(self, n: int, i: int) -> np.ndarray:
        """Indices in generation ``n+1`` of the children of vertex ``(n, i)``."""
        p = self.parents[n]
        lo, hi = np.searchsorted(p, [i, i + 1])
        return np.arange(lo, hi)

    def dmin(self) -> list[int]:
        """``[D_min^(1), ...]``; entry ``n`` is the min child count in generation ``n-1``."""
        return [int(self.child_counts(n).min()) for n in range(self.depth)]

    def dmax(self) -> list[int]:
        return [int(self.child_counts(n).max()) for n in range(self.depth)]

    def ray(self, n: int, i: int) -> "RayPrefix":
        """The root-to-vertex path ending at vertex ``i`` of generation ``n``."""
        path = [i]
        for g in range(n, 0, -1):
            path.append(int(self.parents[g - 1][path[-1]]))
        return RayPrefix(tuple(reversed(path)), self)

    def as_profile(self) -> DegreeProfile | None:
        """The equivalent ``DegreeProfile`` when every generation is regular."""
        lo, hi = self.dmin(), self.dmax()
        if lo != hi or not lo:
            return None
        return DegreeProfile(tuple(lo))

    def dumps(self) -> str:
        """One line per generation with space-separated parent indices."""
        return "".join(" ".join(map(str, p.tolist())) + "\n" for p in self.parents)

    @classmethod
    def loads(cls, text: str) -> "TreeSpec":
        gens = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            gens.append([int(x) for x in line.split()])
        return cls(gens)

    def __eq__(self, other):
        return isinstance(other, TreeSpec) and len(self.parents) == len(other.parents) and all(
            np.array_equal(a, b) for a, b in zip(self.parents, other.parents)
        )

    def __hash__(self):
        return hash(tuple(p.tobytes() for p in self.parents))


@dataclass(frozen=True, eq=False)
class RayPrefix:
    """Vertex indices ``(rho, v_1, ..., v_n)``, one per generation."""

    path: tuple
    tree: object = None

    def __post_init__(self):
        if not self.path or self.path[0] != 0:
            raise DomainError("a ray prefix starts at the root (index 0)")
        if isinstance(self.tree, TreeSpec):
            if len(self.path) - 1 > self.tree.depth:
                raise DomainError("ray prefix longer than the tree")
            for n in range(1, len(self.path)):
                if self.tree.parents[n - 1][self.path[n]] != self.path[n - 1]:
                    raise DomainError(f"vertex {n} of the prefix is not a child of vertex {n - 1}")

    @property
    def length(self) -> int:
        return len(self.path) - 1

    def __eq__(self, other):
        return isinstance(other, RayPrefix) and self.path == other.path and self.tree is other.tree

    def __hash__(self):
        return hash(self.path)


def meet_depth(a: RayPrefix, b: RayPrefix) -> int:
    """Depth of the deepest common vertex of two prefixes."""
    k = 0
    for x, y in zip(a.path[1:], b.path[1:]):
        if x != y:
            break
        k += 1
    return k


def boundary_distance(a: RayPrefix, b: RayPrefix) -> float:
    """``2^(-|a ^ b|)``, and 0 when the prefixes agree entirely."""
    if a.tree is not b.tree:
        raise DomainError("prefixes belong to different trees")
    if a.path == b.path:
        return 0.0
    return 2.0 ** -meet_depth(a, b)


def build_tq(profile: DegreeProfile, depth: int, budget: int = DEFAULT_VERTEX_BUDGET) -> TreeSpec:
    """Explicit ``T(q)`` to the given depth."""
    if depth < 0:
        raise DomainError("depth must be nonnegative")
    total = profile.vertex_count(depth)
    if total > budget:
        raise ResourceError(
            f"T(q) to depth {depth} has {total} vertices, over the budget {budget}; "
            "use the streaming sampler instead"
        )
    parents = []
    size = 1
    for n in range(1, depth + 1):
        q = profile.at(n)
        parents.append(np.repeat(np.arange(size), q))
        size *= q
    return TreeSpec(parents)


def dyadic_bounds(profile: DegreeProfile | Sequence[int], n: int | None = None):
    """``(l_minus, l_plus)`` with ``2^l_minus <= q_i <= 2^l_plus``."""
    qs = list(profile.q if isinstance(profile, DegreeProfile) else profile)
    if isinstance(profile, DegreeProfile) and n is not None:
        qs = profile.first(n)
    if any(int(q) < 2 for q in qs):
        raise DomainError("dyadic bounds need q_i >= 2")
    lo = [int(q).bit_length() - 1 for q in qs]
    hi = [(int(q) - 1).bit_length() for q in qs]
    return lo, hi


def pow2_profile(ls: Sequence[int]) -> DegreeProfile:
    """``(2^l_1, 2^l_2, ...)``."""
    if not ls or any(int(l) < 1 for l in ls):
        raise DomainError("pow2_profile needs entries >= 1")
    return DegreeProfile(tuple(2 ** int(l) for l in ls))


def q_weights(qs: Sequence[int]) -> np.ndarray:
    """``log q_{k+1} / sqrt(log(q_1 ... q_{k+1}))`` for ``k = 0..len(qs)-1``."""
    logs = np.log(np.asarray(qs, dtype=float))
    return logs / np.sqrt(np.cumsum(logs))


def q_weighted_functional(profile: DegreeProfile, model: seq.SequenceModel,
                          horizon: int = seq.DEFAULT_HORIZON, tol: float = seq.DEFAULT_TOL,
                          threshold: float = seq.DIVERGENCE_THRESHOLD) -> seq.SeriesResult:
    """Partial sums of ``Q(q; alpha) = sum_k w_k Q_k(alpha)`` with log-degree weights."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    H = seq._effective_horizon(model, horizon)
    profile.check_branching(H + 1)
    if profile.is_constant:
        # homogeneous case: evaluate as sqrt(log q) * Q(alpha) so both agree exactly
        s = math.sqrt(math.log(profile.q[0]))
        r = seq.q_functional(model, horizon, tol / s, threshold / s)
        return seq.SeriesResult(s * r.value, r.status, s * r.tail, r.horizon, r.reason)
    w = q_weights(profile.first(H + 1))
    partial = math.fsum(w * seq.tail_norms(model, H))
    lmax = math.log(max(profile.q))
    lmin = math.log(min(profile.q))
    tail = lmax / math.sqrt(lmin) * model.q_tail_bound(H)
    return seq._classify(model, "Q", partial, tail, H, tol, threshold)


@dataclass(frozen=True)
class GeneralCriterion:
    value: float
    status: str
    assumption_ok: bool
    ratio: float
    horizon: int
    reason: str = ""


def general_tree_criterion(dmax_profile: Sequence[int], dmin_profile: Sequence[int],
                           model: seq.SequenceModel, horizon: int = seq.DEFAULT_HORIZON,
                           tol: float = seq.DEFAULT_TOL, cap: float = DEFAULT_RATIO_CAP,
                           threshold: float = seq.DIVERGENCE_THRESHOLD) -> GeneralCriterion:
    """Partial sums of ``sum_l Q_l log Dmax^(l+1) / sqrt(log prod_{i<=l+1} Dmax^(i))``.

    Profiles extend by repeating their last entry.  ``assumption_ok`` is whether
    ``max_n log Dmax^(n) / log Dmin^(n)`` stays within ``cap`` over the horizon.
    """
    dmax = DegreeProfile(tuple(dmax_profile))
    dmin = DegreeProfile(tuple(dmin_profile))
    H = seq._effective_horizon(model, horizon)
    hi = dmax.first(H + 1)
    lo = dmin.first(H + 1)
    if any(a < b for a, b in zip(hi, lo)):
        raise DomainError("D_max must dominate D_min entrywise")
    if any(b < 2 for b in lo):
        raise DomainError("D_min entries must be >= 2")
    if np.any(model.values(min(H, model.support or H)) < 0):
        raise DomainError("general-tree criterion needs a nonnegative sequence")
    ratios = np.log(np.array(hi, float)) / np.log(np.array(lo, float))
    ratio = float(ratios.max())
    ok = ratio <= cap
    w = q_weights(hi)
    partial = math.fsum(w * seq.tail_norms(model, H))
    # remainder: weights bounded by log(max Dmax)/sqrt(log(min Dmin)) on the repeating tail
    tail = math.log(max(dmax.q)) / math.sqrt(math.log(min(dmin.q))) * model.q_tail_bound(H)
    r = seq._classify(model, "Q", partial, tail, H, tol, threshold)
    reason = r.reason
    if not ok:
        reason = (f"degree ratio max log Dmax/log Dmin = {ratio:.4g} exceeds cap {cap:g}; "
                  + reason).rstrip("; ")
    return GeneralCriterion(r.value, r.status, ok, ratio, H, reason)


class EmbeddingPlan:
    """Vertex map ``T(sub) -> T(sup)`` sending child ``j`` to child ``j``.

    ``maps[n]`` holds, for every generation-``n`` vertex of the sub-tree, the
    index of its image in generation ``n`` of the super-tree.
    """

    def __init__(self, sub: DegreeProfile, sup: DegreeProfile, depth: int,
                 maps: list[np.ndarray] | None = None):
        self.sub = sub
        self.sup = sup
        self.depth = depth
        if maps is None:
            maps = [np.zeros(1, dtype=np.int64)]
            for n in range(1, depth + 1):
                qs, qS = sub.at(n), sup.at(n)
                prev = maps[-1]
                maps.append((prev[:, None] * qS + np.arange(qs)[None, :]).ravel())
        self.maps = maps

    def __call__(self, n: int, i: int) -> int:
        return int(self.maps[n][i])

    def compose(self, other: "EmbeddingPlan") -> "EmbeddingPlan":
        """``other o self``: first this map, then ``other``."""
        if other.sub != self.sup:
            # profiles may differ only past the depth
            if other.sub.first(self.depth) != self.sup.first(self.depth):
                raise DomainError("embeddings do not chain")
        depth = min(self.depth, other.depth)
        maps = [other.maps[n][self.maps[n]] for n in range(depth + 1)]
        return EmbeddingPlan(self.sub, other.sup, depth, maps)

    def check(self) -> bool:
        """Exhaustive check: injective, root-, depth- and parent-preserving."""
        if self.maps[0].tolist() != [0]:
            return False
        for n in range(1, self.depth + 1):
            m = self.maps[n]
            if np.unique(m).size != m.size:
                return False
            if m.size and (m.min() < 0 or m.max() >= self.sup.level_sizes(n)[-1]):
                return False
            sub_parent = np.arange(m.size) // self.sub.at(n)
            if not np.array_equal(m // self.sup.at(n), self.maps[n - 1][sub_parent]):
                return False
        return True


def embed_profiles(sub: DegreeProfile, sup: DegreeProfile, depth: int) -> EmbeddingPlan:
    """Root, depth and parent preserving injection of ``T(sub)`` into ``T(sup)``."""
    if depth < 0:
        raise DomainError("depth must be nonnegative")
    for n in range(1, depth + 1):
        if sub.at(n) > sup.at(n):
            raise DomainError(f"sub q_{n} = {sub.at(n)} exceeds super q_{n} = {sup.at(n)}")
    return EmbeddingPlan(sub, sup, depth)
