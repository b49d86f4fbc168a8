"""Weight sequences and the sequence-level functionals.

A weight sequence ``alpha = (alpha_1, alpha_2, ...)`` is square summable and
``alpha_0 = 0`` by convention.  Two kinds are supported:

* ``FiniteSequence`` -- explicit values ``alpha_1..alpha_K``, everything exact.
* parametric families (``Geometric``, ``Power``, ``Lacunary``, ``EvenIndex``,
  ``Windowed``) with closed-form tails of squares, certified tail bounds for
  the series functionals and analytic divergence certificates.

The central functional is

    Q(alpha) = sum_{l >= 0} Q_l(alpha) / sqrt(l + 1),
    Q_l(alpha) = (sum_{k >= l + 1} alpha_k^2)^(1/2).

Series statuses are three-valued (``converged``, ``diverged``,
``undetermined``): no finite computation proves divergence in general, so a
series is declared divergent only by an analytic certificate or when its
partial sum exceeds ``DIVERGENCE_THRESHOLD``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta

from .errors import ConsistencyError, DomainError, PrecisionError

DIVERGENCE_THRESHOLD = 1e6
DEFAULT_TOL = 1e-3
DEFAULT_HORIZON = 10_000

CONVERGED = "converged"
DIVERGED = "diverged"
UNDETERMINED = "undetermined"

# relative slack for inequalities that hold exactly in real arithmetic
_INEQ_RTOL = 1e-12


def _neumaier(values) -> float:
    s = 0.0
    c = 0.0
    for v in values:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def _reverse_tails(sq: np.ndarray) -> np.ndarray:
    """``out[l] = sum_{k > l} sq[k-1]`` for ``l = 0..K`` with compensated sums."""
    K = sq.size
    out = np.zeros(K + 1)
    s = 0.0
    c = 0.0
    for i in range(K - 1, -1, -1):
        v = float(sq[i])
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i] = s + c
    return out


class SequenceModel:
    """Common interface of weight sequences.

    Subclasses implement ``alpha``, ``tail_sq`` and the bound/certificate
    hooks.  Instances are immutable.
    """

    kind = "parametric"
    support: int | None = None  # last index that may be nonzero; None = infinite
    monotone = False  # known nonnegative and non-increasing
    exact_sum_tail = False  # sum_tail_bound is the exact remainder, not just a bound

    def alpha(self, k):
        """Value(s) ``alpha_k``; ``alpha_0 = 0``."""
        raise NotImplementedError

    def values(self, n: int) -> np.ndarray:
        """``alpha_1..alpha_n`` as a float array."""
        if n < 0:
            raise DomainError("n must be nonnegative")
        return np.asarray(self.alpha(np.arange(1, n + 1)), dtype=float)

    def tail_sq(self, l):
        """``sum_{k >= l+1} alpha_k^2`` (scalar or array ``l``)."""
        raise NotImplementedError

    def norm(self, l):
        """``Q_l = sqrt(tail_sq(l))`` (scalar or array ``l``)."""
        return np.sqrt(np.asarray(self.tail_sq(l), dtype=float))

    def tail_error(self, l) -> float:
        """Certified absolute error of ``tail_sq(l)``."""
        return 8 * np.finfo(float).eps * float(np.max(self.tail_sq(l)))

    # the three hooks below return an upper bound of the remainder after
    # ``horizon`` terms (math.inf if unknown) or a divergence reason string
    def q_tail_bound(self, horizon: int) -> float:
        return math.inf

    def sum_tail_bound(self, horizon: int) -> float:
        return math.inf

    def variation_tail_bound(self, horizon: int) -> float:
        return math.inf

    def divergence(self, functional: str) -> str | None:
        """Analytic divergence certificate for ``'Q'``, ``'sum'``, ``'variation'``."""
        return None

    def spec(self) -> dict:
        """Round-trippable ``{kind, params}`` description."""
        raise NotImplementedError

    def __repr__(self):
        s = self.spec()
        return f"{type(self).__name__}({s['params']})"


class FiniteSequence(SequenceModel):
    """Finitely supported sequence ``alpha_1..alpha_K``."""

    kind = "finite"

    def __init__(self, values: Sequence[float]):
        arr = np.array(values, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise DomainError("sequence values must be finite")
        arr.setflags(write=False)
        self._values = arr
        nz = np.flatnonzero(arr)
        self.support = int(nz[-1] + 1) if nz.size else 0
        self.K = arr.size
        # tails are kept for alpha / max|alpha| so that norms of very small or
        # very large sequences neither underflow nor overflow
        self._scale = float(np.max(np.abs(arr))) if arr.size else 0.0
        u = arr / self._scale if self._scale > 0 else arr
        self._unit_tails = _reverse_tails(u * u)
        self._unit_tails.setflags(write=False)
        self.monotone = bool(np.all(arr >= 0) and np.all(np.diff(arr) <= 0))

    @property
    def array(self) -> np.ndarray:
        return self._values

    def alpha(self, k):
        k = np.asarray(k)
        idx = np.clip(k, 1, max(self.K, 1)) - 1
        vals = self._values[idx] if self.K else np.zeros(k.shape)
        return np.where((k >= 1) & (k <= self.K), vals, 0.0)

    def tail_sq(self, l):
        l = np.asarray(l)
        if np.any(l < 0):
            raise DomainError("l must be nonnegative")
        return self._unit_tails[np.minimum(l, self.K)] * self._scale ** 2

    def norm(self, l):
        l = np.asarray(l)
        if np.any(l < 0):
            raise DomainError("l must be nonnegative")
        return np.sqrt(self._unit_tails[np.minimum(l, self.K)]) * self._scale

    def tail_error(self, l) -> float:
        return 0.0

    def q_tail_bound(self, horizon):
        return 0.0 if horizon >= self.support else math.inf

    def sum_tail_bound(self, horizon):
        return 0.0 if horizon >= self.support else math.inf

    def variation_tail_bound(self, horizon):
        return 0.0 if horizon >= self.support else math.inf

    def spec(self):
        return {"kind": "finite", "params": {"values": [float(v) for v in self._values]}}

    def __eq__(self, other):
        return isinstance(other, FiniteSequence) and np.array_equal(
            self._values[: self.support], other._values[: other.support]
        )

    def __hash__(self):
        return hash(self._values[: self.support].tobytes())


class Geometric(SequenceModel):
    """``alpha_k = r^k`` with ``0 < |r| < 1``."""

    exact_sum_tail = True

    def __init__(self, r: float):
        r = float(r)
        if not 0 < abs(r) < 1:
            raise DomainError("geometric ratio must satisfy 0 < |r| < 1")
        self.r = r
        self.monotone = r > 0

    def alpha(self, k):
        k = np.asarray(k)
        return np.where(k >= 1, self.r ** np.maximum(k, 1).astype(float), 0.0)

    def tail_sq(self, l):
        l = np.asarray(l, dtype=float)
        if np.any(l < 0):
            raise DomainError("l must be nonnegative")
        r2 = self.r * self.r
        return r2 ** (l + 1) / (1 - r2)

    def q_tail_bound(self, horizon):
        x = abs(self.r)
        return x ** (horizon + 2) / ((1 - x) * math.sqrt(1 - x * x) * math.sqrt(horizon + 2))

    def sum_tail_bound(self, horizon):
        x = abs(self.r)
        return x ** (horizon + 1) / (1 - x)

    def variation_tail_bound(self, horizon):
        # |alpha_{k+1} - alpha_k| = |r|^k |1 - r|; sum_{k>H} k x^k in closed form
        x = abs(self.r)
        H = horizon
        return abs(1 - self.r) * x ** (H + 1) * ((H + 1) - H * x) / (1 - x) ** 2

    def spec(self):
        return {"kind": "geometric", "params": {"r": self.r}}


class Power(SequenceModel):
    """``alpha_k = k^(-p)`` with ``p > 1/2``; ``p = 1`` is the harmonic sequence."""

    monotone = True

    def __init__(self, p: float):
        p = float(p)
        if not p > 0.5:
            raise DomainError("power family needs p > 1/2 for square summability")
        self.p = p
        self.exact_sum_tail = p > 1

    def alpha(self, k):
        k = np.asarray(k)
        return np.where(k >= 1, np.maximum(k, 1).astype(float) ** -self.p, 0.0)

    def tail_sq(self, l):
        l = np.asarray(l, dtype=float)
        if np.any(l < 0):
            raise DomainError("l must be nonnegative")
        return zeta(2 * self.p, l + 1)

    def tail_error(self, l):
        return 64 * np.finfo(float).eps * float(np.max(self.tail_sq(l)))

    def q_tail_bound(self, horizon):
        p = self.p
        if p <= 1:
            return math.inf
        # tail_sq(l) <= (2p/(2p-1)) (l+1)^(1-2p), then an integral bound
        return math.sqrt(2 * p / (2 * p - 1)) * (horizon + 1) ** (1 - p) / (p - 1)

    def sum_tail_bound(self, horizon):
        return float(zeta(self.p, horizon + 1)) if self.p > 1 else math.inf

    def variation_tail_bound(self, horizon):
        # k (k^-p - (k+1)^-p) <= p k^-p
        return self.p * float(zeta(self.p, horizon + 1)) if self.p > 1 else math.inf

    def divergence(self, functional):
        if self.p > 1:
            return None
        if functional == "Q":
            return (f"Q_l >= (l+1)^(1/2-p)/sqrt(2p-1) by an integral bound, so the terms "
                    f"dominate (l+1)^(-p) with p={self.p:g} <= 1")
        if functional == "sum":
            return f"sum of k^(-p) with p={self.p:g} <= 1 diverges"
        if functional == "variation":
            return f"k(k^-p - (k+1)^-p) >= p 2^(-p-1) k^(-p) and p={self.p:g} <= 1"
        return None

    def spec(self):
        return {"kind": "power", "params": {"p": self.p}}


def _hurwitz(s: float, start):
    return zeta(s, np.asarray(start, dtype=float))


class Lacunary(SequenceModel):
    """``alpha_k = n^(-2)`` if ``k = 2^n`` (n >= 1), else 0.

    Summable but with ``Q(alpha) = infinity``.
    """

    exact_sum_tail = True

    def alpha(self, k):
        k = np.asarray(k, dtype=np.int64)
        pos = np.maximum(k, 1)
        is_pow = (k >= 2) & ((pos & (pos - 1)) == 0)
        n = np.log2(pos).round()
        return np.where(is_pow, 1.0 / np.maximum(n, 1) ** 2, 0.0)

    @staticmethod
    def _first_n(m):
        # smallest n >= 1 with 2^n >= m
        m = np.atleast_1d(np.asarray(m, dtype=np.int64))
        out = np.array([max(1, int(v - 1).bit_length()) for v in m.ravel()], dtype=float)
        return out.reshape(m.shape)

    def tail_sq(self, l):
        l_arr = np.asarray(l)
        if np.any(l_arr < 0):
            raise DomainError("l must be nonnegative")
        res = _hurwitz(4.0, self._first_n(l_arr + 1))
        return res.reshape(l_arr.shape) if l_arr.ndim == 0 else res

    def sum_tail_bound(self, horizon):
        return float(zeta(2.0, max(1, int(horizon).bit_length())))

    def divergence(self, functional):
        if functional == "Q":
            return ("Q_l >= n^(-2) for 2^(n-1) <= l < 2^n, so the block sums are at least "
                    "2^(n/2-1)/n^2, which is unbounded")
        if functional == "variation":
            return "the term at k = 2^n - 1 equals (2^n - 1)/n^2, which is unbounded"
        return None

    def spec(self):
        return {"kind": "remark-lacunary", "params": {}}


class EvenIndex(SequenceModel):
    """``alpha_k = n^(-2)`` if ``k = 2n``, else 0.

    ``Q(alpha) < infinity`` while ``sum k |alpha_{k+1} - alpha_k| = infinity``.
    """

    exact_sum_tail = True

    def alpha(self, k):
        k = np.asarray(k, dtype=np.int64)
        n = np.maximum(k // 2, 1).astype(float)
        return np.where((k >= 2) & (k % 2 == 0), 1.0 / n ** 2, 0.0)

    def tail_sq(self, l):
        l_arr = np.asarray(l, dtype=np.int64)
        if np.any(l_arr < 0):
            raise DomainError("l must be nonnegative")
        return _hurwitz(4.0, np.maximum(1, (l_arr + 2) // 2))

    def q_tail_bound(self, horizon):
        # tail_sq(l) <= (4/3) m^-3 <= (32/3)(l+1)^-3
        return math.sqrt(32 / 3) / (horizon + 1)

    def sum_tail_bound(self, horizon):
        return float(zeta(2.0, horizon // 2 + 1))

    def divergence(self, functional):
        if functional == "variation":
            return "the term at k = 2n - 1 equals (2n - 1)/n^2 >= 1/n"
        return None

    def spec(self):
        return {"kind": "remark-even", "params": {}}


class Windowed(SequenceModel):
    """``alpha_k 1(k >= N)`` for an infinite base sequence."""

    def __init__(self, base: SequenceModel, N: int):
        if N < 1:
            raise DomainError("window start must be >= 1")
        self.base = base
        self.N = int(N)
        self.monotone = False

    def alpha(self, k):
        k = np.asarray(k)
        return np.where(k >= self.N, self.base.alpha(k), 0.0)

    def tail_sq(self, l):
        return self.base.tail_sq(np.maximum(np.asarray(l), self.N - 1))

    def tail_error(self, l):
        return self.base.tail_error(np.maximum(np.asarray(l), self.N - 1))

    def q_tail_bound(self, horizon):
        start = self.N - 1
        if horizon >= start:
            return self.base.q_tail_bound(horizon)
        head = math.sqrt(float(self.base.tail_sq(start))) * sum(
            1 / math.sqrt(l + 1) for l in range(horizon + 1, start + 1)
        )
        return head + self.base.q_tail_bound(start)

    def sum_tail_bound(self, horizon):
        return self.base.sum_tail_bound(max(horizon, self.N - 1))

    def variation_tail_bound(self, horizon):
        extra = 0.0
        if horizon < self.N - 1 and self.N >= 2:
            extra = (self.N - 1) * abs(float(self.base.alpha(self.N)))
        return self.base.variation_tail_bound(max(horizon, self.N - 1)) + extra

    def divergence(self, functional):
        return self.base.divergence(functional)

    def spec(self):
        return {"kind": "window", "params": {"base": self.base.spec(), "N": self.N}}


# ---------------------------------------------------------------------------
# construction from specs

FAMILY_NAMES = ("finite", "spike", "zero", "geometric", "power", "harmonic",
                "remark-lacunary", "remark-even", "constant", "window")


def from_spec(spec) -> SequenceModel:
    """Build a model from ``"name:args"`` strings or ``{kind, params}`` dicts.

    String forms: ``geometric:0.5``, ``power:2``, ``harmonic``,
    ``remark-lacunary``, ``remark-even``, ``spike``, ``zero``,
    ``constant:c,n`` and ``finite:a1,a2,...``.
    """
    if isinstance(spec, SequenceModel):
        return spec
    if isinstance(spec, str):
        name, _, arg = spec.strip().partition(":")
        args = [a for a in arg.split(",") if a.strip()] if arg else []
        try:
            nums = [float(a) for a in args]
        except ValueError as exc:
            raise DomainError(f"bad sequence spec {spec!r}") from exc
        return _build(name.strip().lower(), nums, {})
    if isinstance(spec, dict):
        kind = str(spec.get("kind", "")).lower()
        params = dict(spec.get("params", {}))
        return _build(kind, None, params)
    raise DomainError(f"cannot interpret sequence spec {spec!r}")


def _build(name, nums, params):
    def arg(key, pos, default=None):
        if nums is not None:
            if len(nums) > pos:
                return nums[pos]
            if default is None:
                raise DomainError(f"family {name!r} needs parameter {key}")
            return default
        if key in params:
            return params[key]
        if default is None:
            raise DomainError(f"family {name!r} needs parameter {key}")
        return default

    if name == "geometric":
        return Geometric(arg("r", 0))
    if name == "power":
        return Power(arg("p", 0))
    if name == "harmonic":
        return Power(1.0)
    if name in ("remark-lacunary", "lacunary"):
        return Lacunary()
    if name in ("remark-even", "even-index", "even"):
        return EvenIndex()
    if name == "spike":
        return FiniteSequence([arg("c", 0, 1.0)])
    if name == "zero":
        return FiniteSequence([])
    if name == "constant":
        c = arg("c", 0)
        n = arg("n", 1)
        if n != int(n) or n < 0:
            raise DomainError("constant family needs an integer length n >= 0")
        return FiniteSequence([c] * int(n))
    if name == "finite":
        vals = nums if nums is not None else params.get("values", [])
        return FiniteSequence(vals)
    if name == "window":
        if nums is not None:
            raise DomainError("window sequences are only specifiable as dicts")
        return Windowed(from_spec(params["base"]), int(params["N"]))
    raise DomainError(f"unknown sequence family {name!r}")


def load_sequence_file(path) -> FiniteSequence:
    """Read a one-value-per-line text file (blank lines and ``#`` comments skipped)."""
    vals = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals.append(float(line))
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: not a number: {line!r}") from exc
    return FiniteSequence(vals)


# ---------------------------------------------------------------------------
# functionals

@dataclass(frozen=True)
class SeriesResult:
    """Partial sum of a nonnegative series with a three-valued status."""

    value: float
    status: str
    tail: float  # bound or estimate of the remainder; inf if unknown
    horizon: int
    reason: str = ""

    @property
    def converged(self):
        return self.status == CONVERGED


def tail_norm(model: SequenceModel, l: int, max_error: float | None = None) -> float:
    """``Q_l(alpha) = (sum_{k>=l+1} alpha_k^2)^(1/2)``."""
    if l < 0:
        raise DomainError("l must be nonnegative")
    if max_error is not None:
        err = model.tail_error(l)
        # error of the square root from the error of the square
        t = float(model.tail_sq(l))
        root_err = err / (2 * math.sqrt(t)) if t > 0 else math.sqrt(err)
        if root_err > max_error:
            raise PrecisionError(
                f"tail_norm({l}) certified only to {root_err:.3g} > requested {max_error:.3g}"
            )
    return float(model.norm(l))


def tail_norms(model: SequenceModel, L: int) -> np.ndarray:
    """``Q_0..Q_L`` as an array."""
    return np.asarray(model.norm(np.arange(L + 1)), dtype=float)


def _effective_horizon(model, horizon):
    if model.support is not None:
        return max(horizon, model.support)
    return horizon


def _classify(model, functional, partial, tail, horizon, tol, threshold):
    cert = model.divergence(functional)
    if cert:
        return SeriesResult(partial, DIVERGED, math.inf, horizon, cert)
    if partial > threshold:
        return SeriesResult(partial, DIVERGED, math.inf, horizon,
                            f"partial sum {partial:.6g} exceeds threshold {threshold:g}")
    if tail < tol:
        return SeriesResult(partial, CONVERGED, tail, horizon)
    return SeriesResult(partial, UNDETERMINED, tail, horizon,
                        f"remainder bound {tail:.3g} not below tol {tol:g}")


def q_terms(model: SequenceModel, horizon: int) -> np.ndarray:
    """The terms ``Q_l / sqrt(l+1)`` for ``l = 0..horizon``."""
    ls = np.arange(horizon + 1)
    return tail_norms(model, horizon) / np.sqrt(ls + 1.0)


def q_functional(model: SequenceModel, horizon: int = DEFAULT_HORIZON,
                 tol: float = DEFAULT_TOL,
                 threshold: float = DIVERGENCE_THRESHOLD) -> SeriesResult:
    """Partial sum of ``Q(alpha) = sum_l Q_l/sqrt(l+1)`` through ``horizon``.

    Finite-support models are always summed over their whole support, so the
    returned value is exact.
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    H = _effective_horizon(model, horizon)
    partial = math.fsum(q_terms(model, H))
    return _classify(model, "Q", partial, model.q_tail_bound(H), H, tol, threshold)


def q_value(model: FiniteSequence) -> float:
    """Exact ``Q(alpha)`` of a finite-support sequence."""
    if model.support is None:
        raise DomainError("q_value needs a finite-support sequence")
    return math.fsum(q_terms(model, max(model.support, 0)))


def sum_functional(model: SequenceModel, horizon: int = DEFAULT_HORIZON,
                   tol: float = DEFAULT_TOL,
                   threshold: float = DIVERGENCE_THRESHOLD) -> SeriesResult:
    """Partial sum of ``sum_k |alpha_k|``."""
    H = _effective_horizon(model, horizon)
    partial = math.fsum(np.abs(model.values(H)))
    tail = model.sum_tail_bound(H)
    if model.exact_sum_tail and math.isfinite(tail):
        # closed-form remainder: fold it in, leaving only rounding uncertainty
        partial += tail
        tail = 64 * np.finfo(float).eps * partial
    return _classify(model, "sum", partial, tail, H, tol, threshold)


def variation_terms(model: SequenceModel, n: int) -> np.ndarray:
    """``k |alpha_{k+1} - alpha_k|`` for ``k = 1..n``."""
    v = model.values(n + 1)
    return np.arange(1, n + 1) * np.abs(np.diff(v))


def variation_functional(model: SequenceModel, horizon: int = DEFAULT_HORIZON,
                         tol: float = DEFAULT_TOL,
                         threshold: float = DIVERGENCE_THRESHOLD) -> SeriesResult:
    """Partial sum of ``sum_k k |alpha_{k+1} - alpha_k|``."""
    H = _effective_horizon(model, horizon)
    partial = math.fsum(variation_terms(model, H))
    return _classify(model, "variation", partial, model.variation_tail_bound(H), H, tol,
                     threshold)


_VERDICT = {CONVERGED: "holds", DIVERGED: "fails", UNDETERMINED: "undetermined-at-horizon"}


@dataclass(frozen=True)
class ConditionReport:
    q: SeriesResult
    sum_abs: SeriesResult
    variation: SeriesResult
    verdict_c1: str
    verdict_c2: str
    verdict_c3: str
    horizon: int

    @property
    def q_value(self):
        return self.q.value if self.q.status != DIVERGED else math.inf

    def table(self) -> list[tuple[str, str, str]]:
        return [
            ("c-1", "alpha_k -> 0 and sum k|alpha_{k+1}-alpha_k| < inf", self.verdict_c1),
            ("c-2", "Q(alpha) < inf", self.verdict_c2),
            ("c-3", "sum alpha_k < inf", self.verdict_c3),
        ]

    def to_dict(self):
        def sr(r):
            return {"value": r.value, "status": r.status, "tail": r.tail, "reason": r.reason}
        return {"horizon": self.horizon, "Q": sr(self.q), "sum_abs": sr(self.sum_abs),
                "variation": sr(self.variation), "c1": self.verdict_c1,
                "c2": self.verdict_c2, "c3": self.verdict_c3}


def _check_nonnegative(model, n):
    if np.any(model.values(n) < 0):
        raise DomainError("sequence has negative entries")


def condition_report(model: SequenceModel, horizon: int = DEFAULT_HORIZON,
                     tol: float = DEFAULT_TOL) -> ConditionReport:
    """Evaluate (c-1) variation, (c-2) ``Q < inf`` and (c-3) summability.

    Square summability already forces ``alpha_k -> 0``, so (c-1) reduces to
    finiteness of the weighted variation.
    """
    _check_nonnegative(model, _effective_horizon(model, horizon))
    q = q_functional(model, horizon, tol)
    s = sum_functional(model, horizon, tol)
    v = variation_functional(model, horizon, tol)
    return ConditionReport(q, s, v, _VERDICT[v.status], _VERDICT[q.status],
                           _VERDICT[s.status], q.horizon)


# sum_{l=1}^n sqrt((n-l+1)/l) <= sqrt(n) (2 sqrt(n) - 1) < 2n; the sharp
# constant is pi/2, approached from below as n grows
VARIATION_CONSTANT = 2.0


@dataclass(frozen=True)
class ChainReport:
    Q: float
    sum_abs: float
    variation: float
    monotone_flag: bool
    unit_constant_holds: bool  # whether Q <= variation holds with constant 1


def chain_inequalities(model: SequenceModel) -> ChainReport:
    """Check ``Q <= 2 sum n|alpha_n - alpha_{n+1}|``, ``sum alpha <= 4Q`` and, for
    non-increasing input, ``sum k|alpha_k - alpha_{k+1}| <= 2 sum alpha``.

    The first bound is often quoted with constant 1, which fails for constant
    blocks such as ``(1, 1)``; ``unit_constant_holds`` reports that version.
    """
    if model.support is None:
        raise DomainError("chain_inequalities needs a finite-support sequence")
    K = model.support
    vals = model.values(K)
    if np.any(vals < 0):
        raise DomainError("chain_inequalities needs nonnegative entries")
    Q = q_value(model)
    S = math.fsum(vals)
    V = math.fsum(variation_terms(model, K))
    mono = bool(np.all(np.diff(vals) <= 0))

    def le(a, b, what):
        if a > b * (1 + _INEQ_RTOL) + 1e-300:
            raise ConsistencyError(f"violated {what}: {a!r} > {b!r}")

    le(Q, VARIATION_CONSTANT * V, "Q(alpha) <= 2 sum n|alpha_n - alpha_{n+1}|")
    le(S, 4 * Q, "sum alpha_k <= 4 Q(alpha)")
    if mono:
        le(V, 2 * S, "sum k|alpha_k - alpha_{k+1}| <= 2 sum alpha_k")
    return ChainReport(Q, S, V, mono, bool(Q <= V * (1 + _INEQ_RTOL)))


def block_embed(model: SequenceModel, ls: Sequence[int]) -> FiniteSequence:
    """Place ``alpha_k`` at position ``l_1 + ... + l_k`` and zeros elsewhere."""
    ls = [int(x) for x in ls]
    if not ls or any(x <= 0 for x in ls):
        raise DomainError("block lengths must be a nonempty list of positive integers")
    if model.support is None:
        raise DomainError("block_embed needs a finite-support sequence")
    K = model.support
    if K > len(ls):
        raise DomainError(f"support {K} exceeds the {len(ls)} block lengths")
    pos = np.cumsum(np.asarray(ls[:K], dtype=np.int64))
    out = np.zeros(int(pos[-1]) if K else 0)
    out[pos - 1] = model.values(K)
    return FiniteSequence(out)


def block_q_identity(model: SequenceModel, ls: Sequence[int]) -> float:
    """``sum_k Q_k(alpha) sum_{Lambda_k <= l < Lambda_{k+1}} 1/sqrt(l+1)``.

    Equals ``Q(block_embed(model, ls))``.
    """
    K = model.support
    lam = np.concatenate([[0], np.cumsum([int(x) for x in ls[:K]])])
    Qk = tail_norms(model, K)
    terms = []
    for k in range(K):
        ls_k = np.arange(lam[k], lam[k + 1])
        terms.extend(Qk[k] / np.sqrt(ls_k + 1.0))
    return math.fsum(terms)


def prefix(model: SequenceModel, n: int) -> FiniteSequence:
    """``alpha^(n)_k = alpha_k 1(k <= n)``."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    if model.support is not None and n >= model.support:
        return model if isinstance(model, FiniteSequence) else FiniteSequence(model.values(n))
    return FiniteSequence(model.values(n))


def truncate(model: SequenceModel, N: int, L: int | None = None) -> SequenceModel:
    """``alpha^(N,L)_k = 1(N <= k <= N+L) alpha_k``; ``L=None`` means no upper cut."""
    if N < 1:
        raise DomainError("N must be >= 1")
    if L is not None and L < 0:
        raise DomainError("L must be nonnegative")
    if L is None:
        if model.support is not None:
            L = max(model.support - N, 0)
        else:
            return Windowed(model, N)
    vals = model.values(N + L).copy()
    vals[: N - 1] = 0.0
    return FiniteSequence(vals)


def tail_bracket(model: SequenceModel, N: int, horizon: int = DEFAULT_HORIZON) -> float:
    """``2 sqrt(N) Q_{N-1} + sum_{l >= N} Q_l/sqrt(l+1)``, summed to the horizon
    plus the certified remainder bound when one is finite."""
    if N < 1:
        raise DomainError("N must be >= 1")
    H = max(_effective_horizon(model, horizon), N)
    head = 2 * math.sqrt(N) * tail_norm(model, N - 1)
    terms = q_terms(model, H)[N:]
    rest = model.q_tail_bound(H)
    return head + math.fsum(terms) + (rest if math.isfinite(rest) else 0.0)


def kronecker_check(a: Sequence[float], psi: Sequence[float] | Callable[[int], float],
                    n_max: int | None = None) -> np.ndarray:
    """Residuals ``r_n = (a_1 + ... + a_n) / psi(n)`` for ``n <= n_max``."""
    a = np.asarray(a, dtype=float)
    n_max = a.size if n_max is None else min(int(n_max), a.size)
    if callable(psi):
        psi_v = np.array([psi(n) for n in range(1, n_max + 1)], dtype=float)
    else:
        psi_v = np.asarray(psi, dtype=float)[:n_max]
    if psi_v.size < n_max:
        raise DomainError("psi shorter than n_max")
    if np.any(psi_v <= 0):
        raise DomainError("psi must be positive")
    if np.any(np.diff(psi_v) < 0):
        raise DomainError("psi must be non-decreasing")
    return np.cumsum(a[:n_max]) / psi_v


def nqn_surrogate(model: SequenceModel, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """``(sqrt(N) Q_{N-1}, (Q_0 + ... + Q_{N-1})/sqrt(N))`` for ``N = 1..n_max``.

    The first never exceeds the second because ``Q_l`` is non-increasing.
    """
    Q = tail_norms(model, n_max - 1)
    N = np.arange(1, n_max + 1)
    return np.sqrt(N) * Q, np.cumsum(Q) / np.sqrt(N)


@dataclass(frozen=True)
class NamedFamily:
    name: str
    model: SequenceModel = field(compare=False)


def builtin_families() -> dict[str, SequenceModel]:
    """Named families used by the CLI and the verification suite."""
    names = ["spike", "zero", "geometric:0.5", "power:2", "harmonic",
             "remark-lacunary", "remark-even", "constant:1,22"]
    return {n: from_spec(n) for n in names}
