"""Walsh analysis on the Cantor group {-1, 1}^N.

Sign points are arrays of +-1 values ``theta_1..theta_K``; ``varpi`` is the
all-ones point.  Points of depth ``K`` are indexed by bitmask: bit ``i-1`` of
the index is set iff ``theta_i = -1``, so index 0 is ``varpi``.  A subset
``A`` of ``{1..K}`` is likewise a bitmask, and ``m_A`` is its bit length.

The Walsh coefficient of ``A`` depends on ``m_A`` only:

    a(m)^2 = sum_{k >= max(m, 1)} 2^(-k) alpha_k^2.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from . import rng
from . import sequences as seq
from .errors import DomainError, NumericError, ResourceError

MAX_FIELD_K = 24
LOG2 = math.log(2.0)


def walsh_coefficient(model: seq.SequenceModel, m: int) -> float:
    """``a(m)``; exact for finite support, 64 extra terms for parametric models."""
    if m < 0:
        raise DomainError("m must be nonnegative")
    lo = max(m, 1)
    hi = model.support if model.support is not None else m + 64
    if hi < lo:
        return 0.0
    k = np.arange(lo, hi + 1)
    v = model.values(hi)[lo - 1:]
    return math.sqrt(math.fsum(np.ldexp(v * v, -k)))


@dataclass(frozen=True)
class WalshTable:
    K: int
    a: np.ndarray  # a(0..K)
    mult: np.ndarray  # number of A in {1..K} with m_A = m

    @classmethod
    def build(cls, model: seq.SequenceModel, K: int) -> "WalshTable":
        if K < 0:
            raise DomainError("K must be nonnegative")
        a = np.array([walsh_coefficient(model, m) for m in range(K + 1)])
        mult = np.array([1] + [2 ** (m - 1) for m in range(1, K + 1)], dtype=float)
        return cls(K, a, mult)

    def coefficients(self) -> np.ndarray:
        """``a_A`` for every bitmask ``A < 2^K``."""
        idx = np.arange(2 ** self.K)
        m = np.zeros(idx.size, dtype=np.int64)
        for b in range(self.K):
            m[(idx >> b) > 0] = b + 1
        return self.a[m]


def _check_support(model, K):
    if model.support is None or model.support > K:
        raise DomainError(f"sequence support must be finite and <= K = {K}")


def parseval_check(model: seq.SequenceModel, K: int):
    """``(lhs, rhs, |lhs - rhs|)`` with ``lhs = sum_m mult(m) a(m)^2``, ``rhs = sum alpha^2``."""
    _check_support(model, K)
    t = WalshTable.build(model, K)
    lhs = math.fsum(t.mult * t.a ** 2)
    rhs = float(model.tail_sq(0))
    return lhs, rhs, abs(lhs - rhs)


def sign_points(K: int) -> np.ndarray:
    """All ``2^K`` points of depth ``K`` as rows of +-1, in bitmask order."""
    idx = np.arange(2 ** K)[:, None]
    bits = (idx >> np.arange(K)[None, :]) & 1
    return 1 - 2 * bits


def meet(theta, eta) -> int:
    """``|theta ^ eta|``: index of the first disagreement minus one."""
    theta = np.asarray(theta)
    eta = np.asarray(eta)
    if theta.shape != eta.shape:
        raise DomainError("sign points have different lengths")
    diff = np.flatnonzero(theta != eta)
    return int(diff[0]) if diff.size else int(theta.size)


def covariance_kernel(model: seq.SequenceModel, theta, eta) -> float:
    """``C(theta, eta) = sum_{k <= |theta ^ eta|} alpha_k^2``."""
    j = meet(theta, eta)
    v = model.values(j)
    return math.fsum(v * v)


def walsh_weights(theta, eta) -> np.ndarray:
    """``W(m) = sum_{A: m_A = m} (theta eta)_A`` for ``m = 0..K``."""
    theta = np.asarray(theta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if theta.shape != eta.shape:
        raise DomainError("sign points have different lengths")
    rho = theta * eta
    prods = np.concatenate([[1.0], np.cumprod(1.0 + rho)])
    W = np.empty(rho.size + 1)
    W[0] = 1.0
    W[1:] = rho * prods[:-1]
    return W


def walsh_covariance_check(model: seq.SequenceModel, theta, eta, K: int | None = None):
    """``(walsh_side, kernel_side, diff)`` for the Walsh expansion of ``C``."""
    theta = np.asarray(theta)
    K = theta.size if K is None else K
    if theta.size != K or np.asarray(eta).size != K:
        raise DomainError("sign point length must equal K")
    _check_support(model, K)
    t = WalshTable.build(model, K)
    walsh = math.fsum(t.a ** 2 * walsh_weights(theta, eta))
    kern = covariance_kernel(model, theta, eta)
    return walsh, kern, abs(walsh - kern)


def gram_matrix(model: seq.SequenceModel, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points))
    n, K = pts.shape
    v = model.values(K)
    cum = np.concatenate([[0.0], np.cumsum(v * v)])
    G = np.empty((n, n))
    for i in range(n):
        neq = pts != pts[i]
        first = np.where(neq.any(axis=1), neq.argmax(axis=1), K)
        G[i] = cum[first]
    return G


def psd_check(model: seq.SequenceModel, points, tol: float = 1e-10) -> bool:
    """Smallest eigenvalue of the Gram matrix of ``C`` on ``points`` is ``>= -tol``."""
    if len(points) < 1:
        raise DomainError("psd_check needs at least one point")
    G = gram_matrix(model, points)
    try:
        lam = np.linalg.eigvalsh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    return bool(lam[0] >= -tol)


@dataclass(frozen=True)
class SigmaProfile:
    """The boundary profile ``sigma(theta) = Q_{|theta ^ varpi|}`` and its rearrangement."""

    Q: np.ndarray  # Q_0..Q_L
    exact: bool  # Q_l = 0 for every l > L

    def sigma(self, theta) -> float:
        theta = np.asarray(theta)
        l = meet(theta, np.ones_like(theta))
        return float(self.Q[min(l, self.Q.size - 1)])

    def sigma_bar(self, t):
        """``sum_l Q_l 1(2^(-l-1) < t <= 2^(-l))`` on ``(0, 1]``."""
        t = np.asarray(t, dtype=float)
        if np.any((t <= 0) | (t > 1)):
            raise DomainError("sigma_bar is defined on (0, 1]")
        # l = ceil(-log2 t) - 1 with exact handling of dyadic points
        m, e = np.frexp(t)
        l = np.where(m == 0.5, -e + 1, -e)
        # for finite support Q[-1] = 0, so clipping is exact
        return self.Q[np.clip(l, 0, self.Q.size - 1)]

    def m_sigma(self, s) -> float:
        """``mu(sigma < s) = sum_l 2^(-l-1) 1(Q_l < s)``."""
        below = self.Q < s
        total = math.fsum(np.ldexp(1.0, -np.arange(1, self.Q.size + 1))[below])
        if self.exact and s > 0:
            total += 2.0 ** -self.Q.size
        return total

    def steps(self) -> list[tuple[float, float, float]]:
        """Merged steps ``(t_lo, t_hi, value)`` of ``sigma_bar``, from ``t = 1`` down."""
        out = []
        Q = self.Q
        l = 0
        L = Q.size
        while l < L:
            j = l
            while j + 1 < L and Q[j + 1] == Q[l]:
                j += 1
            lo = 0.0 if (self.exact and j == L - 1) else 2.0 ** (-j - 1)
            out.append((lo, 2.0 ** -l, float(Q[l])))
            l = j + 1
        return out


def sigma_profile(model: seq.SequenceModel, horizon: int = 64) -> SigmaProfile:
    """Profile with ``Q_0..Q_K`` (finite support ``K``) or ``Q_0..Q_horizon``."""
    if model.support is not None:
        return SigmaProfile(seq.tail_norms(model, model.support), True)
    return SigmaProfile(seq.tail_norms(model, horizon), False)


def block_integral(l) -> np.ndarray:
    """``int_{2^(-l-1)}^{2^(-l)} dt / (t sqrt(log(4/t)))`` in conjugate form."""
    l = np.asarray(l, dtype=float)
    return 2.0 * math.sqrt(LOG2) / (np.sqrt(l + 3.0) + np.sqrt(l + 2.0))


def entropy_integral(model: seq.SequenceModel, method: str = "blockwise",
                     horizon: int = 64) -> float:
    """``I(sigma) = int_0^1 sigma_bar(t) / (t sqrt(log(4/t))) dt``.

    Parametric models are cut at ``horizon`` blocks.
    """
    prof = sigma_profile(model, horizon)
    if method == "blockwise":
        ls = np.arange(prof.Q.size)
        return math.fsum(prof.Q * block_integral(ls))
    if method == "quadrature":
        total = []
        # substitute u = -log t; each merged step becomes a finite u-interval
        for lo, hi, val in prof.steps():
            if val == 0.0:
                continue
            ua = -math.log(hi)
            ub = -math.log(lo)
            res, err, *rest = integrate.quad(
                lambda u: 1.0 / math.sqrt(2 * LOG2 + u), ua, ub,
                epsabs=1e-14, epsrel=1e-13, limit=200, full_output=1,
            )
            if len(rest) > 1 or not math.isfinite(res):
                raise NumericError(f"quadrature did not converge on ({lo}, {hi}]")
            total.append(val * res)
        return math.fsum(total)
    raise DomainError(f"unknown method {method!r}")


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform: ``y[t] = sum_A (-1)^popcount(A & t) x[A]``."""
    y = np.array(x, dtype=float)
    n = y.size
    if n & (n - 1):
        raise DomainError("length must be a power of two")
    h = 1
    while h < n:
        v = y.reshape(-1, 2, h)
        a = v[:, 0, :].copy()
        v[:, 0, :] += v[:, 1, :]
        v[:, 1, :] = a - v[:, 1, :]
        h *= 2
    return y


def simulate_walsh_series(model: seq.SequenceModel, K: int, seed: int,
                          call_id: int = 0) -> np.ndarray:
    """One draw of ``X(theta) = sum_A a_A g_A theta_A`` at every depth-``K`` point."""
    if K < 0:
        raise DomainError("K must be nonnegative")
    if K > MAX_FIELD_K:
        raise ResourceError(f"K = {K} exceeds the field budget K <= {MAX_FIELD_K}")
    _check_support(model, K)
    key = rng.substream(seed, call_id)
    g = rng.standard_normals(key, np.arange(2 ** K))
    c = WalshTable.build(model, K).coefficients()
    return fwht(c * g)


def dump_field(values: np.ndarray, path, header: dict | None = None):
    """Write ``uint64 count`` (little endian) then float64 values; header goes to a JSON sidecar."""
    path = Path(path)
    vals = np.ascontiguousarray(values, dtype="<f8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", vals.size))
        fh.write(vals.tobytes())
    tmp.replace(path)
    if header is not None:
        side = path.with_name(path.name + ".json")
        tmp = side.with_name(side.name + ".tmp")
        tmp.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
        tmp.replace(side)


def load_field(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", data[:8])
    vals = np.frombuffer(data[8:], dtype="<f8")
    if vals.size != n:
        raise DomainError(f"{path}: header says {n} values, found {vals.size}")
    return vals.copy()
