"""Boundedness decisions, sandwich experiments and report files."""
from __future__ import annotations

import csv
import inspect
import io
import json
import math
import os
import platform
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import montecarlo as mc
from . import sequences as seq
from . import trees
from .errors import DomainError, ResourceError

BOUNDED = "bounded"
UNBOUNDED = "unbounded"
UNDETERMINED = "undetermined"

SCHEMA_VERSION = 1

_DECISION = {seq.CONVERGED: BOUNDED, seq.DIVERGED: UNBOUNDED, seq.UNDETERMINED: UNDETERMINED}


def _series_evidence(r: seq.SeriesResult) -> dict:
    return {"value": r.value, "status": r.status, "tail": r.tail, "horizon": r.horizon,
            "reason": r.reason}


@dataclass
class VerdictReport:
    decision: str
    criterion_used: str
    evidence: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"decision": self.decision, "criterion_used": self.criterion_used,
                "evidence": self.evidence, "notes": list(self.notes)}


def _is_monotone(model: seq.SequenceModel, horizon: int) -> bool:
    if model.support is not None:
        v = model.values(model.support)
        return bool(np.all(v >= 0) and np.all(np.diff(v) <= 0))
    return bool(model.monotone)


def _undetermined(criterion, assumption, evidence=None):
    return VerdictReport(UNDETERMINED, criterion, evidence or {},
                         [f"assumption violated: {assumption}"])


def boundedness_verdict(tree, model: seq.SequenceModel, horizon: int = seq.DEFAULT_HORIZON,
                        tol: float = seq.DEFAULT_TOL,
                        cap: float = trees.DEFAULT_RATIO_CAP) -> VerdictReport:
    """Three-valued boundedness decision using the most specific criterion.

    ``tree`` is a ``DegreeProfile`` (or a tree string), a ``TreeSpec``, or a
    pair ``(dmax_profile, dmin_profile)`` of per-generation degree bounds.
    """
    if isinstance(tree, str):
        tree = trees.parse_tree(tree)
    if isinstance(tree, tuple) and len(tree) == 2 and not isinstance(tree, trees.DegreeProfile):
        dmax, dmin = tree
        if min(dmin) < 2:
            return _undetermined("Thm1.6-general", "D_min^(n) >= 2 for every generation")
        vals = model.values(seq._effective_horizon(model, min(horizon, 10 ** 5)))
        if np.any(vals < 0):
            return _undetermined("Thm1.6-general", "alpha nonnegative")
        g = trees.general_tree_criterion(dmax, dmin, model, horizon, tol, cap)
        ev = {"criterion": asdict(g)}
        if not g.assumption_ok:
            return _undetermined(
                "Thm1.6-general",
                f"sup_n log Dmax^(n)/log Dmin^(n) bounded (observed {g.ratio:.4g} > cap {cap:g})",
                ev)
        return VerdictReport(_DECISION[g.status], "Thm1.6-general", ev,
                             [g.reason] if g.reason else [])

    if isinstance(tree, trees.TreeSpec):
        if tree.depth == 0:
            return _undetermined("Thm1.1-Q", "tree has at least one generation")
        lo, hi = min(tree.dmin()), max(tree.dmax())
        if lo < 2:
            return _undetermined("Thm1.1-Q", f"D_min >= 2 (observed {lo})")
        r = seq.q_functional(model, horizon, tol)
        ev = {"Q": _series_evidence(r), "band": [math.sqrt(math.log(lo)) * r.value,
                                                 math.sqrt(math.log(hi)) * r.value],
              "D_min": lo, "D_max": hi}
        return VerdictReport(_DECISION[r.status], "Thm1.1-Q", ev, [r.reason] if r.reason else [])

    profile = trees.DegreeProfile.from_config(tree)
    if min(profile.q) < 2:
        return _undetermined("Thm1.1-Q", f"D_min >= 2 (profile has q = {min(profile.q)})")
    if profile.q == (2,) and _is_monotone(model, horizon):
        s = seq.sum_functional(model, horizon, tol)
        q = seq.q_functional(model, horizon, tol)
        ev = {"sum_alpha": _series_evidence(s), "Q": _series_evidence(q)}
        notes = [s.reason] if s.reason else []
        return VerdictReport(_DECISION[s.status], "Cor1.3-monotone", ev, notes)
    if profile.is_constant:
        r = seq.q_functional(model, horizon, tol)
        ev = {"Q": _series_evidence(r), "sqrt_log_q": math.sqrt(math.log(profile.q[0]))}
        return VerdictReport(_DECISION[r.status], "Thm1.1-Q", ev, [r.reason] if r.reason else [])
    r = trees.q_weighted_functional(profile, model, horizon, tol)
    ev = {"Qq": _series_evidence(r), "profile": list(profile.q)}
    return VerdictReport(_DECISION[r.status], "Prop3.4-Qq", ev, [r.reason] if r.reason else [])


def monotone_verdict(model: seq.SequenceModel, horizon: int = seq.DEFAULT_HORIZON,
                     tol: float = seq.DEFAULT_TOL) -> str:
    """Decision for nonnegative non-increasing ``alpha`` via ``sum alpha_k`` alone."""
    if not _is_monotone(model, horizon):
        raise DomainError("monotone_verdict needs a nonnegative non-increasing sequence")
    return _DECISION[seq.sum_functional(model, horizon, tol).status]


def _call_weight(fn, k, i, arity):
    return float(fn(k, i) if arity == 2 else fn(k))


def _arity(fn) -> int:
    try:
        params = [p for p in inspect.signature(fn).parameters.values()
                  if p.default is inspect.Parameter.empty
                  and p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
    except (TypeError, ValueError):
        return 1
    return 2 if len(params) >= 2 else 1


def product_weights(alpha_fn: Callable, sigma_fn: Callable, horizon: int,
                    branching: int = 2) -> np.ndarray:
    """``phi(k) = alpha_fn(k) sigma_fn(k)`` for ``k = 1..horizon``.

    Functions may take ``(k)`` or ``(k, i)`` with ``i`` a vertex index within
    generation ``k``; in the latter case the product is checked to be the
    same for a sample of vertices at every depth.
    """
    aa, sa = _arity(alpha_fn), _arity(sigma_fn)
    phi = np.empty(horizon)
    for k in range(1, horizon + 1):
        try:
            ref = _call_weight(alpha_fn, k, 0, aa) * _call_weight(sigma_fn, k, 0, sa)
            if aa == 2 or sa == 2:
                width = branching ** min(k, 62)
                for i in sorted({1, 2, 3, width // 2, width - 1} - {0}):
                    if i >= width:
                        continue
                    v = _call_weight(alpha_fn, k, i, aa) * _call_weight(sigma_fn, k, i, sa)
                    if not math.isclose(v, ref, rel_tol=1e-12, abs_tol=1e-300):
                        raise DomainError(
                            f"alpha*sigma depends on the vertex at depth {k} "
                            f"(vertex 0 gives {ref!r}, vertex {i} gives {v!r})")
        except (TypeError, ValueError, ArithmeticError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"weight undefined at depth {k}: {exc}") from exc
        if not math.isfinite(ref):
            raise DomainError(f"weight product not finite at depth {k}")
        phi[k - 1] = ref
    return phi


TWO_WEIGHT_HORIZON = 1000  # weights like 2^k overflow doubles past k = 1023


def two_weight_verdict(alpha_fn: Callable, sigma_fn: Callable, horizon: int = TWO_WEIGHT_HORIZON,
                       tol: float = seq.DEFAULT_TOL) -> VerdictReport:
    """Sufficient-condition check with ``phi = alpha * sigma``: bounded or undetermined.

    The series is evaluated on ``phi`` truncated at the horizon; it counts as
    converged when doubling the horizon from ``H/2`` to ``H`` moves the
    partial criterion by less than ``tol``.
    """
    if horizon < 2:
        raise DomainError("horizon must be >= 2")
    phi = product_weights(alpha_fn, sigma_fn, horizon)
    full = seq.q_value(seq.FiniteSequence(phi))
    half = seq.q_value(seq.FiniteSequence(phi[: horizon // 2]))
    inc = full - half
    ev = {"Q_phi_H": full, "Q_phi_half_H": half, "increment": inc, "horizon": horizon}
    if inc < tol:
        return VerdictReport(BOUNDED, "Cor1.4-two-weight", ev)
    return VerdictReport(UNDETERMINED, "Cor1.4-two-weight", ev,
                         [f"increment {inc:.3g} over the second half of the horizon "
                          f"is not below tol {tol:g}"])


# ---------------------------------------------------------------------------
# sandwich experiment


@dataclass
class SandwichRow:
    depth: int
    q_ref: float
    moment_est: float
    ratio: float
    ci_low: float
    ci_high: float
    skipped: bool = False


@dataclass
class SandwichTable:
    rows: list
    family: str = ""
    profile: str = ""
    replicas: int = 0
    seed: int = 0

    CSV_HEADER = ("depth", "q_ref", "moment_est", "ratio", "ci_low", "ci_high", "skipped")

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows if not r.skipped])

    @property
    def spread(self) -> float:
        """``max/min`` of the ratios over non-skipped rows (1 when fewer than two)."""
        r = self.ratios()
        if r.size < 2:
            return 1.0
        return float(r.max() / r.min())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for r in self.rows:
            w.writerow([r.depth, repr(r.q_ref), repr(r.moment_est), repr(r.ratio),
                        repr(r.ci_low), repr(r.ci_high), int(r.skipped)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"family": self.family, "profile": self.profile, "replicas": self.replicas,
                "seed": self.seed, "spread": self.spread,
                "rows": [asdict(r) for r in self.rows]}


def q_reference(profile, model: seq.SequenceModel, n: int) -> float:
    """``sqrt(log q) Q(alpha^(n))`` or ``Q(q; alpha^(n))`` for inhomogeneous profiles."""
    pre = seq.prefix(model, n)
    if isinstance(profile, trees.TreeSpec):
        lo = min(profile.dmin())
        return math.sqrt(math.log(lo)) * seq.q_value(pre)
    if profile.is_constant:
        return math.sqrt(math.log(profile.q[0])) * seq.q_value(pre)
    return trees.q_weighted_functional(profile, pre, max(n, 1)).value


def sandwich_experiment(profile, model: seq.SequenceModel, depths: Sequence[int], R: int,
                        seed: int, workers: int = 1, level: float = 0.99,
                        budget: int = trees.DEFAULT_VERTEX_BUDGET,
                        stats: mc.RunStats | None = None) -> SandwichTable:
    """Ratios ``sqrt(E[M_n^2]) / Q_ref(n)`` from one simulation to ``max(depths)``."""
    if isinstance(profile, str):
        profile = trees.parse_tree(profile)
    depths = sorted(set(int(d) for d in depths))
    if not depths or depths[0] < 1:
        raise DomainError("depths must be positive")
    if stats is None:
        cfg = mc.RunConfig(profile, model, depths[-1], R, seed, level=level, budget=budget)
        stats = mc.estimate_moments(cfg, workers)
    rows = []
    for n in depths:
        m2 = float(stats.second_moment[n - 1])
        hw2 = float(stats.second_moment_half_width[n - 1])
        est = math.sqrt(m2)
        lo = math.sqrt(max(m2 - hw2, 0.0))
        hi = math.sqrt(m2 + hw2)
        qref = q_reference(profile, model, n)
        if qref == 0.0:
            rows.append(SandwichRow(n, 0.0, est, math.nan, math.nan, math.nan, True))
            continue
        rows.append(SandwichRow(n, qref, est, est / qref, lo / qref, hi / qref))
    prof = (profile.to_config() if isinstance(profile, trees.DegreeProfile) else "tree")
    return SandwichTable(rows, json.dumps(model.spec(), sort_keys=True), json.dumps(prof), R, seed)


# ---------------------------------------------------------------------------
# report files


def atomic_write(path, data: str | bytes):
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ResourceError(f"cannot write {path}: {exc}") from exc


def versions() -> dict:
    import numba
    import scipy

    return {"gausstree": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def json_text(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not serializable: {type(o).__name__}")

    return json.dumps(obj, sort_keys=True, indent=2, default=default, allow_nan=True) + "\n"


def _table_payload(item, fmt):
    if isinstance(item, SandwichTable):
        kind = "sandwich"
        body = item.to_csv() if fmt == "csv" else json_text(item.to_dict())
    elif isinstance(item, mc.RunStats):
        kind = "runstats"
        body = item.to_csv() if fmt == "csv" else json_text(
            {"statistic": item.statistic, "replicas": item.replicas, "level": item.level,
             "rows": [item.row(int(d)) for d in item.depths]})
    elif isinstance(item, seq.ConditionReport):
        kind = "conditions"
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("condition", "statement", "verdict"))
            w.writerows(item.table())
            body = buf.getvalue()
        else:
            body = json_text(item.to_dict())
    else:
        return None
    return kind, body


def report_emit(items: Sequence, out_dir, config: dict | None = None, seed: int | None = None,
                fmt: str = "csv", wall_time: float | None = None) -> list[Path]:
    """Write tables (CSV or JSON), verdicts (JSON) and ``manifest.json``.

    File names depend only on the position and kind of each item, so reruns
    overwrite the same files; the manifest's ``timing`` block is the only
    field that changes between identical runs.
    """
    if fmt not in ("csv", "json"):
        raise DomainError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    written = []
    t_idx = 0
    v_idx = 0
    for item in items:
        if isinstance(item, VerdictReport):
            p = out / f"verdict_{v_idx:02d}.json"
            atomic_write(p, json_text(item.to_dict()))
            v_idx += 1
        else:
            payload = _table_payload(item, fmt)
            if payload is None:
                raise DomainError(f"cannot emit object of type {type(item).__name__}")
            kind, body = payload
            p = out / f"table_{t_idx:02d}_{kind}.{fmt}"
            atomic_write(p, body)
            t_idx += 1
        written.append(p)
    written.append(write_manifest(out, written, config, seed, wall_time))
    return written


def write_manifest(out_dir, files: Sequence, config: dict | None = None, seed: int | None = None,
                   wall_time: float | None = None) -> Path:
    """Write ``manifest.json`` listing ``files``; only ``timing`` varies between reruns."""
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config or {},
        "seed": seed,
        "versions": versions(),
        "files": [Path(p).name for p in files],
        "timing": {"created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                   "wall_time_s": wall_time},
    }
    mp = Path(out_dir) / "manifest.json"
    atomic_write(mp, json_text(manifest))
    return mp
