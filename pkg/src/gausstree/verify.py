"""Desk-scale property suite used by ``gausstree verify``.

Every check returns ``CheckResult`` rows; none raise on a violated property.
``inject`` perturbs named quantities so that the harness itself can be tested.
"""
from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import cantor, montecarlo as mc, oracles, rng
from . import sequences as seq
from . import trees, verdict

DEFAULT_FAMILIES = ("spike", "zero", "geometric:0.5", "power:2", "harmonic",
                    "remark-lacunary", "remark-even", "constant:1,22")

# horizon used to cut infinite families down to finite support for exact identities
IDENTITY_CUT = 40
REL = 1e-12


@dataclass
class CheckResult:
    name: str
    family: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _finite_version(model: seq.SequenceModel) -> seq.FiniteSequence:
    if model.support is not None:
        return model if isinstance(model, seq.FiniteSequence) else seq.FiniteSequence(
            model.values(model.support))
    return seq.FiniteSequence(model.values(IDENTITY_CUT))


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def identity_checks(name: str, model: seq.SequenceModel, inject: dict) -> list[CheckResult]:
    out = []
    f = _finite_version(model)
    K = max(f.support, 1)

    lhs, rhs, _ = cantor.parseval_check(f, K)
    lhs += inject.get("parseval", 0.0)
    d = _rel(lhs, rhs)
    out.append(CheckResult("parseval", name, d <= REL, d, REL))

    gen = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(20):
        th = gen.choice([-1, 1], size=K)
        eta = th.copy()
        cut = gen.integers(0, K + 1)
        eta[cut:] = gen.choice([-1, 1], size=K - cut)
        w, k, diff = cantor.walsh_covariance_check(f, th, eta, K)
        worst = max(worst, diff / max(float(f.tail_sq(0)), 1e-300))
    worst += inject.get("walsh", 0.0)
    out.append(CheckResult("walsh_covariance", name, worst <= REL, worst, REL))

    if f.support:
        ls = [int(x) for x in gen.integers(1, 4, size=f.support)]
        emb = seq.block_embed(f, ls)
        lam = np.concatenate([[0], np.cumsum(ls)])
        worst = 0.0
        Qa = seq.tail_norms(f, f.support)
        Qb = seq.tail_norms(emb, int(lam[-1]))
        for k in range(f.support):
            for l in range(lam[k], lam[k + 1]):
                worst = max(worst, _rel(Qb[l], Qa[k]))
        worst = max(worst, _rel(seq.q_value(emb), seq.block_q_identity(f, ls)))
    else:
        worst = 0.0
    worst += inject.get("block", 0.0)
    out.append(CheckResult("block_identity", name, worst <= REL, worst, REL))

    worst = 0.0
    for q in (2, 3, 4, 7):
        a = trees.q_weighted_functional(trees.DegreeProfile.constant(q), f, K).value
        b = math.sqrt(math.log(q)) * seq.q_value(f)
        worst = max(worst, _rel(a, b))
    worst += inject.get("homogeneous", 0.0)
    out.append(CheckResult("homogeneous_identity", name, worst <= REL, worst, REL))

    vals = f.values(f.support) if f.support else np.zeros(0)
    if np.all(vals >= 0):
        try:
            seq.chain_inequalities(f)
            ok, detail = True, ""
        except Exception as exc:  # ConsistencyError
            ok, detail = False, str(exc)
        out.append(CheckResult("inequality_chain", name, ok, 0.0, REL, detail))

    a, b = seq.nqn_surrogate(f, K + 2)
    excess = float(np.max((a - b) / np.maximum(b, 1e-300))) if a.size else 0.0
    out.append(CheckResult("nqn_surrogate", name, excess <= REL, max(excess, 0.0), REL))
    return out


def remark_checks() -> list[CheckResult]:
    expect = {"remark-lacunary": ("fails", "fails", "holds", verdict.UNBOUNDED),
              "remark-even": ("fails", "holds", "holds", verdict.BOUNDED)}
    out = []
    for name, exp in expect.items():
        m = seq.from_spec(name)
        r = seq.condition_report(m)
        got = (r.verdict_c1, r.verdict_c2, r.verdict_c3,
               verdict.boundedness_verdict("binary", m).decision)
        out.append(CheckResult("condition_table", name, got == exp, 0.0, 0.0,
                               f"got {got}, expected {exp}"))
    return out


def entropy_checks(name: str, model: seq.SequenceModel) -> list[CheckResult]:
    f = _finite_version(model)
    a = cantor.entropy_integral(f, "quadrature")
    b = cantor.entropy_integral(f, "blockwise")
    d = abs(a - b) / (1 + b)
    return [CheckResult("entropy_methods", name, d <= 1e-8, d, 1e-8)]


def oracle_checks(depth_max: int, seeds: int) -> list[CheckResult]:
    out = []
    model = seq.from_spec("power:1")
    for q in (2, 3):
        prof = trees.DegreeProfile.constant(q)
        bad = 0
        for d in range(1, depth_max + 1):
            cfg = mc.RunConfig(prof, model, d, seeds, 99)
            raw = mc.run_replicas(cfg, range(seeds))
            for r in range(seeds):
                oa, os_ = oracles.level_maxima(prof, model, d, rng.substream(99, r))
                if not (np.array_equal(raw["abs"][r], oa) and np.array_equal(raw["signed"][r], os_)):
                    bad += 1
        out.append(CheckResult("oracle_equivalence", f"q={q}", bad == 0, bad, 0,
                               f"{bad} mismatching replicas"))
    return out


def coupling_checks(R: int, seed: int) -> list[CheckResult]:
    res = mc.coupled_domination(trees.DegreeProfile.constant(2), trees.DegreeProfile.constant(3),
                                seq.from_spec("geometric:0.5"), 7, seed, R)
    frac = res.order_fraction()
    return [CheckResult("coupling_order", "(2)<(3)", frac == 1.0, frac, 1.0)]


def sandwich_checks(families: Sequence[str], depths, R, seed, workers) -> list[CheckResult]:
    out = []
    for name in families:
        m = seq.from_spec(name)
        if seq.q_functional(m).status != seq.CONVERGED:
            continue
        if m.support == 0:
            continue
        tab = verdict.sandwich_experiment("binary", m, depths, R, seed, workers)
        out.append(CheckResult("sandwich_spread", name, tab.spread < 1.5, tab.spread, 1.5))
    return out


def run_suite(families: Sequence[str] = DEFAULT_FAMILIES, seed: int = 12345, workers: int = 1,
              full: bool = False, inject: dict | None = None) -> list[CheckResult]:
    """Run every check; ``full`` switches to acceptance-scale Monte Carlo."""
    inject = dict(inject or {})
    families = list(families)
    results: list[CheckResult] = []
    if not families:
        return results
    for name in families:
        m = seq.from_spec(name)
        results += identity_checks(name, m, inject)
        results += entropy_checks(name, m)
    results += remark_checks()
    results += oracle_checks(10 if full else 6, 20 if full else 3)
    results += coupling_checks(1000 if full else 200, seed)
    if full:
        results += sandwich_checks(families, [8, 12, 16, 20], 2000, seed, workers)
    else:
        results += sandwich_checks(families, [6, 8, 10], 400, seed, workers)
    return results


CSV_HEADER = ("check", "family", "passed", "value", "tolerance", "detail")


def results_csv(results: Sequence[CheckResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerow([r.name, r.family, int(r.passed), repr(float(r.value)), repr(float(r.tolerance)),
                    r.detail])
    return buf.getvalue()
