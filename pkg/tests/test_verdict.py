import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gausstree import montecarlo as mc
from gausstree import sequences as seq
from gausstree import trees, verdict
from gausstree.errors import DomainError, ResourceError
from gausstree.trees import DegreeProfile

FAMILIES = ["spike", "zero", "geometric:0.5", "power:2", "harmonic", "remark-lacunary",
            "remark-even", "constant:1,22"]
EXPECTED = {"spike": "bounded", "zero": "bounded", "geometric:0.5": "bounded",
            "power:2": "bounded", "harmonic": "unbounded", "remark-lacunary": "unbounded",
            "remark-even": "bounded", "constant:1,22": "bounded"}


def contradicts(a, b):
    return {a, b} == {verdict.BOUNDED, verdict.UNBOUNDED}


# ---------------------------------------------------------------------------
# boundedness verdicts

def test_binary_geometric_bounded():
    r = verdict.boundedness_verdict("binary", seq.from_spec("geometric:0.5"))
    assert r.decision == verdict.BOUNDED
    # monotone input on the binary tree: the summability corollary is used,
    # and the general criterion's evidence is reported alongside
    assert r.criterion_used == "Cor1.3-monotone"
    assert r.evidence["Q"]["status"] == seq.CONVERGED


def test_binary_non_monotone_uses_q_criterion():
    r = verdict.boundedness_verdict("binary", seq.from_spec("finite:0,1,0,2"))
    assert r.decision == verdict.BOUNDED and r.criterion_used == "Thm1.1-Q"


def test_binary_lacunary_unbounded():
    r = verdict.boundedness_verdict("binary", seq.from_spec("remark-lacunary"))
    assert r.decision == verdict.UNBOUNDED and r.criterion_used == "Thm1.1-Q"


def test_binary_monotone_summable_bounded():
    r = verdict.boundedness_verdict("binary", seq.from_spec("power:2"))
    assert r.decision == verdict.BOUNDED and r.criterion_used == "Cor1.3-monotone"


@pytest.mark.parametrize("tree", ["binary", "ternary", "profile:3,5,2"])
@pytest.mark.parametrize("name", FAMILIES)
def test_verdict_table(tree, name):
    r = verdict.boundedness_verdict(tree, seq.from_spec(name))
    assert r.decision == EXPECTED[name]
    status = {verdict.BOUNDED: seq.CONVERGED, verdict.UNBOUNDED: seq.DIVERGED}[r.decision]
    # the cited criterion's own status backs the decision
    key = {"Cor1.3-monotone": "sum_alpha", "Thm1.1-Q": "Q", "Prop3.4-Qq": "Qq"}[r.criterion_used]
    assert r.evidence[key]["status"] == status


def test_inhomogeneous_uses_weighted_criterion():
    r = verdict.boundedness_verdict("profile:3,5,2", seq.from_spec("remark-even"))
    assert r.criterion_used == "Prop3.4-Qq"


def test_assumption_violations_named():
    r = verdict.boundedness_verdict("ray", seq.from_spec("spike"))
    assert r.decision == verdict.UNDETERMINED and "D_min >= 2" in r.notes[0]
    t = trees.TreeSpec([[0, 0], [0, 1, 1]])
    r = verdict.boundedness_verdict(t, seq.from_spec("spike"))
    assert r.decision == verdict.UNDETERMINED and "D_min >= 2" in r.notes[0]
    r = verdict.boundedness_verdict(([4], [1]), seq.from_spec("spike"))
    assert r.decision == verdict.UNDETERMINED
    r = verdict.boundedness_verdict(([4], [2]), seq.from_spec("finite:1,-1"))
    assert r.decision == verdict.UNDETERMINED and "nonnegative" in r.notes[0]
    dmax = [2 ** (2 ** n) for n in range(1, 7)]
    r = verdict.boundedness_verdict((dmax, [2]), seq.from_spec("spike"), horizon=6)
    assert r.decision == verdict.UNDETERMINED and "cap" in r.notes[0]


def test_general_tree_and_treespec_paths():
    r = verdict.boundedness_verdict(([4], [2]), seq.from_spec("power:2"))
    assert r.decision == verdict.BOUNDED and r.criterion_used == "Thm1.6-general"
    r = verdict.boundedness_verdict(([4], [2]), seq.from_spec("harmonic"))
    assert r.decision == verdict.UNBOUNDED
    t = trees.TreeSpec([[0, 0, 0], [0, 0, 1, 1, 2, 2, 2]])
    r = verdict.boundedness_verdict(t, seq.from_spec("geometric:0.5"))
    assert r.decision == verdict.BOUNDED and r.criterion_used == "Thm1.1-Q"
    lo, hi = r.evidence["band"]
    assert lo == pytest.approx(math.sqrt(math.log(2)) * r.evidence["Q"]["value"])
    assert hi == pytest.approx(math.sqrt(math.log(3)) * r.evidence["Q"]["value"])


def test_report_serializes():
    r = verdict.boundedness_verdict("binary", seq.from_spec("harmonic"))
    d = json.loads(json.dumps(r.to_dict()))
    assert d["decision"] == "unbounded"


# ---------------------------------------------------------------------------
# monotone and two-weight corollaries

def test_monotone_verdict_examples():
    assert verdict.monotone_verdict(seq.from_spec("geometric:0.5")) == verdict.BOUNDED
    assert verdict.monotone_verdict(seq.from_spec("harmonic")) == verdict.UNBOUNDED
    assert verdict.monotone_verdict(seq.from_spec("finite:3")) == verdict.BOUNDED
    with pytest.raises(DomainError):
        verdict.monotone_verdict(seq.from_spec("finite:1,2"))
    with pytest.raises(DomainError):
        verdict.monotone_verdict(seq.from_spec("remark-even"))


@pytest.mark.parametrize("name", ["geometric:0.5", "geometric:0.9", "power:2", "power:1.5",
                                  "harmonic", "power:0.75", "spike", "constant:1,22", "zero"])
def test_monotone_agrees_with_general_criterion(name):
    m = seq.from_spec(name)
    a = verdict.monotone_verdict(m)
    q = seq.q_functional(m)
    b = {seq.CONVERGED: verdict.BOUNDED, seq.DIVERGED: verdict.UNBOUNDED,
         seq.UNDETERMINED: verdict.UNDETERMINED}[q.status]
    assert not contradicts(a, b)
    assert a == verdict.boundedness_verdict("binary", m).decision


def test_two_weight_examples():
    r = verdict.two_weight_verdict(lambda k: 2.0 ** k, lambda k: 4.0 ** -k)
    assert r.decision == verdict.BOUNDED and r.criterion_used == "Cor1.4-two-weight"
    assert verdict.two_weight_verdict(lambda k: 0.0, lambda k: 1.0).decision == verdict.BOUNDED
    slow = verdict.two_weight_verdict(lambda k: 1 / (math.sqrt(k) * math.log(k + 1)),
                                      lambda k: 1.0)
    assert slow.decision == verdict.UNDETERMINED


def test_two_weight_vertex_dependence():
    with pytest.raises(DomainError):
        verdict.two_weight_verdict(lambda k, i: 1.0 + i, lambda k: 2.0 ** -k)
    # vertex-dependent factors whose product is depth-only are accepted
    r = verdict.two_weight_verdict(lambda k, i: 2.0 ** -k * (1 + i), lambda k, i: 1 / (1 + i))
    assert r.decision == verdict.BOUNDED
    with pytest.raises(DomainError):
        verdict.two_weight_verdict(lambda k: 1 / (k - 3), lambda k: 1.0)


@pytest.mark.parametrize("name", ["geometric:0.5", "power:2", "remark-even", "harmonic",
                                  "remark-lacunary", "spike"])
def test_two_weight_agrees_on_binary(name):
    m = seq.from_spec(name)
    a = verdict.two_weight_verdict(lambda k: float(m.alpha(k)), lambda k: 1.0).decision
    b = verdict.boundedness_verdict("binary", m).decision
    assert not contradicts(a, b)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(2, 16), min_size=1, max_size=5), st.sampled_from(FAMILIES))
def test_equivalence_of_criteria(qs, name):
    m = seq.from_spec(name)
    a = seq.q_functional(m).status
    b = trees.q_weighted_functional(DegreeProfile(tuple(qs)), m).status
    assert {a, b} != {seq.CONVERGED, seq.DIVERGED}


# ---------------------------------------------------------------------------
# sandwich

def test_sandwich_zero_rows_skipped():
    t = verdict.sandwich_experiment("binary", seq.from_spec("zero"), [2, 4], 10, 1)
    assert all(r.skipped and r.moment_est == 0 for r in t.rows)
    assert t.spread == 1.0


def test_sandwich_spike_depth_one():
    t = verdict.sandwich_experiment("binary", seq.from_spec("spike"), [1], 20_000, 2)
    row = t.rows[0]
    expected = math.sqrt(1 + 2 / math.pi) / math.sqrt(math.log(2))
    assert row.q_ref == pytest.approx(math.sqrt(math.log(2)))
    assert row.ci_low <= expected <= row.ci_high
    assert expected == pytest.approx(1.536, abs=1e-3)


def test_sandwich_geometric_stable():
    t = verdict.sandwich_experiment("binary", seq.from_spec("geometric:0.5"), [4, 6, 8], 300, 3)
    assert t.spread < 1.5
    assert all(r.ci_low <= r.ratio <= r.ci_high for r in t.rows)


def test_sandwich_reuses_stats_and_inhomogeneous_reference():
    p = DegreeProfile((3, 2))
    m = seq.from_spec("power:1")
    stats = mc.estimate_moments(mc.RunConfig(p, m, 5, 50, 4))
    t = verdict.sandwich_experiment(p, m, [3, 5], 50, 4, stats=stats)
    assert t.rows[1].moment_est == pytest.approx(math.sqrt(stats.second_moment[4]))
    assert t.rows[0].q_ref == pytest.approx(
        trees.q_weighted_functional(p, seq.prefix(m, 3)).value)
    with pytest.raises(DomainError):
        verdict.sandwich_experiment(p, m, [0], 5, 1)


# ---------------------------------------------------------------------------
# report files

def test_report_emit_empty(tmp_path):
    files = verdict.report_emit([], tmp_path)
    assert [f.name for f in files] == ["manifest.json"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["schema_version"] == verdict.SCHEMA_VERSION and man["files"] == []
    assert set(man["versions"]) >= {"gausstree", "numpy", "scipy", "numba"}


def test_report_emit_sandwich_csv(tmp_path):
    t = verdict.sandwich_experiment("binary", seq.from_spec("geometric:0.5"), [3, 4], 20, 1)
    files = verdict.report_emit([t], tmp_path, {"x": 1}, 1)
    assert [f.name for f in files] == ["table_00_sandwich.csv", "manifest.json"]
    lines = files[0].read_text().splitlines()
    assert lines[0] == "depth,q_ref,moment_est,ratio,ci_low,ci_high,skipped"
    assert len(lines) == 3


def test_report_emit_rerun_identical(tmp_path):
    def emit(out):
        m = seq.from_spec("power:2")
        t = verdict.sandwich_experiment("binary", m, [3, 5], 30, 9)
        r = verdict.boundedness_verdict("binary", m)
        c = seq.condition_report(m)
        return verdict.report_emit([t, r, c], out, {"seed": 9}, 9, "json")
    a = emit(tmp_path / "a")
    b = emit(tmp_path / "b")
    for fa, fb in zip(a, b):
        if fa.name == "manifest.json":
            ja, jb = json.loads(fa.read_text()), json.loads(fb.read_text())
            ja.pop("timing"), jb.pop("timing")
            assert ja == jb
        else:
            assert fa.read_bytes() == fb.read_bytes()


def test_report_emit_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ResourceError, match="file"):
        verdict.report_emit([], blocker / "sub")
    with pytest.raises(DomainError):
        verdict.report_emit([object()], tmp_path)
    with pytest.raises(DomainError):
        verdict.report_emit([], tmp_path, fmt="xml")


def test_atomic_write_leaves_no_temp(tmp_path):
    verdict.atomic_write(tmp_path / "a.txt", "hello")
    verdict.atomic_write(tmp_path / "b.bin", b"\x00\x01")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt", "b.bin"]
