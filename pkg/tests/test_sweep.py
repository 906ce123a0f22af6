import csv

import pytest

from hunting import sweep as W
from hunting.analysis import build_set_S
from hunting.model import RegimeError, SystemParams


def test_round_half_up():
    assert [W.round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999, 9.3333)] == [1, 2, 3, 2, 9]


def test_same_counts_give_same_set():
    a = build_set_S(SystemParams(g=-0.3, d_l1=30.0, d_inv=4.0))
    b = build_set_S(SystemParams(g=-0.3, d_l1=28.0, d_inv=4.0))
    assert a.area() == pytest.approx(b.area(), abs=1e-15)
    assert W._same_regions(a, b)


def test_sweep_rejects_bad_input():
    p = SystemParams(g=-0.3)
    with pytest.raises(ValueError):
        W.delay_sweep(p, [])
    with pytest.raises(RegimeError):
        W.delay_sweep(p, [5, 6], g=0.0)
    with pytest.raises(RegimeError):
        W.delay_sweep(SystemParams(g=0.2), [5])


def test_sweep_threshold_defaults():
    results = W.delay_sweep(SystemParams(g=-0.3), range(5, 30))
    assert W.is_monotone(results)
    assert W.emptiness_threshold(results) == 16
    assert W.min_ltc_delay(16, 4.0) == 64.0
    assert all(r.line_invariant for r in results)
    small = {r.n1: r for r in results}
    assert not small[7].s_empty and small[7].s_area > 0


def test_threshold_needs_empty_tail():
    r = W.delay_sweep(SystemParams(g=-0.3), [5, 6])
    assert W.emptiness_threshold(r) is None


def test_sweep_csv_header_and_determinism(tmp_path):
    p = SystemParams(g=-0.3)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    W.write_sweep_csv(W.delay_sweep(p, range(10, 20)), a)
    W.write_sweep_csv(W.delay_sweep(p, range(10, 20)), b)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(open(a)))
    assert rows[0] == ["n1", "n2", "s_empty", "s_area", "d_l1_example", "d_inv_example"]
    assert [int(r[0]) for r in rows[1:]] == list(range(10, 20))


def test_region_report_regimes():
    neg = W.s_region_report(SystemParams(g=-0.5))
    pos = W.s_region_report(SystemParams(g=0.5))
    assert neg.regime == "amplifying" and pos.regime == "damped"
    assert pos.area > neg.area
    zero = W.s_region_report(SystemParams(g=0.0))
    assert zero.regime == "ltc_only" and zero.pieces == {}
    assert zero.strip_widths == {"v1_strips": 0.03, "v2_strips": 0.03}
    flat = W.s_region_report(SystemParams(g=-0.3, vbar_l=0.0))
    assert flat.strip_widths == {"v1_strips": 0.0, "v2_strips": 0.0}
    assert set(neg.to_dict()) >= {"g", "regime", "area", "pieces", "strip_widths"}


def _branch(name, **kw):
    return W.BranchSpec(name, SystemParams(**{"g": -0.3, **kw}))


def test_single_branch_counts():
    r = W.multi_branch_check([_branch("a")])
    assert r.variable_count == 4
    assert not r.joint_safe and r.to_dict()["joint_verdict"] == "hunting_possible"


def test_replicated_branches_keep_verdict():
    one = W.multi_branch_check([_branch("a")])
    three = W.multi_branch_check([_branch(k) for k in "abc"])
    assert three.variable_count == 10
    assert three.joint_safe == one.joint_safe
    assert set(three.areas.values()) == {one.areas["a"]}


def test_one_unsafe_branch_makes_feeder_unsafe():
    safe = _branch("safe", d_inv=1.0, d_l2=40.0)
    unsafe = _branch("unsafe")
    assert W.multi_branch_check([safe]).joint_safe
    r = W.multi_branch_check([safe, unsafe])
    assert not r.joint_safe
    assert r.verdicts == {"safe": True, "unsafe": False}


def test_branch_validation():
    with pytest.raises(ValueError, match="shared"):
        W.multi_branch_check([_branch("a"), _branch("b", eps=0.06)])
    with pytest.raises(ValueError, match="unique"):
        W.multi_branch_check([_branch("a"), _branch("a")])
    with pytest.raises(ValueError):
        W.multi_branch_check([])
