import json

import numpy as np
import pytest

from hunting import analysis as N
from hunting import automaton as A
from hunting import geometry as G
from hunting.model import SystemParams


def test_basis_conditions_lower_strip_example():
    r = N.basis_conditions((0.98, 0.945), "alpha1", SystemParams(g=-0.3))
    assert r.slacks["cond1"] == pytest.approx(0.98 - 0.9 * 0.34392 * 0.055 - 0.95, abs=1e-5)
    assert r.slacks["cond2"] == pytest.approx(0.006084, abs=1e-6)
    assert set(r.slacks) == {"cond1", "cond2", "cond3", "cond4"}
    assert r.satisfied


def test_default_ic_fails_second_condition():
    p = SystemParams(g=-0.5)
    for variant in N.Variant:
        r = N.basis_conditions((1.04, 0.94), "alpha1", p, variant=variant)
        assert r.slacks["cond2"] == pytest.approx(0.932266 - 0.95, abs=1e-6)
        assert not r.satisfied
    assert not N.in_s((1.04, 0.94), p)


def test_basis_conditions_reject_wrong_start():
    with pytest.raises(ValueError):
        N.basis_conditions((1.0, 1.0), "alpha1", SystemParams(g=-0.3))
    with pytest.raises(ValueError):
        N.basis_conditions((0.98, 0.945), "alpha3", SystemParams(g=-0.3))


def test_tight_conditions_add_persistence():
    r = N.basis_conditions((0.98, 0.945), "alpha1", SystemParams(g=-0.3), tight=True)
    assert {"cond1_upper", "cond3_lower", "persist1", "persist2"} <= set(r.slacks)


def test_quadrant_symmetry():
    p = SystemParams(g=-0.3)
    v = (0.98, 0.945)
    mirrored = (2 - v[0], 2 - v[1])
    swapped = (v[1], v[0])
    assert N.quadrant_of(v, p).name == "alpha1"
    assert N.quadrant_of(mirrored, p).name == "alpha2"
    assert N.quadrant_of(swapped, p).name == "alpha3"
    a = N.basis_conditions(v, "alpha1", p).slacks
    b = N.basis_conditions(mirrored, "alpha2", p).slacks
    assert a == pytest.approx(b)
    assert N.in_s(v, p) == N.in_s(mirrored, p)


def test_s_geometry_defaults():
    p = SystemParams(g=-0.3)
    s = N.build_set_S(p)
    assert not s.is_empty
    part = G.partition_four_device(p)
    for poly in s.parts:
        for v in poly.vertices:
            assert part.regions["W_o"].contains(tuple(v), tol=1e-9)
    pieces = N.s_pieces(p)
    assert pieces["alpha1"].width(1) == pytest.approx(0.0095, abs=5e-4)
    # Some corners of W_o are not part of S.
    corner = (p.v_minus + 1e-4, p.v_minus - 1e-3)
    assert part.classify(corner) == "W_o" and not N.in_s(corner, p)


def test_polygon_s_matches_predicate(rng):
    for g in (-0.1, -0.3, -0.5):
        p = SystemParams(g=g)
        s = N.build_set_S(p)
        pts = rng.uniform(0.85, 1.15, size=(50_000, 2))
        v = (pts[:, 0], pts[:, 1])
        strict = s.contains(v, tol=-1e-12)
        closed = s.contains(v, tol=1e-12)
        member = N.in_s(v, p)
        assert np.all(member[strict]) and not np.any(member & ~closed)


def test_s_is_strict():
    p = SystemParams(g=-0.3)
    piece = N.s_pieces(p)["alpha1"].parts[0]
    for v in piece.vertices:
        assert not N.in_s(tuple(v), p)


def test_period_landmarks_match_simulation(rng):
    checked = 0
    for _ in range(300):
        p = SystemParams(g=float(rng.uniform(-0.4, -0.05)))
        name = ["alpha1", "alpha2", "alpha3", "alpha4"][int(rng.integers(4))]
        v0 = tuple(G.sample_points(N.s_pieces(p)[name], 1, rng)[0])
        traj = A.simulate(v0, p, 600)
        events = A.detect_sequences(traj)
        if not events or not events[0].from_start:
            continue
        e = events[0]
        marks = N.period_landmarks(v0, p)
        k0, k1, k2, k3, k4, k5 = e.phase_indices
        v = traj.voltages
        assert np.max(np.abs(v[k1] - marks["before_tap1"])) < 1e-9
        assert np.max(np.abs(v[k1 + 1] - marks["after_tap1"])) < 1e-9
        assert np.max(np.abs(v[k4] - marks["before_tap2"])) < 1e-9
        assert np.max(np.abs(v[k4 + 1] - marks["after_tap2"])) < 1e-9
        checked += 1
    assert checked >= 10


def test_growth_delta_properties():
    p = SystemParams(g=-0.3)
    v = (0.98, 0.945)
    assert N.growth_delta(v, p) > 0
    assert N.growth_delta(v, p.replace(eta=1 - 1e-12)) == pytest.approx(0.0, abs=1e-12)
    assert N.growth_delta(v, p, tap_sign=-1) != N.growth_delta(v, p)
    with pytest.raises(ValueError):
        N.growth_delta((1.0, 1.0), p)


def test_induction_condition_on_repeating_run():
    traj = A.simulate((1.049, 0.9455), SystemParams(g=-0.1), 1200)
    events = A.detect_sequences(traj)
    assert N.induction_condition(traj, events[0])
    assert len(events) >= 2


def test_induction_condition_predicts_next_overshoot(rng):
    taps = (A.Mode.M10, A.Mode.M20, A.Mode.M30, A.Mode.M40)
    seen = 0
    for _ in range(150):
        p = SystemParams(g=float(rng.uniform(-0.4, -0.02)))
        name = ["alpha1", "alpha2", "alpha3", "alpha4"][int(rng.integers(4))]
        v0 = tuple(G.sample_points(N.s_pieces(p)[name], 1, rng)[0])
        traj = A.simulate(v0, p, 1500)
        for e in A.detect_sequences(traj):
            if not N.induction_condition(traj, e):
                continue
            nxt = [k for k in range(e.end_index, len(traj.modes)) if traj.modes[k] in taps]
            if not nxt or nxt[0] + 1 >= len(traj.modes):
                continue
            assert traj.modes[nxt[0] + 1] in (A.Mode.M60, A.Mode.M70)
            seen += 1
    assert seen > 20


def test_constant_amplitude_margin_values():
    assert N.constant_amplitude_margin(SystemParams(g=0.0, vbar_l=0.25, eps=0.1)) == pytest.approx(0.05)
    assert N.constant_amplitude_margin(SystemParams(g=0.0)) is None
    assert N.constant_amplitude_margin(SystemParams(g=0.0, vbar_l=0.1, eps=0.05)) is None


def test_strip_examples():
    p = SystemParams(g=0.0)
    r = N.strip_check((1.06, 1.00), p)
    assert r.in_w_o and r.literal and r.symmetric and not r.predicts_oscillation
    # The tap fixes v1 without pushing v2 out: the system settles.
    traj = A.simulate((1.06, 1.00), p, 600, inverters=False)
    assert A.classify_outcome(traj).kind is A.OutcomeKind.LANDED_IN_D
    assert not N.strip_check((1.0, 1.0), p).in_w_o
    r = N.strip_check((1.06, 0.955), p)
    assert not r.literal and r.predicts_oscillation
    traj = A.simulate((1.06, 0.955), p, 600, inverters=False)
    assert A.classify_outcome(traj).kind is A.OutcomeKind.STILL_OSCILLATING


def test_classify_ic():
    p = SystemParams(g=-0.3)
    r = N.classify_ic((1.0, 1.0), p)
    assert not r.in_s and r.simulated == "Quiescent" and r.agreement
    assert r.predicted == "NoOscillation"
    assert set(json.loads(json.dumps(r.to_dict()))) >= {"ic", "in_s", "predicted", "simulated", "agreement"}


def test_points_of_s_are_consistent(rng):
    p = SystemParams(g=-0.3)
    pts = G.sample_points(N.build_set_S(p), 100, rng)
    reports = [N.classify_ic(tuple(v), p) for v in pts]
    assert all(r.in_s and r.agreement for r in reports)
    assert any(r.from_start for r in reports)


def test_grid_scan_small():
    p = SystemParams(g=-0.3)
    scan = N.scan_grid(p, 2e-3)
    assert len(scan.violations) == 0
    assert scan.from_start.sum() > 0
    # Periods entered with timers in step start inside S too.
    assert np.all(scan.event_in_s[scan.event_aligned])
    labels = set(scan.outcome_labels())
    assert labels <= {"Quiescent", "LandedInD", "LeftW", "StillOscillating"}


def test_necessity_under_parameter_perturbations(rng):
    checked = 0
    for _ in range(1000):
        p = SystemParams(
            g=float(rng.uniform(-0.5, -0.02)),
            chi=float(rng.uniform(0.08, 0.12)),
            eta=float(rng.uniform(0.8, 0.95)),
            d_l1=float(rng.choice([24.0, 28.0, 30.0, 32.0, 36.0])),
            vbar_l=float(rng.uniform(0.02, 0.04)),
        )
        # Initial conditions close to the deadband, where periods can start.
        v = rng.uniform(p.v_minus - 0.02, p.v_plus + 0.02, size=(40, 2))
        v = v[G.in_w((v[:, 0], v[:, 1]), p)]
        batch = A.simulate_many(v, p, 130.0)
        started = batch.oscillates_from_start()
        assert not np.any(started & ~N.in_s((v[:, 0], v[:, 1]), p))
        checked += int(started.sum())
    assert checked > 50
