import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hunting.model import (
    CouplingMatrix,
    SystemParams,
    StabilityClass,
    closed_loop_class,
    closed_loop_eigenvalues,
    deadband_signal,
    delta_v_inv,
    inverter_gain_factor,
    inverter_step,
    ltc_tap,
)

voltages = st.floats(0.8, 1.2, allow_nan=False)
gains = st.floats(-1.0, 1.0, allow_nan=False)


def test_defaults_and_counts():
    p = SystemParams(g=-0.3)
    assert (p.v_minus, p.v_plus) == pytest.approx((0.95, 1.05))
    assert (p.n1, p.n2) == (7, 10)


def test_count_tolerates_rounding():
    p = SystemParams(g=-0.3, d_inv=0.4, d_l1=12.0, d_l2=16.0)
    assert p.n1 == 30


@pytest.mark.parametrize(
    "changes",
    [{"eta": 1.0}, {"eta": 0.0}, {"chi": 0.0}, {"d_inv": -1.0}, {"t_s": 0.0}, {"vbar_l": -0.01}, {"eps": float("nan")}],
)
def test_invalid_params_rejected(changes):
    with pytest.raises(ValueError):
        SystemParams(g=-0.3, **changes)


def test_non_numeric_rejected():
    with pytest.raises(TypeError):
        SystemParams(g="x")
    with pytest.raises(TypeError):
        SystemParams(g=True)


def test_numpy_scalars_accepted():
    p = SystemParams(g=np.float64(-0.3), d_l1=np.int64(30))
    assert isinstance(p.d_l1, float) and p.d_l1 == 30.0


def test_delay_ordering_only_warns():
    with pytest.warns(UserWarning):
        SystemParams(g=-0.3, d_l1=50.0, d_l2=40.0)


def test_from_dict_requires_gain_and_known_keys():
    with pytest.raises(ValueError, match="g"):
        SystemParams.from_dict({"eps": 0.05})
    with pytest.raises(ValueError, match="unknown"):
        SystemParams.from_dict({"g": -0.3, "v_minus": 0.95})


@given(g=gains, eps=st.floats(0.01, 0.2), eta=st.floats(0.01, 0.99), vbar=st.floats(0.0, 0.1))
def test_json_round_trip(g, eps, eta, vbar):
    p = SystemParams(g=g, eps=eps, eta=eta, vbar_l=vbar)
    text = p.to_json()
    assert set(json.loads(text)) == {"v_ref", "eps", "chi", "eta", "d_inv", "d_l1", "d_l2", "vbar_l", "g", "t_s"}
    assert SystemParams.from_json(text) == p


def test_json_file_round_trip(tmp_path):
    p = SystemParams(g=0.5, eps=0.1)
    path = tmp_path / "p.json"
    p.to_json(path)
    assert SystemParams.from_json(path) == p
    assert SystemParams.from_json(str(path)) == p


def test_deadband_signal_sign_structure(rng):
    for _ in range(200):
        p = SystemParams(g=0.0, v_ref=rng.uniform(0.9, 1.1), eps=rng.uniform(0.01, 0.1))
        v = rng.uniform(0.7, 1.3, size=(50, 2))
        for row in v:
            f = deadband_signal(row, p)
            for vi, fi in zip(row, f):
                expected = 1 if vi > p.v_plus else (-1 if vi < p.v_minus else 0)
                assert np.sign(fi) == expected


def test_deadband_boundary_counts_as_inside():
    p = SystemParams(g=0.0)
    assert deadband_signal((p.v_minus, p.v_plus), p).clear


@given(v1=voltages, v2=voltages, up=st.booleans(), vbar=st.floats(0.0, 0.1))
def test_ltc_tap_preserves_vdiff(v1, v2, up, vbar):
    p = SystemParams(g=0.0, vbar_l=vbar)
    out = ltc_tap((v1, v2), 1 if up else -1, p)
    assert abs(out.vdiff - (v1 - v2)) <= 1e-15
    assert out.v1 - v1 == pytest.approx(vbar if up else -vbar)


def test_ltc_tap_rejects_bad_direction():
    with pytest.raises(ValueError):
        ltc_tap((1.0, 1.0), 0, SystemParams(g=0.0))


@given(v=voltages, g=gains.filter(lambda g: abs(g) > 1e-3), node=st.integers(0, 1))
def test_single_inverter_moves_towards_or_away_from_ref(v, g, node):
    p = SystemParams(g=g)
    start = [1.0, 1.0]
    start[node] = v
    out = inverter_step(tuple(start), (node == 0, node == 1), p)
    err_before = abs(v - p.v_ref)
    err_after = abs(out[node] - p.v_ref)
    if err_before < 1e-9:
        return
    if g > 0:
        assert err_after < err_before
    else:
        assert err_after > err_before


def test_step_direction_constant_between_taps(rng):
    for _ in range(200):
        p = SystemParams(g=rng.uniform(-1.0, 1.0))
        node = int(rng.integers(0, 2))
        v = tuple(rng.uniform(0.85, 1.15, 2))
        signs = set()
        for _ in range(int(rng.integers(1, 31))):
            nxt = inverter_step(v, (node == 0, node == 1), p)
            d = nxt[node] - v[node]
            if d != 0:
                signs.add(np.sign(d))
            v = nxt
        assert len(signs) <= 1


def test_inactive_inverters_do_nothing():
    p = SystemParams(g=-0.5)
    assert inverter_step((0.9, 1.1), (False, False), p) == (0.9, 1.1)


def test_coupling_matrix():
    x = CouplingMatrix.from_params(SystemParams(g=0.0))
    a = x.as_array()
    assert np.array_equal(a, a.T)
    assert a[0, 0] == a[1, 1] == 0.1
    assert a[0, 1] == pytest.approx(0.09)
    assert a[0, 0] > a[0, 1]


def test_delta_v_inv_basics():
    p = SystemParams(g=-0.3)
    assert delta_v_inv(0, 0.9, p) == (0.0, 0.0)
    own, coupled = delta_v_inv(10, 0.945, p)
    assert own == pytest.approx((1.03**10 - 1) * -0.055)
    assert coupled == pytest.approx(0.9 * own)
    assert inverter_gain_factor(10, p) == pytest.approx(0.343916, abs=1e-6)
    with pytest.raises(ValueError):
        delta_v_inv(-1, 1.0, p)


@pytest.mark.parametrize(
    "g,expected,eigs",
    [
        (0.5, StabilityClass.CONVERGES, (0.905, 0.995)),
        (-0.5, StabilityClass.DIVERGES, (1.005, 1.095)),
        (0.0, StabilityClass.MARGINAL, (1.0, 1.0)),
    ],
)
def test_closed_loop_examples(g, expected, eigs):
    p = SystemParams(g=g)
    assert closed_loop_class(p) is expected
    assert np.allclose(closed_loop_eigenvalues(p), eigs, atol=1e-12)


def test_closed_loop_flags_oscillatory_divergence():
    # Large positive gain overshoots: eigenvalue below -1.
    p = SystemParams(g=12.0, chi=0.2)
    assert min(closed_loop_eigenvalues(p)) < -1
    assert closed_loop_class(p) is StabilityClass.DIVERGES


def test_params_are_immutable():
    p = SystemParams(g=0.1)
    with pytest.raises(Exception):
        p.g = 0.2
    q = p.replace(g=0.2)
    assert p.g == 0.1 and q.g == 0.2 and math.isclose(q.eps, p.eps)


def test_no_warning_for_defaults():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SystemParams(g=-0.3)
