import itertools
import math

import pytest
from hypothesis import given, strategies as st

from ionphotonics import budget as bd

factor = st.builds(bd.EfficiencyFactor, st.just("f"), st.floats(0.01, 1), st.floats(0, 0.5))


def test_solid_angle():
    assert abs(bd.solid_angle_fraction(0.8) - 0.2) < 1e-12
    with pytest.raises(ValueError):
        bd.solid_angle_fraction(1.1)


@given(st.floats(0, 1), st.floats(0, 1))
def test_solid_angle_increasing(a, b):
    if b - a > 1e-9:
        assert bd.solid_angle_fraction(a) < bd.solid_angle_fraction(b)


@given(st.lists(factor, min_size=1, max_size=5))
def test_chain_properties(fs):
    v, u = bd.chain(fs)
    for perm in itertools.islice(itertools.permutations(fs), 6):
        assert math.isclose(bd.chain(perm)[0], v, rel_tol=1e-12)
    k = len(fs) // 2
    if 0 < k < len(fs):
        a, ua = bd.chain(fs[:k])
        b, ub = bd.chain(fs[k:])
        ab = bd.EfficiencyFactor("a", a, ua / a if a else 0)
        bb = bd.EfficiencyFactor("b", b, ub / b if b else 0)
        assert math.isclose(bd.chain([ab, bb])[0], v, rel_tol=1e-12)
        assert math.isclose(bd.chain([ab, bb])[1], u, rel_tol=1e-9, abs_tol=1e-15)
    if v > 0:
        assert u / v >= max(f.relative_uncertainty for f in fs) - 1e-15


def test_published_chain():
    fs = [bd.EfficiencyFactor("solid angle", bd.solid_angle_fraction(0.8), 0, "computed"),
          bd.EfficiencyFactor("lens", 0.91, 0.03 / 0.91), bd.EfficiencyFactor("rods", 0.97, 0.01 / 0.97),
          bd.EfficiencyFactor("fiber", 0.30, 0.1)]
    v, u = bd.chain(fs)
    assert abs(v - 0.2 * 0.91 * 0.97 * 0.30) < 1e-15
    assert abs(u - 0.0056) < 0.0001
    assert abs(bd.total_two_sided((v, v)) - 0.10) < 0.01


def test_factor_validation():
    with pytest.raises(ValueError):
        bd.EfficiencyFactor("x", 1.2)
    with pytest.raises(ValueError):
        bd.EfficiencyFactor("x", 0.5, provenance="guessed")
    with pytest.raises(ValueError):
        bd.total_two_sided((0.6, 0.6))


@given(st.floats(1e-6, 1), st.floats(1, 1e7), st.sampled_from([1, 2]))
def test_rate_ratio_identity(p, r, d):
    m = bd.RateModel(p, r, d)
    assert bd.rate_ratio(m, m) == 1.0


def test_attempt_rate():
    assert abs(bd.attempt_rate_from(182, 2.18e-4) / 8.35e5 - 1) < 0.005
    with pytest.raises(ValueError):
        bd.attempt_rate_from(1, 0)


def test_shipped_scenario():
    scn = bd.load_scenario()
    res = bd.run_scenario(scn)
    assert abs(res.ratio - 3.5) < 0.5
    assert res.assumed
    three = bd.run_scenario(scn, "three-node")
    assert math.isclose(res.ratio / three.ratio, 2.0)
    with pytest.raises(Exception):
        bd.run_scenario(scn, "ring")
