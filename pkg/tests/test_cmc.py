import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from killingflow.cmc import (CmcError, CmcProfile, eval_vR, eval_vR_prime,
                             integrate_profile_ode, residual_cmc, sample_vR,
                             solve_vR)

# heights of the hyperbolic profile with rim radius 1, frozen from an
# independent high-order ODE integration of the slope equation
HYP_V = {0.0: 1.0, 0.3: 0.940782654160602, 0.7: 0.664998241436405}


def test_hemisphere_closed_form(euclid2):
    # flat 2-d model: the radial CMC graph is the hemisphere sqrt(R^2 - r^2)
    for R in (0.5, 1.0, 2.0):
        profile = solve_vR(euclid2, R, 128)
        exact = np.sqrt(np.clip(R * R - profile.grid ** 2, 0.0, None))
        assert float(np.max(np.abs(profile.v - exact))) < 1e-9


def test_hemisphere_3d(euclid3):
    profile = solve_vR(euclid3, 1.0, 128)
    exact = np.sqrt(np.clip(1.0 - profile.grid ** 2, 0.0, None))
    assert float(np.max(np.abs(profile.v - exact))) < 1e-9


def test_hyperbolic_frozen_heights(hyp2):
    for r, v in HYP_V.items():
        assert eval_vR(hyp2, 1.0, r) == pytest.approx(v, abs=1e-10)


def test_slope_flat_model(euclid2):
    # v' = -r / sqrt(R^2 - r^2) for the hemisphere
    R = 1.0
    for r in (0.2, 0.5, 0.8):
        assert eval_vR_prime(euclid2, R, r) == pytest.approx(
            -r / math.sqrt(R * R - r * r), rel=1e-9)
    assert eval_vR_prime(euclid2, R, 0.0) == 0.0


def test_slope_domain_errors(euclid2):
    with pytest.raises(CmcError):
        eval_vR_prime(euclid2, 1.0, 1.0)
    with pytest.raises(CmcError):
        eval_vR_prime(euclid2, 1.0, -0.1)
    with pytest.raises(CmcError):
        eval_vR(euclid2, 1.0, 1.5)
    with pytest.raises(CmcError):
        eval_vR(euclid2, -1.0, 0.0)
    with pytest.raises(CmcError):
        solve_vR(euclid2, 1.0, 8)


def test_profile_shape_invariants(hyp2):
    profile = solve_vR(hyp2, 2.0, 96)
    assert profile.v[-1] == 0.0
    assert np.all(np.diff(profile.v) < 0)
    assert np.all(profile.v[:-1] > 0)
    assert profile.vp[0] == 0.0
    assert profile.vp[-1] == -math.inf
    assert profile.H_R == pytest.approx(hyp2.H(2.0))
    # interpolation helper
    assert profile.value(0.0) == pytest.approx(profile.v[0])


def test_profile_validation_rejects_garbage():
    g = np.linspace(0.0, 1.0, 32)
    with pytest.raises(CmcError):
        CmcProfile(R=1.0, H_R=-1.0, grid=g, v=np.ones_like(g),
                   vp=np.zeros_like(g))
    # escape hatch keeps the data as-is
    p = CmcProfile(R=1.0, H_R=-1.0, grid=g, v=np.ones_like(g),
                   vp=np.zeros_like(g), validate=False)
    assert p.v[0] == 1.0


def test_sample_vR_matches_pointwise(hyp2):
    grid = np.linspace(0.0, 0.95, 40)
    vals = sample_vR(hyp2, 1.0, grid)
    for i in (0, 13, 39):
        assert vals[i] == pytest.approx(eval_vR(hyp2, 1.0, float(grid[i])),
                                        abs=1e-9)
    with pytest.raises(CmcError):
        sample_vR(hyp2, 1.0, np.array([0.5, 0.5]))


def test_sample_vR_beyond_rim_is_zero(euclid2):
    vals = sample_vR(euclid2, 1.0, np.array([0.5, 1.0, 2.0]))
    assert vals[1] == 0.0 and vals[2] == 0.0


def test_residual_cmc_flags_wrong_profile(euclid2):
    profile = solve_vR(euclid2, 1.0, 128)
    assert residual_cmc(euclid2, profile) < 1e-6
    bad = CmcProfile(R=1.0, H_R=profile.H_R, grid=profile.grid,
                     v=profile.v ** 2, vp=profile.vp * 0.5, validate=False)
    assert residual_cmc(euclid2, bad) > 0.1


def test_residual_converges_hyperbolic(hyp2):
    res = [residual_cmc(hyp2, solve_vR(hyp2, 1.0, n)) for n in (128, 256)]
    assert res[1] < 1e-3
    assert math.log2(res[0] / res[1]) > 1.8


def test_ode_trace_consistent(hyp2):
    # the arclength trace of the profile curve must reproduce the heights
    rows = integrate_profile_ode(hyp2, 1.0, 2e-4)
    r, s = rows[:, 1], rows[:, 2]
    for probe in (0.3, 0.7):
        i = int(np.argmin(np.abs(r - probe)))
        assert s[i] == pytest.approx(HYP_V[probe], abs=1e-3)
    with pytest.raises(CmcError):
        integrate_profile_ode(hyp2, 1.0, -1.0)


def test_large_rim_raises_at_precision_limit(hyp2):
    # A'(20) ~ 1e17: the slope discriminant is below double-precision reach
    with pytest.raises(CmcError):
        eval_vR(hyp2, 20.0, 0.0)


def test_large_rim_still_works_at_moderate_radius(hyp2):
    # deep hyperbolic rims: v(0) ~ R since the profile hugs the rim sphere
    v = eval_vR(hyp2, 8.76, 0.0)
    assert v == pytest.approx(8.76, abs=5e-3)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.01, 0.99))
def test_height_decreasing_property(hyp2, R, frac):
    r = frac * R
    v_in = eval_vR(hyp2, R, 0.0)
    v_mid = eval_vR(hyp2, R, r)
    assert v_in >= v_mid >= 0.0
