import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from killingflow.geometry import (GeometryError, TableFormatError,
                                  ValidationError, ambient_frame,
                                  constant_profile, cosh_profile,
                                  euclidean_model, euclidean_profile,
                                  hyperbolic_model, hyperbolic_profile,
                                  lower_ricci_bounds, make_model,
                                  table_profile_from_csv)


# -- profiles -----------------------------------------------------------------


def test_profile_values_and_derivatives():
    r = 0.7
    p = hyperbolic_profile(kappa=2.0)
    assert p.value(r) == pytest.approx(math.sinh(2 * r) / 2.0)
    assert p.d1(r) == pytest.approx(math.cosh(2 * r))
    assert p.d2(r) == pytest.approx(2 * math.sinh(2 * r))
    assert p.ratio_d1(r) == pytest.approx(2.0 / math.tanh(2 * r))
    assert p.ratio_d2(r) == pytest.approx(4.0)
    c = cosh_profile()
    assert c.value(r) == pytest.approx(math.cosh(r))
    assert c.ratio_d1(r) == pytest.approx(math.tanh(r))
    assert euclidean_profile().value(r) == r
    assert constant_profile(3.0).value(r) == 3.0
    assert constant_profile(3.0).d1(r) == 0.0


def test_ratio_d1_stable_at_large_radius():
    # naive cosh/sinh quotient overflows near r ~ 400
    p = hyperbolic_profile()
    assert p.ratio_d1(400.0) == pytest.approx(1.0)
    assert np.isfinite(p.ratio_d1(np.array([100.0, 500.0, 700.0]))).all()


def test_profile_array_broadcast():
    p = hyperbolic_profile()
    rs = np.linspace(0.1, 2.0, 7)
    np.testing.assert_allclose(p.value(rs), np.sinh(rs))
    np.testing.assert_allclose(p.d1(rs), np.cosh(rs))


def test_bad_profile_kind():
    from killingflow.geometry import ProfileSpec
    with pytest.raises(GeometryError):
        ProfileSpec("parabolic")
    with pytest.raises(GeometryError):
        ProfileSpec("hyperbolic", kappa=-1.0)


def test_table_profile(tmp_path):
    path = tmp_path / "xi.csv"
    rs = np.linspace(0.0, 3.0, 40)
    path.write_text("# synthetic sinh samples\nr,value\n" + "\n".join(
        f"{r},{math.sinh(r)}" for r in rs))
    p = table_profile_from_csv(str(path))
    assert p.kind == "table"
    assert p.value(1.0) == pytest.approx(math.sinh(1.0), abs=1e-4)
    assert p.d1(1.0) == pytest.approx(math.cosh(1.0), abs=1e-2)


@pytest.mark.parametrize("text", [
    "r\n0\n",                              # bad header
    "r,value\n0,0\n1,1\n",                 # too few rows
    "r,value\n0,0\n1,1\n1,2\n2,3\n",       # non-increasing radii
    "r,value\n0,0\n1,one\n2,2\n3,3\n",     # non-numeric
])
def test_table_profile_rejects(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(TableFormatError):
        table_profile_from_csv(str(path))


# -- model data against closed forms ------------------------------------------


def test_euclidean_model_data(euclid2):
    for r in (0.5, 1.0, 2.0):
        assert euclid2.A(r) == pytest.approx(r, abs=1e-12)
        assert euclid2.V(r) == pytest.approx(r * r / 2, abs=1e-10)
        assert euclid2.zeta(r) == pytest.approx(r * r / 2, abs=1e-10)
        assert euclid2.H(r) == pytest.approx(-1.0 / r, rel=1e-10)
        assert float(euclid2.Hcyl(r)) == pytest.approx(1 / (2 * r), rel=1e-12)


def test_euclidean_3d_volume(euclid3):
    # A = r^2, V = r^3/3
    assert euclid3.A(1.0) == pytest.approx(1.0)
    assert euclid3.V(1.0) == pytest.approx(1.0 / 3.0, abs=1e-10)


def test_hyperbolic_model_data(hyp2):
    for r in (0.5, 1.0, 1.7):
        sh, ch = math.sinh(r), math.cosh(r)
        assert hyp2.A(r) == pytest.approx(sh * ch, rel=1e-12)
        assert hyp2.V(r) == pytest.approx(sh * sh / 2, rel=1e-10)
        assert hyp2.zeta(r) == pytest.approx(ch - 1.0, rel=1e-10)
        assert hyp2.H(r) == pytest.approx(-sh * ch / (sh * sh), rel=1e-10)
        assert float(hyp2.Hcyl(r)) == pytest.approx(
            0.5 * (ch / sh + sh / ch), rel=1e-12)


def test_H_prime_sign(hyp2, euclid2):
    # |H| decreases outward on both built-ins, so H' > 0
    for model in (hyp2, euclid2):
        for r in (0.3, 1.0, 2.5):
            assert model.H_prime(r) > 0.0


def test_pole_guards(euclid2):
    with pytest.raises(GeometryError):
        euclid2.H(0.0)
    with pytest.raises(GeometryError):
        euclid2.Hcyl(0.0)


# -- validation ladder ---------------------------------------------------------


def test_make_model_accepts_builtins():
    m = make_model(hyperbolic_profile(), hyperbolic_profile(),
                   cosh_profile(), n=2)
    assert m.validation["checks"]
    assert m.n == 2


def test_make_model_rejects_warping_growing_too_fast():
    # rho = cosh(3r) grows faster than xi'/xi = coth(r) allows
    with pytest.raises(ValidationError):
        make_model(hyperbolic_profile(), hyperbolic_profile(),
                   cosh_profile(kappa=3.0), n=2)


def test_make_model_rejects_nonvanishing_xi():
    with pytest.raises((ValidationError, TableFormatError)):
        make_model(constant_profile(1.0), euclidean_profile(),
                   constant_profile(), n=2)


def test_make_model_rejects_bad_dimension():
    with pytest.raises(GeometryError):
        make_model(euclidean_profile(), euclidean_profile(),
                   constant_profile(), n=1)


# -- ambient frame -------------------------------------------------------------


def test_christoffels_euclidean(euclid2):
    fr = ambient_frame(euclid2)
    r = 1.3
    tab = fr.christoffels(r)
    # flat warping: only the polar-coordinate symbols survive
    assert tab[("s", "s", "r")] == 0.0
    assert tab[("r", "s", "s")] == 0.0
    assert tab[("r", "theta", "theta")] == pytest.approx(-r)
    assert tab[("theta", "r", "theta")] == pytest.approx(1.0 / r)
    assert fr.christoffel(r, "theta", "theta", "r") == pytest.approx(1.0 / r)
    assert fr.christoffel(r, "s", "theta", "theta") == 0.0


def test_christoffels_hyperbolic(hyp2):
    fr = ambient_frame(hyp2)
    r = 0.9
    sh, ch = math.sinh(r), math.cosh(r)
    tab = fr.christoffels(r)
    assert tab[("s", "s", "r")] == pytest.approx(sh / ch)
    assert tab[("r", "s", "s")] == pytest.approx(-ch * sh)
    assert tab[("r", "theta", "theta")] == pytest.approx(-sh * ch)
    assert tab[("theta", "r", "theta")] == pytest.approx(ch / sh)


def test_ricci_eigenvalues(euclid2, hyp2):
    fr_e = ambient_frame(euclid2)
    assert fr_e.ricci_eigenvalues(1.0) == pytest.approx((0.0, 0.0, 0.0))
    # hyperbolic plane warped by cosh: ambient is hyperbolic 3-space,
    # Ric = -2 g in the orthonormal frame
    fr_h = ambient_frame(hyp2)
    for r in (0.4, 1.0, 2.0):
        assert fr_h.ricci_eigenvalues(r) == pytest.approx((-2.0, -2.0, -2.0))
    assert fr_h.ricci(1.0, (1.0, 1.0, 0.0)) == pytest.approx(-2.0)
    with pytest.raises(GeometryError):
        fr_h.ricci(1.0, (0.0, 0.0, 0.0))


def test_lower_ricci_bounds(euclid2, hyp2):
    assert lower_ricci_bounds(euclid2, 4.0) == (0.0, 0.0)
    L, L1 = lower_ricci_bounds(hyp2, 4.0)
    assert L == pytest.approx(2.0, abs=1e-9)
    assert L1 == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(GeometryError):
        lower_ricci_bounds(euclid2, 0.0)


# -- properties ----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 6.0), st.floats(0.05, 6.0))
def test_volume_monotone(hyp2, r_small, r_big):
    if r_small > r_big:
        r_small, r_big = r_big, r_small
    assert hyp2.V(r_big) >= hyp2.V(r_small) - 1e-12
    assert hyp2.zeta(r_big) >= hyp2.zeta(r_small) - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0))
def test_A_is_V_derivative(hyp2, r):
    h = 1e-5
    dV = (hyp2.V(r + h) - hyp2.V(max(r - h, 0.0))) / (h + min(r, h))
    assert dV == pytest.approx(hyp2.A(r), rel=1e-4, abs=1e-6)
