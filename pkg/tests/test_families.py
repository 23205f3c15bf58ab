import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alo_enet.errors import InputError
from alo_enet.families import GlmFamily, derivatives, loss_derivatives, softplus

GAUSS = GlmFamily("gaussian", 1.0)
LOGIT = GlmFamily("logistic")
POIS = GlmFamily("poisson")


def test_gaussian_closed_form():
    assert loss_derivatives(GAUSS, 1.0, 3.0) == (2.0, 2.0, 1.0)


def test_gaussian_noise_scaling():
    loss, d1, d2 = loss_derivatives(GlmFamily("gaussian", 2.0), 1.0, 3.0)
    assert (loss, d1, d2) == (0.5, 0.5, 0.25)


def test_logistic_symmetric_point():
    loss, d1, d2 = loss_derivatives(LOGIT, 0.0, 0.0)
    assert loss == pytest.approx(np.log(2.0), abs=1e-15)
    assert d1 == pytest.approx(0.5, abs=1e-15)
    assert d2 == pytest.approx(0.25, abs=1e-15)


def test_poisson_d1_at_origin_matches_finite_difference():
    h = 1e-6
    fd = (loss_derivatives(POIS, 0.0, h)[0] - loss_derivatives(POIS, 0.0, -h)[0]) / (2 * h)
    assert fd == pytest.approx(0.5, abs=1e-9)
    assert loss_derivatives(POIS, 0.0, 0.0)[1] == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("fam,y", [(LOGIT, 0.5), (LOGIT, 2.0), (POIS, -1.0), (POIS, 1.5)])
def test_domain_violations_rejected(fam, y):
    with pytest.raises(InputError):
        loss_derivatives(fam, y, 0.0)


def test_nonfinite_z_rejected():
    with pytest.raises(InputError):
        loss_derivatives(GAUSS, 0.0, np.inf)


def test_bad_family():
    with pytest.raises(InputError):
        GlmFamily("probit")
    with pytest.raises(InputError):
        GlmFamily("gaussian", 0.0)


def test_softplus_no_overflow():
    z = np.array([-800.0, 0.0, 800.0])
    out = softplus(z)
    assert np.all(np.isfinite(out))
    assert out[2] == 800.0 and out[1] == pytest.approx(np.log(2.0))


@pytest.mark.parametrize("fam", [LOGIT, POIS])
def test_extreme_predictors_finite(fam):
    z = np.array([-750.0, -40.0, 40.0, 750.0])
    for y in (0.0, 1.0):
        loss, d1, d2 = derivatives(fam, np.full(4, y), z)
        assert np.all(np.isfinite(loss)) and np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))
        assert np.all(d2 >= 0)


def _fd_check(fam, y, z):
    loss, d1, d2 = loss_derivatives(fam, y, z)
    h = 1e-6 * max(1.0, abs(z))
    fd1 = (loss_derivatives(fam, y, z + h)[0] - loss_derivatives(fam, y, z - h)[0]) / (2 * h)
    fd2 = (loss_derivatives(fam, y, z + h)[1] - loss_derivatives(fam, y, z - h)[1]) / (2 * h)
    return (d1, fd1), (d2, fd2)


def _close(a, b):
    return abs(a - b) <= 1e-6 * max(abs(a), abs(b), 1.0)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(["gaussian", "logistic", "poisson"]),
       st.integers(0, 1), st.integers(0, 30), st.floats(-15, 15))
def test_finite_differences_property(kind, yb, yc, z):
    fam = GlmFamily(kind)
    y = float(yb if kind == "logistic" else yc if kind == "poisson" else yc - 15 + 0.25)
    (d1, fd1), (d2, fd2) = _fd_check(fam, y, z)
    assert _close(d1, fd1)
    assert _close(d2, fd2)
    assert d2 >= 0.0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 1), st.floats(-30, 30))
def test_logistic_curvature_bound(y, z):
    assert loss_derivatives(LOGIT, float(y), z)[2] <= 0.25


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 200), st.floats(-40, 40))
def test_poisson_gradient_bound(y, z):
    assert abs(loss_derivatives(POIS, float(y), z)[1]) <= 1.0 + y


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(0)
    z = rng.normal(size=20) * 3
    y = rng.poisson(2.0, size=20).astype(float)
    loss, d1, d2 = derivatives(POIS, y, z)
    for i in range(20):
        assert (loss[i], d1[i], d2[i]) == pytest.approx(loss_derivatives(POIS, y[i], z[i]))


def test_family_roundtrip():
    fam = GlmFamily("gaussian", 1.7)
    assert GlmFamily.from_dict(fam.to_dict()) == fam
