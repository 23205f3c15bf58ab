import json

import numpy as np
import pytest

from alo_enet.data import Dataset, SyntheticSpec, load_csv, make_synthetic, snr
from alo_enet.errors import InputError
from alo_enet.families import GlmFamily


def test_reference_spec_has_200_nonzeros():
    spec = SyntheticSpec(n=500, p=1000, sparsity=0.2, coef_sd=1.0, seed=7)
    ds, beta = make_synthetic(spec)
    assert np.count_nonzero(beta) == 200
    assert ds.x.shape == (500, 1000) and ds.y.shape == (500,)


def test_zero_sparsity_is_pure_noise():
    ds, beta = make_synthetic(SyntheticSpec(n=50, p=20, sparsity=0.0, seed=1))
    assert np.all(beta == 0)
    rng = np.random.default_rng(1)
    rng.standard_normal((50, 20))
    # with no support draws the next values are the gaussian noise itself
    np.testing.assert_array_equal(ds.y, rng.standard_normal(50))


def test_column_variance_near_one_over_n():
    ds, _ = make_synthetic(SyntheticSpec(n=2000, p=50, seed=3))
    v = ds.x.var()
    assert abs(v * 2000 - 1.0) <= 0.1


def test_explicit_column_variance():
    ds, _ = make_synthetic(SyntheticSpec(n=400, p=200, column_variance=0.25, seed=3))
    assert ds.x.var() == pytest.approx(0.25, rel=0.02)


def test_support_is_not_leading_block():
    _, beta = make_synthetic(SyntheticSpec(n=100, p=200, seed=11))
    assert np.flatnonzero(beta).tolist() != list(range(40))


def test_bitwise_reproducible():
    spec = SyntheticSpec(n=60, p=80, family=GlmFamily("poisson"), seed=123)
    (a, ba), (b, bb) = make_synthetic(spec), make_synthetic(spec)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert ba.tobytes() == bb.tobytes()


@pytest.mark.parametrize("kind", ["logistic", "poisson"])
def test_glm_responses_in_domain(kind):
    ds, _ = make_synthetic(SyntheticSpec(n=300, p=30, family=GlmFamily(kind), seed=2))
    assert np.all(ds.y == np.round(ds.y)) and np.all(ds.y >= 0)
    if kind == "logistic":
        assert set(np.unique(ds.y)) <= {0.0, 1.0}


@pytest.mark.parametrize("kw", [{"sparsity": 1.5}, {"sparsity": -0.1}, {"n": 1},
                                {"p": 0}, {"coef_sd": 0.0}, {"column_variance": -1.0}])
def test_spec_validation(kw):
    base = dict(n=10, p=10)
    base.update(kw)
    with pytest.raises(InputError):
        SyntheticSpec(**base)


def test_spec_json_roundtrip():
    spec = SyntheticSpec(n=10, p=7, sparsity=0.3, coef_sd=2.0, column_variance=0.5,
                         family=GlmFamily("logistic"), seed=99)
    d = json.loads(spec.to_json())
    assert set(d) == {"n", "p", "sparsity", "coef_sd", "column_variance", "family", "seed"}
    assert SyntheticSpec.from_dict(d) == spec
    with pytest.raises(InputError):
        SyntheticSpec.from_dict({**d, "bogus": 1})


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.ones((1, 2)), np.ones(1))
    with pytest.raises(InputError):
        Dataset(np.ones((3, 2)), np.ones(2))
    with pytest.raises(InputError):
        Dataset(np.array([[1.0, np.nan], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(InputError):
        Dataset(np.ones((3, 2)), np.array([0, 1, 0.5]), GlmFamily("logistic"))


def test_drop_row():
    x = np.arange(12.0).reshape(4, 3)
    ds = Dataset(x, np.arange(4.0))
    d = ds.drop_row(1)
    np.testing.assert_array_equal(d.x, x[[0, 2, 3]])
    np.testing.assert_array_equal(d.y, [0.0, 2.0, 3.0])
    assert ds.gamma0 == pytest.approx(4 / 3)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    px = _write(tmp_path / "x.csv", "1,2\n3,4\n5,6\n")
    py = _write(tmp_path / "y.csv", "1\n0\n1\n")
    ds = load_csv(px, py, GlmFamily("logistic"))
    assert (ds.n, ds.p) == (3, 2)


def test_load_csv_header(tmp_path):
    px = _write(tmp_path / "x.csv", "a,b\n1,2\n3,4\n")
    py = _write(tmp_path / "y.csv", "y\n1\n2\n")
    ds = load_csv(px, py, GlmFamily(), header=True)
    assert (ds.n, ds.p) == (2, 2)


def test_load_csv_domain_error(tmp_path):
    px = _write(tmp_path / "x.csv", "1,2\n3,4\n5,6\n")
    py = _write(tmp_path / "y.csv", "1\n0.5\n1\n")
    with pytest.raises(InputError, match="logistic"):
        load_csv(px, py, GlmFamily("logistic"))


def test_load_csv_blank_cell_location(tmp_path):
    px = _write(tmp_path / "x.csv", "1,2\n,4\n5,6\n")
    py = _write(tmp_path / "y.csv", "1\n0\n1\n")
    with pytest.raises(InputError, match="row 2, col 1"):
        load_csv(px, py, GlmFamily())


def test_load_csv_mismatch(tmp_path):
    px = _write(tmp_path / "x.csv", "1,2\n3,4\n")
    py = _write(tmp_path / "y.csv", "1\n0\n1\n")
    with pytest.raises(InputError, match="mismatch"):
        load_csv(px, py, GlmFamily())
    with pytest.raises(InputError):
        load_csv(tmp_path / "missing.csv", py, GlmFamily())


def test_snr_examples():
    spec = SyntheticSpec(n=500, p=1000, seed=7)
    assert snr(np.zeros(1000), spec) == 0.0
    beta = np.zeros(1000)
    beta[0] = np.sqrt(500.0)
    assert snr(beta, spec) == pytest.approx(1.0)
    _, bs = make_synthetic(spec)
    assert snr(bs, spec) == pytest.approx(float(bs @ bs) / 500, rel=1e-12)
    assert snr(bs, spec) == pytest.approx(0.4, abs=0.1)


def test_snr_glm_positive():
    spec = SyntheticSpec(n=100, p=50, family=GlmFamily("logistic"), seed=1)
    _, bs = make_synthetic(spec)
    assert snr(bs, spec) > 0
