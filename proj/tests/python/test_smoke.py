import math

import numpy as np
import pytest

import calibsimplex as cs


def test_ilr_round_trip():
    x = np.array([0.2, 0.3, 0.5])
    v = cs.ilr(x)
    assert v.shape == (2,)
    assert np.allclose(cs.ilr_inv(v), x, atol=1e-14)
    # pivot coordinate by hand
    assert v[0] == pytest.approx(math.sqrt(0.5) * math.log(0.2 / 0.3))


def test_aitchison_geometry():
    x = np.array([0.1, 0.6, 0.3])
    y = np.array([0.4, 0.4, 0.2])
    assert cs.a_norm(x) ** 2 == pytest.approx(cs.a_inner(x, x))
    assert cs.a_dist(x, y) == pytest.approx(np.linalg.norm(cs.ilr(x) - cs.ilr(y)))
    assert np.allclose(cs.perturb(x, cs.power(-1.0, x)), np.full(3, 1 / 3))


def test_errors_surface_as_calib_error():
    with pytest.raises(cs.CalibError, match="NonPositivePart"):
        cs.ilr(np.array([0.5, 0.0, 0.5]))
    with pytest.raises(cs.CalibError, match="NotSPD"):
        cs.divergence_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_theory_binary_and_inverse():
    assert cs.eer_from_mu(6.0) == pytest.approx(0.5 * math.erfc(math.sqrt(3.0) / math.sqrt(2.0)))
    d = cs.divergence_matrix(np.array([[1.7]]))
    assert d[0, 1] == pytest.approx(1.7)
    sigma = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]])
    back, residual = cs.sigma_from_divergences(cs.divergence_matrix(sigma))
    assert np.allclose(back, sigma, atol=1e-8)
    assert residual < 1e-8
    draws = cs.sample_family(sigma, 1, 20000, 3)
    assert np.allclose(draws.mean(axis=0), cs.mean_chain(sigma)[1], atol=0.06)


def test_metrics_on_calibrated_scores():
    rng = np.random.default_rng(0)
    mu = 3.28475
    sd = math.sqrt(2 * mu)
    scores = np.concatenate([rng.normal(mu, sd, 20000), rng.normal(-mu, sd, 20000)])
    labels = [1] * 20000 + [0] * 20000
    rep = cs.cllr_decompose(scores, labels)
    assert rep["cllr"] == pytest.approx(cs.cllr(scores, labels))
    assert 0.0 <= rep["cllr_cal"] < 0.02
    assert cs.eer(scores, labels) == pytest.approx(0.1, abs=0.01)


def test_lda_qda_and_pairwise():
    x, y = cs.gen_gaussians3(3000, 1)
    assert x.shape == (3000, 4)
    for fit in (cs.lda_fit, cs.qda_fit):
        model = fit(x, y)
        ll = model.loglik(x)
        rep = cs.c_mc(ll, y)
        assert rep["cmc"] < math.log(3)
        assert rep["accuracy"] > 0.7
        s, l = cs.pairwise_trials(ll, y, 0, 1)
        assert len(s) == len(l) == sum(1 for v in y if v in (0, 1))


def test_cda_short_fit(tmp_path):
    x, y = cs.gen_moons(600, 0.2, 1)
    model, trace = cs.cda_fit(x, y, epochs=3, layers=2, width=16, seed=1)
    assert len(trace) == 3
    assert model.classes == 2 and model.dim == 2
    s = model.scores(x[:10])
    assert np.allclose(np.exp(s).sum(axis=1), 1.0)
    assert np.allclose(model.ilrl(x[:10])[:, 0], (s[:, 0] - s[:, 1]) / math.sqrt(2))
    path = str(tmp_path / "m.ckpt")
    model.save(path)
    assert np.array_equal(cs.CdaModel.load(path).scores(x[:10]), s)
