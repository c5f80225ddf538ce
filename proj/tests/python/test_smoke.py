import math
import os

import pytest

import difflik

MODELS = os.environ.get("DIFFLIK_MODELS_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "models"))


def test_load_model_and_presets():
    model = difflik.load_model(os.path.join(MODELS, "mrou.toml"))
    assert model.dims == 1
    assert model.params == ["kappa", "alpha", "sigma"]
    assert "benchmark" in model.presets


def test_expansion_matches_exact_density():
    model = difflik.benchmark_model("mrou")
    theta = difflik.benchmark_preset("mrou")
    e = difflik.expand(model, theta, [0.07], 6)
    assert e.order == 6
    corrections = e.corrections()
    assert corrections[0] == {(0,): 1.0}
    exact = difflik.exact_log_density("mrou", theta, 1 / 52, [0.071], [0.07])
    assert e.log_density(1 / 52, [0.071]) == pytest.approx(exact, abs=1e-6)
    assert math.exp(exact) == pytest.approx(e.density(1 / 52, [0.071]), rel=1e-5)


def test_fit_recovers_the_exact_mle():
    theta = difflik.benchmark_preset("mrou")
    path = difflik.simulate("mrou", theta, 1 / 52, 500, [0.06], 3)
    assert len(path) == 501
    model = difflik.benchmark_model("mrou")
    report = difflik.fit(model, path, 1 / 52, 4, [0.3, 0.05, 0.05])
    assert report["converged"]
    exact = difflik.exact_mle("mrou", path, 1 / 52)
    for name in model.params:
        assert report["theta"][name] == pytest.approx(exact["theta"][name], rel=1e-3)
    ll = difflik.approx_loglik(model, report["theta"], path, 1 / 52, 4)
    assert ll == pytest.approx(report["loglik"], rel=1e-12)


def test_errors_surface_as_exceptions():
    with pytest.raises(difflik.Error):
        difflik.parse_model("dimension = 1\n")
    with pytest.raises(ValueError):
        difflik.benchmark_model("cir")
