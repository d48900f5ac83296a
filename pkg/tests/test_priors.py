import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from spataft.priors import (
    PRESET_NAMES,
    SCALAR_PARAMETERS,
    BetaPrior,
    GammaPrior,
    NormalPrior,
    PriorSpec,
    load_preset,
    preset_payload,
)


def test_normal_prior_matches_scipy():
    prior = NormalPrior(mean=1.2, sd=3.4)
    x = np.linspace(-10, 10, 21)
    assert_allclose(prior.logpdf(x), stats.norm.logpdf(x, 1.2, 3.4), rtol=1e-13)
    assert prior.median() == 1.2
    assert prior.mean_value() == 1.2


def test_gamma_prior_matches_scipy_shape_rate():
    prior = GammaPrior(shape=6.0, rate=100.0)
    x = np.array([0.01, 0.05, 0.1, 0.3])
    assert_allclose(prior.logpdf(x), stats.gamma.logpdf(x, 6.0, scale=0.01), rtol=1e-12)
    assert prior.mean_value() == pytest.approx(0.06)
    assert prior.median() == pytest.approx(stats.gamma.ppf(0.5, 6.0, scale=0.01))


def test_beta_prior_matches_scipy():
    prior = BetaPrior(a=18.0, b=2.0)
    x = np.array([0.5, 0.9, 0.99])
    assert_allclose(prior.logpdf(x), stats.beta.logpdf(x, 18.0, 2.0), rtol=1e-12)
    assert prior.mean_value() == pytest.approx(0.9)


@pytest.mark.parametrize("prior,points", [
    (NormalPrior(0.5, 2.0), np.linspace(-4, 4, 9)),
    (GammaPrior(0.1, 0.1), np.array([0.05, 0.5, 2.0, 10.0])),
    (GammaPrior(9.5, 10.0), np.array([0.3, 0.95, 2.0])),
    (BetaPrior(18.0, 2.0), np.array([0.2, 0.7, 0.95])),
    (BetaPrior(0.5, 0.5), np.array([0.1, 0.5, 0.9])),
])
def test_dlogpdf_matches_finite_differences(prior, points):
    h = 1e-7
    fd = (prior.logpdf(points + h) - prior.logpdf(points - h)) / (2 * h)
    assert_allclose(prior.dlogpdf(points), fd, rtol=5e-6, atol=1e-8)


@pytest.mark.parametrize("bad", [
    lambda: NormalPrior(0.0, 0.0),
    lambda: GammaPrior(0.0, 1.0),
    lambda: GammaPrior(1.0, -2.0),
    lambda: BetaPrior(-1.0, 1.0),
])
def test_invalid_hyperparameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


# ---------------------------------------------------------------------------
# prior tables and presets


def test_prior_spec_lookup_and_require():
    spec = PriorSpec(entries={"beta": NormalPrior(0, 1), "sigma": GammaPrior(1, 1)})
    assert "sigma" in spec
    spec.require(["beta", "sigma"])
    with pytest.raises(KeyError):
        spec["nu_r_v"]
    with pytest.raises(KeyError):
        spec.require(["beta", "kappa_w"])


def test_prior_spec_round_trips_through_dict():
    spec = load_preset("simulation")
    again = PriorSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_cover_all_model_parameters(name):
    spec = load_preset(name)
    spec.require(["beta", *SCALAR_PARAMETERS])


def test_preset_values_simulation():
    spec = load_preset("simulation")
    assert isinstance(spec["beta"], NormalPrior)
    assert spec["beta"].mean == 0.0
    assert spec["beta"].sd == pytest.approx(np.sqrt(500.0))
    assert spec["sigma"] == GammaPrior(0.1, 0.1)
    assert spec["sigma2_v"] == GammaPrior(6.0, 100.0)
    assert spec["sigma2_v"].mean_value() == pytest.approx(0.06)
    assert spec["kappa_w"] == BetaPrior(18.0, 2.0)


def test_preset_values_analysis():
    spec = load_preset("analysis")
    assert spec["beta"].sd == pytest.approx(np.sqrt(500.0))
    assert spec["sigma2_v"] == GammaPrior(0.5, 0.5)
    assert spec["sigma2_w"] == GammaPrior(0.1, 0.1)
    assert spec["kappa_w"] == BetaPrior(0.5, 0.5)
    assert spec["lambda_v"] == GammaPrior(1.0, 2.0)


def test_preset_payload_documents_gamma_convention():
    for name in PRESET_NAMES:
        payload = preset_payload(name)
        conventions = json.dumps(payload.get("conventions", "")).lower()
        assert "rate" in conventions


def test_load_preset_from_file(tmp_path):
    payload = {"priors": {"beta": {"dist": "normal", "mean": 0.0, "sd": 2.0},
                          "sigma": {"dist": "gamma", "shape": 2.0, "rate": 4.0}}}
    path = tmp_path / "custom.json"
    path.write_text(json.dumps(payload))
    spec = load_preset(str(path))
    assert spec["sigma"].mean_value() == pytest.approx(0.5)


def test_load_preset_unknown_name_raises():
    with pytest.raises(OSError):
        load_preset("no-such-preset")
