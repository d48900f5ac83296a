"""Likelihood, parameter transforms, and the analytic posterior gradient.

The censored log likelihood is checked against scipy's lognormal and Weibull
distributions (the two families are exactly those models on the time scale),
and the analytic gradient is checked against central finite differences at
random interior points of the unconstrained space.
"""

import numpy as np
import pytest
from scipy import stats

from spataft.families import Family
from spataft.kernels import KernelValidityError
from spataft.model import (
    ModelStructure,
    ParameterLayout,
    ParameterState,
    PosteriorEvaluator,
    SurvivalDataset,
    kappa_from_lambda,
    linear_predictor,
    log_posterior,
    log_posterior_gradient,
    unit_loglik,
)
from spataft.priors import load_preset
from spataft.topology import GridSpec, build_location_map

PRIORS = load_preset("analysis")
STRUCTURES = [ModelStructure.M0, ModelStructure.M1, ModelStructure.M2]


def toy_data(seed=0, n=16, m=4):
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=n)
    X = np.column_stack([np.ones(n), x1])
    loc = np.arange(n) % m
    t = np.exp(1.0 + 0.5 * x1 + 0.4 * rng.normal(size=n))
    event = (rng.random(n) < 0.7).astype(int)
    event[0], event[1] = 1, 0  # both outcomes always present
    return SurvivalDataset(time=t, event=event, X=X, loc_index=loc,
                           covariate_names=("intercept", "x1"))


def interior_points(ev, rng, n_points):
    """Random points near the start, with sigma pinned to a sane scale.

    Large |u| can push z past the SEV overflow cliff and legitimately return
    -inf; the gradient check wants points where the posterior is smooth.
    """
    base = ev.initial_point()
    sig = ev.layout.scalar_index["sigma"]
    points = []
    for _ in range(n_points):
        u = base + rng.normal(0.0, 0.25, size=ev.dim)
        u[sig] = np.log(0.8) + rng.normal(0.0, 0.1)
        points.append(u)
    return points


# ---------------------------------------------------------------------------
# scalar transforms and containers


def test_kappa_from_lambda_values():
    assert kappa_from_lambda(np.log(3.0)) == pytest.approx(1.5, rel=1e-14)
    assert kappa_from_lambda(50.0) == pytest.approx(2.0, abs=1e-12)
    # small lambda approaches the lower end of (1, 2) from above
    assert 1.0 < kappa_from_lambda(1e-6) < 1.001
    out = kappa_from_lambda([0.5, 1.0])
    assert out.shape == (2,)
    with pytest.raises(ValueError):
        kappa_from_lambda(0.0)
    with pytest.raises(ValueError):
        kappa_from_lambda(-1.0)


def test_survival_dataset_validation():
    data = toy_data()
    assert data.n == 16
    assert data.p == 1
    assert data.censoring_rate == pytest.approx(1.0 - np.mean(data.event))
    with pytest.raises(ValueError):
        SurvivalDataset(time=[1.0, -2.0], event=[1, 1], X=np.ones((2, 1)),
                        loc_index=[0, 0], covariate_names=("intercept",))
    with pytest.raises(ValueError):
        SurvivalDataset(time=[1.0, 2.0], event=[1, 2], X=np.ones((2, 1)),
                        loc_index=[0, 0], covariate_names=("intercept",))
    with pytest.raises(ValueError):  # missing intercept column
        SurvivalDataset(time=[1.0, 2.0], event=[1, 0], X=np.array([[2.0], [2.0]]),
                        loc_index=[0, 0], covariate_names=("intercept",))
    with pytest.raises(ValueError):
        SurvivalDataset(time=[1.0, 2.0], event=[1, 0], X=np.ones((2, 1)),
                        loc_index=[0, -1], covariate_names=("intercept",))


def test_parameter_state_structures():
    m0 = ParameterState(beta=[1.0, 0.5], sigma=0.4)
    assert m0.structure is ModelStructure.M0
    assert m0.kappa_v is None

    m1 = ParameterState(beta=[1.0], sigma=0.4, v=np.zeros(4), sigma2_v=0.1,
                        nu_r_v=1.0, nu_c_v=1.0, lambda_v=np.log(3.0))
    assert m1.structure is ModelStructure.M1
    assert m1.kappa_v == pytest.approx(1.5)

    m2 = ParameterState(beta=[1.0], sigma=0.4, v=np.zeros(4), sigma2_v=0.1,
                        nu_r_v=1.0, nu_c_v=1.0, lambda_v=0.6,
                        w=np.zeros(4), sigma2_w=0.05, nu_r_w=1.5, nu_c_w=0.7,
                        kappa_w=0.9)
    assert m2.structure is ModelStructure.M2

    with pytest.raises(ValueError):
        ParameterState(beta=[1.0], sigma=0.0)
    with pytest.raises(ValueError):  # v block missing lambda_v
        ParameterState(beta=[1.0], sigma=0.4, sigma2_v=0.1, nu_r_v=1.0, nu_c_v=1.0)
    with pytest.raises(ValueError):  # w block missing kappa_w
        ParameterState(beta=[1.0], sigma=0.4, sigma2_w=0.1, nu_r_w=1.0, nu_c_w=1.0)


def test_linear_predictor_adds_effect_blocks():
    data = toy_data()
    beta = np.array([0.7, -0.3])
    base = ParameterState(beta=beta, sigma=0.5)
    np.testing.assert_allclose(linear_predictor(base, data), data.X @ beta)

    v = np.array([0.1, -0.2, 0.3, 0.0])
    w = np.array([-0.05, 0.0, 0.02, 0.11])
    full = ParameterState(beta=beta, sigma=0.5,
                          v=v, sigma2_v=0.1, nu_r_v=1.0, nu_c_v=1.0, lambda_v=0.6,
                          w=w, sigma2_w=0.05, nu_r_w=1.0, nu_c_w=1.0, kappa_w=0.9)
    expected = data.X @ beta + v[data.loc_index] + w[data.loc_index]
    np.testing.assert_allclose(linear_predictor(full, data), expected)

    with pytest.raises(ValueError):
        linear_predictor(ParameterState(beta=[1.0, 2.0, 3.0], sigma=0.5), data)


# ---------------------------------------------------------------------------
# censored likelihood against scipy parametric survival models


def test_unit_loglik_matches_lognormal():
    # NOR on log time is exactly a lognormal model for the time itself
    rng = np.random.default_rng(1)
    t = rng.uniform(0.2, 9.0, size=40)
    mu = rng.normal(1.0, 0.5, size=40)
    sigma = 0.6
    dist = stats.lognorm(s=sigma, scale=np.exp(mu))
    got_event = unit_loglik(t, np.ones(40), mu, sigma, Family.NOR)
    got_cens = unit_loglik(t, np.zeros(40), mu, sigma, Family.NOR)
    np.testing.assert_allclose(got_event, dist.logpdf(t), rtol=1e-12)
    np.testing.assert_allclose(got_cens, dist.logsf(t), rtol=1e-12)


def test_unit_loglik_matches_weibull():
    # SEV on log time is exactly a Weibull model with shape 1/sigma
    rng = np.random.default_rng(2)
    t = rng.uniform(0.2, 9.0, size=40)
    mu = rng.normal(1.0, 0.5, size=40)
    sigma = 0.45
    dist = stats.weibull_min(c=1.0 / sigma, scale=np.exp(mu))
    got_event = unit_loglik(t, np.ones(40), mu, sigma, Family.SEV)
    got_cens = unit_loglik(t, np.zeros(40), mu, sigma, Family.SEV)
    np.testing.assert_allclose(got_event, dist.logpdf(t), rtol=1e-12)
    np.testing.assert_allclose(got_cens, dist.logsf(t), rtol=1e-12)


def test_unit_loglik_censored_at_median():
    # a NOR unit censored exactly at its median contributes log(1/2)
    assert unit_loglik(np.e, 0, 1.0, 0.7, Family.NOR) == pytest.approx(np.log(0.5))


def test_unit_loglik_domain_errors():
    with pytest.raises(ValueError):
        unit_loglik(0.0, 1, 0.0, 1.0, Family.NOR)
    with pytest.raises(ValueError):
        unit_loglik(1.0, 1, 0.0, 0.0, Family.NOR)
    with pytest.raises(ValueError):
        unit_loglik(1.0, 2, 0.0, 1.0, Family.NOR)


# ---------------------------------------------------------------------------
# unconstrained layout and transforms


def test_layout_dimensions():
    assert ParameterLayout(2, 4, ModelStructure.M0).dim == 3
    assert ParameterLayout(2, 4, ModelStructure.M1).dim == 2 + 4 + 5
    assert ParameterLayout(2, 4, ModelStructure.M2).dim == 2 + 8 + 9
    lay = ParameterLayout(3, 6, ModelStructure.M2)
    assert lay.beta == slice(0, 3)
    assert lay.v_white == slice(3, 9)
    assert lay.w_white == slice(9, 15)
    assert list(lay.scalar_index) == [
        "sigma", "sigma2_v", "nu_r_v", "nu_c_v", "lambda_v",
        "sigma2_w", "nu_r_w", "nu_c_w", "kappa_w",
    ]


@pytest.mark.parametrize("structure", STRUCTURES, ids=lambda s: s.value)
def test_labels_match_constrained_row(structure):
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=structure)
    labels = ev.labels()
    assert len(set(labels)) == len(labels)
    rng = np.random.default_rng(3)
    row = ev.constrain_row(ev.initial_point() + 0.1 * rng.normal(size=ev.dim))
    assert row.shape == (len(labels),)
    if structure.has_v:
        i = labels.index("kappa_v")
        lam = row[labels.index("lambda_v")]
        assert row[i] == pytest.approx(kappa_from_lambda(lam))


@pytest.mark.parametrize("structure", STRUCTURES, ids=lambda s: s.value)
def test_constrain_unconstrain_roundtrip(structure):
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=structure)
    rng = np.random.default_rng(4)
    for u in interior_points(ev, rng, 5):
        state = ev.state_from_unconstrained(u)
        assert state.structure is structure
        np.testing.assert_allclose(ev.unconstrain(state), u, rtol=1e-9, atol=1e-11)


def test_unconstrain_rejects_structure_mismatch():
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=ModelStructure.M1)
    with pytest.raises(ValueError, match="structure"):
        ev.unconstrain(ParameterState(beta=[1.0, 0.0], sigma=0.5))


# ---------------------------------------------------------------------------
# posterior evaluation


@pytest.mark.parametrize("family", [Family.NOR, Family.SEV], ids=lambda f: f.name)
def test_evaluator_loglik_sums_unit_contributions(family):
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, family=family,
                            structure=ModelStructure.M2)
    rng = np.random.default_rng(5)
    for u in interior_points(ev, rng, 4):
        state = ev.state_from_unconstrained(u)
        mu = linear_predictor(state, data)
        direct = np.sum(unit_loglik(data.time, data.event, mu, state.sigma, family))
        assert ev.loglik_u(u) == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("family", [Family.NOR, Family.SEV], ids=lambda f: f.name)
@pytest.mark.parametrize("structure", STRUCTURES, ids=lambda s: s.value)
def test_initial_point_is_usable(family, structure):
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, family=family, structure=structure)
    value, grad = ev.value_and_grad(ev.initial_point())
    assert np.isfinite(value)
    assert np.all(np.isfinite(grad))


@pytest.mark.parametrize("family", [Family.NOR, Family.SEV], ids=lambda f: f.name)
def test_gradient_matches_finite_differences(family):
    """Central differences (h=1e-5), 20 random interior points, 2x2 grid."""
    data = toy_data(seed=11)
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, family=family,
                            structure=ModelStructure.M2)
    rng = np.random.default_rng(6)
    h = 1e-5
    worst = 0.0
    for u in interior_points(ev, rng, 20):
        value, grad = ev.value_and_grad(u)
        assert np.isfinite(value)
        fd = np.empty_like(u)
        for i in range(ev.dim):
            up, dn = u.copy(), u.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (ev.log_posterior_u(up) - ev.log_posterior_u(dn)) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(1.0, np.abs(fd))
        worst = max(worst, float(rel.max()))
    assert worst < 1e-5


@pytest.mark.parametrize("structure", [ModelStructure.M0, ModelStructure.M1],
                         ids=lambda s: s.value)
def test_gradient_finite_differences_nested(structure):
    data = toy_data(seed=12)
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=structure)
    rng = np.random.default_rng(7)
    h = 1e-5
    for u in interior_points(ev, rng, 3):
        _, grad = ev.value_and_grad(u)
        fd = np.empty_like(u)
        for i in range(ev.dim):
            up, dn = u.copy(), u.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (ev.log_posterior_u(up) - ev.log_posterior_u(dn)) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_nonfinite_point_rejected():
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=ModelStructure.M1)
    u = ev.initial_point()
    u[0] = np.nan
    assert ev.log_posterior_u(u) == -np.inf
    value, grad = ev.value_and_grad(u)
    assert value == -np.inf
    assert np.all(grad == 0.0)


def test_tempered_target_interpolates_likelihood():
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=ModelStructure.M1)
    u = ev.initial_point()
    loglik, logprior = ev.parts(u)
    for temp in (0.0, 0.3, 1.0):
        value, grad = ev.tempered_target(temp)(u)
        assert value == pytest.approx(temp * loglik + logprior, rel=1e-12)
        assert grad.shape == (ev.dim,)
    full, _ = ev.tempered_target(1.0)(u)
    assert full == pytest.approx(ev.log_posterior_u(u), rel=1e-12)


def test_state_wrappers_match_evaluator():
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    ev = PosteriorEvaluator(data, locmap, PRIORS, structure=ModelStructure.M2)
    rng = np.random.default_rng(8)
    u = interior_points(ev, rng, 1)[0]
    state = ev.state_from_unconstrained(u)
    assert log_posterior(state, data, PRIORS, locmap) == pytest.approx(
        ev.log_posterior_u(u), rel=1e-10)
    np.testing.assert_allclose(
        log_posterior_gradient(state, data, PRIORS, locmap),
        ev.value_and_grad(u)[1], rtol=1e-8, atol=1e-10)


def test_log_posterior_rejects_invalid_kernel_shape():
    data = toy_data()
    locmap = build_location_map(GridSpec(2, 2))
    state = ParameterState(beta=[1.0, 0.0], sigma=0.5, w=np.zeros(4),
                           sigma2_w=0.05, nu_r_w=1.0, nu_c_w=1.0, kappa_w=1.5,
                           v=np.zeros(4), sigma2_v=0.1, nu_r_v=1.0, nu_c_v=1.0,
                           lambda_v=0.6)
    with pytest.raises(KernelValidityError):
        log_posterior(state, data, PRIORS, locmap)


def test_evaluator_rejects_out_of_range_locations():
    data = toy_data()  # locations 0..3
    locmap = build_location_map(GridSpec(1, 2))  # only 2 locations
    with pytest.raises(ValueError):
        PosteriorEvaluator(data, locmap, PRIORS, structure=ModelStructure.M0)
