"""Posterior summaries, survival curves, and marginal-likelihood comparison.

Marginal likelihoods use the stepping-stone identity: with temperatures
0 = t_0 < ... < t_K = 1 and draws u_s from the power posterior at t_k,
log z = sum_k log mean_s exp[(t_{k+1} - t_k) * loglik(u_s)]. Rungs are spaced
geometrically, t_k = (k/K)^5, concentrating effort near the prior where the
integrand varies fastest. Each rung warm-starts from the previous one.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp, ndtri

from .kernels import KernelParams
from .model import ModelStructure, PosteriorEvaluator
from .sampler import (
    HMCConfig,
    PosteriorDraws,
    _rank_normalize,
    _rhat_from_chains,
    _split_chains,
    run_hmc,
)
from .topology import GridSpec

ModelTag = ModelStructure  # nested-model labels M0 / M1 / M2

_Z95 = float(ndtri(0.975))


# ---------------------------------------------------------------------------
# draw summaries


@dataclass(frozen=True)
class PosteriorSummary:
    labels: tuple
    mean: np.ndarray
    median: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    def row(self, name):
        k = self.labels.index(name)
        return {
            "mean": float(self.mean[k]),
            "median": float(self.median[k]),
            "sd": float(self.sd[k]),
            "lower": float(self.lower[k]),
            "upper": float(self.upper[k]),
        }


def summarize_draws(draws: PosteriorDraws, alpha: float = 0.05) -> PosteriorSummary:
    """Mean/median/sd and central (alpha/2, 1-alpha/2) interval per parameter.

    Quantiles are linear interpolation of order statistics (numpy default,
    Hyndman-Fan type 7); sd uses the n-1 denominator.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    arr = draws.draws
    if arr.size == 0:
        raise ValueError("draws are empty")
    lower, upper = np.quantile(arr, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    sd = np.std(arr, axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros(arr.shape[1])
    return PosteriorSummary(
        labels=draws.labels,
        mean=arr.mean(axis=0),
        median=np.median(arr, axis=0),
        sd=sd,
        lower=lower,
        upper=upper,
        alpha=alpha,
    )


def summary_rows(summary: PosteriorSummary, name: str):
    """Rows for the summary CSV layout (Name, Parameter, Mean, SD, Lower, Upper)."""
    rows = [("Name", "Parameter", "Mean", "SD", "Lower", "Upper")]
    for k, label in enumerate(summary.labels):
        rows.append((name, label, repr(float(summary.mean[k])), repr(float(summary.sd[k])),
                     repr(float(summary.lower[k])), repr(float(summary.upper[k]))))
    return rows


def probability_greater(draws: PosteriorDraws, name_a: str, name_b: str) -> float:
    """Posterior P(a > b) as the fraction of draws."""
    return float(np.mean(draws.column(name_a) > draws.column(name_b)))


# ---------------------------------------------------------------------------
# Kaplan-Meier and log-rank


@dataclass(frozen=True)
class KMCurve:
    stratum: str
    times: np.ndarray       # distinct event times, increasing
    survival: np.ndarray
    at_risk: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.survival) > 1e-15):
            raise ValueError("survival estimates must be nonincreasing")


def _km_single(times, deltas, label):
    order = np.argsort(times, kind="stable")
    times = times[order]
    deltas = deltas[order]
    n = times.shape[0]
    distinct = np.unique(times[deltas == 1])
    surv = []
    at_risk = []
    var_sum = 0.0
    log_vars = []
    s = 1.0
    for t in distinct:
        n_risk = int(np.sum(times >= t))
        d = int(np.sum((times == t) & (deltas == 1)))
        s *= (n_risk - d) / n_risk
        if n_risk > d:
            var_sum += d / (n_risk * (n_risk - d))
        else:
            var_sum = np.inf  # survival hit zero; band collapses there
        surv.append(s)
        at_risk.append(n_risk)
        log_vars.append(var_sum)
    surv = np.asarray(surv)
    se = np.sqrt(np.asarray(log_vars))
    with np.errstate(invalid="ignore"):
        lower = np.where(surv > 0, surv * np.exp(-_Z95 * se), 0.0)
        upper = np.where(surv > 0, np.minimum(1.0, surv * np.exp(_Z95 * se)), 0.0)
    return KMCurve(stratum=str(label), times=distinct, survival=surv,
                   at_risk=np.asarray(at_risk), lower=lower, upper=upper)


def kaplan_meier(times, deltas, strata=None):
    """Product-limit curves per stratum with Greenwood log-scale 95% bands.

    Ties are aggregated at identical times; empty strata are skipped with a
    warning. Returns a list of KMCurve ordered by stratum label.
    """
    times = np.asarray(times, dtype=float)
    deltas = np.asarray(deltas)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    if strata is None:
        strata = np.zeros(times.shape[0], dtype=int)
    strata = np.asarray(strata)
    curves = []
    for label in np.unique(strata):
        mask = strata == label
        if not np.any(mask):
            warnings.warn(f"stratum {label!r} has no units; skipped")
            continue
        curves.append(_km_single(times[mask], deltas[mask], label))
    return curves


def km_rows(curves):
    """Rows for the KM CSV layout (time, survival, lower, upper, stratum)."""
    rows = [("time", "survival", "lower", "upper", "stratum")]
    for curve in curves:
        for k in range(curve.times.shape[0]):
            rows.append((repr(float(curve.times[k])), repr(float(curve.survival[k])),
                         repr(float(curve.lower[k])), repr(float(curve.upper[k])),
                         curve.stratum))
    return rows


class TestUndefinedError(ValueError):
    """Log-rank test is undefined (no events, or fewer than two strata)."""

    __test__ = False  # starts with "Test" but is not a pytest case


def logrank_test(times, deltas, strata):
    """K-sample log-rank test; returns (chi-square, df, p-value).

    Uses the full hypergeometric covariance of the observed-minus-expected
    event counts on the first K-1 strata; df = K-1.
    """
    times = np.asarray(times, dtype=float)
    deltas = np.asarray(deltas)
    strata = np.asarray(strata)
    labels = np.unique(strata)
    k = labels.shape[0]
    if k < 2:
        raise TestUndefinedError("log-rank test needs at least two strata")
    if not np.any(deltas == 1):
        raise TestUndefinedError("log-rank test needs at least one event")

    group = np.searchsorted(labels, strata)
    event_times = np.unique(times[deltas == 1])
    observed = np.zeros(k)
    expected = np.zeros(k)
    cov = np.zeros((k, k))
    for t in event_times:
        at_risk = times >= t
        n_risk = float(np.sum(at_risk))
        n_g = np.bincount(group[at_risk], minlength=k).astype(float)
        dying = (times == t) & (deltas == 1)
        d = float(np.sum(dying))
        d_g = np.bincount(group[dying], minlength=k).astype(float)
        observed += d_g
        expected += d * n_g / n_risk
        if n_risk > 1:
            # multivariate hypergeometric covariance of d_g given margins
            p = n_g / n_risk
            scale = d * (n_risk - d) / (n_risk - 1.0)
            cov += scale * (np.diag(p) - np.outer(p, p))
    diff = (observed - expected)[: k - 1]
    vmat = cov[: k - 1, : k - 1]
    statistic = float(diff @ np.linalg.pinv(vmat) @ diff)
    df = k - 1
    p_value = float(stats.chi2.sf(statistic, df))
    return statistic, df, p_value


# ---------------------------------------------------------------------------
# marginal likelihood by stepping stone


@dataclass(frozen=True)
class EvidenceResult:
    model: str
    logml: float
    contributions: tuple
    temperatures: tuple
    rung_rhat: tuple
    reliable: bool

    @property
    def n_rungs(self):
        return len(self.contributions)


def temperature_ladder(k_rungs: int, power: float = 5.0):
    """t_k = (k/K)^power, k = 0..K; dense near the prior."""
    if k_rungs < 8:
        raise ValueError("need at least 8 rungs")
    return (np.arange(k_rungs + 1) / k_rungs) ** power


def _loglik_rhat(loglik, n_chains):
    chains = _split_chains(loglik.reshape(n_chains, -1)[:, :, None])[:, :, 0]
    if np.all(chains == chains.flat[0]):
        return 1.0
    return _rhat_from_chains(_rank_normalize(chains))


def stepping_stone_core(make_target, loglik_u, init, config: HMCConfig,
                        k_rungs: int = 32, power: float = 5.0,
                        sample_prior=None):
    """Generic stepping-stone estimator.

    make_target(t) returns the tempered target u -> (t*loglik + logprior,
    gradient); loglik_u evaluates the untempered log likelihood of one draw.
    Rungs are sampled hottest-first, so every warm start comes from a
    higher-temperature chain; running the other way lets a near-prior rung
    hand the next rung a far-tail state it cannot escape once the tempered
    likelihood barrier switches on. When sample_prior(rng, n) is given, the
    zero-temperature rung uses iid prior draws instead of HMC: with heavy
    prior tails a chain can spend a whole rung where the likelihood
    underflows, and no barrier confines it at t=0. Returns (logml,
    contributions, temperatures, rung_rhat).
    """
    temps = temperature_ladder(k_rungs, power)
    rung_seeds = np.random.SeedSequence(config.seed).spawn(k_rungs)
    u = np.asarray(init, dtype=float)
    contributions = [0.0] * k_rungs
    rung_rhat = [0.0] * k_rungs
    for k in reversed(range(k_rungs)):
        seed = int(rung_seeds[k].generate_state(1, dtype=np.uint64)[0])
        if k == 0 and temps[0] == 0.0 and sample_prior is not None:
            rows = sample_prior(np.random.default_rng(seed),
                                config.n_chains * config.n_draws)
        else:
            rung_config = dataclasses.replace(config, seed=seed)
            draws = run_hmc(make_target(temps[k]), u, rung_config)
            u = draws.unconstrained[-1]
            rows = draws.unconstrained
        loglik = np.asarray([loglik_u(row) for row in rows])
        width = temps[k + 1] - temps[k]
        contributions[k] = float(logsumexp(width * loglik) - math.log(loglik.shape[0]))
        rung_rhat[k] = float(_loglik_rhat(loglik, config.n_chains))
    logml = float(np.sum(contributions))
    return logml, tuple(contributions), tuple(temps), tuple(rung_rhat)


RUNG_RHAT_LIMIT = 1.2


def log_marginal_stepping_stone(model: ModelStructure, data, locmap, priors,
                                family, config: HMCConfig | None = None,
                                k_rungs: int = 32) -> EvidenceResult:
    """Log marginal likelihood of one nested model structure.

    A rung whose log-likelihood trace has split R-hat above 1.2 marks the
    estimate unreliable (reliable=False); the value is still returned.
    """
    if config is None:
        config = HMCConfig(n_warmup=500, n_draws=500, n_chains=2)
    evaluator = PosteriorEvaluator(data, locmap, priors, family=family, structure=model)
    logml, contributions, temps, rung_rhat = stepping_stone_core(
        evaluator.tempered_target, evaluator.loglik_u, evaluator.initial_point(),
        config, k_rungs=k_rungs, sample_prior=evaluator.sample_prior_u,
    )
    reliable = all(np.isfinite(r) and r <= RUNG_RHAT_LIMIT for r in rung_rhat)
    return EvidenceResult(model=model.value, logml=logml, contributions=contributions,
                          temperatures=tuple(float(t) for t in temps),
                          rung_rhat=rung_rhat, reliable=reliable)


def bayes_factor(logml_a: float, logml_b: float) -> float:
    """exp(logml_a - logml_b); report alongside the log difference."""
    if not (np.isfinite(logml_a) and np.isfinite(logml_b)):
        raise ValueError("log marginal likelihoods must be finite")
    return float(np.exp(logml_a - logml_b))


# ---------------------------------------------------------------------------
# kernel profile export


def correlation_profile(params: KernelParams, grid: GridSpec):
    """Correlation over integer distance offsets, for heatmap plotting.

    Euclidean-grid kernels span offsets 0..n-1 per axis; torus kernels span
    the distinct circular distances 0..floor(n/2).
    """
    from .kernels import Topology, powered_exponential

    if params.topology is Topology.TORUS:
        max_r = grid.n_r // 2
        max_c = grid.n_c // 2
    else:
        max_r = grid.n_r - 1
        max_c = grid.n_c - 1
    d_r, d_c = np.meshgrid(np.arange(max_r + 1), np.arange(max_c + 1), indexing="ij")
    rho = powered_exponential(d_r.astype(float), d_c.astype(float),
                              params.nu_r, params.nu_c, params.kappa)
    rows = [("distance_r", "distance_c", "correlation")]
    for i in range(max_r + 1):
        for j in range(max_c + 1):
            rows.append((str(i), str(j), repr(float(rho[i, j]))))
    return rows
