"""AFT log posterior with paired spatial random effects.

Log lifetime is modelled as y_i = x_i' beta + v_{j(i)} + w_{j(i)} + sigma*eps_i
with right censoring. v ~ N(0, sigma2_v * R_v) on the Euclidean-grid kernel
(shape kappa_v constrained to (1, 2) through lambda_v) and w ~ N(0, sigma2_w *
R_w) on the torus kernel (kappa_w in (0, 1]). Nested structures: M0 drops both
random-effect blocks, M1 keeps only v, M2 keeps both.

Sampling coordinates are unconstrained and non-centered: whitened effects
vt, wt ~ N(0, I) with v = sqrt(sigma2_v) * L_v @ vt, log transforms for the
positive scalars, and a logit transform for kappa_w; all Jacobians are exact,
and the gradient is analytic (Cholesky derivatives done in reverse mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from . import families
from .families import Family
from .kernels import (
    KernelParams,
    NotPositiveDefiniteError,
    Topology,
    cholesky_with_jitter,
    distance_grids,
    powered_exponential,
)
from .priors import PriorSpec
from .topology import LocationMap

_LOG_2PI = np.log(2.0 * np.pi)


class ModelStructure(Enum):
    M0 = "m0"  # fixed effects only
    M1 = "m1"  # + Euclidean-grid effects v
    M2 = "m2"  # + torus effects w

    @classmethod
    def from_name(cls, name):
        key = str(name).strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown model structure {name!r}")

    @property
    def has_v(self):
        return self is not ModelStructure.M0

    @property
    def has_w(self):
        return self is ModelStructure.M2


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Per-unit event time, event indicator, covariates, location index.

    X carries a leading intercept column of ones; loc_index is 0-based into
    the LocationMap's column-major location list.
    """

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    loc_index: np.ndarray
    covariate_names: tuple
    unit_ids: tuple | None = None

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        event = np.asarray(self.event)
        X = np.asarray(self.X, dtype=float)
        loc = np.asarray(self.loc_index, dtype=np.int64)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event.astype(np.int8))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "loc_index", loc)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        n = time.shape[0]
        if not (event.shape[0] == n and X.shape[0] == n and loc.shape[0] == n):
            raise ValueError("time, event, X and loc_index must have equal length")
        if n == 0:
            raise ValueError("dataset must contain at least one unit")
        if np.any(~np.isfinite(time)) or np.any(time <= 0):
            raise ValueError("event times must be positive and finite")
        if not np.all(np.isin(event, (0, 1))):
            raise ValueError("event indicators must be 0 or 1")
        if X.ndim != 2 or X.shape[1] != len(self.covariate_names):
            raise ValueError("X must be n x (p+1) matching covariate_names")
        if not np.allclose(X[:, 0], 1.0):
            raise ValueError("X must carry a leading intercept column of ones")
        if np.any(loc < 0):
            raise ValueError("location indices must be nonnegative (0-based)")

    @property
    def n(self):
        return self.time.shape[0]

    @property
    def p(self):
        return self.X.shape[1] - 1

    @property
    def censoring_rate(self):
        return float(np.mean(self.event == 0))


def kappa_from_lambda(lambda_v):
    """kappa_v = 2 / (1 + exp(-lambda_v)), mapping (0, inf) onto (1, 2)."""
    lam = np.asarray(lambda_v, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("lambda_v must be positive")
    out = 2.0 / (1.0 + np.exp(-lam))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ParameterState:
    """Constrained model parameters; v/w blocks may be absent (nested models)."""

    beta: np.ndarray
    sigma: float
    v: np.ndarray | None = None
    sigma2_v: float | None = None
    nu_r_v: float | None = None
    nu_c_v: float | None = None
    lambda_v: float | None = None
    w: np.ndarray | None = None
    sigma2_w: float | None = None
    nu_r_w: float | None = None
    nu_c_w: float | None = None
    kappa_w: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        v_fields = (self.sigma2_v, self.nu_r_v, self.nu_c_v, self.lambda_v)
        w_fields = (self.sigma2_w, self.nu_r_w, self.nu_c_w, self.kappa_w)
        if any(f is not None for f in v_fields) and any(f is None for f in v_fields):
            raise ValueError("incomplete v-block hyperparameters")
        if any(f is not None for f in w_fields) and any(f is None for f in w_fields):
            raise ValueError("incomplete w-block hyperparameters")
        if self.v is not None:
            object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.w is not None:
            object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    @property
    def kappa_v(self):
        if self.lambda_v is None:
            return None
        return kappa_from_lambda(self.lambda_v)

    @property
    def structure(self):
        if self.sigma2_w is not None:
            return ModelStructure.M2
        if self.sigma2_v is not None:
            return ModelStructure.M1
        return ModelStructure.M0


def linear_predictor(state: ParameterState, data: SurvivalDataset):
    """mu_i = x_i' beta + v_{j(i)} + w_{j(i)} (blocks included when present)."""
    if data.X.shape[1] != state.beta.shape[0]:
        raise ValueError(
            f"beta has length {state.beta.shape[0]} but X has {data.X.shape[1]} columns"
        )
    mu = data.X @ state.beta
    if state.v is not None:
        mu = mu + np.asarray(state.v)[data.loc_index]
    if state.w is not None:
        mu = mu + np.asarray(state.w)[data.loc_index]
    return mu


def unit_loglik(t, delta, mu, sigma, family: Family):
    """Censored log likelihood of one unit (vectorized over its arguments).

    delta=1: log[1/(sigma*t)] + log f((log t - mu)/sigma)
    delta=0: log S((log t - mu)/sigma), evaluated in log space.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    delta = np.asarray(delta)
    if not np.all(np.isin(delta, (0, 1))):
        raise ValueError("delta must be 0 or 1")
    z = (np.log(t) - np.asarray(mu, dtype=float)) / sigma
    event_part = -np.log(sigma) - np.log(t) + families.logpdf(z, family)
    censor_part = families.logsf(z, family)
    out = np.where(delta == 1, event_part, censor_part)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# unconstrained parameter layout


def _scalar_names(structure: ModelStructure):
    names = ["sigma"]
    if structure.has_v:
        names += ["sigma2_v", "nu_r_v", "nu_c_v", "lambda_v"]
    if structure.has_w:
        names += ["sigma2_w", "nu_r_w", "nu_c_w", "kappa_w"]
    return names


class ParameterLayout:
    """Slices of the unconstrained vector: beta, whitened v, whitened w, scalars."""

    def __init__(self, n_coef, m, structure: ModelStructure):
        self.structure = structure
        self.n_coef = n_coef
        self.m = m
        offset = n_coef
        self.beta = slice(0, n_coef)
        self.v_white = None
        self.w_white = None
        if structure.has_v:
            self.v_white = slice(offset, offset + m)
            offset += m
        if structure.has_w:
            self.w_white = slice(offset, offset + m)
            offset += m
        self.scalar_index = {}
        for name in _scalar_names(structure):
            self.scalar_index[name] = offset
            offset += 1
        self.dim = offset


class _KernelBlock:
    """Precomputed distance grids plus per-evaluation kernel work for one block."""

    def __init__(self, locmap, topology):
        d_r, d_c = distance_grids(locmap, topology)
        self.d_r = d_r
        self.d_c = d_c
        self.pos_r = d_r > 0
        self.pos_c = d_c > 0
        self.log_d_r = np.where(self.pos_r, np.log(np.where(self.pos_r, d_r, 1.0)), 0.0)
        self.log_d_c = np.where(self.pos_c, np.log(np.where(self.pos_c, d_c, 1.0)), 0.0)

    def factor(self, nu_r, nu_c, kappa):
        """(R, S_r, S_c, L, jitter) with R = exp(-S_r - S_c), L L' = R + jitter I."""
        s_r = (self.d_r / nu_r) ** kappa
        s_c = (self.d_c / nu_c) ** kappa
        corr = np.exp(-(s_r + s_c))
        lower, jitter = cholesky_with_jitter(corr)
        return corr, s_r, s_c, lower, jitter


def _phi_lower_half_diag(mat):
    out = np.tril(mat)
    idx = np.diag_indices_from(out)
    out[idx] *= 0.5
    return out


def _chol_reverse(lower, lbar):
    """Gradient wrt the symmetric matrix given the gradient wrt its Cholesky factor."""
    p = _phi_lower_half_diag(lower.T @ lbar)
    u = solve_triangular(lower, p, lower=True, trans="T")
    return solve_triangular(lower, u.T, lower=True, trans="T").T


class PosteriorEvaluator:
    """Log posterior (and gradient) over unconstrained coordinates.

    The evaluator is a pure function of its inputs and is safe to call from
    multiple chains concurrently. Numerical failure anywhere (overflow,
    Cholesky breakdown at maximum jitter) yields -inf, which the sampler
    treats as a rejected proposal. The likelihood and prior parts are exposed
    separately so power posteriors can temper only the likelihood.
    """

    def __init__(self, data: SurvivalDataset, locmap: LocationMap, priors: PriorSpec,
                 family: Family = Family.NOR, structure: ModelStructure = ModelStructure.M2):
        if np.any(data.loc_index >= locmap.m):
            raise ValueError("dataset location indices exceed the grid size")
        self.data = data
        self.locmap = locmap
        self.priors = priors
        self.family = family
        self.structure = structure
        self.layout = ParameterLayout(data.X.shape[1], locmap.m, structure)
        priors.require(["beta"] + _scalar_names(structure))

        self._X = data.X
        self._logt = np.log(data.time)
        self._ev = data.event == 1
        self._cen = ~self._ev
        self._J = data.loc_index
        self._n_events = int(np.sum(self._ev))
        self._sum_logt_events = float(np.sum(self._logt[self._ev]))
        self._blocks = {}
        if structure.has_v:
            self._blocks["v"] = _KernelBlock(locmap, Topology.EUCLIDEAN_GRID)
        if structure.has_w:
            self._blocks["w"] = _KernelBlock(locmap, Topology.TORUS)

    @property
    def dim(self):
        return self.layout.dim

    # -- transforms ---------------------------------------------------------

    def initial_point(self):
        """beta and whitened effects at zero, scalars at prior medians.

        sigma starts at its prior mean instead: the diffuse Gamma(0.1, 0.1)
        default has median ~6e-3, which sends z = log(t)/sigma past 1e3 and
        underflows the SEV likelihood to -inf before sampling can begin.
        """
        u = np.zeros(self.dim)
        for name, idx in self.layout.scalar_index.items():
            if name == "sigma":
                u[idx] = np.log(self.priors[name].mean_value())
            elif name == "kappa_w":
                med = self.priors[name].median()
                u[idx] = np.log(med) - np.log1p(-med)
            else:
                u[idx] = np.log(self.priors[name].median())
        return u

    def sample_prior_u(self, rng, n):
        """(n, dim) iid draws from the prior, on the unconstrained scale.

        The prior factorizes over coordinates here: coefficients and whitened
        effects are normal, scalars transform componentwise, so exact draws
        are available without MCMC (the zero-temperature stepping-stone rung
        uses this instead of a chain).
        """
        lay = self.layout
        u = np.empty((n, self.dim))
        u[:, lay.beta] = self.priors["beta"].sample(rng, (n, lay.n_coef))
        for block in (lay.v_white, lay.w_white):
            if block is not None:
                u[:, block] = rng.standard_normal((n, lay.m))
        for name, idx in lay.scalar_index.items():
            value = self.priors[name].sample(rng, n)
            if name == "kappa_w":
                u[:, idx] = np.log(value) - np.log1p(-value)
            else:
                u[:, idx] = np.log(value)
        return u

    def _constrained_scalars(self, u):
        out = {}
        for name, idx in self.layout.scalar_index.items():
            if name == "kappa_w":
                out[name] = 1.0 / (1.0 + np.exp(-u[idx]))
            else:
                out[name] = np.exp(u[idx])
        return out

    def labels(self):
        lay = self.layout
        names = [f"beta_{k}" for k in range(lay.n_coef)]
        names.append("sigma")
        if self.structure.has_v:
            names += ["sigma2_v", "nu_r_v", "nu_c_v", "lambda_v", "kappa_v"]
        if self.structure.has_w:
            names += ["sigma2_w", "nu_r_w", "nu_c_w", "kappa_w"]
        if self.structure.has_v:
            names += [f"v_{j + 1}" for j in range(lay.m)]
        if self.structure.has_w:
            names += [f"w_{j + 1}" for j in range(lay.m)]
        return names

    def constrain(self, u):
        """Named constrained values (including realized v, w and derived kappa_v)."""
        u = np.asarray(u, dtype=float)
        lay = self.layout
        sc = self._constrained_scalars(u)
        out = {"beta": u[lay.beta].copy()}
        out.update(sc)
        if self.structure.has_v:
            out["kappa_v"] = kappa_from_lambda(sc["lambda_v"])
            block = self._blocks["v"]
            _, _, _, lower, _ = block.factor(sc["nu_r_v"], sc["nu_c_v"], out["kappa_v"])
            out["v"] = np.sqrt(sc["sigma2_v"]) * (lower @ u[lay.v_white])
        if self.structure.has_w:
            block = self._blocks["w"]
            _, _, _, lower, _ = block.factor(sc["nu_r_w"], sc["nu_c_w"], sc["kappa_w"])
            out["w"] = np.sqrt(sc["sigma2_w"]) * (lower @ u[lay.w_white])
        return out

    def constrain_row(self, u):
        """Constrained draw row matching labels()."""
        vals = self.constrain(u)
        row = list(vals["beta"])
        row.append(vals["sigma"])
        if self.structure.has_v:
            row += [vals["sigma2_v"], vals["nu_r_v"], vals["nu_c_v"],
                    vals["lambda_v"], vals["kappa_v"]]
        if self.structure.has_w:
            row += [vals["sigma2_w"], vals["nu_r_w"], vals["nu_c_w"], vals["kappa_w"]]
        if self.structure.has_v:
            row += list(vals["v"])
        if self.structure.has_w:
            row += list(vals["w"])
        return np.asarray(row, dtype=float)

    def state_from_unconstrained(self, u) -> ParameterState:
        vals = self.constrain(u)
        return ParameterState(
            beta=vals["beta"],
            sigma=vals["sigma"],
            v=vals.get("v"),
            sigma2_v=vals.get("sigma2_v"),
            nu_r_v=vals.get("nu_r_v"),
            nu_c_v=vals.get("nu_c_v"),
            lambda_v=vals.get("lambda_v"),
            w=vals.get("w"),
            sigma2_w=vals.get("sigma2_w"),
            nu_r_w=vals.get("nu_r_w"),
            nu_c_w=vals.get("nu_c_w"),
            kappa_w=vals.get("kappa_w"),
        )

    def unconstrain(self, state: ParameterState):
        """Whiten the random effects and transform scalars; inverse of constrain."""
        if state.structure is not self.structure:
            raise ValueError(f"state has structure {state.structure}, evaluator {self.structure}")
        u = np.zeros(self.dim)
        lay = self.layout
        u[lay.beta] = state.beta
        for name, idx in lay.scalar_index.items():
            x = getattr(state, name)
            if name == "kappa_w":
                u[idx] = np.log(x) - np.log1p(-x)
            else:
                u[idx] = np.log(x)
        if self.structure.has_v:
            block = self._blocks["v"]
            _, _, _, lower, _ = block.factor(state.nu_r_v, state.nu_c_v, state.kappa_v)
            u[lay.v_white] = solve_triangular(lower, state.v, lower=True) / np.sqrt(state.sigma2_v)
        if self.structure.has_w:
            block = self._blocks["w"]
            _, _, _, lower, _ = block.factor(state.nu_r_w, state.nu_c_w, state.kappa_w)
            u[lay.w_white] = solve_triangular(lower, state.w, lower=True) / np.sqrt(state.sigma2_w)
        return u

    # -- evaluation ---------------------------------------------------------

    def _compute(self, u, need_grad):
        """Returns (loglik, logprior, grad_lik, grad_prior); -inf parts on failure."""
        u = np.asarray(u, dtype=float)
        fail = (-np.inf, -np.inf, None, None)
        if not np.all(np.isfinite(u)):
            return fail
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            try:
                return self._compute_inner(u, need_grad)
            except (NotPositiveDefiniteError, ValueError, FloatingPointError):
                return fail

    def _compute_inner(self, u, need_grad):
        lay = self.layout
        fail = (-np.inf, -np.inf, None, None)
        sc = self._constrained_scalars(u)
        if not all(np.isfinite(x) and x > 0 for x in sc.values()):
            return fail
        sigma = sc["sigma"]
        beta = u[lay.beta]

        mu = self._X @ beta
        blocks = {}
        for name in self._blocks:
            whitened = u[lay.v_white] if name == "v" else u[lay.w_white]
            if name == "v":
                nu_r, nu_c = sc["nu_r_v"], sc["nu_c_v"]
                kappa = float(kappa_from_lambda(sc["lambda_v"]))
                s2 = sc["sigma2_v"]
            else:
                nu_r, nu_c = sc["nu_r_w"], sc["nu_c_w"]
                kappa = sc["kappa_w"]
                s2 = sc["sigma2_w"]
            corr, s_r, s_c, lower, _ = self._blocks[name].factor(nu_r, nu_c, kappa)
            scale = np.sqrt(s2)
            effect = scale * (lower @ whitened)
            mu = mu + effect[self._J]
            blocks[name] = (whitened, corr, s_r, s_c, lower, scale, effect, kappa)

        z = (self._logt - mu) / sigma
        loglik = (
            -self._n_events * np.log(sigma)
            - self._sum_logt_events
            + float(np.sum(families.logpdf(z[self._ev], self.family)))
            + float(np.sum(families.logsf(z[self._cen], self.family)))
        )

        logprior = float(np.sum(self.priors["beta"].logpdf(beta)))
        for name in self._blocks:
            whitened = blocks[name][0]
            logprior += -0.5 * float(whitened @ whitened) - 0.5 * lay.m * _LOG_2PI
        for name, idx in lay.scalar_index.items():
            x = sc[name]
            if name == "kappa_w":
                logprior += float(self.priors[name].logpdf(x)) + np.log(x) + np.log1p(-x)
            else:
                logprior += float(self.priors[name].logpdf(x)) + np.log(x)

        if not need_grad:
            if not (np.isfinite(loglik) and np.isfinite(logprior)):
                return fail
            return loglik, logprior, None, None

        grad_lik = np.zeros(lay.dim)
        grad_prior = np.zeros(lay.dim)

        score = np.empty(self.data.n)
        score[self._ev] = families.dlogpdf_dz(z[self._ev], self.family)
        score[self._cen] = families.dlogsf_dz(z[self._cen], self.family)
        g_mu = -score / sigma

        grad_lik[lay.beta] = self._X.T @ g_mu
        grad_lik[lay.scalar_index["sigma"]] = -self._n_events - float(score @ z)

        for name in self._blocks:
            whitened, corr, s_r, s_c, lower, scale, effect, kappa = blocks[name]
            sl = lay.v_white if name == "v" else lay.w_white
            g_loc = np.bincount(self._J, weights=g_mu, minlength=lay.m)
            grad_lik[sl] = scale * (lower.T @ g_loc)
            block = self._blocks[name]
            if name == "v":
                i_s2, i_nur, i_nuc = (lay.scalar_index[k] for k in ("sigma2_v", "nu_r_v", "nu_c_v"))
            else:
                i_s2, i_nur, i_nuc = (lay.scalar_index[k] for k in ("sigma2_w", "nu_r_w", "nu_c_w"))
            # d loglik / d log sigma2 = 0.5 * G'v  (non-centered chain rule)
            grad_lik[i_s2] = 0.5 * float(g_loc @ effect)
            # reverse-mode through v = scale * L @ vt and L = chol(R)
            lbar = np.tril(np.outer(scale * g_loc, whitened))
            rbar = _chol_reverse(lower, lbar)
            grad_lik[i_nur] = kappa * float(np.sum(rbar * corr * s_r))
            grad_lik[i_nuc] = kappa * float(np.sum(rbar * corr * s_c))
            # d/dkappa (d/nu)^kappa = S * log(d/nu); S = 0 kills the d = 0 entries
            nu_r = sc["nu_r_v" if name == "v" else "nu_r_w"]
            nu_c = sc["nu_c_v" if name == "v" else "nu_c_w"]
            dcorr_dkappa = -corr * (
                s_r * (block.log_d_r - np.log(nu_r)) + s_c * (block.log_d_c - np.log(nu_c))
            )
            g_kappa = float(np.sum(rbar * dcorr_dkappa))
            if name == "v":
                lam = sc["lambda_v"]
                dkap_dlam = kappa * (2.0 - kappa) / 2.0
                grad_lik[lay.scalar_index["lambda_v"]] = g_kappa * dkap_dlam * lam
            else:
                kw = sc["kappa_w"]
                grad_lik[lay.scalar_index["kappa_w"]] = g_kappa * kw * (1.0 - kw)
            grad_prior[sl] = -whitened

        grad_prior[lay.beta] = self.priors["beta"].dlogpdf(u[lay.beta])
        for name, idx in lay.scalar_index.items():
            x = sc[name]
            pr = self.priors[name]
            if name == "kappa_w":
                grad_prior[idx] = float(pr.dlogpdf(x)) * x * (1.0 - x) + 1.0 - 2.0 * x
            else:
                grad_prior[idx] = float(pr.dlogpdf(x)) * x + 1.0

        if not (np.isfinite(loglik) and np.isfinite(logprior)
                and np.all(np.isfinite(grad_lik)) and np.all(np.isfinite(grad_prior))):
            return fail
        return loglik, logprior, grad_lik, grad_prior

    def log_posterior_u(self, u):
        loglik, logprior, _, _ = self._compute(u, need_grad=False)
        return loglik + logprior

    def loglik_u(self, u):
        loglik, _, _, _ = self._compute(u, need_grad=False)
        return loglik

    def parts(self, u):
        loglik, logprior, _, _ = self._compute(u, need_grad=False)
        return loglik, logprior

    def value_and_grad(self, u):
        loglik, logprior, grad_lik, grad_prior = self._compute(u, need_grad=True)
        if grad_lik is None:
            return -np.inf, np.zeros(self.dim)
        return loglik + logprior, grad_lik + grad_prior

    def tempered_target(self, temperature):
        """Power posterior target temp*loglik + logprior as (value, grad)."""

        def target(u):
            loglik, logprior, grad_lik, grad_prior = self._compute(u, need_grad=True)
            if grad_lik is None:
                return -np.inf, np.zeros(self.dim)
            return temperature * loglik + logprior, temperature * grad_lik + grad_prior

        return target


# ---------------------------------------------------------------------------
# spec-shaped wrappers over constrained states


def _evaluator_for_state(state, data, priors, locmap, family):
    return PosteriorEvaluator(data, locmap, priors, family=family, structure=state.structure)


def log_posterior(state: ParameterState, data: SurvivalDataset, priors: PriorSpec,
                  locmap: LocationMap, family: Family = Family.NOR):
    """Log posterior density of a constrained state (whitened-coordinate convention).

    The value includes the censored likelihood, standard-normal densities of
    the whitened effects (the MVN density of v combined with the whitening
    Jacobian), scalar prior densities, and the log-Jacobians of the scalar
    transforms.
    """
    # validate the kernel hyperparameters exactly as sampling would
    if state.structure.has_v:
        KernelParams(state.nu_r_v, state.nu_c_v, float(state.kappa_v), state.sigma2_v,
                     Topology.EUCLIDEAN_GRID)
    if state.structure.has_w:
        KernelParams(state.nu_r_w, state.nu_c_w, state.kappa_w, state.sigma2_w, Topology.TORUS)
    ev = _evaluator_for_state(state, data, priors, locmap, family)
    return ev.log_posterior_u(ev.unconstrain(state))


def log_posterior_gradient(state: ParameterState, data: SurvivalDataset, priors: PriorSpec,
                           locmap: LocationMap, family: Family = Family.NOR):
    """Analytic gradient with respect to the unconstrained coordinates."""
    ev = _evaluator_for_state(state, data, priors, locmap, family)
    _, grad = ev.value_and_grad(ev.unconstrain(state))
    return grad


def fit_model(data: SurvivalDataset, locmap: LocationMap, priors: PriorSpec, config,
              family: Family = Family.NOR, structure: ModelStructure = ModelStructure.M2,
              init: ParameterState | None = None, n_threads: int = 1):
    """Sample the posterior; returns PosteriorDraws in constrained coordinates."""
    from .sampler import run_hmc

    ev = PosteriorEvaluator(data, locmap, priors, family=family, structure=structure)
    u0 = ev.initial_point() if init is None else ev.unconstrain(init)
    return run_hmc(ev.value_and_grad, u0, config, transform=ev.constrain_row,
                   labels=ev.labels(), n_threads=n_threads)
