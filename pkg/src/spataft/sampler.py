"""Hamiltonian Monte Carlo with dual-averaging step-size adaptation.

Plain HMC with a uniformly jittered leapfrog step count. Warmup adapts the
step size by dual averaging toward a target acceptance rate and estimates a
diagonal mass matrix from draws in the second half of warmup; the step size
is then re-found and re-adapted under the new metric for the tail of warmup.
Chains are independent, with RNG streams split from the seed, so results are
bitwise reproducible for a fixed seed regardless of thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.special import ndtri
from scipy.stats import rankdata

DIVERGENCE_ENERGY = 1000.0

# dual-averaging constants (standard choices, exposed here rather than buried)
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75


class InitializationError(RuntimeError):
    """Log posterior is not finite at the initial point."""


class DiagnosticsUnavailableError(RuntimeError):
    """Too few draws (or chains) to compute convergence diagnostics."""


@dataclass(frozen=True)
class HMCConfig:
    n_warmup: int = 4000
    n_draws: int = 4000
    target_accept: float = 0.8
    max_leapfrog_steps: int = 32
    seed: int = 0
    n_chains: int = 1
    step_size: float | None = None  # fixed step size; disables dual averaging

    def __post_init__(self):
        if self.n_warmup < 0 or self.n_draws <= 0:
            raise ValueError("n_warmup must be >= 0 and n_draws positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_leapfrog_steps < 1:
            raise ValueError("max_leapfrog_steps must be positive")
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive when given")


@dataclass(eq=False)
class PosteriorDraws:
    """Stacked constrained draws (chain-major), labels bijective with columns."""

    draws: np.ndarray            # (n_chains * n_draws, n_params)
    labels: tuple
    n_chains: int
    n_draws: int
    divergences: tuple           # per-chain post-warmup divergence counts
    accept_rate: tuple           # per-chain mean acceptance probability
    step_size: tuple             # per-chain adapted step size
    unconstrained: np.ndarray | None = None  # (n_chains * n_draws, dim)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        self.labels = tuple(self.labels)
        if self.draws.shape != (self.n_chains * self.n_draws, len(self.labels)):
            raise ValueError("draws shape must be (n_chains*n_draws, len(labels))")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")

    def chain_array(self):
        """(n_chains, n_draws, n_params) view of the stacked draws."""
        return self.draws.reshape(self.n_chains, self.n_draws, -1)

    def column(self, name):
        return self.draws[:, self.labels.index(name)]

    @property
    def divergence_warning(self):
        return any(d > 0.5 * self.n_draws for d in self.divergences)


def leapfrog(target, q, p, grad, step_size, n_steps, inv_mass):
    """Integrate Hamilton's equations; returns (q, p, value, grad).

    `target` maps q -> (log density, gradient); kinetic energy is
    0.5 * p' diag(inv_mass) p. Returns value -inf when the trajectory left
    the support (caller rejects).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        p = p + 0.5 * step_size * grad
        value = -np.inf
        for step in range(n_steps):
            q = q + step_size * (p * inv_mass)
            if not np.all(np.isfinite(q)):
                return q, p, -np.inf, grad
            value, grad = target(q)
            if not np.isfinite(value):
                return q, p, -np.inf, grad
            if step < n_steps - 1:
                p = p + step_size * grad
        p = p + 0.5 * step_size * grad
    return q, p, value, grad


def _kinetic(p, inv_mass):
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * float(np.sum(p * p * inv_mass))


def find_reasonable_step_size(target, q, inv_mass, rng, value, grad):
    """Double/halve until one leapfrog step crosses acceptance 0.5."""
    eps = 1.0
    p = rng.standard_normal(q.shape[0]) / np.sqrt(inv_mass)
    h0 = -value + _kinetic(p, inv_mass)

    def log_accept(eps):
        _, p1, v1, _ = leapfrog(target, q, p, grad, eps, 1, inv_mass)
        if not np.isfinite(v1):
            return -np.inf
        return h0 - (-v1 + _kinetic(p1, inv_mass))

    la = log_accept(eps)
    direction = 1.0 if la > math.log(0.5) else -1.0
    for _ in range(100):
        if direction > 0 and la <= math.log(2.0):
            break
        if direction < 0 and la >= math.log(0.5):
            break
        eps *= 2.0 ** direction
        if not 1e-10 < eps < 1e7:
            break
        la = log_accept(eps)
    return min(max(eps, 1e-10), 1e7)


class _DualAveraging:
    def __init__(self, eps0, target_accept):
        self.mu = math.log(10.0 * eps0)
        self.target = target_accept
        self.log_eps = math.log(eps0)
        self.log_eps_bar = math.log(eps0)
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_prob):
        self.t += 1
        eta = 1.0 / (self.t + DA_T0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.t) / DA_GAMMA * self.h_bar
        weight = self.t ** (-DA_KAPPA)
        self.log_eps_bar = weight * self.log_eps + (1.0 - weight) * self.log_eps_bar

    @property
    def current(self):
        return math.exp(self.log_eps)

    @property
    def adapted(self):
        return math.exp(self.log_eps_bar)


def _transition(target, q, value, grad, eps, n_steps, inv_mass, rng):
    """One HMC transition. Returns (q, value, grad, accept_prob, divergent)."""
    p0 = rng.standard_normal(q.shape[0]) / np.sqrt(inv_mass)
    h0 = -value + _kinetic(p0, inv_mass)
    q1, p1, v1, g1 = leapfrog(target, q, p0, grad, eps, n_steps, inv_mass)
    if not np.isfinite(v1):
        return q, value, grad, 0.0, True
    h1 = -v1 + _kinetic(p1, inv_mass)
    delta = h1 - h0
    if not np.isfinite(delta) or delta > DIVERGENCE_ENERGY:
        return q, value, grad, 0.0, True
    accept_prob = min(1.0, math.exp(-max(delta, 0.0)))
    if rng.random() < accept_prob:
        return q1, v1, g1, accept_prob, False
    return q, value, grad, accept_prob, False


def _run_chain(target, q0, config: HMCConfig, seed_seq):
    rng = np.random.default_rng(seed_seq)
    q = np.asarray(q0, dtype=float).copy()
    dim = q.shape[0]
    value, grad = target(q)
    if not np.isfinite(value):
        raise InitializationError("log posterior is not finite at the initial point")

    inv_mass = np.ones(dim)
    warmup = config.n_warmup
    adapt_step = config.step_size is None
    if adapt_step:
        eps = find_reasonable_step_size(target, q, inv_mass, rng, value, grad)
        da = _DualAveraging(eps, config.target_accept)
    else:
        eps = config.step_size
        da = None

    # mass window: second half of warmup up to 90%, leaving a tail to
    # re-adapt the step size under the new metric
    win_lo, win_hi = int(0.5 * warmup), int(0.9 * warmup)
    adapt_mass = win_hi - win_lo >= 10
    window = []

    for it in range(warmup):
        n_steps = int(rng.integers(1, config.max_leapfrog_steps + 1))
        q, value, grad, aprob, _ = _transition(target, q, value, grad, eps, n_steps,
                                               inv_mass, rng)
        if da is not None:
            da.update(aprob)
            eps = da.current
        if adapt_mass and win_lo <= it < win_hi:
            window.append(q.copy())
        if adapt_mass and it == win_hi - 1:
            samples = np.asarray(window)
            n_win = samples.shape[0]
            var = np.var(samples, axis=0, ddof=1)
            # shrink toward unit scale as Stan does for small windows
            var = var * (n_win / (n_win + 5.0)) + 1e-3 * (5.0 / (n_win + 5.0))
            inv_mass = var
            if adapt_step:
                eps = find_reasonable_step_size(target, q, inv_mass, rng, value, grad)
                da = _DualAveraging(eps, config.target_accept)
            window = []

    if da is not None:
        eps = da.adapted

    draws = np.empty((config.n_draws, dim))
    accept_sum = 0.0
    divergences = 0
    for it in range(config.n_draws):
        n_steps = int(rng.integers(1, config.max_leapfrog_steps + 1))
        q, value, grad, aprob, div = _transition(target, q, value, grad, eps, n_steps,
                                                 inv_mass, rng)
        accept_sum += aprob
        divergences += int(div)
        draws[it] = q

    return draws, divergences, accept_sum / config.n_draws, eps


def run_hmc(target, init, config: HMCConfig, transform=None, labels=None,
            n_threads: int = 1) -> PosteriorDraws:
    """Sample `target` (u -> (log density, gradient)) from `init`.

    `transform` maps an unconstrained draw to the stored (constrained) row;
    identity when omitted. `labels` names the stored columns.
    """
    init = np.asarray(init, dtype=float)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    if config.n_chains > 1 and n_threads > 1:
        with ThreadPoolExecutor(max_workers=min(n_threads, config.n_chains)) as pool:
            results = list(pool.map(lambda s: _run_chain(target, init, config, s), seeds))
    else:
        results = [_run_chain(target, init, config, s) for s in seeds]

    unconstrained = np.concatenate([r[0] for r in results], axis=0)
    if transform is None:
        stored = unconstrained
        if labels is None:
            labels = tuple(f"p_{k}" for k in range(init.shape[0]))
    else:
        stored = np.asarray([transform(row) for row in unconstrained])
        if labels is None:
            raise ValueError("labels are required when a transform is given")
    return PosteriorDraws(
        draws=stored,
        labels=tuple(labels),
        n_chains=config.n_chains,
        n_draws=config.n_draws,
        divergences=tuple(r[1] for r in results),
        accept_rate=tuple(float(r[2]) for r in results),
        step_size=tuple(float(r[3]) for r in results),
        unconstrained=unconstrained,
    )


# ---------------------------------------------------------------------------
# convergence diagnostics


def _split_chains(chains):
    """(C, N, k) -> (2C, N//2, k), dropping one draw per chain when N is odd."""
    n_half = chains.shape[1] // 2
    first = chains[:, :n_half]
    second = chains[:, chains.shape[1] - n_half:]
    return np.concatenate([first, second], axis=0)


def _rank_normalize(chains):
    """Blom rank-normal scores pooled across chains; (C, N) -> (C, N)."""
    shape = chains.shape
    flat = chains.reshape(-1)
    ranks = rankdata(flat, method="average")
    return ndtri((ranks - 3.0 / 8.0) / (flat.size + 0.25)).reshape(shape)


def _rhat_from_chains(chains):
    """Classic split-R̂ statistic on already-split chains (C, N)."""
    n = chains.shape[1]
    chain_means = chains.mean(axis=1)
    within = float(np.mean(np.var(chains, axis=1, ddof=1)))
    between = n * float(np.var(chain_means, ddof=1))
    if within == 0.0:
        return float("nan")
    var_plus = (n - 1) / n * within + between / n
    return math.sqrt(var_plus / within)


def _autocovariance(x):
    """Biased autocovariance of one chain via FFT."""
    n = x.shape[0]
    centered = x - x.mean()
    size = next_fast_len(2 * n)
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    return acov / n


def _ess_from_chains(chains):
    """Effective sample size, Geyer pairwise truncation, on split chains (C, N)."""
    n_chain, n = chains.shape
    total = n_chain * n
    acov = np.asarray([_autocovariance(c) for c in chains])
    mean_acov = acov.mean(axis=0)
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if n_chain > 1:
        var_plus += float(np.var(chains.mean(axis=1), ddof=1))
    if var_plus == 0.0:
        return float("nan")

    rho = 1.0 - (mean_var - mean_acov) / var_plus
    # Geyer initial positive sequence: sum rho in pairs until a pair goes
    # nonpositive, enforcing monotone decrease of the pair sums
    pair_sum = rho[0] + (rho[1] if n > 1 else 0.0)
    tau = 0.0
    prev = pair_sum
    t = 0
    while t + 1 < n and pair_sum > 0.0:
        tau += min(pair_sum, prev)
        prev = min(pair_sum, prev)
        t += 2
        if t + 1 >= n:
            break
        pair_sum = rho[t] + rho[t + 1]
    tau = -1.0 + 2.0 * tau
    tau = max(tau, 1.0 / math.log10(total)) if total > 10 else max(tau, 1e-8)
    return total / tau


def diagnostics(draws: PosteriorDraws):
    """Split R̂ (rank-normalized) and effective sample size per parameter.

    Raises DiagnosticsUnavailableError when fewer than 100 post-warmup draws
    per chain are available (split halves would be too short to trust).
    """
    if draws.n_draws < 100:
        raise DiagnosticsUnavailableError(
            f"need at least 100 draws per chain, have {draws.n_draws}"
        )
    chains = _split_chains(draws.chain_array())
    rhat = {}
    ess = {}
    for k, name in enumerate(draws.labels):
        col = chains[:, :, k]
        if np.all(col == col.flat[0]):
            rhat[name] = float("nan")
            ess[name] = float("nan")
            continue
        rhat[name] = _rhat_from_chains(_rank_normalize(col))
        ess[name] = _ess_from_chains(col)
    finite_rhat = [x for x in rhat.values() if np.isfinite(x)]
    finite_ess = [x for x in ess.values() if np.isfinite(x)]
    return {
        "rhat": rhat,
        "ess": ess,
        "max_rhat": max(finite_rhat) if finite_rhat else float("nan"),
        "min_ess": min(finite_ess) if finite_ess else float("nan"),
        "divergences": list(draws.divergences),
        "accept_rate": list(draws.accept_rate),
        "step_size": list(draws.step_size),
        "divergence_warning": draws.divergence_warning,
    }
