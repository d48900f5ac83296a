"""Synthetic lifetime generation and parameter-recovery evaluation.

Units are laid out on a grid with a fixed number of replicates per location
and a four-level treatment factor assigned cyclically (intercept + three
indicators). Log lifetimes follow the AFT model with both spatial effect
vectors realized once per dataset; censoring is Type I at a fixed time chosen
by bisection so the realized censoring rate lands on the target, then raised
if needed so every location keeps at least one observed failure.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .families import Family
from .kernels import KernelParams, Topology, build_correlation_matrix, cholesky_with_jitter
from .model import ModelStructure, ParameterState, SurvivalDataset, kappa_from_lambda
from .topology import GridSpec, LocationMap, build_location_map

FACTOR_NAMES = ("intercept", "level_2", "level_3", "level_4")


class SimulationError(RuntimeError):
    """Raised when the censoring target cannot be met."""


@dataclass(frozen=True)
class SimulationSettings:
    grid: GridSpec
    replicates_per_location: int
    truth: ParameterState
    target_censoring_rate: float = 0.5
    family: Family = Family.NOR
    seed: int = 0

    def __post_init__(self):
        if self.replicates_per_location < 1:
            raise ValueError("replicates_per_location must be positive")
        if not 0.0 < self.target_censoring_rate < 1.0:
            raise ValueError("target_censoring_rate must lie in (0, 1)")
        if self.truth.beta.shape[0] != len(FACTOR_NAMES):
            raise ValueError(
                f"truth.beta must have length {len(FACTOR_NAMES)} (four-level factor design)"
            )

    @property
    def n_units(self):
        return self.grid.m * self.replicates_per_location


@dataclass
class SimulationManifest:
    """Everything needed to score estimates against the truth without re-simulation."""

    seed: int
    grid: tuple
    replicates_per_location: int
    family: str
    truth: dict
    v: list | None
    w: list | None
    censor_time: float
    realized_censoring_rate: float
    n_units: int
    dataset_path: str | None = None

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, payload):
        fields = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in payload.items() if k in fields}
        kwargs["grid"] = tuple(kwargs["grid"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def truth_value(self, label):
        """Truth for a draw label (beta_k, scalar names, derived kappa_v, v_j, w_j)."""
        if label.startswith("beta_"):
            return float(self.truth["beta"][int(label.split("_")[1])])
        if label.startswith("v_"):
            return float(self.v[int(label.split("_")[1]) - 1])
        if label.startswith("w_"):
            return float(self.w[int(label.split("_")[1]) - 1])
        if label == "kappa_v":
            return float(kappa_from_lambda(self.truth["lambda_v"]))
        return float(self.truth[label])


def default_truth() -> ParameterState:
    """Hyperparameters and effects sized like the motivating reliability fits."""
    return ParameterState(
        beta=np.array([2.0, 0.65, 0.26, -0.27]),
        sigma=0.43,
        sigma2_v=0.022, nu_r_v=0.96, nu_c_v=0.96, lambda_v=0.6190392084062235,  # kappa_v = 1.3
        sigma2_w=0.012, nu_r_w=1.88, nu_c_w=0.6, kappa_w=0.94,
    )


def draw_effects(rng, locmap: LocationMap, sigma2, nu_r, nu_c, kappa,
                 topology: Topology) -> np.ndarray:
    """One realization of N(0, sigma2 * R) on the given kernel; zeros if sigma2 = 0."""
    if sigma2 == 0.0:
        return np.zeros(locmap.m)
    params = KernelParams(nu_r=nu_r, nu_c=nu_c, kappa=kappa, variance=sigma2,
                          topology=topology)
    corr = build_correlation_matrix(locmap, params)
    lower, _ = cholesky_with_jitter(corr.values)
    return np.sqrt(sigma2) * (lower @ rng.standard_normal(locmap.m))


def _design(settings: SimulationSettings):
    m = settings.grid.m
    reps = settings.replicates_per_location
    n = m * reps
    loc_index = np.repeat(np.arange(m), reps)
    level = np.arange(n) % 4
    X = np.ones((n, 4))
    for col in (1, 2, 3):
        X[:, col] = (level == col).astype(float)
    return X, loc_index


def _sample_noise(rng, n, family: Family):
    if family is Family.NOR:
        return rng.standard_normal(n)
    # smallest extreme value: log of a unit exponential
    return np.log(rng.exponential(size=n))


def _censor_threshold(fail_times, target):
    """Bisection for c with mean(T > c) ~= target (rate is a step function of c)."""
    lo, hi = 0.0, float(np.max(fail_times)) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(fail_times > mid)) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi


def generate_dataset(settings: SimulationSettings):
    """Returns (SurvivalDataset, SimulationManifest); bitwise-reproducible per seed."""
    rng = np.random.default_rng(np.random.SeedSequence(settings.seed))
    locmap = build_location_map(settings.grid)
    truth = settings.truth
    X, loc_index = _design(settings)
    n = X.shape[0]

    v = w = None
    mu = X @ truth.beta
    if truth.structure.has_v:
        v = draw_effects(rng, locmap, truth.sigma2_v, truth.nu_r_v, truth.nu_c_v,
                         float(truth.kappa_v), Topology.EUCLIDEAN_GRID)
        mu = mu + v[loc_index]
    if truth.structure.has_w:
        w = draw_effects(rng, locmap, truth.sigma2_w, truth.nu_r_w, truth.nu_c_w,
                         truth.kappa_w, Topology.TORUS)
        mu = mu + w[loc_index]

    eps = _sample_noise(rng, n, settings.family)
    fail_times = np.exp(mu + truth.sigma * eps)

    censor_time = _censor_threshold(fail_times, settings.target_censoring_rate)
    # every location must keep at least one observed failure
    earliest = np.full(settings.grid.m, np.inf)
    np.minimum.at(earliest, loc_index, fail_times)
    censor_time = max(censor_time, float(np.max(earliest)))

    event = (fail_times <= censor_time).astype(int)
    time = np.where(event == 1, fail_times, censor_time)
    realized = float(np.mean(event == 0))
    if abs(realized - settings.target_censoring_rate) > 0.05:
        raise SimulationError(
            f"realized censoring rate {realized:.3f} is more than 0.05 from the "
            f"target {settings.target_censoring_rate:.3f}"
        )

    data = SurvivalDataset(time=time, event=event, X=X, loc_index=loc_index,
                           covariate_names=FACTOR_NAMES)
    truth_dict = {"beta": [float(b) for b in truth.beta], "sigma": truth.sigma}
    for name in ("sigma2_v", "nu_r_v", "nu_c_v", "lambda_v",
                 "sigma2_w", "nu_r_w", "nu_c_w", "kappa_w"):
        value = getattr(truth, name)
        if value is not None:
            truth_dict[name] = float(value)
    manifest = SimulationManifest(
        seed=settings.seed,
        grid=(settings.grid.n_r, settings.grid.n_c),
        replicates_per_location=settings.replicates_per_location,
        family=settings.family.value,
        truth=truth_dict,
        v=None if v is None else [float(x) for x in v],
        w=None if w is None else [float(x) for x in w],
        censor_time=censor_time,
        realized_censoring_rate=realized,
        n_units=n,
    )
    return data, manifest


def compute_rmse(estimates, truth):
    """Root mean squared deviation of estimates from a scalar truth."""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        raise ValueError("estimates must be nonempty")
    return float(np.sqrt(np.mean((estimates - truth) ** 2)))


def recovery_study(settings: SimulationSettings, n_datasets, priors, config,
                   parameters=("beta_0", "beta_1", "beta_2", "beta_3", "sigma"),
                   structure: ModelStructure = ModelStructure.M2):
    """Repeatedly simulate + fit; RMSE of posterior means per parameter.

    Returns {parameter: {"estimates", "truth", "rmse"}}. Dataset seeds are
    split from settings.seed by replication index.
    """
    from .model import fit_model

    children = np.random.SeedSequence(settings.seed).spawn(n_datasets)
    locmap = build_location_map(settings.grid)
    estimates = {name: [] for name in parameters}
    manifest0 = None
    for rep, child in enumerate(children):
        rep_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        rep_settings = dataclasses.replace(settings, seed=rep_seed)
        data, manifest = generate_dataset(rep_settings)
        if manifest0 is None:
            manifest0 = manifest
        rep_config = dataclasses.replace(config, seed=rep_seed)
        draws = fit_model(data, locmap, priors, rep_config,
                          family=settings.family, structure=structure)
        for name in parameters:
            estimates[name].append(float(np.mean(draws.column(name))))
    out = {}
    for name in parameters:
        truth = manifest0.truth_value(name)
        out[name] = {
            "estimates": estimates[name],
            "truth": truth,
            "rmse": compute_rmse(estimates[name], truth),
        }
    return out


def rmse_summary_rows(results_by_setting):
    """Rows (parameter, grid, replicates, rmse) for the study-level summary CSV.

    `results_by_setting` maps (grid_label, replicates) -> recovery_study output.
    """
    rows = [("parameter", "grid", "replicates", "rmse")]
    for (grid_label, reps), results in results_by_setting.items():
        for name in results:
            rows.append((name, grid_label, str(reps), repr(results[name]["rmse"])))
    return rows
