"""Proper scalar priors and named preset tables.

Every sampled parameter carries exactly one proper prior. Gamma priors use
the shape/rate parameterization (mean = shape/rate) throughout; the preset
files repeat this convention in their headers so they are self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats
from scipy.special import betaln, gammaln


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"sd must be positive, got {self.sd}")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - np.log(self.sd) - 0.5 * np.log(2.0 * np.pi)

    def dlogpdf(self, x):
        return -(np.asarray(x, dtype=float) - self.mean) / self.sd**2

    def median(self):
        return self.mean

    def mean_value(self):
        return self.mean

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size=size)

    def to_dict(self):
        return {"dist": "normal", "mean": self.mean, "sd": self.sd}


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate): density ∝ x^(shape-1) exp(-rate*x) on x > 0."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"shape and rate must be positive, got {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return (
            self.shape * np.log(self.rate)
            - gammaln(self.shape)
            + (self.shape - 1.0) * np.log(x)
            - self.rate * x
        )

    def dlogpdf(self, x):
        return (self.shape - 1.0) / np.asarray(x, dtype=float) - self.rate

    def median(self):
        return float(stats.gamma.ppf(0.5, self.shape, scale=1.0 / self.rate))

    def mean_value(self):
        return self.shape / self.rate

    def sample(self, rng, size):
        # shape < 1 can underflow to exactly 0; keep log() finite downstream
        draw = rng.gamma(self.shape, 1.0 / self.rate, size=size)
        return np.maximum(draw, np.finfo(float).tiny)

    def to_dict(self):
        return {"dist": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class BetaPrior:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"a and b must be positive, got {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a - 1.0) * np.log(x) + (self.b - 1.0) * np.log1p(-x) - betaln(self.a, self.b)

    def dlogpdf(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a - 1.0) / x - (self.b - 1.0) / (1.0 - x)

    def median(self):
        return float(stats.beta.ppf(0.5, self.a, self.b))

    def mean_value(self):
        return self.a / (self.a + self.b)

    def sample(self, rng, size):
        draw = rng.beta(self.a, self.b, size=size)
        eps = np.finfo(float).tiny
        return np.clip(draw, eps, 1.0 - 1e-16)

    def to_dict(self):
        return {"dist": "beta", "a": self.a, "b": self.b}


def _prior_from_dict(spec):
    kind = spec.get("dist")
    if kind == "normal":
        return NormalPrior(float(spec["mean"]), float(spec["sd"]))
    if kind == "gamma":
        return GammaPrior(float(spec["shape"]), float(spec["rate"]))
    if kind == "beta":
        return BetaPrior(float(spec["a"]), float(spec["b"]))
    raise ValueError(f"unknown prior distribution {kind!r}")


# scalar parameters of the full model, in draw order
SCALAR_PARAMETERS = (
    "sigma",
    "sigma2_v",
    "nu_r_v",
    "nu_c_v",
    "lambda_v",
    "sigma2_w",
    "nu_r_w",
    "nu_c_w",
    "kappa_w",
)


@dataclass(frozen=True)
class PriorSpec:
    """Mapping from parameter name to its prior; 'beta' is shared by all
    fixed-effect coefficients."""

    entries: dict

    def __getitem__(self, name):
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"no prior declared for parameter {name!r}") from None

    def __contains__(self, name):
        return name in self.entries

    def require(self, names):
        missing = [n for n in names if n not in self.entries]
        if missing:
            raise KeyError(f"priors missing for parameters: {missing}")

    def to_dict(self):
        return {name: prior.to_dict() for name, prior in self.entries.items()}

    @classmethod
    def from_dict(cls, table):
        return cls(entries={name: _prior_from_dict(spec) for name, spec in table.items()})


PRESET_NAMES = ("simulation", "analysis")


def load_preset(name_or_path) -> PriorSpec:
    """Load a bundled preset by name or any prior table from a JSON file."""
    name = str(name_or_path)
    if name in PRESET_NAMES:
        text = resources.files("spataft").joinpath(f"presets/{name}.json").read_text()
    else:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    payload = json.loads(text)
    return PriorSpec.from_dict(payload["priors"])


def preset_payload(name) -> dict:
    """Full preset file contents (header plus prior table)."""
    text = resources.files("spataft").joinpath(f"presets/{name}.json").read_text()
    return json.loads(text)
