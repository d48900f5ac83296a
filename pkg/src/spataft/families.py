"""Standard noise families on the log-lifetime scale.

NOR is the standard normal (lognormal lifetimes on the observed scale); SEV
is the smallest extreme value distribution with cdf 1 - exp(-exp(z)) (Weibull
lifetimes). Survival and density are provided in log space so that deep tails
neither underflow (log S(-40) must stay -exp(-40), not 0) nor overflow.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import log_ndtr, ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class Family(Enum):
    NOR = "NOR"
    SEV = "SEV"

    @classmethod
    def from_name(cls, name):
        """Accepts NOR/SEV or the observed-scale names lognormal/weibull."""
        key = str(name).strip().lower()
        if key in ("nor", "normal", "lognormal"):
            return cls.NOR
        if key in ("sev", "weibull", "smallest-extreme-value"):
            return cls.SEV
        raise ValueError(f"unknown family {name!r}")


def logpdf(z, family: Family):
    z = np.asarray(z, dtype=float)
    if family is Family.NOR:
        return -0.5 * z * z - _LOG_SQRT_2PI
    with np.errstate(over="ignore"):  # e^z -> inf gives the correct -inf
        return z - np.exp(z)


def logsf(z, family: Family):
    """log survival log(1 - cdf), exact in the tails."""
    z = np.asarray(z, dtype=float)
    if family is Family.NOR:
        return log_ndtr(-z)
    with np.errstate(over="ignore"):
        return -np.exp(z)


def cdf(z, family: Family):
    z = np.asarray(z, dtype=float)
    if family is Family.NOR:
        return ndtr(z)
    return -np.expm1(-np.exp(z))


def pdf(z, family: Family):
    return np.exp(logpdf(z, family))


def standard_cdf_pdf(z, family: Family):
    """(cdf, pdf) of the standard family at z, assembled from stable pieces."""
    return cdf(z, family), pdf(z, family)


def dlogpdf_dz(z, family: Family):
    z = np.asarray(z, dtype=float)
    if family is Family.NOR:
        return -z
    return 1.0 - np.exp(z)


def dlogsf_dz(z, family: Family):
    """d/dz log S(z) = -hazard, computed from log forms for stability."""
    z = np.asarray(z, dtype=float)
    if family is Family.NOR:
        return -np.exp(logpdf(z, Family.NOR) - log_ndtr(-z))
    return -np.exp(z)
