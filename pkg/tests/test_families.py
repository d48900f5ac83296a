import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from spataft.families import (
    Family,
    cdf,
    dlogpdf_dz,
    dlogsf_dz,
    logpdf,
    logsf,
    pdf,
    standard_cdf_pdf,
)

Z_GRID = np.linspace(-30.0, 3.0, 331)


def test_from_name_aliases():
    for alias in ("nor", "NOR", "normal", "lognormal"):
        assert Family.from_name(alias) is Family.NOR
    for alias in ("sev", "SEV", "weibull", "smallest-extreme-value"):
        assert Family.from_name(alias) is Family.SEV
    with pytest.raises(ValueError):
        Family.from_name("cauchy")


# ---------------------------------------------------------------------------
# oracle comparisons against scipy


def test_nor_matches_scipy_norm():
    z = np.linspace(-8, 8, 101)
    assert_allclose(logpdf(z, Family.NOR), stats.norm.logpdf(z), rtol=1e-13)
    assert_allclose(logsf(z, Family.NOR), stats.norm.logsf(z), rtol=1e-12)
    assert_allclose(cdf(z, Family.NOR), stats.norm.cdf(z), rtol=1e-13)


def test_sev_matches_gumbel_l_mirror():
    # smallest extreme value == distribution of -Gumbel
    z = np.linspace(-20, 2.5, 101)
    assert_allclose(logpdf(z, Family.SEV), stats.gumbel_l.logpdf(z), rtol=1e-12)
    assert_allclose(cdf(z, Family.SEV), stats.gumbel_l.cdf(z), rtol=1e-12)
    assert_allclose(logsf(z, Family.SEV), stats.gumbel_l.logsf(z), rtol=1e-12)


def test_sev_log_survival_identity_exact():
    # log S(z) = -e^z, exactly, over the whole working range
    assert np.max(np.abs(logsf(Z_GRID, Family.SEV) + np.exp(Z_GRID))) < 1e-12


def test_nor_censored_half_probability_at_zero():
    assert logsf(0.0, Family.NOR) == pytest.approx(np.log(0.5), abs=1e-14)


def test_sev_cdf_at_zero():
    # F(0) = 1 - exp(-1)
    assert cdf(0.0, Family.SEV) == pytest.approx(1.0 - np.exp(-1.0), rel=1e-14)


@pytest.mark.parametrize("family", [Family.NOR, Family.SEV])
def test_density_integrates_to_one(family):
    total, err = integrate.quad(lambda z: pdf(z, family), -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("family", [Family.NOR, Family.SEV])
def test_pdf_is_derivative_of_cdf(family):
    z = np.linspace(-5, 2.5, 41)
    h = 1e-6
    numeric = (cdf(z + h, family) - cdf(z - h, family)) / (2 * h)
    assert_allclose(pdf(z, family), numeric, rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("family", [Family.NOR, Family.SEV])
def test_score_functions_match_finite_differences(family):
    z = np.linspace(-6, 2.5, 35)
    h = 1e-6
    fd_pdf = (logpdf(z + h, family) - logpdf(z - h, family)) / (2 * h)
    fd_sf = (logsf(z + h, family) - logsf(z - h, family)) / (2 * h)
    assert_allclose(dlogpdf_dz(z, family), fd_pdf, rtol=1e-7, atol=1e-9)
    assert_allclose(dlogsf_dz(z, family), fd_sf, rtol=1e-6, atol=1e-9)


def test_standard_cdf_pdf_consistency():
    for family in Family:
        c, d = standard_cdf_pdf(0.3, family)
        assert c == pytest.approx(float(cdf(0.3, family)))
        assert d == pytest.approx(float(pdf(0.3, family)))


# ---------------------------------------------------------------------------
# tail behavior that the likelihood relies on


def test_nor_logsf_deep_tail_finite():
    # log survival must stay finite far into the right tail
    val = logsf(38.0, Family.NOR)
    assert np.isfinite(val) and val < -700


def test_sev_logsf_left_tail_is_tiny_not_zero_prob():
    assert logsf(-40.0, Family.SEV) == pytest.approx(-np.exp(-40.0))
    assert logsf(-40.0, Family.SEV) < 0.0


@given(st.floats(-30, 3), st.sampled_from([Family.NOR, Family.SEV]))
def test_logsf_monotone_decreasing(z, family):
    assert logsf(z, family) >= logsf(z + 0.5, family)


@given(st.floats(-30, 3), st.sampled_from([Family.NOR, Family.SEV]))
def test_cdf_sf_complement(z, family):
    assert cdf(z, family) + np.exp(logsf(z, family)) == pytest.approx(1.0, abs=1e-12)
