"""Powered-exponential correlation kernels on grid and torus topologies.

Correlation between locations s, t is exp[-(d_r/nu_r)^kappa - (d_c/nu_c)^kappa]
with per-coordinate distances d_r, d_c. On the Euclidean grid the distances
are absolute differences of physical coordinates and kappa may lie in (0, 2];
on the torus they are circular distances of logical coordinates and kappa is
restricted to (0, 1], which is exactly the range where the kernel stays
positive definite on circles (and hence, by separability, on tori).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from .topology import GridSpec, LocationMap, build_location_map


class Topology(Enum):
    EUCLIDEAN_GRID = "euclidean"
    TORUS = "torus"


class KernelValidityError(ValueError):
    """Kernel parameters outside the validity region of their topology."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Matrix could not be factorized even at the maximum jitter."""


class ConsistencyError(RuntimeError):
    """Internal ordering assumption violated."""


KAPPA_MAX = {Topology.EUCLIDEAN_GRID: 2.0, Topology.TORUS: 1.0}

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class KernelParams:
    """Length-scales, shape and marginal variance of one kernel."""

    nu_r: float
    nu_c: float
    kappa: float
    variance: float
    topology: Topology

    def __post_init__(self):
        if not self.nu_r > 0 or not self.nu_c > 0:
            raise KernelValidityError(
                f"length-scales must be positive, got nu_r={self.nu_r}, nu_c={self.nu_c}"
            )
        if not self.variance > 0:
            raise KernelValidityError(f"variance must be positive, got {self.variance}")
        kmax = KAPPA_MAX[self.topology]
        if not 0.0 < self.kappa <= kmax:
            raise KernelValidityError(
                f"kappa must lie in (0, {kmax}] for {self.topology.value} topology, "
                f"got {self.kappa}"
            )


def torus_distance(a, b, n):
    """Circular distance min(|a-b|, n-|a-b|) for 1-based coordinates."""
    a = np.asarray(a)
    b = np.asarray(b)
    if np.any((a < 1) | (a > n)) or np.any((b < 1) | (b > n)):
        raise ValueError(f"coordinates must lie in 1..{n}")
    d = np.abs(a - b)
    out = np.minimum(d, n - d)
    return out if out.ndim else out.item()


def powered_exponential(d_r, d_c, nu_r, nu_c, kappa):
    """exp[-(d_r/nu_r)^kappa - (d_c/nu_c)^kappa], elementwise."""
    d_r = np.asarray(d_r, dtype=float)
    d_c = np.asarray(d_c, dtype=float)
    return np.exp(-((d_r / nu_r) ** kappa) - (d_c / nu_c) ** kappa)


def correlation(loc_s, loc_t, params: KernelParams, grid: GridSpec | None = None):
    """Correlation between two locations given as (row, col) pairs.

    Euclidean topology uses physical coordinates and absolute differences;
    torus topology uses logical coordinates with circular distances, which
    requires the grid for the periods.
    """
    r_s, c_s = loc_s
    r_t, c_t = loc_t
    if params.topology is Topology.TORUS:
        if grid is None:
            raise ValueError("torus correlation needs the grid for its periods")
        d_r = torus_distance(r_s, r_t, grid.n_r)
        d_c = torus_distance(c_s, c_t, grid.n_c)
    else:
        d_r = abs(r_s - r_t)
        d_c = abs(c_s - c_t)
    return float(powered_exponential(d_r, d_c, params.nu_r, params.nu_c, params.kappa))


def distance_grids(locmap: LocationMap, topology: Topology):
    """Pairwise (m x m) per-coordinate distance matrices for a topology.

    Euclidean: |r_s - r_t|, |c_s - c_t| on physical coordinates.
    Torus: circular distances on logical coordinates.
    """
    if topology is Topology.TORUS:
        rows, cols = locmap.logi_row, locmap.logi_col
        d_r = np.abs(rows[:, None] - rows[None, :])
        d_c = np.abs(cols[:, None] - cols[None, :])
        d_r = np.minimum(d_r, locmap.grid.n_r - d_r)
        d_c = np.minimum(d_c, locmap.grid.n_c - d_c)
    else:
        rows, cols = locmap.phys_row, locmap.phys_col
        d_r = np.abs(rows[:, None] - rows[None, :])
        d_c = np.abs(cols[:, None] - cols[None, :])
    return d_r.astype(float), d_c.astype(float)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Dense m x m correlation matrix tagged with its generating params."""

    values: np.ndarray
    params: KernelParams

    @property
    def m(self) -> int:
        return self.values.shape[0]


def build_correlation_matrix(locmap: LocationMap, params: KernelParams) -> CorrelationMatrix:
    """Entry (s, t) = correlation(loc_s, loc_t, params) over all locations."""
    d_r, d_c = distance_grids(locmap, params.topology)
    values = powered_exponential(d_r, d_c, params.nu_r, params.nu_c, params.kappa)
    return CorrelationMatrix(values=values, params=params)


def circle_correlation(n, nu, kappa):
    """n x n correlation matrix of the powered-exponential kernel on a circle.

    No validity gating on kappa: this is also the raw construction used by
    eigenvalue sweeps that probe where positive definiteness fails.
    """
    idx = np.arange(1, n + 1)
    d = np.abs(idx[:, None] - idx[None, :])
    d = np.minimum(d, n - d).astype(float)
    return np.exp(-((d / nu) ** kappa))


def build_torus_correlation_kron(locmap: LocationMap, params: KernelParams) -> CorrelationMatrix:
    """Torus correlation via the separable construction B (x) A.

    A is the circle kernel over the n_r logical row coordinates and B over the
    n_c logical column coordinates; their Kronecker product is the correlation
    matrix in logical column-major order, which is then permuted back to the
    map's location order. Equal entrywise to build_correlation_matrix.
    """
    if params.topology is not Topology.TORUS:
        raise KernelValidityError("Kronecker construction is defined for the torus topology")
    grid = locmap.grid
    expected = build_location_map(grid)
    if not (
        np.array_equal(locmap.phys_row, expected.phys_row)
        and np.array_equal(locmap.phys_col, expected.phys_col)
        and np.array_equal(locmap.logi_row, expected.logi_row)
        and np.array_equal(locmap.logi_col, expected.logi_col)
    ):
        raise ConsistencyError("location map is not the full grid in column-major order")
    a = circle_correlation(grid.n_r, params.nu_r, params.kappa)
    b = circle_correlation(grid.n_c, params.nu_c, params.kappa)
    kron = np.kron(b, a)
    # position of each location in the logically-sorted (column-major) order
    q = (locmap.logi_col - 1) * grid.n_r + (locmap.logi_row - 1)
    values = kron[np.ix_(q, q)]
    return CorrelationMatrix(values=values, params=params)


def _check_square_symmetric(mat, tol=1e-8):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=tol):
        raise ValueError("matrix is not symmetric")
    return mat


def cholesky_with_jitter(mat):
    """Lower Cholesky factor of mat + jitter*I, escalating jitter until it works.

    Returns (L, jitter_used). The ladder covers the tiny negative eigenvalues
    that finite precision can produce for analytically-PD kernels near the
    kappa boundary with large length-scales.
    """
    mat = _check_square_symmetric(mat)
    eye = np.eye(mat.shape[0])
    for jitter in JITTER_LADDER:
        try:
            lower = linalg.cholesky(mat + jitter * eye if jitter else mat, lower=True)
            return lower, jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"Cholesky failed at maximum jitter {JITTER_LADDER[-1]:g}"
    )


def min_eigenvalue(mat):
    """Smallest eigenvalue of a symmetric matrix."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    return float(linalg.eigvalsh(mat)[0])


def min_eig_sweep(topology: Topology, grid: GridSpec, kappas, nus):
    """Min-eigenvalue sweep over (kappa, nu) with nu_r = nu_c = nu.

    Deliberately skips KernelParams validity gating so the sweep can exhibit
    the loss of positive definiteness outside the guaranteed kappa range.
    Returns a list of (kappa, nu, min_eigenvalue) tuples.
    """
    locmap = build_location_map(grid)
    d_r, d_c = distance_grids(locmap, topology)
    rows = []
    for kappa in kappas:
        for nu in nus:
            values = powered_exponential(d_r, d_c, nu, nu, kappa)
            rows.append((float(kappa), float(nu), min_eigenvalue(values)))
    return rows
