"""Cabinet-grid geometry.

Locations live on an n_r x n_c grid. Each location has physical coordinates
(row, col) and logical coordinates (row*, col*) induced by the cable circuit
that wires every other cabinet together in each grid dimension ("folded
torus"). Units are mapped to locations by plain integer indices; there are no
dense indicator matrices anywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidGridError(ValueError):
    """Grid or circuit size that does not describe a cabinet layout."""


def _check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise InvalidGridError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise InvalidGridError(f"{name} must be >= 1, got {value}")


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid with n_r rows and n_c columns (m = n_r * n_c)."""

    n_r: int
    n_c: int

    def __post_init__(self):
        _check_positive_int(self.n_r, "n_r")
        _check_positive_int(self.n_c, "n_c")

    @property
    def m(self) -> int:
        return self.n_r * self.n_c


def folded_torus_order(n):
    """Cable-circuit visiting order [1, 2, 4, 6, ..., n, n-1, n-3, ..., 3].

    The circuit runs up the even positions and folds back down the odd ones,
    so neighbouring cabinets on the circuit are at most two physical slots
    apart. The logical index of physical position r is the (1-based) slot
    where r appears in the returned sequence. Defined for even n only; odd n
    raises InvalidGridError.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise InvalidGridError(f"circuit length must be an integer, got {n!r}")
    if n < 2 or n % 2 != 0:
        raise InvalidGridError(f"folded-torus order requires even n >= 2, got {n}")
    return [1] + list(range(2, n + 1, 2)) + list(range(n - 1, 2, -2))


def circuit_order(n):
    """Visiting order of the every-other-cabinet circuit for any n >= 1.

    Even n is the folded-torus order. For odd n the same wiring closes into
    a single loop without a second fold: [1, 2, 4, ..., n-1, n, n-2, ..., 3].
    n=1 is the trivial loop.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise InvalidGridError(f"circuit length must be an integer, got {n!r}")
    if n < 1:
        raise InvalidGridError(f"circuit length must be >= 1, got {n}")
    if n == 1:
        return [1]
    if n % 2 == 0:
        return folded_torus_order(n)
    return [1] + list(range(2, n, 2)) + list(range(n, 2, -2))


def _logical_positions(n):
    """pos[r-1] = logical index of physical position r (both 1-based)."""
    order = circuit_order(n)
    pos = np.empty(n, dtype=np.int64)
    for logical, physical in enumerate(order, start=1):
        pos[physical - 1] = logical
    return pos


@dataclass(frozen=True, eq=False)
class LocationMap:
    """Physical and logical coordinates for every location of a grid.

    Locations are ordered column-major over physical coordinates: location
    index j (0-based internally) has physical row j % n_r + 1 and physical
    column j // n_r + 1. File formats use 1-based location indices.
    """

    grid: GridSpec
    phys_row: np.ndarray
    phys_col: np.ndarray
    logi_row: np.ndarray
    logi_col: np.ndarray

    @property
    def m(self) -> int:
        return self.grid.m

    def location_index(self, row, col):
        """0-based location index for physical (row, col); accepts arrays."""
        row = np.asarray(row)
        col = np.asarray(col)
        if np.any((row < 1) | (row > self.grid.n_r)):
            raise InvalidGridError(f"row out of range 1..{self.grid.n_r}")
        if np.any((col < 1) | (col > self.grid.n_c)):
            raise InvalidGridError(f"col out of range 1..{self.grid.n_c}")
        return (col - 1) * self.grid.n_r + (row - 1)

    def logical_of(self, row, col):
        """Logical (row*, col*) of a physical (row, col)."""
        j = self.location_index(row, col)
        return int(self.logi_row[j]), int(self.logi_col[j])


def build_location_map(grid: GridSpec) -> LocationMap:
    """Enumerate grid locations column-major and attach logical coordinates.

    The logical coordinate in each dimension is the position of the physical
    coordinate in that dimension's cable circuit (folded-torus order for even
    sizes, the single-loop variant for odd sizes).
    """
    rows = np.arange(1, grid.n_r + 1, dtype=np.int64)
    cols = np.arange(1, grid.n_c + 1, dtype=np.int64)
    row_pos = _logical_positions(grid.n_r)
    col_pos = _logical_positions(grid.n_c)
    phys_row = np.tile(rows, grid.n_c)
    phys_col = np.repeat(cols, grid.n_r)
    arrays = (phys_row, phys_col, row_pos[phys_row - 1], col_pos[phys_col - 1])
    for arr in arrays:
        arr.flags.writeable = False
    return LocationMap(
        grid=grid,
        phys_row=arrays[0],
        phys_col=arrays[1],
        logi_row=arrays[2],
        logi_col=arrays[3],
    )
