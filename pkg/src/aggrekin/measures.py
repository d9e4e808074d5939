"""Discrete nonnegative measures, quantile functions and Wasserstein metrics.

Measures are stored as weighted atom lists (grid densities are just atoms
at cell centers carrying cell masses).  The 1D quadratic Wasserstein
distance is computed exactly by sweeping the merged breakpoints of the
two quantile staircases; the coupled two-species metric adds the
chi1*theta2/(chi2*theta1) weight on the second component.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "CoarseGridWarning",
    "DiscreteMeasure",
    "SpeciesPair",
    "ModelParams",
    "bump_mass_unit",
    "quantile",
    "wasserstein2",
    "coupled_w2",
    "weighted_center",
    "moments",
    "sample_gaussian_bumps",
    "write_measure_csv",
    "read_measure_csv",
    "write_pair_csv",
    "read_pair_csv",
]


class CoarseGridWarning(UserWarning):
    """The sampling grid under-resolves a Gaussian bump (< 8 cells per sigma)."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atoms at strictly increasing positions with nonnegative masses."""

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.positions, dtype=float))
        w = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if pos.shape != w.shape or pos.ndim != 1:
            raise ValueError("positions and masses must be 1-D arrays of equal length")
        if pos.size and np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("masses must be nonnegative")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(w)):
            raise ValueError("positions and masses must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def normalized(self) -> "DiscreteMeasure":
        tot = self.total_mass
        if tot <= 0:
            raise ValueError("cannot normalize an empty measure")
        return DiscreteMeasure(self.positions, self.masses / tot)


@dataclass(frozen=True)
class SpeciesPair:
    """The two species' measures, in a fixed order."""

    rho1: DiscreteMeasure
    rho2: DiscreteMeasure


@dataclass(frozen=True)
class ModelParams:
    """Chemosensitivities chi, coupling weights theta and tumbling rates psi.

    The psi rates only enter the kinetic solver.  Kinetic runs additionally
    require chi_a * (theta1 + theta2) < 1 for both species; that condition
    is checked by the kinetic module, not here.
    """

    chi1: float
    chi2: float
    theta1: float = 1.0
    theta2: float = 1.0
    psi1: float = 1.0
    psi2: float = 1.0

    def __post_init__(self):
        for name in ("chi1", "chi2", "theta1", "theta2", "psi1", "psi2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


def bump_mass_unit(width: float = 5000.0) -> float:
    """Total mass of a unit-amplitude Gaussian bump exp(-width * x^2)."""
    return math.sqrt(math.pi / width)


def moments(m: DiscreteMeasure) -> tuple[float, float, float]:
    """(total mass, first moment, second moment) as exact weighted sums."""
    w, x = m.masses, m.positions
    return float(np.sum(w)), float(np.sum(w * x)), float(np.sum(w * x * x))


def _check_probability(m: DiscreteMeasure) -> None:
    if m.positions.size == 0:
        raise ValueError("measure has no atoms")
    if abs(m.total_mass - 1.0) > 1e-12:
        raise ValueError(f"measure must be normalized to mass 1 (got {m.total_mass!r})")


def quantile(m: DiscreteMeasure, z):
    """Generalized inverse CDF: inf{x : m((-inf, x)) > z} for z in (0, 1).

    On a CDF plateau the strict inequality selects the atom to the right.
    Accepts a scalar or an array of probabilities.
    """
    _check_probability(m)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0.0) or np.any(z_arr >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    cum = np.cumsum(m.masses)
    idx = np.searchsorted(cum, z_arr, side="right")
    idx = np.minimum(idx, m.positions.size - 1)
    out = m.positions[idx]
    return float(out) if np.ndim(z) == 0 else out


def _staircase(m: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    m = m.normalized()
    return np.cumsum(m.masses), m.positions


def wasserstein2(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Quadratic Wasserstein distance between two atomic measures.

    Inputs are normalized internally; the integral of the squared quantile
    difference is evaluated exactly on the merged breakpoints of the two
    staircases.
    """
    if a.positions.size == 0 or b.positions.size == 0:
        raise ValueError("wasserstein2 requires nonempty measures")
    cum_a, pos_a = _staircase(a)
    cum_b, pos_b = _staircase(b)
    grid = np.concatenate(([0.0], cum_a[:-1], cum_b[:-1], [1.0]))
    grid.sort(kind="stable")
    dz = np.diff(grid)
    mid = 0.5 * (grid[:-1] + grid[1:])
    ia = np.minimum(np.searchsorted(cum_a, mid, side="right"), pos_a.size - 1)
    ib = np.minimum(np.searchsorted(cum_b, mid, side="right"), pos_b.size - 1)
    diff = pos_a[ia] - pos_b[ib]
    return float(np.sqrt(np.sum(dz * diff * diff)))


def coupled_w2(u: SpeciesPair, v: SpeciesPair, p: ModelParams) -> float:
    """Two-species product metric with weight chi1*theta2 / (chi2*theta1)."""
    d1 = wasserstein2(u.rho1, v.rho1)
    d2 = wasserstein2(u.rho2, v.rho2)
    weight = (p.chi1 * p.theta2) / (p.chi2 * p.theta1)
    return math.sqrt(d1 * d1 + weight * d2 * d2)


def weighted_center(u: SpeciesPair, p: ModelParams) -> float:
    """(theta1/chi1) * int x rho1 + (theta2/chi2) * int x rho2.

    Uses raw (un-normalized) masses; this quantity is an exact invariant
    of the dynamics and of both solvers.
    """
    m1 = float(np.sum(u.rho1.masses * u.rho1.positions)) if u.rho1.positions.size else 0.0
    m2 = float(np.sum(u.rho2.masses * u.rho2.positions)) if u.rho2.positions.size else 0.0
    return (p.theta1 / p.chi1) * m1 + (p.theta2 / p.chi2) * m2


def sample_gaussian_bumps(
    bumps: list[tuple[float, float]],
    grid: tuple[float, float, float],
    width: float = 5000.0,
) -> DiscreteMeasure:
    """Sample a sum of Gaussian bumps A * exp(-width * (x - c)^2) on a grid.

    ``grid`` is (xmin, xmax, dx); atoms sit at cell centers and carry the
    midpoint-rule cell mass (cell-center density times dx).  The grid must
    cover every bump support down to a 1e-12 relative mass truncation.
    Warns with :class:`CoarseGridWarning` when there are fewer than 8 cells
    per bump standard deviation.
    """
    xmin, xmax, dx = (float(v) for v in grid)
    if dx <= 0 or xmax <= xmin:
        raise ValueError("grid must satisfy xmax > xmin and dx > 0")
    n = int(round((xmax - xmin) / dx))
    if n < 1:
        raise ValueError("grid has no cells")
    centers = xmin + (np.arange(n) + 0.5) * dx

    sqrt_w = math.sqrt(width)
    sigma = 1.0 / math.sqrt(2.0 * width)
    masses = np.zeros(n)
    for amplitude, center in bumps:
        if amplitude < 0:
            raise ValueError("bump amplitudes must be nonnegative")
        margin = min(center - xmin, xmax - center)
        if margin <= 0 or math.erfc(sqrt_w * margin) > 1e-12:
            raise ValueError(
                f"grid [{xmin}, {xmax}] does not cover the bump at {center} "
                "to 1e-12 relative mass truncation"
            )
        masses += amplitude * np.exp(-width * (centers - center) ** 2) * dx
    if dx > sigma / 8.0:
        warnings.warn(
            f"grid spacing {dx} gives fewer than 8 cells per bump standard deviation {sigma}",
            CoarseGridWarning,
            stacklevel=2,
        )
    return DiscreteMeasure(centers, masses)


# --- CSV serialization -------------------------------------------------

_FMT = "%.17g"


def write_measure_csv(path, m: DiscreteMeasure) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "mass"])
        for x, w in zip(m.positions, m.masses):
            writer.writerow([_FMT % x, _FMT % w])


def read_measure_csv(path) -> DiscreteMeasure:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DiscreteMeasure(data[:, 0], data[:, 1])


def write_pair_csv(path, pair: SpeciesPair) -> None:
    """Write a species pair sharing one grid as (position, mass1, mass2)."""
    if pair.rho1.positions.size != pair.rho2.positions.size or np.any(
        pair.rho1.positions != pair.rho2.positions
    ):
        raise ValueError("pair CSV requires both species on one shared grid")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "mass1", "mass2"])
        for x, w1, w2 in zip(pair.rho1.positions, pair.rho1.masses, pair.rho2.masses):
            writer.writerow([_FMT % x, _FMT % w1, _FMT % w2])


def read_pair_csv(path) -> SpeciesPair:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SpeciesPair(
        DiscreteMeasure(data[:, 0], data[:, 1]),
        DiscreteMeasure(data[:, 0], data[:, 2]),
    )
