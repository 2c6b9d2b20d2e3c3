"""Space-time Lebesgue norms on grids.

Space carries the normalised Haar measure (mean over the ``Nx^d`` samples),
time the trapezoid rule on ``[0, 1/delta]``.  For even integer ``q`` and a
trigonometric polynomial slice with frequencies in ``[-R, R]^d`` the spatial
mean of ``|u|^q`` is exact once ``Nx > q R``.  The time rule is not exact, so
reported norms carry a refinement certificate: the value on the grid and on
the grid with doubled resolution must agree to ``rtol`` (default ``1e-6``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._compute import row_power_means, row_power_stats, tree_sum
from .bumps import ETA
from .errors import GridError, QuadratureError
from .lattice import l2_norm
from .propagator import SpaceTimeField, iter_slices

__all__ = [
    "RegionMask",
    "spacetime_norm",
    "mixed_norm",
    "square_function",
    "eta_power_integral",
    "SliceStats",
    "stream_slice_stats",
    "QuotientReport",
    "strichartz_quotient",
    "CERT_RTOL",
]

CERT_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class RegionMask:
    grid: object
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            raise GridError(f"mask shape {m.shape} does not match grid shape {self.grid.shape}")
        object.__setattr__(self, "mask", m)

    def __invert__(self):
        return RegionMask(self.grid, ~self.mask)

    def __or__(self, other):
        return RegionMask(self.grid, self.mask | other.mask)

    def __and__(self, other):
        return RegionMask(self.grid, self.mask & other.mask)

    def volume(self):
        """Measure of the region (space has total mass 1)."""
        m = self.mask.reshape(self.grid.nt, -1)
        frac = m.mean(axis=1)
        return float(tree_sum(self.grid.time_weights * frac))


def _weighted_time_sum(grid, per_slice):
    return float(tree_sum(grid.time_weights * per_slice))


def spacetime_norm(u, q, mask=None):
    """``(int int_{mask} |u|^q)^(1/q)``."""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    g = u.grid
    if g.nt < 2 or g.n_space < 1:
        raise GridError("empty grid")
    m = None
    if mask is not None:
        if mask.grid != g:
            raise GridError("mask and field live on different grids")
        m = mask.mask.reshape(g.nt, -1)
    means = row_power_means(u.rows(), q, m)
    return _weighted_time_sum(g, means) ** (1.0 / q)


def mixed_norm(u, p, q):
    """``(int ||u(., t)||_{L^q_x}^p dt)^(1/p)``."""
    if not (p >= 1 and q >= 1):
        raise ValueError("p and q must be >= 1")
    g = u.grid
    if g.nt < 2 or g.n_space < 1:
        raise GridError("empty grid")
    inner = row_power_means(u.rows(), q) ** (1.0 / q)
    return _weighted_time_sum(g, inner**p) ** (1.0 / p)


def square_function(children):
    """Pointwise ``(sum_tau |u_tau|^2)^(1/2)``."""
    children = list(children)
    if not children:
        raise ValueError("square function of an empty family")
    g = children[0].grid
    acc = np.zeros(g.shape)
    for c in children:
        if c.grid != g:
            raise GridError("children live on different grids")
        v = c.values
        acc += v.real * v.real + v.imag * v.imag
    return SpaceTimeField(g, np.sqrt(acc).astype(np.complex128))


def eta_power_integral(q, delta):
    """``int_0^{1/delta} eta(delta t)^q dt`` by adaptive quadrature."""
    ramp, _ = integrate.quad(lambda s: ETA(s) ** q, 0.5, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    return (0.5 + ramp) / delta


@dataclass(frozen=True)
class SliceStats:
    """Per-slice spatial means of ``|S f|^q`` and high-set fractions on a grid."""

    grid: object
    q: float
    means: np.ndarray
    high_fraction: np.ndarray

    def norm(self):
        return _weighted_time_sum(self.grid, self.means) ** (1.0 / self.q)

    def high_volume(self):
        """Fraction of the space-time volume where ``|S f| >= threshold``."""
        return _weighted_time_sum(self.grid, self.high_fraction) / self.grid.T

    def coarsened(self, coarse_grid):
        """Stats on ``coarse_grid`` when this grid is ``coarse_grid.refined()``."""
        if coarse_grid.refined() != self.grid:
            raise GridError("grid is not the refinement of coarse_grid")
        return SliceStats(coarse_grid, self.q, self.means[::2], self.high_fraction[::2])


def stream_slice_stats(f, grid, q, threshold=np.inf, on_block=None, workers=None):
    """Stream ``S f`` over ``grid`` without storing it.

    ``on_block(i0, block)`` is called on every block of slices before it is
    reduced, e.g. to pick up audit samples.
    """
    means = np.empty(grid.nt)
    frac = np.empty(grid.nt)
    for i0, block in iter_slices(f, grid, workers=workers):
        if on_block is not None:
            on_block(i0, block)
        b = block.shape[0]
        m, fr = row_power_stats(block.reshape(b, -1), q, threshold)
        means[i0 : i0 + b] = m
        frac[i0 : i0 + b] = fr
    return SliceStats(grid, float(q), means, frac)


def certify(coarse, fine, rtol=CERT_RTOL, what="norm"):
    rel = abs(coarse - fine) / abs(fine) if fine else abs(coarse - fine)
    if not rel < rtol:
        raise QuadratureError(
            f"{what} changed by {rel:.3e} (relative) when the time grid was refined; tolerance {rtol:g}"
        )
    return rel


@dataclass(frozen=True)
class QuotientReport:
    quotient: float
    norm: float
    fine_norm: float
    rel_change: float
    l2: float
    q: float
    high_volume: float = float("nan")


def strichartz_quotient(f, grid, q=None, threshold=np.inf, certify_rtol=CERT_RTOL, on_block=None,
                        workers=None):
    """``||S f||_{L^q} / ||f||_2`` on ``grid``, certified against ``grid.refined()``.

    The refined grid is streamed once; the reported value uses its even
    slices, which are exactly ``grid``.  ``threshold`` is applied to ``|S f|``
    to measure the high-set volume.
    """
    q = grid.params.q_c if q is None else float(q)
    l2 = l2_norm(f)
    if l2 == 0:
        raise ValueError("strichartz quotient of the zero field")
    fine = stream_slice_stats(f, grid.refined(), q, threshold, on_block=on_block, workers=workers)
    coarse = fine.coarsened(grid)
    n_c, n_f = coarse.norm(), fine.norm()
    rel = certify(n_c, n_f, certify_rtol) if certify_rtol is not None else abs(n_c - n_f) / n_f
    return QuotientReport(
        quotient=n_c / l2,
        norm=n_c,
        fine_norm=n_f,
        rel_change=rel,
        l2=l2,
        q=q,
        high_volume=coarse.high_volume() if math.isfinite(threshold) else float("nan"),
    )
