"""Height splitting and the broad/narrow machinery.

Constants are explicit.  For the ``C = delta_K^{-d}`` children of one parent
cube, with values ``v_tau`` at a point and ``tau*`` the maximiser:

* big set: ``|v_tau| >= delta_K^d max|v|``.  The small cubes contribute less
  than ``#children * delta_K^d * max = max`` in total.
* narrow (every big cube is within Chebyshev centre distance ``< 2 side`` of
  ``tau*``): at most ``3^d <= 5^d`` big cubes, so
  ``|sum v| <= (5^d + 1) max = C1 max``.
* broad (some big cube is separated from ``tau*``): ``max <= delta_K^{-d/2}
  |v_* v_tau|^(1/2)``, so ``|sum v| <= delta_K^{-d} max <= C2 delta_K^{-3d/2}
  max_sep |v_a v_b|^(1/2)`` with ``C2 = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._compute import broad_narrow_scan
from .errors import GridError, InvariantViolation, ParameterError
from .lattice import l2_norm, separation_matrix
from .norms import RegionMask
from .propagator import SpaceTimeField, extension_box_lq_norm

__all__ = [
    "narrow_constant",
    "broad_constant",
    "height_threshold",
    "HeightSplit",
    "height_split",
    "BroadNarrowReport",
    "broad_narrow",
    "broad_narrow_fields",
    "UpgradeReport",
    "upgrade_to_norms",
    "bilinear_field",
    "BilinearFit",
    "bilinear_constant_probe",
    "VIOLATION_RTOL",
]

VIOLATION_RTOL = 1e-12


def narrow_constant(d):
    return 5**d + 1


def broad_constant(d, delta_K, C2=1.0):
    """``C2 * delta_K^{-3d/2}``."""
    return C2 * delta_K ** (-1.5 * d)


def height_threshold(params, level, C0=1.0):
    """``C0 (lam / delta * delta_K^{2(level-1)})^{d/4}`` for unit-norm data."""
    if level < 1 or level > params.K:
        raise ParameterError(f"height split level must lie in 1..{params.K}, got {level}")
    base = params.lam / params.delta * params.delta_K ** (2 * (level - 1))
    return C0 * base ** (params.d / 4)


@dataclass(frozen=True)
class HeightSplit:
    level: int
    threshold: float
    C0: float
    high: RegionMask
    low: RegionMask


def height_split(u, level, C0=1.0, scale=1.0):
    """Split the grid by ``|u| >= threshold`` (ties go high).

    The threshold assumes ``||f_{parent}||_2 = 1``; pass ``scale = ||f||_2``
    for other data (the threshold is homogeneous of degree one).
    """
    thr = height_threshold(u.grid.params, level, C0) * scale
    v = u.values
    high = (v.real * v.real + v.imag * v.imag) >= thr * thr if math.isfinite(thr) else np.zeros(v.shape, bool)
    return HeightSplit(level, thr, C0, RegionMask(u.grid, high), RegionMask(u.grid, ~high))


@dataclass(frozen=True, eq=False)
class BroadNarrowReport:
    """Pointwise classification; arrays run over the evaluation points."""

    star: np.ndarray
    big_count: np.ndarray
    broad: np.ndarray
    lhs: np.ndarray
    bound: np.ndarray
    C1: float
    broad_factor: float

    @property
    def slack(self):
        return self.bound - self.lhs

    @property
    def violations(self):
        return int(np.count_nonzero(self.lhs > self.bound * (1 + VIOLATION_RTOL)))

    @property
    def n_broad(self):
        return int(np.count_nonzero(self.broad))

    def check(self):
        if self.violations:
            raise InvariantViolation(f"broad/narrow certificate failed at {self.violations} points")
        return self


def broad_narrow(values, cubes, delta_K, C2=1.0):
    """Classify child values ``(C,)`` or ``(C, P)`` of the cubes ``cubes``.

    ``cubes`` are the children of one parent; their separation is taken from
    :func:`separation_matrix`.
    """
    v = np.asarray(values, dtype=np.complex128)
    single = v.ndim == 1
    v = v.reshape(len(cubes), -1)
    d = cubes[0].params.d
    c1 = narrow_constant(d)
    bf = broad_constant(d, delta_K, C2)
    star, nb, broad, lhs, bound = broad_narrow_scan(v, separation_matrix(cubes), delta_K**d, c1, bf)
    rep = BroadNarrowReport(star, nb, broad, lhs, bound, float(c1), float(bf))
    if single:
        rep = BroadNarrowReport(*(a[0] for a in (star, nb, broad, lhs, bound)), float(c1), float(bf))
    return rep


def _shared_grid(fields):
    fields = list(fields)
    if not fields:
        raise ValueError("empty family of fields")
    g = fields[0].grid
    for u in fields:
        if u.grid != g:
            raise GridError("fields live on different grids")
    return g, fields


def broad_narrow_fields(child_fields, cubes, C2=1.0):
    """:func:`broad_narrow` at every grid point of the propagated children."""
    g, child_fields = _shared_grid(child_fields)
    vals = np.stack([u.values.reshape(-1) for u in child_fields])
    return broad_narrow(vals, cubes, g.params.delta_K, C2)


@dataclass(frozen=True, eq=False)
class UpgradeReport:
    l2_term: SpaceTimeField
    lq_term: SpaceTimeField
    q: float
    lhs: np.ndarray
    bound: np.ndarray

    @property
    def violations(self):
        return int(np.count_nonzero(self.lhs > self.bound * (1 + VIOLATION_RTOL)))


def upgrade_to_norms(child_fields, cubes, C2=1.0):
    """Square-function and separated-pair ``l^q`` aggregates with the pointwise domination check.

    ``|sum u_tau| <= C1 (sum |u_tau|^2)^(1/2)
                    + C2 delta_K^{-3d/2} (sum_{sep pairs} |u_a u_b|^{q/2})^(1/q)``,
    ``q = 2(n+2)/n``, pairs unordered.
    """
    g, child_fields = _shared_grid(child_fields)
    p = g.params
    q = p.bilinear_q
    vals = np.stack([u.values.reshape(-1) for u in child_fields])
    mods2 = vals.real**2 + vals.imag**2
    l2 = np.sqrt(mods2.sum(axis=0))
    sep = separation_matrix(cubes)
    ia, ib = np.nonzero(np.triu(sep, 1))
    acc = np.zeros(vals.shape[1])
    for a, b in zip(ia, ib):
        acc += (mods2[a] * mods2[b]) ** (q / 4)
    lq = acc ** (1 / q)
    lhs = np.abs(vals.sum(axis=0))
    bound = narrow_constant(p.d) * l2 + broad_constant(p.d, p.delta_K, C2) * lq
    shape = g.shape
    return UpgradeReport(
        SpaceTimeField(g, l2.reshape(shape).astype(np.complex128)),
        SpaceTimeField(g, lq.reshape(shape).astype(np.complex128)),
        q,
        lhs,
        bound,
    )


def bilinear_field(u, v):
    """Pointwise ``|u v|^(1/2)``."""
    if u.grid != v.grid:
        raise GridError("bilinear factors live on different grids")
    return SpaceTimeField(u.grid, np.sqrt(np.abs(u.values) * np.abs(v.values)).astype(np.complex128))


@dataclass(frozen=True)
class BilinearFit:
    """Joint fit ``log ratio = a + b log R + c log D``."""

    slope_R: float
    slope_D: float
    intercept: float
    stderr_R: float
    stderr_D: float
    predicted_R: float
    predicted_D: float
    q: float
    samples: tuple

    @property
    def max_ratio(self):
        return max(s[2] for s in self.samples)


def bilinear_constant_probe(pairs, radii, spacing=0.25):
    """Measure ``||(E f E g)^(1/2)||_{L^q(B_R)} / (||f|| ||g||)^(1/2)`` and fit its scaling.

    ``pairs`` is a sequence of ``(D, f, g)`` with ``f``, ``g`` supported on two
    separated cubes of relative side ``D = delta_K^level``; ``E`` is the
    discrete extension operator and ``B_R = [0, R]^{n-1} x [0, R]``.
    Reports the least-squares exponents of ``R`` and ``D`` next to the
    predicted ``(n-1)/2`` and ``(n-1)/2 - (n+1)/q``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("bilinear probe needs a non-empty ensemble")
    radii = [float(r) for r in radii]
    n = pairs[0][1].params.n
    q = 2 * (n + 2) / n
    samples = []
    for D, f, g in pairs:
        nf, ng = l2_norm(f), l2_norm(g)
        if nf == 0 or ng == 0:
            raise ValueError("bilinear probe needs nonzero factors")
        for R in radii:
            val = extension_box_lq_norm([f, g], R, q, spacing)
            samples.append((float(R), float(D), val / math.sqrt(nf * ng)))
    arr = np.array(samples)
    X = np.column_stack([np.ones(len(arr)), np.log(arr[:, 0]), np.log(arr[:, 1])])
    y = np.log(arr[:, 2])
    rank = np.linalg.matrix_rank(X)
    if rank < 3:
        raise ValueError("bilinear probe needs at least two radii and two cube scales")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(1, len(y) - 3)
    cov = (resid @ resid / dof) * np.linalg.inv(X.T @ X)
    return BilinearFit(
        slope_R=float(coef[1]),
        slope_D=float(coef[2]),
        intercept=float(coef[0]),
        stderr_R=float(math.sqrt(max(cov[1, 1], 0.0))),
        stderr_D=float(math.sqrt(max(cov[2, 2], 0.0))),
        predicted_R=(n - 1) / 2,
        predicted_D=(n - 1) / 2 - (n + 1) / q,
        q=q,
        samples=tuple(samples),
    )

