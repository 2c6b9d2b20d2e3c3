"""Smooth cutoffs with exact plateau and support.

All profiles are built from one flat-contact ramp.  With ``h(u) = exp(-1/u)``
for ``u > 1e-12`` and ``0`` otherwise,

    ramp(u) = h(1 - u) / (h(1 - u) + h(u)),    0 <= u <= 1,

equals 1 at ``u = 0``, 0 at ``u = 1``, and meets both constants to infinite
order.  ``phi`` and ``chi`` use it on ``1 <= |x| <= 2``; ``eta(x) = phi(2x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BumpProfile", "make_profile", "h", "ramp", "PHI", "ETA", "CHI", "eval_beta", "eval_chi_cube"]

_TINY = 1e-12


def h(u):
    u = np.asarray(u, dtype=float)
    safe = np.where(u > _TINY, u, 1.0)
    return np.where(u > _TINY, np.exp(-1.0 / safe), 0.0)


def ramp(u):
    """Down-ramp on ``[0, 1]``; clipped to 1 below and 0 above."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    a = h(1.0 - u)
    return a / (a + h(u))


@dataclass(frozen=True)
class BumpProfile:
    """Even cutoff equal to 1 on ``[-plateau, plateau]`` and 0 off ``(-support, support)``."""

    kind: str
    plateau: float
    support: float

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        u = (x - self.plateau) / (self.support - self.plateau)
        out = ramp(u)
        return out if out.ndim else float(out)

    @property
    def plateau_interval(self):
        return (-self.plateau, self.plateau)

    @property
    def support_interval(self):
        return (-self.support, self.support)


PHI = BumpProfile("phi", 1.0, 2.0)
ETA = BumpProfile("eta", 0.5, 1.0)
CHI = BumpProfile("chi", 1.0, 2.0)

_PROFILES = {"phi": PHI, "eta": ETA, "chi": CHI}


def make_profile(kind):
    try:
        return _PROFILES[kind]
    except KeyError:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {sorted(_PROFILES)}") from None


def eval_beta(xi, lam):
    """``prod_i phi(xi_i / lam)``; ``xi`` may be a single d-vector or an ``(N, d)`` array."""
    xi = np.asarray(xi, dtype=float)
    vals = PHI(xi / lam)
    return np.prod(vals, axis=-1) if np.ndim(vals) else vals


def eval_chi_cube(xi, cube):
    """``prod_i chi((xi_i - c_i) / (lam * delta_K**level))``."""
    xi = np.asarray(xi, dtype=float)
    c = np.asarray(cube.center, dtype=float)
    vals = CHI((xi - c) / cube.half_side)
    return np.prod(vals, axis=-1)
