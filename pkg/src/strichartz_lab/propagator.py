"""The time-dilated propagator on space-time grids.

    S f(x, t) = eta(delta t) sum_k f^(k) beta(k/lam) exp(i (x.k + t |k|^2 / lam))

on the torus ``(R / 2 pi Z)^d`` times ``[0, 1/delta]``.  The spatial grid is
``x_j = 2 pi j / Nx`` on every axis and the time grid is the closed uniform grid
``t_i = i T / (Nt - 1)`` with ``T = 1/delta``.

``propagate_fft`` is the fast path (one inverse DFT per time slice);
``propagate_direct`` evaluates the same sum with explicit exponential tables
and serves as its oracle.  Large grids never need to be materialised:
:func:`iter_slices` streams blocks of time slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from ._compute import direct_sum, fill_phased, row_power_means, tree_sum
from .bumps import ETA, eval_beta
from .errors import GridError, SupportError
from .lattice import LabParams, LatticeField

__all__ = [
    "SpaceTimeGrid",
    "SpaceTimeField",
    "min_nx",
    "min_nt",
    "iter_slices",
    "propagate_fft",
    "propagate_direct",
    "propagate_points",
    "extend_discrete",
    "extension_box_lq_norm",
    "RescalingReport",
    "rescaling_equivalence_check",
]

CHUNK_ELEMS = 1 << 21


def min_nx(params, strict_exact=True):
    """Smallest admissible spatial size: ``> 4 lam``, and ``>= 2 q_c lam + 1`` for even ``q_c``."""
    lo = 4 * params.lam + 1
    if strict_exact and params.q_c_is_even_integer:
        lo = max(lo, int(round(2 * params.q_c)) * params.lam + 1)
    return lo


def min_nt(params, oversample=2.0):
    base = math.ceil(4 * params.d * params.lam * params.T / math.pi)
    return math.ceil(base * oversample)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Tensor grid over the torus times ``[0, 1/delta]``.

    ``eta=False`` drops the temporal cutoff from every evaluation on this grid.
    """

    params: LabParams
    nx: int
    nt: int
    eta: bool = True
    oversample: float = 2.0

    def __post_init__(self):
        if self.nx < 1 or self.nt < 2:
            raise GridError(f"grid needs nx >= 1 and nt >= 2, got nx={self.nx}, nt={self.nt}")
        if self.oversample < 2:
            raise GridError(f"oversample must be >= 2, got {self.oversample}")

    @classmethod
    def from_rules(cls, params, oversample=2.0, nx=None, nt=None, eta=True):
        """Grid obeying the sampling rules; unset sizes get the smallest fast size."""
        if oversample < 2:
            raise GridError(f"oversample must be >= 2, got {oversample}")
        if nx is None:
            nx = scipy.fft.next_fast_len(min_nx(params), real=False)
        if nt is None:
            nt = min_nt(params, oversample)
        grid = cls(params, int(nx), int(nt), eta=eta, oversample=float(oversample))
        grid.check_rules()
        return grid

    def check_rules(self):
        p = self.params
        if self.nx <= 4 * p.lam:
            raise GridError(f"nx={self.nx} <= 4*lambda={4 * p.lam}: supports up to 2*lambda would alias")
        if p.q_c_is_even_integer and self.nx < min_nx(p):
            raise GridError(f"nx={self.nx} below {min_nx(p)} needed for exact L^{p.q_c:g} quadrature")
        need = min_nt(p, self.oversample)
        if self.nt < need:
            raise GridError(f"nt={self.nt} below the time-sampling rule ({need})")
        return self

    @property
    def d(self):
        return self.params.d

    @property
    def T(self):
        return self.params.T

    @property
    def shape(self):
        return (self.nt,) + (self.nx,) * self.d

    @property
    def n_space(self):
        return self.nx**self.d

    @property
    def dt(self):
        return self.T / (self.nt - 1)

    @property
    def t(self):
        return np.arange(self.nt) * self.dt

    @property
    def x(self):
        return 2 * np.pi * np.arange(self.nx) / self.nx

    @property
    def time_weights(self):
        w = np.full(self.nt, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def eta_values(self, t=None):
        t = self.t if t is None else np.asarray(t, dtype=float)
        if not self.eta:
            return np.ones_like(t)
        return ETA(self.params.delta * t)

    def refined(self):
        """Grid with ``2 nt - 1`` slices; its even slices are this grid's slices."""
        return SpaceTimeGrid(self.params, self.nx, 2 * self.nt - 1, eta=self.eta, oversample=self.oversample)

    def space_points(self, flat_index):
        """Coordinates ``(P, d)`` of flattened spatial indices (C order)."""
        idx = np.unravel_index(np.asarray(flat_index), (self.nx,) * self.d)
        return np.stack([2 * np.pi * i / self.nx for i in idx], axis=-1)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Samples indexed ``(time, x_1, ..., x_d)`` on ``grid``."""

    grid: SpaceTimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise GridError(f"values shape {v.shape} does not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("non-finite samples")
        object.__setattr__(self, "values", v)

    def rows(self):
        """Values as a ``(nt, Nx^d)`` view."""
        return self.values.reshape(self.grid.nt, -1)

    def abs(self):
        return SpaceTimeField(self.grid, np.abs(self.values))


def _check_support(f, grid):
    if f.params != grid.params:
        raise GridError("field and grid come from different parameter sets")
    f.require_box(2 * grid.params.lam, "propagation")


def _coefficients(f):
    """Nonzero support, ``beta``-weighted coefficients and time frequencies ``|k|^2/lam``."""
    g = f.nonzero()
    lam = f.params.lam
    c = g.values * eval_beta(g.points, lam)
    w = (g.points.astype(np.float64) ** 2).sum(axis=1) / lam
    return g.points, c, w


def _flat_index(points, nx):
    idx = np.mod(points, nx)
    flat = np.zeros(points.shape[0], dtype=np.int64)
    for a in range(points.shape[1]):
        flat = flat * nx + idx[:, a]
    return flat


def iter_slices(f, grid, start=0, stop=None, chunk_elems=CHUNK_ELEMS, workers=None):
    """Yield ``(i0, block)`` with ``block[j] = S f(., t_{i0+j})`` shaped ``(B, Nx, ..., Nx)``.

    Blocks cover slices ``start..stop-1`` in order.  The phase of slice
    ``i0 + j`` is formed as ``exp(i t_{i0} w) * exp(i j dt w)`` with both
    factors evaluated directly, so rounding does not accumulate across blocks.
    The cutoff ``eta`` is applied to the coefficients before the transform.
    Each yielded block is a fresh array.
    """
    _check_support(f, grid)
    if grid.nx <= 4 * grid.params.lam:
        raise GridError(f"nx={grid.nx} <= 4*lambda: aliasing")
    stop = grid.nt if stop is None else stop
    pts, c, w = _coefficients(f)
    flat = _flat_index(pts, grid.nx)
    space = (grid.nx,) * grid.d
    axes = tuple(range(1, grid.d + 1))
    B = max(1, min(stop - start, chunk_elems // grid.n_space))
    dt = grid.dt
    steps = np.exp(1j * np.outer(np.arange(B) * dt, w)) * c
    buf = np.zeros((B, grid.n_space), dtype=np.complex128)
    for i0 in range(start, stop, B):
        b = min(B, stop - i0)
        if not pts.shape[0]:
            yield i0, np.zeros((b,) + space, dtype=np.complex128)
            continue
        base = np.exp(1j * (i0 * dt) * w)
        eta = grid.eta_values((i0 + np.arange(b)) * dt)
        fill_phased(buf, flat, steps[:b], base, eta)
        block = scipy.fft.ifftn(buf[:b].reshape((b,) + space), axes=axes, norm="forward", workers=workers)
        yield i0, block


def propagate_fft(f, grid, workers=None):
    out = np.empty(grid.shape, dtype=np.complex128)
    for i0, block in iter_slices(f, grid, workers=workers):
        out[i0 : i0 + block.shape[0]] = block
    return SpaceTimeField(grid, out)


def propagate_direct(f, grid):
    """Separable explicit-exponential evaluation (no FFT)."""
    _check_support(f, grid)
    pts, c, w = _coefficients(f)
    d = grid.d
    lam = grid.params.lam
    R = 2 * lam
    t = grid.t
    x = grid.x
    if not pts.shape[0]:
        return SpaceTimeField(grid, np.zeros(grid.shape, dtype=np.complex128))
    ks = np.arange(-R, R + 1)
    ex = np.exp(1j * np.outer(x, ks))
    tphase = np.exp(1j * np.outer(t, w)) * c * grid.eta_values()[:, None]
    dense = np.zeros((grid.nt,) + (2 * R + 1,) * d, dtype=np.complex128)
    dense[(slice(None),) + tuple((pts + R).T)] = tphase
    out = dense
    for a in range(d):
        out = np.tensordot(out, ex, axes=([1 + a], [1]))
        out = np.moveaxis(out, -1, 1 + a)
    return SpaceTimeField(grid, np.ascontiguousarray(out))


def propagate_points(f, x, t, eta=True):
    """``S f`` at scattered points by brute-force summation."""
    f.require_box(2 * f.params.lam, "propagation")
    pts, c, w = _coefficients(f)
    t = np.asarray(t, dtype=float).reshape(-1)
    vals = direct_sum(np.asarray(x, dtype=float).reshape(t.shape[0], -1), t, pts, c, w)
    if eta:
        vals = vals * ETA(f.params.delta * t)
    return vals


def extend_discrete(f, x, t):
    """``E h(x, t) = sum_{xi in supp/lam} h^(lam xi) exp(i (x.xi + t |xi|^2))``."""
    f.require_box(f.params.lam, "the discrete extension operator")
    g = f.nonzero()
    lam = f.params.lam
    xi = g.points / lam
    t = np.asarray(t, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(t.shape[0], -1)
    return direct_sum(x, t, xi, g.values, (xi**2).sum(axis=1))


def extension_box_lq_norm(fields, R, q, spacing=0.25):
    """``|| prod_i |E f_i|^(1/m) ||_{L^q(B_R)}`` for ``m`` fields, ``B_R = [0, R]^n``.

    Lebesgue measure, midpoint rule with cells of side about ``spacing``.
    """
    fields = list(fields)
    n = fields[0].params.n
    per = max(1, math.ceil(R / spacing))
    h = R / per
    axis = (np.arange(per) + 0.5) * h
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    x = np.stack([m.ravel() for m in mesh[:-1]], axis=1)
    t = mesh[-1].ravel()
    logmod = np.zeros(t.shape[0])
    for f in fields:
        with np.errstate(divide="ignore"):
            logmod += np.log(np.abs(extend_discrete(f, x, t))) / len(fields)
    vals = np.exp(q * logmod)
    return (h**n * float(tree_sum(vals))) ** (1.0 / q)


@dataclass(frozen=True)
class RescalingReport:
    q: float
    lhs: float
    rhs: float
    scaled_rhs: float
    ratio: float
    nt: int
    eta_disabled: bool = True


def _slice_power_means(f, nx, times, wfreq, q):
    """Spatial means of ``|sum_k c_k e^{i x.k} e^{i t wfreq_k}|^q`` at ``times``."""
    pts, c, _ = _coefficients(f)
    d = f.params.d
    flat = _flat_index(pts, nx)
    out = np.empty(times.shape[0])
    B = max(1, CHUNK_ELEMS // nx**d)
    for s in range(0, times.shape[0], B):
        tt = times[s : s + B]
        block = np.zeros((tt.shape[0], nx**d), dtype=np.complex128)
        block[:, flat] = np.exp(1j * np.outer(tt, wfreq)) * c
        block = scipy.fft.ifftn(block.reshape((tt.shape[0],) + (nx,) * d),
                                axes=tuple(range(1, d + 1)), norm="forward")
        out[s : s + tt.shape[0]] = row_power_means(block.reshape(tt.shape[0], -1), q)
    return out


def _trapezoid(vals, length):
    h = length / (vals.shape[0] - 1)
    w = np.full(vals.shape[0], h)
    w[0] = w[-1] = 0.5 * h
    return float(tree_sum(w * vals))


def rescaling_equivalence_check(f, grid, q=None):
    """Compare the undilated flow over ``[0, 1/(lam delta)]`` with the dilated one over ``[0, 1/delta]``.

    Without the ``eta`` cutoff, substituting ``t = tau / lam`` gives
    ``||e^{-it Lap} f||_q = lam^{-1/q} ||S f||_q``.  Both sides are computed
    on their own time grids of ``2 nt - 1`` nodes, with independently formed
    phases (``t |k|^2`` versus ``tau |k|^2 / lam``).
    """
    _check_support(f, grid)
    p = grid.params
    q = p.q_c if q is None else float(q)
    nt = 2 * grid.nt - 1
    k2 = (f.nonzero().points.astype(np.float64) ** 2).sum(axis=1)
    T = p.T
    short = T / p.lam
    t_short = np.arange(nt) * (short / (nt - 1))
    t_long = np.arange(nt) * (T / (nt - 1))
    lhs = _trapezoid(_slice_power_means(f, grid.nx, t_short, k2, q), short) ** (1 / q)
    rhs = _trapezoid(_slice_power_means(f, grid.nx, t_long, k2 / p.lam, q), T) ** (1 / q)
    scaled = p.lam ** (-1 / q) * rhs
    ratio = lhs / scaled if scaled > 0 else float("nan")
    return RescalingReport(q=q, lhs=lhs, rhs=rhs, scaled_rhs=scaled, ratio=ratio, nt=nt)
