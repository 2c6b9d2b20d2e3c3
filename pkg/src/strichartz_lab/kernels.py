"""TT* kernels, their continuum comparison, and the truncated-kernel split.

The kernel of ``S_t chi_Q(D) (S_s chi_Q(D))^*`` (normalised measure) is

    K(x, t; y, s) = eta(delta t) eta(delta s)
                    * sum_j beta^2(j/lam) chi_Q^2(j) exp(i (x - y).j + i (t - s)|j|^2 / lam)

and the sum factorises into ``d`` one-dimensional sums.  Poisson summation
relates each factor to the continuum kernel

    Kc(z, dt) = (1 / 2 pi) int phi^2(xi/lam) chi_I^2(xi) exp(i (dt xi^2 / lam + z xi)) dxi

via ``sum_j F(j) e^{i z j + ...} = 2 pi sum_m Kc(z - 2 pi m, dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from ._compute import direct_sum
from .bumps import CHI, ETA, PHI
from .errors import GridError, ParameterError, QuadratureError
from .lattice import FrequencyCube, LabParams, build_ladder, l2_norm
from .norms import strichartz_quotient
from .propagator import SpaceTimeField

__all__ = [
    "KernelSpec",
    "axis_weights",
    "kernel_lattice_1d",
    "kernel_lattice",
    "kernel_lattice_direct",
    "kernel_envelope",
    "kernel_continuum_1d",
    "PoissonReport",
    "poisson_compare",
    "TruncatedSplit",
    "truncated_split_apply",
    "kernel_operator_matrix",
    "kernel_sup_1d",
    "far_kernel_constant",
    "envelope_constant",
    "TTStarReport",
    "tt_star_quotient",
]

GL_ORDER = 20
CONTINUUM_ATOL = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Kernel parameters; ``cutoff`` is an optional ladder cube ``Q`` with multiplier ``chi_Q^2``."""

    params: LabParams
    cutoff: FrequencyCube | None = None
    eta: bool = True

    def __post_init__(self):
        if self.cutoff is not None and self.cutoff.params != self.params:
            raise ParameterError("cutoff cube comes from a different parameter set")

    @property
    def m(self):
        """Ladder level of the cutoff (0 without one)."""
        return 0 if self.cutoff is None else self.cutoff.level

    @property
    def scale(self):
        """``delta_K^m``."""
        return self.params.delta_K**self.m

    def axis_interval(self, axis):
        """Support of the axis weight ``phi^2(xi/lam) chi_I^2(xi)`` as a closed interval."""
        lam = self.params.lam
        lo, hi = -2.0 * lam, 2.0 * lam
        if self.cutoff is not None:
            c = self.cutoff.center[axis]
            hs = self.cutoff.half_side
            lo, hi = max(lo, c - 2.0 * hs), min(hi, c + 2.0 * hs)
        return lo, hi

    def axis_profile(self, axis, xi):
        xi = np.asarray(xi, dtype=float)
        w = PHI(xi / self.params.lam) ** 2
        if self.cutoff is not None:
            c = self.cutoff.center[axis]
            w = w * CHI((xi - c) / self.cutoff.half_side) ** 2
        return w

    def eta_factor(self, t, s):
        if not self.eta:
            return np.ones(np.broadcast(np.asarray(t), np.asarray(s)).shape)
        dl = self.params.delta
        return ETA(dl * np.asarray(t, dtype=float)) * ETA(dl * np.asarray(s, dtype=float))


def axis_weights(spec, axis):
    """Integer frequencies on one axis with nonzero weight, and the weights."""
    lam = spec.params.lam
    j = np.arange(-2 * lam, 2 * lam + 1)
    w = spec.axis_profile(axis, j)
    keep = w != 0
    return j[keep], w[keep]


def kernel_lattice_1d(spec, dz, dt, axis=0):
    """``sum_j w(j) exp(i (dz j + dt j^2 / lam))`` for broadcast arrays ``dz``, ``dt``."""
    j, w = axis_weights(spec, axis)
    dz, dt = np.broadcast_arrays(np.asarray(dz, dtype=float), np.asarray(dt, dtype=float))
    shape = dz.shape
    dz, dt = dz.reshape(-1), dt.reshape(-1)
    jf = j.astype(float)
    j2 = jf * jf / spec.params.lam
    out = np.empty(dz.shape[0], dtype=np.complex128)
    step = max(1, (1 << 20) // max(1, j.shape[0]))
    for s in range(0, dz.shape[0], step):
        ph = np.outer(dz[s : s + step], jf) + np.outer(dt[s : s + step], j2)
        out[s : s + step] = np.exp(1j * ph) @ w
    return out.reshape(shape)


def _split_points(spec, x, t, y, s):
    d = spec.params.d
    x = np.asarray(x, dtype=float).reshape(-1, d)
    y = np.asarray(y, dtype=float).reshape(-1, d)
    t = np.asarray(t, dtype=float).reshape(-1)
    s = np.asarray(s, dtype=float).reshape(-1)
    return x, t, y, s


def kernel_lattice(spec, x, t, y, s):
    """Kernel values at point pairs, as a product of one-dimensional sums."""
    x, t, y, s = _split_points(spec, x, t, y, s)
    out = spec.eta_factor(t, s).astype(np.complex128)
    dz = x - y
    for a in range(spec.params.d):
        out = out * kernel_lattice_1d(spec, dz[:, a], t - s, axis=a)
    return out


def kernel_lattice_direct(spec, x, t, y, s):
    """The same kernel by one ``d``-dimensional sum (oracle for the factorisation)."""
    x, t, y, s = _split_points(spec, x, t, y, s)
    d = spec.params.d
    axes = [axis_weights(spec, a) for a in range(d)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrid = np.ones(grids[0].shape)
    for a in range(d):
        wgrid = wgrid * np.meshgrid(*[ax[1] for ax in axes], indexing="ij")[a]
    k = np.stack([g.ravel() for g in grids], axis=1)
    w = (k.astype(float) ** 2).sum(axis=1) / spec.params.lam
    vals = direct_sum(x - y, t - s, k, wgrid.ravel(), w)
    return spec.eta_factor(t, s) * vals


def kernel_envelope(spec, dt):
    """``lam^{d/2} dt^{-d/2} (1 + delta_K^m dt)^d``."""
    dt = np.abs(np.asarray(dt, dtype=float))
    if np.any(dt == 0):
        raise ValueError("kernel envelope is singular at dt = 0")
    d = spec.params.d
    out = spec.params.lam ** (d / 2) * dt ** (-d / 2) * (1 + spec.scale * dt) ** d
    return out if out.ndim else float(out)


# ------------------------------------------------------------ continuum kernel

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


def _gl_integrate(func, lo, hi, panels):
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return np.sum(weights * func(nodes))


def kernel_continuum_1d(spec, dz, dt, axis=0, atol=CONTINUUM_ATOL, max_doublings=6):
    """``(1/2pi) int w(xi) exp(i (dt xi^2/lam + dz xi)) dxi`` with a panel-doubling certificate.

    Gauss-Legendre panels of width at most ``pi lam / (2 lam |dt| + |dz| + 1)``;
    the panel count is doubled until two successive values agree to ``atol``.
    """
    if dt == 0:
        raise ValueError("continuum kernel requires dt != 0")
    lam = spec.params.lam
    lo, hi = spec.axis_interval(axis)
    if hi <= lo:
        return 0j
    width = math.pi * lam / (2 * lam * abs(dt) + abs(dz) + 1)
    panels = max(1, math.ceil((hi - lo) / width))

    def integrand(xi):
        return spec.axis_profile(axis, xi) * np.exp(1j * (dt * xi * xi / lam + dz * xi))

    prev = _gl_integrate(integrand, lo, hi, panels)
    for _ in range(max_doublings):
        panels *= 2
        cur = _gl_integrate(integrand, lo, hi, panels)
        if abs(cur - prev) <= atol * 2 * math.pi:
            return complex(cur / (2 * math.pi))
        prev = cur
    raise QuadratureError(f"continuum kernel quadrature did not converge at dz={dz}, dt={dt}")


@dataclass(frozen=True)
class PoissonReport:
    lattice: complex
    periodized: complex
    abs_error: float
    rel_error: float
    M: int
    tail: float
    needed_terms: tuple
    window_terms: tuple
    window_length: tuple


def huygens_window(spec, dt, axis=0):
    """Interval of ``z`` where the phase ``dt xi^2/lam + z xi`` is stationary on the support."""
    lo, hi = spec.axis_interval(axis)
    a, b = -2 * dt * hi / spec.params.lam, -2 * dt * lo / spec.params.lam
    return min(a, b), max(a, b)


POISSON_MAX_M = 4096


def _periodized_axis(spec, z, dt, axis, Ma):
    ms = np.arange(-Ma - 1, Ma + 2)
    terms = np.array([2 * math.pi * kernel_continuum_1d(spec, z - 2 * math.pi * m, dt, axis=axis) for m in ms])
    body = terms[1:-1]
    axis_sum = complex(np.sum(body))
    tail = (abs(terms[0]) + abs(terms[-1])) / max(abs(axis_sum), 1e-300)
    return ms[1:-1], body, axis_sum, tail


def poisson_compare(spec, x, t, y, s, M=None, rtol=1e-8):
    """Lattice kernel against ``2 pi sum_{|m|<=M} Kc(z - 2 pi m)`` per axis.

    The terms at ``m = +-(M+1)`` bound the tail.  ``M`` defaults to the number
    of periods covering the stationary window plus three, doubled until the
    tail is below ``rtol`` times the sum (narrow cutoffs decay slowly in
    ``z``).  With an explicit ``M`` a tail above ``rtol`` fails the call.
    """
    d = spec.params.d
    x = np.asarray(x, dtype=float).reshape(d)
    y = np.asarray(y, dtype=float).reshape(d)
    dt = float(t) - float(s)
    if abs(dt) < 1:
        raise ValueError("Poisson comparison is set up for |t - s| >= 1")
    lat = complex(kernel_lattice(spec, x, t, y, s)[0])
    per = complex(spec.eta_factor(t, s))
    tail = 0.0
    used, needed, window, wlen = [], [], [], []
    for a in range(d):
        z = x[a] - y[a]
        wlo, whi = huygens_window(spec, dt, a)
        if M is None:
            reach = max(abs(wlo - z), abs(whi - z))
            Ma = math.ceil(reach / (2 * math.pi)) + 3
            ms, body, axis_sum, t_a = _periodized_axis(spec, z, dt, a, Ma)
            while t_a > rtol and 2 * Ma <= POISSON_MAX_M:
                Ma *= 2
                ms, body, axis_sum, t_a = _periodized_axis(spec, z, dt, a, Ma)
        else:
            Ma = int(M)
            ms, body, axis_sum, t_a = _periodized_axis(spec, z, dt, a, Ma)
        tail = max(tail, t_a)
        ref = max(abs(axis_sum), 1e-300)
        needed.append(int(np.count_nonzero(np.abs(body) > 1e-6 * ref)))
        zs = z - 2 * math.pi * ms
        window.append(int(np.count_nonzero((zs >= wlo) & (zs <= whi))))
        wlen.append(whi - wlo)
        per *= axis_sum
        used.append(Ma)
    if tail > rtol:
        raise ParameterError(f"periodisation count too small: tail estimate {tail:.2e} exceeds {rtol:g}")
    err = abs(lat - per)
    return PoissonReport(
        lattice=lat,
        periodized=per,
        abs_error=err,
        rel_error=err / abs(lat) if lat else err,
        M=int(max(used)),
        tail=float(tail),
        needed_terms=tuple(needed),
        window_terms=tuple(window),
        window_length=tuple(wlen),
    )


# --------------------------------------------------------- operator split


@dataclass(frozen=True, eq=False)
class TruncatedSplit:
    near: SpaceTimeField
    far: SpaceTimeField
    full: SpaceTimeField

    @property
    def split_error(self):
        """``sup |near + far - full| / sup |full|``."""
        full = np.abs(self.full.values).max()
        diff = np.abs(self.near.values + self.far.values - self.full.values).max()
        return diff / full if full else diff


def _frequency_table(spec, nx):
    d = spec.params.d
    axes = [axis_weights(spec, a) for a in range(d)]
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wmesh = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    k = np.stack([m.ravel() for m in mesh], axis=1)
    w = np.prod(np.stack([m.ravel() for m in wmesh]), axis=0)
    flat = np.zeros(k.shape[0], dtype=np.int64)
    for a in range(d):
        flat = flat * nx + np.mod(k[:, a], nx)
    return k, w, flat


def truncated_split_apply(spec, g, width=1.0):
    """Apply the kernel operator to ``g``, split at ``|t - s| <= width``.

    ``(T g)(x, t) = sum_s omega_s int K(x, t; y, s) g(y, s) dy`` with the
    trapezoid weights ``omega_s`` and normalised measure in ``y``.  In
    frequency this is ``eta(delta t) w_k e^{i t |k|^2/lam} sum_s W_ts G(k, s)``
    with ``G(k, s) = omega_s eta(delta s) e^{-i s |k|^2/lam} g^_s(k)``; near,
    far and full use ``W`` restricted to ``|t - s| <= width``, its complement,
    and everything.
    """
    grid = g.grid
    if grid.params != spec.params:
        raise GridError("field grid does not match the kernel parameters")
    if grid.nx <= 4 * spec.params.lam:
        raise GridError("nx must exceed 4*lambda")
    d = grid.d
    axes = tuple(range(1, d + 1))
    k, w, flat = _frequency_table(spec, grid.nx)
    ghat = scipy.fft.fftn(g.values, axes=axes, norm="forward").reshape(grid.nt, -1)[:, flat]
    t = grid.t
    k2 = (k.astype(float) ** 2).sum(axis=1) / spec.params.lam
    eta = spec.eta_factor(t, 0.0) if spec.eta else np.ones(grid.nt)
    phase = np.exp(1j * np.outer(t, k2))
    G = (grid.time_weights * eta)[:, None] * np.conj(phase) * ghat
    dist = np.abs(t[:, None] - t[None, :])
    outs = []
    for W in (dist <= width, dist > width, np.ones_like(dist, dtype=bool)):
        H = W.astype(float) @ G
        H = (eta[:, None] * phase) * w * H
        full = np.zeros((grid.nt, grid.n_space), dtype=np.complex128)
        full[:, flat] = H
        full = scipy.fft.ifftn(full.reshape(grid.shape), axes=axes, norm="forward")
        outs.append(SpaceTimeField(grid, full))
    return TruncatedSplit(*outs)


def kernel_operator_matrix(spec, grid):
    """Dense matrix of the kernel operator on grid functions (small grids only).

    Row ``(t, x)``, column ``(s, y)``; entry ``K(x, t; y, s) omega_s / Nx^d``.
    """
    d = grid.d
    t = grid.t
    xs = np.stack(np.meshgrid(*([grid.x] * d), indexing="ij"), axis=-1).reshape(-1, d)
    P = t.shape[0] * xs.shape[0]
    if P > 6000:
        raise GridError(f"kernel matrix with {P} rows is too large")
    T = np.repeat(t, xs.shape[0])
    X = np.tile(xs, (t.shape[0], 1))
    ii, jj = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
    Kmat = kernel_lattice(spec, X[ii.ravel()], T[ii.ravel()], X[jj.ravel()], T[jj.ravel()]).reshape(P, P)
    col_w = np.repeat(grid.time_weights, xs.shape[0]) / xs.shape[0]
    return Kmat, col_w


def kernel_sup_1d(spec, dt, oversample=8):
    """``sup_z |sum_j w(j) e^{i (z j + dt j^2/lam)}|`` over a fine ``z`` grid, per ``dt``."""
    j, w = axis_weights(spec, 0)
    lam = spec.params.lam
    nz = scipy.fft.next_fast_len(oversample * (4 * lam + 1))
    out = np.empty(len(dt))
    idx = np.mod(j, nz)
    for i, tau in enumerate(np.asarray(dt, dtype=float)):
        buf = np.zeros(nz, dtype=np.complex128)
        buf[idx] = w * np.exp(1j * tau * (j.astype(float) ** 2) / lam)
        out[i] = np.abs(scipy.fft.ifft(buf, norm="forward")).max()
    return out


def far_kernel_constant(params, level, n_dt=400, cube_index=None):
    """``sup_{1 < |t-s| <= 1/delta} |K| / (delta_K^{d(level-1)} (lam/delta)^{d/2})``, d = 1.

    The kernel carries the cutoff of one level ``level - 1`` cube and the
    factor ``max_s eta(delta s) eta(delta (s + dt)) = eta(delta dt)``.
    """
    if params.d != 1:
        raise ParameterError("far-kernel constant is implemented for d = 1")
    cubes = build_ladder(params)[level - 1]
    cube = cubes[len(cubes) // 2 if cube_index is None else cube_index]
    spec = KernelSpec(params, cube)
    dt = np.linspace(1.0, params.T, n_dt + 1)[1:]
    sup = kernel_sup_1d(spec, dt) * ETA(params.delta * dt)
    scale = params.delta_K ** (params.d * (level - 1)) * (params.lam / params.delta) ** (params.d / 2)
    return float(sup.max() / scale)


def envelope_constant(params, n_dt=400):
    """``sup |K| |t-s|^{1/2} / lam^{1/2}`` over ``1 <= |t-s| <= 1/delta`` without cutoff, d = 1."""
    if params.d != 1:
        raise ParameterError("envelope constant is implemented for d = 1")
    spec = KernelSpec(params, None, eta=False)
    dt = np.linspace(1.0, params.T, n_dt)
    sup = kernel_sup_1d(spec, dt)
    return float((sup * np.sqrt(dt) / math.sqrt(params.lam)).max())


@dataclass(frozen=True)
class TTStarReport:
    quotients: tuple
    max_quotient: float
    ratio: float
    q: float


def tt_star_quotient(spec, ensemble, grid):
    """Max of ``||S chi_Q(D) f||_{q_c} / ||f||_2`` over fields in the cutoff cube, and its ratio to ``lam^{1/q_c}``.

    Fields must lie in the level-``K`` cutoff cube, where ``chi_Q = 1``.
    """
    ensemble = list(ensemble)
    if not ensemble:
        raise ValueError("tt_star_quotient needs a non-empty ensemble")
    p = spec.params
    if spec.cutoff is None or spec.cutoff.level != p.K:
        raise ParameterError("tt_star_quotient needs a cutoff cube at level K")
    qs = []
    for f in ensemble:
        if not np.all(spec.cutoff.owns(f.nonzero().points)):
            raise ParameterError("ensemble field is not supported in the cutoff cube")
        if l2_norm(f) == 0:
            raise ValueError("zero field in ensemble")
        qs.append(strichartz_quotient(f, grid).quotient)
    mx = max(qs)
    return TTStarReport(tuple(qs), mx, mx / p.lam ** (1 / p.q_c), p.q_c)
