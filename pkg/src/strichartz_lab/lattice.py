"""Frequency-space geometry: parameters, the cube ladder, and lattice fields.

The frequency cube is ``Q = [-lam, lam]^d``.  Level ``l`` of the ladder splits
it into ``2**(m*l)`` cubes per axis of side ``2 * lam * 2**(-m*l)``.  Lattice
points are assigned to cubes half-open per axis (``[lo, hi)``), except that
cubes touching the global top face ``+lam`` also own it, so every lattice
point of ``Q`` has exactly one owner per level.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._compute import tree_sum
from .errors import ParameterError, SupportError

__all__ = [
    "LabParams",
    "FrequencyCube",
    "LatticeField",
    "CubePair",
    "CubePairSet",
    "build_ladder",
    "children",
    "restrict_field",
    "separated_pairs",
    "separation_matrix",
    "l2_norm",
]


def _is_pow2(v):
    return v >= 1 and (v & (v - 1)) == 0


@dataclass(frozen=True)
class LabParams:
    """Global parameter bundle.

    ``delta = 2**(-m*K)`` and ``delta_K = delta**(1/K) = 2**(-m)`` exactly.
    """

    n: int
    lam: int
    m: int
    K: int
    epsilon: float = 0.05

    def __post_init__(self):
        for name in ("n", "lam", "m", "K"):
            if not isinstance(getattr(self, name), (int, np.integer)):
                raise ParameterError(f"{name} must be an integer, got {getattr(self, name)!r}")
        if self.n < 2:
            raise ParameterError(f"space-time dimension n must be >= 2, got {self.n}")
        if not _is_pow2(self.lam) or self.lam < 2:
            raise ParameterError(f"lambda must be a power of two >= 2, got {self.lam}")
        if self.m < 1 or self.K < 1:
            raise ParameterError(f"need m >= 1 and K >= 1, got m={self.m}, K={self.K}")
        if self.m * self.K > int(math.log2(self.lam)):
            raise ParameterError(
                f"lambda*delta = {self.lam}*2^-{self.m * self.K} < 1: "
                "smallest cubes would be sub-lattice"
            )
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def from_delta(cls, n, lam, delta, K, epsilon=0.05):
        """Build from ``delta``, which must equal ``2**(-m*K)`` for an integer ``m >= 1``."""
        if not delta > 0:
            raise ParameterError(f"delta must be positive, got {delta}")
        e = -math.log2(delta)
        ie = round(e)
        if abs(e - ie) > 1e-12 or ie < 1:
            raise ParameterError(f"delta must be 2^-j with j >= 1, got {delta}")
        if ie % K:
            raise ParameterError(f"delta = 2^-{ie} is not of the form 2^-(m*K) with K={K}")
        return cls(n=n, lam=lam, m=ie // K, K=K, epsilon=epsilon)

    @property
    def d(self):
        return self.n - 1

    @property
    def delta(self):
        return 2.0 ** (-self.m * self.K)

    @property
    def delta_K(self):
        return 2.0 ** (-self.m)

    @property
    def T(self):
        """Length of the time window ``[0, 1/delta]``."""
        return 2.0 ** (self.m * self.K)

    @property
    def q_c(self):
        return 2.0 * (self.n + 1) / (self.n - 1)

    @property
    def q_c_is_even_integer(self):
        q = 2 * (self.n + 1)
        return q % (self.n - 1) == 0 and (q // (self.n - 1)) % 2 == 0

    @property
    def bilinear_q(self):
        return 2.0 * (self.n + 2) / self.n

    def half_side(self, level):
        """``lam * delta_K**level``: an integer for every admissible level."""
        self._check_level(level)
        return self.lam >> (self.m * level)

    def side(self, level):
        return 2 * self.half_side(level)

    def cubes_per_axis(self, level):
        self._check_level(level)
        return 1 << (self.m * level)

    def _check_level(self, level):
        if not 0 <= level <= self.K:
            raise ParameterError(f"level must lie in 0..{self.K}, got {level}")

    def replace(self, **kw):
        vals = dict(n=self.n, lam=self.lam, m=self.m, K=self.K, epsilon=self.epsilon)
        vals.update(kw)
        return LabParams(**vals)


@dataclass(frozen=True)
class FrequencyCube:
    """Axis-parallel cube at ladder ``level`` with integer grid ``index`` per axis."""

    params: LabParams
    level: int
    index: tuple

    def __post_init__(self):
        per = self.params.cubes_per_axis(self.level)
        if len(self.index) != self.params.d or not all(0 <= i < per for i in self.index):
            raise ParameterError(f"cube index {self.index} invalid at level {self.level}")

    @property
    def side(self):
        return self.params.side(self.level)

    @property
    def half_side(self):
        return self.params.half_side(self.level)

    @property
    def lo(self):
        s = self.side
        return tuple(-self.params.lam + i * s for i in self.index)

    @property
    def hi(self):
        s = self.side
        return tuple(lo + s for lo in self.lo)

    @property
    def center(self):
        return tuple(lo + self.half_side for lo in self.lo)

    def owns(self, points):
        """Boolean mask of the lattice points owned by this cube."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        last = self.params.cubes_per_axis(self.level) - 1
        ok = np.ones(pts.shape[0], dtype=bool)
        for a, (lo, hi, i) in enumerate(zip(self.lo, self.hi, self.index)):
            p = pts[:, a]
            inside = (p >= lo) & (p < hi)
            if i == last:
                inside |= p == hi
            ok &= inside
        return ok

    def owned_points(self):
        axes = []
        last = self.params.cubes_per_axis(self.level) - 1
        for lo, hi, i in zip(self.lo, self.hi, self.index):
            axes.append(np.arange(lo, hi + 1 if i == last else hi))
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def contains_cube(self, other):
        if other.level < self.level:
            return False
        r = other.level - self.level
        return tuple(i >> (self.params.m * r) for i in other.index) == self.index

    def chebyshev_distance(self, other):
        return max(abs(a - b) for a, b in zip(self.center, other.center))


def build_ladder(params):
    """All cube partitions, one list per level ``0..K`` (row-major index order)."""
    if params.half_side(params.K) < 1:
        raise ParameterError("lambda * delta < 1: cubes at level K would be sub-lattice")
    ladder = []
    for level in range(params.K + 1):
        per = params.cubes_per_axis(level)
        ladder.append(
            [FrequencyCube(params, level, idx) for idx in itertools.product(range(per), repeat=params.d)]
        )
    return ladder


def children(cube):
    """The ``delta_K**-(n-1)`` level ``l+1`` cubes inside ``cube``."""
    p = cube.params
    if cube.level >= p.K:
        return []
    r = 1 << p.m
    ranges = [range(i * r, (i + 1) * r) for i in cube.index]
    return [FrequencyCube(p, cube.level + 1, idx) for idx in itertools.product(*ranges)]


@dataclass(frozen=True)
class CubePair:
    first: FrequencyCube
    second: FrequencyCube
    distance: int


@dataclass(frozen=True)
class CubePairSet:
    """Separated cube pairs at one level, listed in both orientations."""

    level: int
    pairs: tuple
    threshold: int

    def unordered(self):
        return [pr for pr in self.pairs if pr.first.index < pr.second.index]

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, item):
        a, b = item
        return any(pr.first == a and pr.second == b for pr in self.pairs)


def separated_pairs(cubes):
    """Pairs whose centers are at Chebyshev distance ``>= 2 * side``."""
    cubes = list(cubes)
    if not cubes:
        return CubePairSet(level=0, pairs=(), threshold=0)
    level = cubes[0].level
    thr = 2 * cubes[0].side
    out = []
    for a in cubes:
        for b in cubes:
            if a is b or a == b:
                continue
            dist = a.chebyshev_distance(b)
            if dist >= thr:
                out.append(CubePair(a, b, dist))
    return CubePairSet(level=level, pairs=tuple(out), threshold=thr)


def separation_matrix(cubes):
    cubes = list(cubes)
    if not cubes:
        return np.zeros((0, 0), dtype=bool)
    centers = np.array([c.center for c in cubes], dtype=np.int64)
    dist = np.abs(centers[:, None, :] - centers[None, :, :]).max(axis=-1)
    return dist >= 2 * cubes[0].side


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Fourier coefficients on integer lattice points, stored as sorted COO arrays.

    Points must lie in the support box of the frequency cutoff,
    ``[-2*lam, 2*lam]^d``.  Most operations in the ladder machinery further
    require the points to lie in ``[-lam, lam]^d``.
    """

    params: LabParams
    points: np.ndarray
    values: np.ndarray
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        d = self.params.d
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, d)
        vals = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("points and values must have equal length")
        if pts.size and np.abs(pts).max() > 2 * self.params.lam:
            raise SupportError(f"lattice points outside [-2*lam, 2*lam]^{d}")
        if not self._checked and pts.shape[0]:
            order = np.lexsort(pts.T[::-1])
            pts, vals = pts[order], vals[order]
            dup = np.all(pts[1:] == pts[:-1], axis=1)
            if dup.any():
                raise ValueError("duplicate lattice points")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite coefficients")
        pts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, params):
        return cls(params, np.zeros((0, params.d), dtype=np.int64), np.zeros(0, dtype=np.complex128))

    @classmethod
    def from_mapping(cls, params, mapping):
        keys = list(mapping)
        pts = np.array([np.atleast_1d(k) for k in keys], dtype=np.int64).reshape(-1, params.d)
        vals = np.array([mapping[k] for k in keys], dtype=np.complex128)
        return cls(params, pts, vals)

    @classmethod
    def from_dense(cls, params, array, radius=None):
        """From a dense array indexed by ``k + radius`` on every axis."""
        arr = np.asarray(array, dtype=np.complex128)
        if radius is None:
            radius = (arr.shape[0] - 1) // 2
        if arr.shape != (2 * radius + 1,) * params.d:
            raise ValueError(f"dense array must have shape {(2 * radius + 1,) * params.d}")
        axes = np.meshgrid(*[np.arange(-radius, radius + 1)] * params.d, indexing="ij")
        pts = np.stack([a.ravel() for a in axes], axis=1)
        return cls(params, pts, arr.ravel(), _checked=True)

    @cached_property
    def _index(self):
        return {tuple(p): i for i, p in enumerate(self.points.tolist())}

    def __getitem__(self, k):
        i = self._index.get(tuple(np.atleast_1d(k).tolist()))
        return 0j if i is None else self.values[i]

    def __len__(self):
        return self.values.shape[0]

    def to_dense(self, radius=None):
        lam = self.params.lam
        radius = lam if radius is None else radius
        if len(self) and np.abs(self.points).max() > radius:
            raise SupportError(f"support exceeds radius {radius}")
        out = np.zeros((2 * radius + 1,) * self.params.d, dtype=np.complex128)
        if len(self):
            out[tuple((self.points + radius).T)] = self.values
        return out

    def with_values(self, values):
        return LatticeField(self.params, self.points, values, _checked=True)

    def scale(self, c):
        return self.with_values(self.values * c)

    def subset(self, mask):
        return LatticeField(self.params, self.points[mask], self.values[mask], _checked=True)

    def nonzero(self):
        return self.subset(self.values != 0)

    def modulate(self, x0):
        """Multiply each coefficient by ``exp(i k . x0)``."""
        x0 = np.asarray(x0, dtype=float).reshape(self.params.d)
        return self.with_values(self.values * np.exp(1j * (self.points @ x0)))

    def in_box(self, radius):
        return not len(self) or int(np.abs(self.points).max()) <= radius

    def require_box(self, radius, what="operation"):
        if not self.in_box(radius):
            raise SupportError(f"{what} needs support in [-{radius}, {radius}]^{self.params.d}")


def restrict_field(f, cube):
    """Keep the coefficients on lattice points owned by ``cube``."""
    if cube.params != f.params:
        raise ParameterError("cube and field come from different parameter sets")
    return f.subset(cube.owns(f.points))


def l2_norm(f):
    if not len(f):
        return 0.0
    v = f.values
    return math.sqrt(float(tree_sum(v.real * v.real + v.imag * v.imag)))
