"""Fast invariant suite behind ``strichartz-lab verify``.

Each check runs at small parameters and returns ``(name, ok, detail)``.
"""

from __future__ import annotations

import math

import numpy as np

from .decomposition import broad_narrow_fields, height_split, upgrade_to_norms
from .experiments import EnsembleSpec, generate_ensemble
from .kernels import KernelSpec, kernel_lattice, kernel_lattice_direct, poisson_compare, truncated_split_apply
from .lattice import LabParams, build_ladder, children, l2_norm, restrict_field
from .norms import spacetime_norm, square_function
from .propagator import SpaceTimeField, SpaceTimeGrid, propagate_direct, propagate_fft

__all__ = ["CHECKS", "run_checks"]


def _random(params, count, seed):
    return generate_ensemble(EnsembleSpec("random-gaussian", count, seed), params)


def check_exact_cover(seed):
    worst = 0
    for d, lam in ((1, 32), (2, 16)):
        p = LabParams(d + 1, lam, 1, 3)
        axes = np.meshgrid(*[np.arange(-lam, lam + 1)] * d, indexing="ij")
        pts = np.stack([a.ravel() for a in axes], axis=1)
        for level in build_ladder(p):
            owners = sum(c.owns(pts).astype(int) for c in level)
            worst = max(worst, int(np.abs(owners - 1).max()))
    return worst == 0, f"max ownership defect {worst}"


def check_pythagoras(seed):
    worst = 0.0
    for d, lam in ((1, 64), (2, 16)):
        p = LabParams(d + 1, lam, 1, 3)
        f = _random(p, 1, seed)[0]
        tot = l2_norm(f) ** 2
        for level in build_ladder(p):
            s = sum(l2_norm(restrict_field(f, c)) ** 2 for c in level)
            worst = max(worst, abs(s - tot) / tot)
    return worst <= 1e-12, f"max relative defect {worst:.2e}"


def check_fft_direct(seed):
    p = LabParams(2, 32, 1, 3)
    g = SpaceTimeGrid.from_rules(p)
    worst = 0.0
    for f in _random(p, 3, seed):
        a, b = propagate_fft(f, g).values, propagate_direct(f, g).values
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    return worst <= 1e-10, f"sup relative error {worst:.2e}"


def check_parseval(seed):
    p = LabParams(2, 32, 1, 3)
    g = SpaceTimeGrid.from_rules(p)
    f = _random(p, 1, seed)[0]
    u = propagate_fft(f, g).rows()
    slice_l2 = np.sqrt(np.mean(np.abs(u) ** 2, axis=1))
    err = np.abs(slice_l2 - g.eta_values() * l2_norm(f)).max() / l2_norm(f)
    return err <= 1e-12, f"max slice defect {err:.2e}"


def check_broad_narrow(seed):
    viol = 0
    upg = 0
    for d, lam, m, K in ((1, 32, 1, 3), (2, 8, 1, 2)):
        p = LabParams(d + 1, lam, m, K)
        g = SpaceTimeGrid.from_rules(p)
        for f in _random(p, 2, seed):
            for parent in build_ladder(p)[:-1]:
                for cube in parent:
                    kids = children(cube)
                    us = [propagate_fft(restrict_field(f, c), g) for c in kids]
                    viol += broad_narrow_fields(us, kids).violations
                    upg += upgrade_to_norms(us, kids).violations
    return viol == 0 and upg == 0, f"{viol} certificate and {upg} domination violations"


def check_minkowski(seed):
    p = LabParams(2, 32, 1, 3)
    g = SpaceTimeGrid.from_rules(p)
    f = _random(p, 1, seed)[0]
    us = [propagate_fft(restrict_field(f, c), g) for c in build_ladder(p)[2]]
    lhs = spacetime_norm(square_function(us), 6)
    rhs = math.sqrt(sum(spacetime_norm(u, 6) ** 2 for u in us))
    return lhs <= rhs * (1 + 1e-10), f"||Sq|| / rhs = {lhs / rhs:.6f}"


def check_height_split(seed):
    p = LabParams(2, 32, 1, 3)
    g = SpaceTimeGrid.from_rules(p)
    f = _random(p, 1, seed)[0]
    u = propagate_fft(f, g)
    hs = height_split(u, 1, 0.5, scale=l2_norm(f))
    tot = spacetime_norm(u, 6) ** 6
    parts = spacetime_norm(u, 6, hs.high) ** 6 + spacetime_norm(u, 6, hs.low) ** 6
    err = abs(tot - parts) / tot
    return err <= 1e-10 and not np.any(hs.high.mask & hs.low.mask), f"norm split defect {err:.2e}"


def check_kernels(seed):
    rng = np.random.default_rng(seed)
    p2 = LabParams(3, 8, 1, 3)
    spec = KernelSpec(p2)
    x, y = rng.uniform(0, 2 * np.pi, (2, 20, 2))
    t, s = rng.uniform(0, 4, (2, 20))
    a, b = kernel_lattice(spec, x, t, y, s), kernel_lattice_direct(spec, x, t, y, s)
    fact = np.abs(a - b).max() / np.abs(b).max()
    p1 = LabParams(2, 64, 1, 3)
    spec1 = KernelSpec(p1)
    pois = max(
        poisson_compare(spec1, [rng.uniform(0, 2 * np.pi)], 1 + tt, [0.0], 0.0).rel_error
        for tt in rng.uniform(0, 7, 5)
    )
    ok = fact <= 1e-12 and pois <= 1e-6
    return ok, f"factorisation {fact:.2e}, Poisson {pois:.2e}"


def check_truncated_split(seed):
    p = LabParams(2, 16, 1, 2)
    g = SpaceTimeGrid(p, 65, 60)
    rng = np.random.default_rng(seed)
    field = SpaceTimeField(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    err = truncated_split_apply(KernelSpec(p), field).split_error
    return err <= 1e-10, f"near + far - full: {err:.2e}"


CHECKS = (
    ("exact cover", check_exact_cover),
    ("orthogonality", check_pythagoras),
    ("fft vs direct", check_fft_direct),
    ("parseval slices", check_parseval),
    ("broad/narrow certificates", check_broad_narrow),
    ("square-function minkowski", check_minkowski),
    ("height split", check_height_split),
    ("kernel factorisation and poisson", check_kernels),
    ("truncated split", check_truncated_split),
)


def run_checks(seed=0):
    out = []
    for name, fn in CHECKS:
        ok, detail = fn(seed)
        out.append((name, bool(ok), detail))
    return out
