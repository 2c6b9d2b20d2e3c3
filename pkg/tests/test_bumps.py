import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strichartz_lab.bumps import CHI, ETA, PHI, eval_beta, eval_chi_cube, h, make_profile, ramp
from strichartz_lab.lattice import LabParams, build_ladder

reals = st.floats(-5, 5, allow_nan=False)


def test_phi_examples():
    assert PHI(0.5) == 1.0
    assert PHI(2.1) == 0.0
    assert PHI(1.0) == 1.0
    assert PHI(2.0) == 0.0
    assert PHI(1.5) == 0.5
    # h(3/4) / (h(3/4) + h(1/4)) evaluated by hand
    expect = math.exp(-4 / 3) / (math.exp(-4 / 3) + math.exp(-4))
    assert PHI(1.25) == pytest.approx(expect, rel=1e-15)
    assert PHI(1.25) == pytest.approx(0.935030830871336, rel=1e-15)


def test_eta_and_chi_contracts():
    assert ETA(0.5) == 1.0
    assert ETA(-0.5) == 1.0
    assert ETA(1.0) == 0.0
    assert 0 < ETA(0.75) < 1
    assert ETA(0.75) == PHI(1.5)
    assert CHI(1.3) == PHI(1.3)
    assert make_profile("eta") is ETA
    with pytest.raises(ValueError):
        make_profile("psi")


def test_h_cutoff_convention():
    assert h(1e-13) == 0.0
    assert h(0.0) == 0.0
    assert h(-1.0) == 0.0
    assert h(1.0) == math.exp(-1.0)
    assert ramp(0.0) == 1.0
    assert ramp(1.0) == 0.0


@given(reals)
def test_profiles_even_and_bounded(x):
    for prof in (PHI, ETA, CHI):
        v = prof(x)
        assert prof(-x) == v
        assert 0.0 <= v <= 1.0
        if abs(x) <= prof.plateau:
            assert v == 1.0
        if abs(x) >= prof.support:
            assert v == 0.0


@given(st.floats(1.0, 2.0), st.floats(1.0, 2.0))
def test_phi_monotone_on_ramp(a, b):
    lo, hi = min(a, b), max(a, b)
    assert PHI(lo) >= PHI(hi)


def test_flat_contact():
    # all derivatives vanish at the ramp ends: values approach the plateau faster than any power
    for eps in (1e-2, 5e-3):
        assert 1 - PHI(1 + eps) < eps**6
        assert PHI(2 - eps) < eps**6


def test_eval_beta():
    lam = 16
    assert eval_beta([3.0, -16.0], lam) == 1.0
    assert eval_beta([2.5 * lam, 0.0], lam) == 0.0
    assert eval_beta([1.5 * lam, 0.0, 0.0], lam) == PHI(1.5)
    pts = np.array([[0.0, 0.0], [20.0, 24.0]])
    assert np.allclose(eval_beta(pts, lam), [1.0, PHI(20 / 16) * PHI(24 / 16)], rtol=0, atol=0)


def test_eval_chi_cube():
    p = LabParams(3, 16, 1, 2)
    cube = build_ladder(p)[1][0]
    c = np.array(cube.center, dtype=float)
    hs = cube.half_side
    assert eval_chi_cube(c, cube) == 1.0
    assert eval_chi_cube(c + np.array([2.5 * hs, 0]), cube) == 0.0
    assert eval_chi_cube(c + np.array([1.5 * hs, 0]), cube) == CHI(1.5)


def test_chi_is_identity_on_owned_points():
    p = LabParams(3, 16, 1, 3)
    for level in build_ladder(p):
        for cube in level:
            assert np.all(eval_chi_cube(cube.owned_points(), cube) == 1.0)


def test_beta_transparent_on_cube():
    p = LabParams(3, 16, 1, 1)
    axes = np.meshgrid(*[np.arange(-16, 17)] * 2, indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    assert np.all(eval_beta(pts, p.lam) == 1.0)


def _rescaled_derivative_sups(cube, order=4):
    hs = cube.half_side
    step = hs / 64
    xi = cube.center[0] + np.arange(-3 * hs, 3 * hs, step)
    vals = eval_chi_cube(xi[:, None], cube)
    out = []
    for k in range(1, order + 1):
        vals = np.diff(vals) / step
        out.append(np.abs(vals).max() * hs**k)
    return np.array(out)


def test_chi_derivative_scaling():
    # sup |d^k chi_tau| (lam delta_K^l)^k does not depend on the level
    p = LabParams(2, 256, 1, 3)
    sups = [_rescaled_derivative_sups(build_ladder(p)[level][0]) for level in (1, 2, 3)]
    assert np.all(np.isfinite(sups[0]))
    for s in sups[1:]:
        assert np.allclose(s, sups[0], rtol=1e-9, atol=0)
