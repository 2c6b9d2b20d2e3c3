"""Acceptance gate: one test per criterion, run at the stated tolerances.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from strichartz_lab.cli import main
from strichartz_lab.decomposition import broad_narrow_fields, narrow_constant, upgrade_to_norms
from strichartz_lab.experiments import EnsembleSpec, fit_scaling, generate_ensemble, read_records
from strichartz_lab.kernels import (
    KernelSpec,
    envelope_constant,
    far_kernel_constant,
    kernel_lattice,
    kernel_lattice_direct,
    poisson_compare,
    truncated_split_apply,
    tt_star_quotient,
)
from strichartz_lab.lattice import LabParams, build_ladder, children, l2_norm, restrict_field
from strichartz_lab.norms import spacetime_norm, square_function
from strichartz_lab.propagator import SpaceTimeField, SpaceTimeGrid, propagate_direct, propagate_fft

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _random(params, count, seed=0):
    return generate_ensemble(EnsembleSpec("random-gaussian", count, seed), params)


def _detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion(1, "fft path equals direct summation")
def test_oracle_equivalence(record_property):
    p = LabParams.from_delta(2, 64, 1 / 8, 3)
    grid = SpaceTimeGrid.from_rules(p, nx=1024)
    t0 = time.perf_counter()
    worst = 0.0
    for f in _random(p, 20):
        a, b = propagate_fft(f, grid).values, propagate_direct(f, grid).values
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"sup rel error {worst:.2e} (<= 1e-10), {elapsed:.1f} s (<= 30 s)")
    assert worst <= 1e-10
    assert elapsed <= 30


@pytest.mark.criterion(2, "Parseval on every time slice")
def test_parseval_slices(record_property):
    worst = 0.0
    for p in (LabParams.from_delta(2, 64, 1 / 8, 3), LabParams.from_delta(3, 16, 1 / 8, 3)):
        grid = SpaceTimeGrid.from_rules(p)
        eta = np.abs(grid.eta_values())
        for f in _random(p, 10, seed=2):
            rows = propagate_fft(f, grid).rows()
            slice_l2 = np.sqrt(np.mean(rows.real**2 + rows.imag**2, axis=1))
            nf = l2_norm(f)
            worst = max(worst, np.abs(slice_l2 - eta * nf).max() / nf)
    _detail(record_property, f"max slice defect {worst:.2e} (<= 1e-12)")
    assert worst <= 1e-12


@pytest.mark.criterion(3, "orthogonality of the cube partition")
def test_orthogonality(record_property):
    worst = 0.0
    cases = [(2, 64, 1 / 8, 3), (2, 256, 1 / 8, 3), (3, 16, 1 / 8, 3), (3, 256, 1 / 8, 3)]
    for n, lam, delta, K in cases:
        p = LabParams.from_delta(n, lam, delta, K)
        for f in _random(p, 2, seed=3):
            total = l2_norm(f) ** 2
            for level in build_ladder(p):
                s = math.fsum(l2_norm(restrict_field(f, c)) ** 2 for c in level)
                worst = max(worst, abs(s - total) / total)
    _detail(record_property, f"max relative defect {worst:.2e} (<= 1e-12)")
    assert worst <= 1e-12


@pytest.mark.criterion(4, "pointwise broad/narrow certificates")
def test_broad_narrow_certificates(record_property):
    violations = checked = 0
    for n, lam, delta, K in ((2, 16, 1 / 8, 3), (3, 8, 1 / 4, 2)):
        p = LabParams.from_delta(n, lam, delta, K)
        assert narrow_constant(p.d) == 5 ** (n - 1) + 1
        grid = SpaceTimeGrid.from_rules(p)
        ladder = build_ladder(p)
        for f in _random(p, 100, seed=4):
            for parents in ladder[:-1]:
                for parent in parents:
                    kids = children(parent)
                    us = [propagate_fft(restrict_field(f, c), grid) for c in kids]
                    rep = broad_narrow_fields(us, kids)
                    violations += rep.violations + upgrade_to_norms(us, kids).violations
                    checked += rep.lhs.size
    _detail(record_property, f"{violations} violations over {checked} point checks")
    assert violations == 0


@pytest.mark.criterion(5, "square-function Minkowski bound")
def test_square_function_minkowski(record_property):
    p = LabParams.from_delta(2, 32, 1 / 8, 3)
    grid = SpaceTimeGrid.from_rules(p)
    q = p.q_c
    assert q == 6
    worst = 0.0
    for f in _random(p, 50, seed=5):
        for level in build_ladder(p)[1:]:
            us = [propagate_fft(restrict_field(f, c), grid) for c in level]
            lhs = spacetime_norm(square_function(us), q)
            rhs = math.sqrt(math.fsum(spacetime_norm(u, q) ** 2 for u in us))
            worst = max(worst, lhs / rhs)
    _detail(record_property, f"max ||Sq|| / (sum ||S f_tau||^2)^(1/2) = {worst:.6f} (<= 1 + 1e-10)")
    assert worst <= 1 + 1e-10


@pytest.mark.criterion(6, "kernel factorisation, Poisson comparison, envelope stability")
def test_kernel_checks(record_property):
    rng = np.random.default_rng(6)
    p2 = LabParams.from_delta(3, 16, 1 / 8, 3)
    fact = 0.0
    for cutoff in (None, build_ladder(p2)[2][5]):
        spec = KernelSpec(p2, cutoff)
        x, y = rng.uniform(0, 2 * np.pi, (2, 30, 2))
        t, s = rng.uniform(0, p2.T, (2, 30))
        a, b = kernel_lattice(spec, x, t, y, s), kernel_lattice_direct(spec, x, t, y, s)
        fact = max(fact, np.abs(a - b).max() / np.abs(b).max())

    p1 = LabParams.from_delta(2, 64, 1 / 8, 3)
    spec1 = KernelSpec(p1)
    pois = 0.0
    for _ in range(50):
        dt = rng.uniform(1, p1.T)
        s = rng.uniform(0, p1.T - dt)
        x, y = rng.uniform(0, 2 * np.pi, 2)
        pois = max(pois, poisson_compare(spec1, [x], s + dt, [y], s).rel_error)

    consts = [envelope_constant(LabParams.from_delta(2, lam, 1 / 8, 3)) for lam in (256, 512, 1024)]
    steps = [b / a for a, b in zip(consts, consts[1:])]
    _detail(record_property, f"factorisation {fact:.2e} (<= 1e-12), Poisson {pois:.2e} (<= 1e-6), "
                             f"envelope constants {', '.join(f'{c:.3f}' for c in consts)}")
    assert fact <= 1e-12
    assert pois <= 1e-6
    assert all(0.5 <= r <= 2 for r in steps)


@pytest.mark.criterion(7, "truncated split and far-kernel constant")
def test_truncated_split(record_property):
    rng = np.random.default_rng(7)
    err = 0.0
    for p, nx, nt in ((LabParams.from_delta(2, 16, 1 / 8, 3), 65, 200), (LabParams.from_delta(3, 4, 1 / 4, 2), 17, 60)):
        grid = SpaceTimeGrid(p, nx, nt)
        g = SpaceTimeField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        for cutoff in (None, build_ladder(p)[1][0]):
            err = max(err, truncated_split_apply(KernelSpec(p, cutoff), g).split_error)

    worst = 0.0
    parts = []
    for level in (1, 2, 3):
        c = [far_kernel_constant(LabParams.from_delta(2, lam, 1 / 8, 3), level) for lam in (128, 256)]
        worst = max(worst, max(c) / min(c))
        parts.append(f"l={level}: {c[0]:.3f}/{c[1]:.3f}")
    _detail(record_property, f"split error {err:.2e} (<= 1e-10); far constants {', '.join(parts)}")
    assert err <= 1e-10
    assert worst <= 2


@pytest.mark.criterion(8, "smallest-scale quotient over lambda^(1/6)")
def test_smallest_scale_quotient(record_property):
    ratios = []
    for lam in (64, 128, 256):
        p = LabParams.from_delta(2, lam, 1 / 8, 3)
        grid = SpaceTimeGrid.from_rules(p, oversample=4)
        fields = generate_ensemble(EnsembleSpec("cube-localized", 8, seed=8, level=p.K), p)
        best = 0.0
        for cube in build_ladder(p)[p.K]:
            mine = [f for f in fields if np.all(cube.owns(f.points))]
            if mine:
                best = max(best, tt_star_quotient(KernelSpec(p, cube), mine, grid).ratio)
        ratios.append(best)
    spread = max(ratios) / min(ratios)
    _detail(record_property, f"ratios {', '.join(f'{r:.4f}' for r in ratios)}, spread {spread:.3f} (<= 2)")
    assert spread <= 2


@pytest.mark.slow
@pytest.mark.criterion(9, "scaling-consistency sweep")
def test_scaling_sweep(tmp_path, record_property):
    out = tmp_path / "sweep.csv"
    t0 = time.perf_counter()
    code = main(["sweep", "--config", str(CONFIGS / "acceptance_sweep.json"), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    records = read_records(out)
    lams = sorted({r.lam for r in records})
    assert lams == [128, 256, 512, 1024, 2048]
    assert all(sum(r.lam == lam for r in records) == 21 for lam in lams)
    fit = fit_scaling(records)
    _detail(record_property, f"slope {fit.slope:.4f} (<= {1 / 6 + 0.05:.4f}), runtime {elapsed / 60:.1f} min (<= 60)")
    assert fit.slope <= 1 / 6 + 0.05
    assert elapsed <= 3600


@pytest.mark.criterion(10, "byte-identical sweep output")
def test_determinism(tmp_path, record_property):
    cfg = json.loads((CONFIGS / "sweep.json").read_text())
    cfg["lambdas"] = [32, 64]
    cfg["delta_rule"] = {"kind": "fixed", "delta": 0.125}
    cfg["ensembles"] = [{"kind": "kernel-data"}, {"kind": "random-gaussian", "count": 3, "seed": 11}]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        assert main(["sweep", "--config", str(path), "--seed", "1234", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    _detail(record_property, f"{len(outs[0])} bytes per run, identical={outs[0] == outs[1]}")
    assert outs[0] == outs[1]
    assert outs[0].count(b"\n") == 1 + 2 * 4
