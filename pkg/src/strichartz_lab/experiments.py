"""Ensembles, sweeps, scaling fits and the multiscale audit."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .bumps import eval_beta
from .decomposition import height_threshold
from .errors import InvariantViolation, ParameterError, QuadratureError
from .lattice import LabParams, LatticeField, build_ladder, children, l2_norm, restrict_field, separated_pairs
from .norms import strichartz_quotient
from .propagator import SpaceTimeGrid, propagate_points

__all__ = [
    "KINDS",
    "EnsembleSpec",
    "generate_ensemble",
    "delta_from_rule",
    "SweepConfig",
    "QuotientRecord",
    "RECORD_FIELDS",
    "AuditResult",
    "audited_quotient",
    "run_sweep",
    "ScalingFit",
    "fit_scaling",
    "LevelReport",
    "MultiscaleReport",
    "multiscale_audit",
    "emit",
    "read_records",
]

KINDS = ("random-gaussian", "single-frequency", "kernel-data", "cube-localized", "pair-localized")
_AUDIT_TAG = 7919


# ------------------------------------------------------------------ ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    """``level`` applies to the localized kinds (default ``K``); ``k0`` pins the single frequency."""

    kind: str
    count: int = 1
    seed: int = 0
    level: int | None = None
    k0: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown ensemble kind {self.kind!r}; expected one of {KINDS}")
        if self.count < 0:
            raise ParameterError("ensemble count must be non-negative")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("k0") is not None:
            d["k0"] = tuple(int(v) for v in np.atleast_1d(d["k0"]))
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown ensemble keys {sorted(unknown)}")
        return cls(**d)


def _rng(seed, params, kind, i, *extra):
    ss = np.random.SeedSequence([int(seed), params.n, params.lam, params.m * params.K, KINDS.index(kind), int(i), *extra])
    return np.random.default_rng(ss)


def _gaussian(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)


def _cube_points(params, level):
    return build_ladder(params)[level]


def generate_ensemble(spec, params):
    """Fields of one kind; field ``i`` draws from its own seed stream."""
    out = []
    lam, d = params.lam, params.d
    level = params.K if spec.level is None else spec.level
    if spec.kind in ("cube-localized", "pair-localized") and not 0 <= level <= params.K:
        raise ParameterError(f"ensemble level must lie in 0..{params.K}")
    for i in range(spec.count):
        rng = _rng(spec.seed, params, spec.kind, i)
        if spec.kind == "random-gaussian":
            axes = np.meshgrid(*[np.arange(-lam, lam + 1)] * d, indexing="ij")
            pts = np.stack([a.ravel() for a in axes], axis=1)
            f = LatticeField(params, pts, _gaussian(rng, pts.shape[0]), _checked=True)
        elif spec.kind == "single-frequency":
            k0 = spec.k0 if spec.k0 is not None else tuple(rng.integers(-lam, lam + 1, size=d))
            if len(k0) != d or max(abs(int(v)) for v in k0) > lam:
                raise ParameterError(f"single frequency {k0} is not a lattice point of the cube")
            f = LatticeField(params, np.array([k0], dtype=np.int64), np.array([1.0 + 0j]))
        elif spec.kind == "kernel-data":
            axes = np.meshgrid(*[np.arange(-2 * lam, 2 * lam + 1)] * d, indexing="ij")
            pts = np.stack([a.ravel() for a in axes], axis=1)
            f = LatticeField(params, pts, eval_beta(pts, lam).astype(np.complex128), _checked=True)
        elif spec.kind == "cube-localized":
            cubes = _cube_points(params, level)
            cube = cubes[int(rng.integers(len(cubes)))]
            pts = cube.owned_points()
            f = LatticeField(params, pts, _gaussian(rng, pts.shape[0]))
        else:
            pairs = separated_pairs(_cube_points(params, level)).unordered()
            if not pairs:
                raise ParameterError(f"no separated cube pairs at level {level}")
            pr = pairs[int(rng.integers(len(pairs)))]
            pts = np.concatenate([pr.first.owned_points(), pr.second.owned_points()])
            f = LatticeField(params, pts, _gaussian(rng, pts.shape[0]))
        out.append(f)
    return out


# --------------------------------------------------------------------- sweeps


def delta_from_rule(lam, K, rule):
    """``delta`` for one ``lam``.

    ``{"kind": "fixed", "delta": 0.125}`` or ``{"kind": "power", "a": 1/3,
    "epsilon": 0.05}``; the power rule takes the largest ``2^{-mK} <=
    lam^{-a+epsilon}`` with ``m >= 1``.
    """
    kind = rule.get("kind")
    if kind == "fixed":
        return float(rule["delta"])
    if kind == "power":
        a, eps = float(rule["a"]), float(rule.get("epsilon", 0.0))
        e = (a - eps) * math.log2(lam)
        j = max(K, K * math.ceil(e / K - 1e-12))
        return 2.0**-j
    raise ParameterError(f"unknown delta rule {rule!r}")


@dataclass(frozen=True)
class SweepConfig:
    dims: tuple = (2,)
    lambdas: tuple = (64,)
    delta_rule: dict = field(default_factory=lambda: {"kind": "fixed", "delta": 0.125})
    K: int = 1
    epsilon: float = 0.05
    C0: float = 1.0
    ensembles: tuple = (EnsembleSpec("kernel-data"),)
    oversample: float = 2.0
    audit_fraction: float = 0.01
    audit_cap: int = 2048
    audit_rtol: float = 1e-10
    record_runtime: bool = False
    max_refinements: int = 0
    seed: int | None = None

    def __post_init__(self):
        if not self.dims or not self.lambdas:
            raise ParameterError("sweep needs at least one dimension and one lambda")
        if self.oversample < 2:
            raise ParameterError("oversample must be >= 2")
        if self.max_refinements < 0:
            raise ParameterError("max_refinements must be non-negative")
        if not 0 < self.audit_fraction <= 1:
            raise ParameterError("audit_fraction must lie in (0, 1]")
        for n in self.dims:
            for lam in self.lambdas:
                self.params_for(n, lam)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown sweep keys {sorted(unknown)}")
        if "ensembles" in d:
            d["ensembles"] = tuple(EnsembleSpec.from_dict(e) for e in d["ensembles"])
        for key in ("dims", "lambdas"):
            if key in d:
                d[key] = tuple(int(v) for v in d[key])
        return cls(**d)

    def with_seed(self, seed):
        """Override every ensemble seed (and record it)."""
        ens = tuple(replace(e, seed=int(seed)) for e in self.ensembles)
        return replace(self, ensembles=ens, seed=int(seed))

    def params_for(self, n, lam):
        delta = delta_from_rule(lam, self.K, self.delta_rule)
        return LabParams.from_delta(n, lam, delta, self.K, self.epsilon)


@dataclass(frozen=True)
class QuotientRecord:
    n: int
    d: int
    lam: int
    delta: float
    K: int
    ell: int | None
    ensemble: str
    field_id: int
    quotient: float
    l2_norm: float
    high_volume: float
    nx: int
    nt: int
    runtime_ms: float | None = None

    def as_row(self):
        row = asdict(self)
        row["lambda"] = row.pop("lam")
        return {k: row[k] for k in RECORD_FIELDS}


RECORD_FIELDS = ("n", "d", "lambda", "delta", "K", "ell", "ensemble", "field_id", "quotient", "l2_norm",
                 "high_volume", "nx", "nt", "runtime_ms")


@dataclass(frozen=True)
class AuditResult:
    points: int
    sup_rel_error: float


def audited_quotient(f, grid, C0=1.0, level=1, audit_fraction=0.01, audit_cap=2048, audit_rtol=1e-10,
                     rng=None, workers=None):
    """Certified quotient plus a direct-summation audit of the streamed fast path.

    A random subset of ``min(cap, ceil(fraction * #grid points))`` samples of
    the reported grid is captured while streaming and recomputed by brute
    force; a sup-norm relative error above ``audit_rtol`` aborts.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    total = grid.nt * grid.n_space
    count = min(int(audit_cap), max(1, math.ceil(audit_fraction * total)))
    flat = np.sort(rng.choice(total, size=count, replace=False))
    ti, xi = np.divmod(flat, grid.n_space)
    fine_ti = 2 * ti
    captured = np.empty(count, dtype=np.complex128)

    def grab(i0, block):
        b = block.shape[0]
        lo, hi = np.searchsorted(fine_ti, [i0, i0 + b])
        if hi > lo:
            rows = block.reshape(b, -1)
            captured[lo:hi] = rows[fine_ti[lo:hi] - i0, xi[lo:hi]]

    thr = height_threshold(grid.params, level, C0) * l2_norm(f)
    rep = strichartz_quotient(f, grid, threshold=thr, on_block=grab, workers=workers)
    direct = propagate_points(f, grid.space_points(xi), ti * grid.dt)
    scale = np.abs(direct).max()
    err = float(np.abs(captured - direct).max() / scale) if scale else float(np.abs(captured).max())
    if not err <= audit_rtol:
        raise InvariantViolation(f"fast path failed the direct audit: sup relative error {err:.3e}")
    return rep, AuditResult(count, err)


def run_sweep(config, workers=None, progress=None):
    """Records ordered by (n, lambda, ensemble, field id).

    A field whose time-refinement certificate fails is retried on a grid with
    twice the oversampling, at most ``config.max_refinements`` times; the
    ``nt`` column records the grid actually used.  Without retries left the
    failure propagates and the sweep aborts.
    """
    records = []
    for n in config.dims:
        for lam in sorted(config.lambdas):
            params = config.params_for(n, lam)
            for ens in config.ensembles:
                for i, f in enumerate(generate_ensemble(ens, params)):
                    t0 = time.perf_counter()
                    over = config.oversample
                    for attempt in range(config.max_refinements + 1):
                        grid = SpaceTimeGrid.from_rules(params, oversample=over)
                        rng = _rng(ens.seed, params, ens.kind, i, _AUDIT_TAG)
                        try:
                            rep, _ = audited_quotient(f, grid, config.C0, 1, config.audit_fraction,
                                                      config.audit_cap, config.audit_rtol, rng, workers)
                            break
                        except QuadratureError:
                            if attempt == config.max_refinements:
                                raise
                            over *= 2
                    ms = (time.perf_counter() - t0) * 1e3 if config.record_runtime else None
                    rec = QuotientRecord(n, params.d, lam, params.delta, params.K, 1, ens.kind, i, rep.quotient,
                                         rep.l2, rep.high_volume, grid.nx, grid.nt, ms)
                    records.append(rec)
                    if progress is not None:
                        progress(rec)
    return records


# ----------------------------------------------------------------- fitting


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residuals: tuple
    x: tuple
    y: tuple


def fit_scaling(records, predictor="lambda"):
    """OLS of ``log(max quotient)`` per predictor value against ``log(predictor)``."""
    best = {}
    for r in records:
        row = r.as_row() if isinstance(r, QuotientRecord) else r
        key = float(row[predictor])
        best[key] = max(best.get(key, -math.inf), float(row["quotient"]))
    if len(best) < 3:
        raise ValueError(f"fit needs at least 3 distinct {predictor} values, got {len(best)}")
    xs = np.array(sorted(best))
    ys = np.array([best[x] for x in xs])
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive values")
    X = np.column_stack([np.ones(xs.size), np.log(xs)])
    coef, *_ = np.linalg.lstsq(X, np.log(ys), rcond=None)
    resid = np.log(ys) - X @ coef
    return ScalingFit(float(coef[1]), float(coef[0]), tuple(resid.tolist()), tuple(xs.tolist()), tuple(ys.tolist()))


# ------------------------------------------------------------ multiscale audit


@dataclass(frozen=True)
class LevelReport:
    """Worst instance constants over the parents at one level.

    ``c_narrow = LHS / (lam^{1/q_c} ||f_parent||)``, ``c_broad = LHS / broad``,
    ``c_children = LHS / (sum ||S f_child||^2)^(1/2)`` and ``c_joint =
    LHS / (all three summed)``.
    """

    level: int
    parents: int
    lhs_max: float
    c_narrow: float
    c_broad: float
    c_children: float
    c_joint: float


@dataclass(frozen=True)
class MultiscaleReport:
    levels: tuple
    K_condition: bool
    broad_factor_ok: bool
    broad_factor: float
    lam_eps: float


def multiscale_audit(f, params, grid, q=None):
    """Empirical constants of the one-step multiscale inequality for ``l = K, ..., 1``.

    For each parent cube at level ``l - 1`` with ``f_parent != 0``:
    ``LHS = ||S f_parent||_{q_c}`` against ``lam^{1/q_c} ||f_parent||``,
    the broad term ``lam^{d/(n q_c)} delta_K^{-3d/2} delta^{-(n+1)/(n q_c)}
    ||f_parent||`` and the children's ``(sum ||S f_tau||_{q_c}^2)^(1/2)``.
    Norms of every cube are computed once.
    """
    q = params.q_c if q is None else q
    n, d = params.n, params.d
    ladder = build_ladder(params)
    cache = {}

    def cube_norm(cube):
        key = (cube.level, cube.index)
        if key not in cache:
            g = restrict_field(f, cube)
            cache[key] = (strichartz_quotient(g, grid, q=q).norm if l2_norm(g) else 0.0, l2_norm(g))
        return cache[key]

    levels = []
    for ell in range(params.K, 0, -1):
        worst = dict(lhs=0.0, a=0.0, b=0.0, c=0.0, j=0.0)
        count = 0
        for parent in ladder[ell - 1]:
            lhs, l2 = cube_norm(parent)
            if l2 == 0:
                continue
            count += 1
            a = params.lam ** (1 / q) * l2
            b = (params.lam ** (d / (n * q)) * params.delta_K ** (-1.5 * d)
                 * params.delta ** (-(n + 1) / (n * q)) * l2)
            c = math.sqrt(sum(cube_norm(ch)[0] ** 2 for ch in children(parent)))
            worst["lhs"] = max(worst["lhs"], lhs)
            worst["a"] = max(worst["a"], lhs / a)
            worst["b"] = max(worst["b"], lhs / b)
            worst["c"] = max(worst["c"], lhs / c if c else math.inf)
            worst["j"] = max(worst["j"], lhs / (a + b + c))
        levels.append(LevelReport(ell, count, worst["lhs"], worst["a"], worst["b"], worst["c"], worst["j"]))
    factor = params.delta_K ** (-1.5 * d)
    lam_eps = params.lam**params.epsilon
    return MultiscaleReport(tuple(levels), 3 * d / (2 * params.K) < params.epsilon, factor <= lam_eps, factor,
                            lam_eps)


# -------------------------------------------------------------------- output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _rows(records):
    return [r.as_row() if isinstance(r, QuotientRecord) else dict(r) for r in records]


def format_records(records, fmt="csv"):
    rows = _rows(records)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in RECORD_FIELDS])
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps({k: row[k] for k in RECORD_FIELDS}) + "\n" for row in rows)
    raise ParameterError(f"unknown output format {fmt!r}")


def emit(records, path, fmt="csv"):
    text = format_records(records, fmt)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write records to {path}: {exc.strerror}") from exc
    return path


_INT_FIELDS = {"n", "d", "lambda", "K", "ell", "field_id", "nx", "nt"}
_FLOAT_FIELDS = {"delta", "quotient", "l2_norm", "high_volume", "runtime_ms"}


def _parse(k, v):
    if v == "" or v is None:
        return None
    if k in _INT_FIELDS:
        return int(v)
    if k in _FLOAT_FIELDS:
        return float(v)
    return v


def read_records(path, fmt=None):
    """Parse records back into :class:`QuotientRecord` (floats round-trip exactly)."""
    fmt = fmt or ("jsonl" if str(path).endswith(".jsonl") else "csv")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read records from {path}: {exc.strerror}") from exc
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    out = []
    for row in rows:
        vals = {k: _parse(k, row[k]) for k in RECORD_FIELDS}
        vals["lam"] = vals.pop("lambda")
        out.append(QuotientRecord(**vals))
    return out
