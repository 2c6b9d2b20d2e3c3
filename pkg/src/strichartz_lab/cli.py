"""Command-line entry point.

Exit codes: 0 success, 1 invariant or certificate failure, 2 configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import _accel
from .decomposition import broad_narrow_fields, height_split, upgrade_to_norms
from .errors import GridError, InvariantViolation, ParameterError, QuadratureError, SupportError
from .experiments import (
    EnsembleSpec,
    SweepConfig,
    audited_quotient,
    format_records,
    generate_ensemble,
    multiscale_audit,
    run_sweep,
)
from .kernels import KernelSpec, kernel_envelope, kernel_lattice, poisson_compare
from .lattice import LabParams, build_ladder, children, l2_norm, restrict_field
from .norms import spacetime_norm
from .propagator import SpaceTimeGrid, propagate_direct, propagate_fft
from .verify import run_checks

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class ConfigError(ParameterError):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def _take(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"config is missing {key!r}")
    return default


def _params(cfg):
    try:
        return LabParams.from_delta(
            int(_take(cfg, "n", 2)),
            int(_take(cfg, "lambda", required=True)),
            float(_take(cfg, "delta", required=True)),
            int(_take(cfg, "K", 1)),
            float(_take(cfg, "epsilon", 0.05)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ConfigError(str(exc)) from exc


def _ensemble(cfg, seed):
    spec = EnsembleSpec.from_dict(_take(cfg, "ensemble", {"kind": "random-gaussian"}))
    if seed is not None:
        spec = EnsembleSpec(spec.kind, spec.count, seed, spec.level, spec.k0)
    return spec


def _grid(cfg, params, args):
    over = args.oversample if args.oversample is not None else float(_take(cfg, "oversample", 2.0))
    return SpaceTimeGrid.from_rules(params, oversample=over, nx=_take(cfg, "nx"), nt=_take(cfg, "nt"))


def _write_text(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {out}: {exc.strerror}") from exc


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _rows_text(rows, fmt):
    if fmt == "jsonl":
        return "".join(json.dumps(r, default=float) + "\n" for r in rows)
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0])
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in keys])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_propagate(args, cfg):
    params = _params(cfg)
    grid = _grid(cfg, params, args)
    check = bool(_take(cfg, "check_direct", False))
    rows = []
    for i, f in enumerate(generate_ensemble(_ensemble(cfg, args.seed), params)):
        row = dict(field_id=i, nx=grid.nx, nt=grid.nt, l2_norm=l2_norm(f))
        rep, audit = audited_quotient(f, grid, rng=np.random.default_rng([args.seed or 0, i]), workers=args.threads)
        row.update(quotient=rep.quotient, rel_change=rep.rel_change, audit_points=audit.points,
                   audit_error=audit.sup_rel_error)
        if check:
            a, b = propagate_fft(f, grid).values, propagate_direct(f, grid).values
            err = float(np.abs(a - b).max() / np.abs(b).max()) if np.abs(b).max() else 0.0
            if err > 1e-10:
                raise InvariantViolation(f"field {i}: fft and direct paths differ by {err:.3e}")
            row["direct_error"] = err
        rows.append(row)
    _write_text(_rows_text(rows, args.format), args.out)


def cmd_kernel(args, cfg):
    params = _params(cfg)
    cut = _take(cfg, "cutoff")
    cube = None
    if cut is not None:
        level = int(cut.get("level", params.K))
        cubes = build_ladder(params)[level]
        idx = tuple(int(v) for v in np.atleast_1d(cut.get("index", [0] * params.d)))
        matches = [c for c in cubes if c.index == idx]
        if not matches:
            raise ConfigError(f"no cube with index {idx} at level {level}")
        cube = matches[0]
    spec = KernelSpec(params, cube)
    count = int(_take(cfg, "samples", 20))
    rng = np.random.default_rng(args.seed if args.seed is not None else _take(cfg, "seed", 0))
    lo, hi = _take(cfg, "dt_range", [1.0, params.T])
    poisson = bool(_take(cfg, "poisson", params.d == 1))
    rows = []
    for _ in range(count):
        s = float(rng.uniform(0, params.T - hi)) if hi < params.T else 0.0
        t = s + float(rng.uniform(lo, hi))
        x = rng.uniform(0, 2 * np.pi, params.d)
        y = rng.uniform(0, 2 * np.pi, params.d)
        k = complex(kernel_lattice(spec, x, t, y, s)[0])
        env = kernel_envelope(spec, t - s)
        row = dict(dz=";".join(repr(float(v)) for v in x - y), dt=t - s, re=k.real, im=k.imag, abs=abs(k),
                   envelope=env, ratio=abs(k) / env)
        if poisson and t - s >= 1:
            row["poisson_rel_error"] = poisson_compare(spec, x, t, y, s).rel_error
        rows.append(row)
    _write_text(_rows_text(rows, args.format), args.out)


def cmd_decompose(args, cfg):
    params = _params(cfg)
    grid = _grid(cfg, params, args)
    level = int(_take(cfg, "level", 1))
    C0 = float(_take(cfg, "C0", 1.0))
    if not 1 <= level <= params.K:
        raise ConfigError(f"level must lie in 1..{params.K}")
    rows = []
    violations = 0
    q = params.q_c
    for i, f in enumerate(generate_ensemble(_ensemble(cfg, args.seed), params)):
        for parent in build_ladder(params)[level - 1]:
            fp = restrict_field(f, parent)
            norm = l2_norm(fp)
            if norm == 0:
                continue
            u = propagate_fft(fp, grid)
            hs = height_split(u, level, C0, scale=norm)
            kids = children(parent)
            us = [propagate_fft(restrict_field(fp, c), grid) for c in kids]
            bn = broad_narrow_fields(us, kids)
            up = upgrade_to_norms(us, kids)
            violations += bn.violations + up.violations
            rows.append(dict(
                field_id=i, parent=";".join(map(str, parent.index)), level=level, threshold=hs.threshold,
                high_volume=hs.high.volume() / params.T, norm=spacetime_norm(u, q),
                norm_high=spacetime_norm(u, q, hs.high), norm_low=spacetime_norm(u, q, hs.low),
                broad_fraction=bn.n_broad / bn.lhs.size, certificate_violations=bn.violations,
                domination_violations=up.violations,
            ))
    _write_text(_rows_text(rows, args.format), args.out)
    if violations:
        raise InvariantViolation(f"{violations} pointwise certificate violations")


def cmd_sweep(args, cfg):
    if args.oversample is not None:
        cfg = dict(cfg, oversample=args.oversample)
    config = SweepConfig.from_dict(cfg)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    records = run_sweep(config, workers=args.threads)
    _write_text(format_records(records, args.format), args.out)


def cmd_audit(args, cfg):
    params = _params(cfg)
    grid = _grid(cfg, params, args)
    rows = []
    for i, f in enumerate(generate_ensemble(_ensemble(cfg, args.seed), params)):
        rep = multiscale_audit(f, params, grid)
        for lv in rep.levels:
            rows.append(dict(field_id=i, level=lv.level, parents=lv.parents, lhs_max=lv.lhs_max,
                             c_narrow=lv.c_narrow, c_broad=lv.c_broad, c_children=lv.c_children,
                             c_joint=lv.c_joint, K_condition=rep.K_condition,
                             broad_factor=rep.broad_factor, lam_eps=rep.lam_eps))
    _write_text(_rows_text(rows, args.format), args.out)


def cmd_verify(args, cfg):
    results = run_checks(args.seed or 0)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}\n" for name, ok, detail in results]
    _write_text("".join(lines), args.out)
    if not all(ok for _, ok, _ in results):
        raise InvariantViolation("invariant suite failed")


COMMANDS = {
    "propagate": (cmd_propagate, "propagate an ensemble, audit the fast path and report quotients"),
    "kernel": (cmd_kernel, "sample the TT* kernel against its envelope and the Poisson oracle"),
    "decompose": (cmd_decompose, "height split and broad/narrow certificates at one level"),
    "sweep": (cmd_sweep, "quotient sweep over dimensions and lambdas"),
    "audit": (cmd_audit, "multiscale constants per ladder level"),
    "verify": (cmd_verify, "run the invariant suite"),
}


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON config file")
    parser.add_argument("--seed", type=int, default=d, help="override ensemble seeds")
    parser.add_argument("--out", default=d, help="output path (default stdout)")
    parser.add_argument("--format", choices=("csv", "jsonl"), default=argparse.SUPPRESS if suppress else "csv")
    parser.add_argument("--threads", type=int, default=d, help="worker threads for JIT kernels and FFTs")
    parser.add_argument("--oversample", type=float, default=d, help="time oversampling factor (>= 2)")


def build_parser():
    parser = argparse.ArgumentParser(prog="strichartz-lab", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            _accel.set_threads(args.threads)
        cfg = _load_config(args.config)
        COMMANDS[args.command][0](args, cfg)
    except (InvariantViolation, QuadratureError) as exc:
        print(f"strichartz-lab: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ParameterError, GridError, SupportError) as exc:
        print(f"strichartz-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"strichartz-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
