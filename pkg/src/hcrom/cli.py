"""Command-line harness: ``hcrom {solve,basis,study,surrogate,pbdw,estimate}``."""

import argparse
import csv
import logging
import math
import os
import sys as _sys

import numpy as np

from . import plotting
from .config import PRESETS, load_config, resolve_axes, sampling_spec
from .errors import ConfigError, NumericalError
from .inverse import (build_pbdw, build_suite, estimate_params, inverse_error, pbdw_reconstruct,
                      read_measurements, write_measurements)
from .mesh import build_system, framing_constants, make_partition
from .param import format_param, parse_param
from .reduced_basis import error_study, h10_project, load_basis, make_training_set, save_basis, select
from .solver import h10_norm, save_field, solve_full, solve_many, y_norm
from .surrogate import surrogate_study

log = logging.getLogger("hcrom")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    """Rows of dicts (or sequences) with floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for r in rows:
            vals = [r[h] for h in header] if isinstance(r, dict) else r
            out.writerow([_fmt(v) for v in vals])
    log.info("wrote %s", path)


def _system(cfg, geometry=None):
    return build_system(geometry or cfg["geometry"], cfg["cells_per_side"], cfg["source"])


def _solve_kw(cfg):
    return {"tol": cfg["tol"], "backend": cfg["backend"]}


def _training(cfg, sys, key="training", offset=0):
    return make_training_set(sampling_spec(cfg, key, sys.d, sys.partition, seed_offset=offset))


# ----------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg, out, y=None):
    sys = _system(cfg)
    y = parse_param(y or cfg["y"])
    u = solve_full(sys, y, **_solve_kw(cfg))
    save_field(os.path.join(out, "u.txt"), sys, u, comment=f"y={format_param(y)}")
    c_f, C_f = framing_constants(sys)
    rows = [("h10_norm", float(h10_norm(sys, u))),
            ("y_norm", float(y_norm(sys, u, y))),
            ("load_times_u", float(sys.F @ u)),
            ("C_f", C_f),
            ("c_f", c_f),
            ("n_dofs", sys.n_dofs)]
    write_csv(os.path.join(out, "norms.csv"), ["quantity", "value"], rows)
    plotting.field(os.path.join(out, "u.svg"), sys.mesh, u, title=f"u({format_param(y)})")
    return rows


def _selection_rows(rb):
    errs = list(rb.max_errors) + [math.nan] * (len(rb.params) - len(rb.max_errors))
    return [(i + 1, format_param(y), e) for i, (y, e) in enumerate(zip(rb.params, errs))]


def cmd_basis(cfg, out):
    sys = _system(cfg)
    train = _training(cfg, sys)
    b = cfg["basis"]
    n = min(b["n"], len(train))
    rb = select(b["strategy"], sys, train, n, seed=cfg["seed"], threads=cfg["threads"])
    target = os.path.join(out, b["dir"])
    save_basis(rb, sys, target)
    write_csv(os.path.join(out, "selection.csv"), ["step", "params", "max_rel_err"], _selection_rows(rb))
    return rb


def _decay_constant(errors, floor=1e-12):
    """Slope ``c`` of a least-squares fit ``log err = a - c n`` over errors above ``floor``."""
    e = np.asarray(errors, dtype=float)
    n = np.arange(1, e.size + 1)
    keep = e > floor
    if keep.sum() < 2:
        return math.nan
    return float(-np.polyfit(n[keep], np.log(e[keep]), 1)[0])


def cmd_study(cfg, out):
    if "sweep" in cfg:
        return _study_sweep(cfg, out)
    sys = _system(cfg)
    train = _training(cfg, sys)
    test = _training(cfg, sys, "test", offset=1)
    kw = {"threads": cfg["threads"]}
    truth_train = solve_many(sys, train.params, **kw)
    truth_test = solve_many(sys, test.params, **kw)
    n_max = min(cfg["n_max"], len(train))
    rows, curves = [], {}
    for strategy in cfg["strategies"]:
        rb = select(strategy, sys, train, n_max, seed=cfg["seed"], truth=truth_train, **kw)
        eg = error_study(rb, sys, test, "galerkin", truth=truth_test)
        eh = error_study(rb, sys, test, "h10", truth=truth_test)
        conds = [float(np.linalg.cond(rb.truncated(sys, n).S_hat)) for n in range(1, len(eg) + 1)]
        for n, (a, b, c) in enumerate(zip(eg, eh, conds), start=1):
            rows.append(dict(strategy=strategy, n=n, max_rel_err_galerkin=a, max_rel_err_h10=b,
                             cond_S_hat=c))
        curves[strategy] = (np.arange(1, len(eg) + 1), eg, eh)
    write_csv(os.path.join(out, "study.csv"),
              ["strategy", "n", "max_rel_err_galerkin", "max_rel_err_h10", "cond_S_hat"], rows)
    plotting.error_curves(os.path.join(out, "study.svg"), curves, title=cfg.get("name", ""))
    return rows


def _study_sweep(cfg, out):
    sw = cfg["sweep"]
    Ts = sw.get("T", [10])
    rows, fits, panels = [], [], {}
    for geo in sw["geometries"]:
        sys = _system(cfg, geo)
        panels[geo] = {}
        for i, d in enumerate(sw["dims"]):
            if d > sys.d:
                raise ConfigError(f"sweep dimension {d} exceeds the {sys.d} subdomains of {geo}")
            T = Ts[min(i, len(Ts) - 1)]
            spec = {"kind": "grid", "T": T, "d": sys.d, "active": list(range(d))}
            train = make_training_set(spec)
            rb = select("greedy-galerkin", sys, train, min(cfg["n_max"], len(train)),
                        seed=cfg["seed"], threads=cfg["threads"])
            err = np.array(rb.max_errors)
            for n, e in enumerate(err, start=1):
                rows.append(dict(geometry=geo, d=d, n=n, max_rel_err_galerkin=e))
            fits.append(dict(geometry=geo, d=d, training_size=len(train), decay_constant=_decay_constant(err)))
            panels[geo][d] = (np.arange(1, err.size + 1), err)
    write_csv(os.path.join(out, "sweep.csv"), ["geometry", "d", "n", "max_rel_err_galerkin"], rows)
    write_csv(os.path.join(out, "sweep_fit.csv"), ["geometry", "d", "training_size", "decay_constant"], fits)
    plotting.sweep_curves(os.path.join(out, "sweep.svg"), panels)
    return fits


def cmd_surrogate(cfg, out):
    sys = _system(cfg)
    active = resolve_axes(cfg["active"], sys.partition)
    test = _training(cfg, sys, "test", offset=1)
    try:
        rows = surrogate_study(sys, cfg["k"], test, C0=cfg["C0"], active=active, threads=cfg["threads"])
    except ValueError as exc:
        if "cover too large" in str(exc):
            raise ConfigError(str(exc)) from None
        raise
    header = ["k", "L", "n", "rectangle", "max_rel_err_h10", "max_rel_err_galerkin", "ratio_h10"]
    write_csv(os.path.join(out, "surrogate.csv"), header, rows)
    plotting.surrogate_curves(os.path.join(out, "surrogate.svg"), rows)
    return rows


def _load_archive(cfg, sys, out, basis_dir):
    path = basis_dir or os.path.join(out, cfg["basis"]["dir"])
    try:
        return load_basis(sys, path)
    except FileNotFoundError as exc:
        raise ConfigError(f"{exc}; or pass --basis DIR") from None
    except ValueError as exc:
        raise ConfigError(f"basis archive {path}: {exc}") from None


def _noisy(w, delta, rng):
    if delta <= 0:
        return w
    xi = rng.standard_normal(w.shape)
    return w + delta * np.linalg.norm(w) * xi / np.linalg.norm(xi)


def _cases(cfg, sys, y, measurements):
    """``(label, y_true or None, w)`` triples for the reconstruction commands."""
    if measurements is not None:
        return [("file", None, read_measurements(measurements))]
    if y is not None:
        truths = [parse_param(y)]
    else:
        p = cfg["pbdw"]
        truths = [parse_param(t) for t in p.get("truth", [])]
        rng = np.random.default_rng(cfg["seed"])
        lo, hi = p["range"]
        for _ in range(p.get("random", 0)):
            truths.append(parse_param(",".join(
                repr(float(v)) for v in 10.0 ** rng.uniform(math.log10(lo), math.log10(hi), sys.d))))
    if not truths:
        raise ConfigError("no truth parameters: pass --y, --measurements, or set pbdw.truth / pbdw.random")
    return [(str(i), t, None) for i, t in enumerate(truths)]


def _reconstruction_setup(cfg, out, basis_dir):
    sys = _system(cfg)
    rb = _load_archive(cfg, sys, out, basis_dir)
    suite = build_suite(sys, cfg["sensors"])
    return sys, rb, suite, build_pbdw(sys, rb, suite)


def cmd_pbdw(cfg, out, y=None, measurements=None, basis_dir=None, noise=None):
    sys, rb, suite, p = _reconstruction_setup(cfg, out, basis_dir)
    delta = cfg["pbdw"].get("noise", 0.0) if noise is None else noise
    rng = np.random.default_rng(cfg["seed"] + 7)
    cases = _cases(cfg, sys, y, measurements)
    rows = []
    for label, yt, w in cases:
        u = None
        if yt is not None:
            u = solve_full(sys, yt, **_solve_kw(cfg))
            w = _noisy(suite.measure(u), delta, rng)
        u_star, v_star = pbdw_reconstruct(p, w)
        row = dict(case=label, y_true="" if yt is None else format_param(yt), n=p.n, m=p.m, mu_n=p.mu_n,
                   noise=delta, rel_err_u_star=math.nan, rel_err_v_star=math.nan, rel_dist_Vn=math.nan,
                   max_data_misfit=float(np.max(np.abs(suite.measure(u_star) - w))))
        if u is not None:
            nu = float(h10_norm(sys, u))
            proj = h10_project(rb, u)
            row.update(rel_err_u_star=float(h10_norm(sys, u - u_star)) / nu,
                       rel_err_v_star=float(h10_norm(sys, u - v_star)) / nu,
                       rel_dist_Vn=float(h10_norm(sys, u - proj)) / nu)
        rows.append(row)
        if len(cases) == 1:
            save_field(os.path.join(out, "u_star.txt"), sys, u_star)
            save_field(os.path.join(out, "v_star.txt"), sys, v_star)
            write_measurements(os.path.join(out, "measurements.csv"), w)
    header = ["case", "y_true", "n", "m", "mu_n", "noise", "rel_err_u_star", "rel_err_v_star",
              "rel_dist_Vn", "max_data_misfit"]
    write_csv(os.path.join(out, "pbdw.csv"), header, rows)
    if any(not math.isnan(r["rel_err_u_star"]) for r in rows):
        plotting.pbdw_errors(os.path.join(out, "pbdw.svg"), rows)
    return rows


def _component_error(diff, ref):
    """``|s_j - 1/y_j| * y_j``, or the absolute deviation ``|s_j|`` when ``y_j = inf``."""
    return diff / ref if ref > 0 else diff


def cmd_estimate(cfg, out, y=None, measurements=None, basis_dir=None, noise=None):
    sys, rb, suite, p = _reconstruction_setup(cfg, out, basis_dir)
    delta = cfg["pbdw"].get("noise", 0.0) if noise is None else noise
    rng = np.random.default_rng(cfg["seed"] + 7)
    rows, summary = [], []
    for label, yt, w in _cases(cfg, sys, y, measurements):
        if yt is not None:
            w = _noisy(suite.measure(solve_full(sys, yt, **_solve_kw(cfg))), delta, rng)
        est = estimate_params(p, w)
        ref = None if yt is None else yt.inverse()
        for j, name in enumerate(sys.names):
            row = dict(case=label, subdomain=name, y_star=est.values[j], inverse=est.inverse[j],
                       flag=est.flags[j], y_true=math.nan, rel_inverse_err=math.nan, rel_component_err=math.nan)
            if ref is not None:
                diff = abs(est.inverse[j] - ref[j])
                row.update(y_true=yt[j], rel_inverse_err=diff / np.max(np.abs(ref)),
                           rel_component_err=_component_error(diff, ref[j]))
            rows.append(row)
        if yt is not None:
            summary.append(inverse_error(est, yt))
    header = ["case", "subdomain", "y_star", "inverse", "flag", "y_true", "rel_inverse_err",
              "rel_component_err"]
    write_csv(os.path.join(out, "estimate.csv"), header, rows)
    if summary:
        log.info("median relative inverse-diffusivity error over %d cases: %.3e", len(summary),
                 float(np.median(summary)))
    return rows


# ----------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(prog="hcrom", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON experiment config")
        p.add_argument("--preset", choices=PRESETS, help="bundled config (ignored when --config is given)")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads for independent solves")
        p.add_argument("--cells-per-side", type=int, help="override the mesh resolution")
        return p

    common(sub.add_parser("solve", help="full-order solution and norms")).add_argument(
        "--y", help='parameter, e.g. "inf,1,1,1"')
    common(sub.add_parser("basis", help="select snapshots and write the basis archive"))
    common(sub.add_parser("study", help="error-decay curves per selection strategy"))
    common(sub.add_parser("surrogate", help="rectangle-cover polynomial surrogate errors"))
    for name, text in (("pbdw", "state reconstruction from measurements"),
                       ("estimate", "diffusivity estimate from measurements")):
        p = common(sub.add_parser(name, help=text))
        src = p.add_mutually_exclusive_group()
        src.add_argument("--y", help="true parameter; measurements are synthesized")
        src.add_argument("--measurements", metavar="CSV", help="sensor,value table")
        p.add_argument("--basis", metavar="DIR", help="basis archive (default OUT/<basis.dir>)")
        p.add_argument("--noise", type=float, help="relative measurement noise level")
    return ap


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.cells_per_side is not None:
        n = args.cells_per_side
        if n < 4 or n % 4:
            raise ConfigError(f"--cells-per-side {n}: must be a multiple of 4, at least 4")
        cfg["cells_per_side"] = n
    return cfg


def run(args):
    cfg = _apply_overrides(load_config(args.config, args.preset), args)
    os.makedirs(args.out, exist_ok=True)
    make_partition(cfg["geometry"])  # fail early on an inconsistent geometry
    cmd = args.command
    if cmd == "solve":
        return cmd_solve(cfg, args.out, args.y)
    if cmd == "basis":
        return cmd_basis(cfg, args.out)
    if cmd == "study":
        if not cfg["strategies"]:
            raise ConfigError("strategies: at least one strategy required")
        return cmd_study(cfg, args.out)
    if cmd == "surrogate":
        return cmd_surrogate(cfg, args.out)
    kw = dict(y=args.y, measurements=args.measurements, basis_dir=args.basis, noise=args.noise)
    if cmd == "pbdw":
        return cmd_pbdw(cfg, args.out, **kw)
    return cmd_estimate(cfg, args.out, **kw)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ConfigError as exc:
        print(f"hcrom {args.command}: configuration error:\n{exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"hcrom {args.command}: numerical failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"hcrom {args.command}: invalid input: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    _sys.exit(main())
