"""Command-line harness: ``nestlab <command> [options]``.

Options can also come from a plain ``key=value`` file given with
``--config``; flags on the command line take precedence.  Every output record
carries the hash of the effective configuration and the library version.
Exit status: 0 success, 1 computational error (a structured error record is
written), 2 invalid invocation or configuration.
"""
import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import ConfigError, NestlabError

__all__ = ["main", "build_parser", "load_config", "config_hash"]

_NO_HASH = {"out", "config", "jobs", "command", "ppm"}


def _range(text, n=2):
    parts = text.split(":")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} numbers separated by ':'")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number in {text!r}") from None


def _pos_int(text):
    v = int(float(text))
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _pos_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _coeffs(text):
    return tuple(float(c) for c in text.split(",") if c.strip())


def _size(text):
    w, _, h = text.partition("x")
    return (_pos_int(w), _pos_int(h))


def build_parser():
    p = argparse.ArgumentParser(prog="nestlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nestlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    common.add_argument("--precision", choices=("auto", "double", "high"),
                        help="overrides NESTLAB_PRECISION")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=_pos_int, default=1)
    fam = argparse.ArgumentParser(add_help=False)
    fam.add_argument("--tau", type=str, help="parameter of x -> tau-1-tau x^2")
    fam.add_argument("--w", type=_coeffs, help="perturbation polynomial coefficients")
    fam.add_argument("--lam", type=str, default="0", help="perturbation size")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("nest", parents=[common, fam], help="build and serialize a principal nest")
    s.add_argument("--max-depth", type=_pos_int, default=64)
    s.add_argument("--min-width", type=float, default=1e-30)
    s.add_argument("--max-return-time", type=_pos_int, default=20000)

    s = sub.add_parser("classify", parents=[common, fam], help="orbit statistics verdict")
    s.add_argument("--n", type=_pos_int, default=100_000, help="orbit length")
    s.add_argument("--no-nest", action="store_true")

    s = sub.add_parser("survey", parents=[common], help="classify seeded samples of a tau range")
    s.add_argument("--tau-range", type=_range, default=(1.5, 2.0))
    s.add_argument("--n", type=_pos_int, default=100, help="number of samples")
    s.add_argument("--iterations", type=_pos_int, default=100_000, help="orbit length")
    s.add_argument("--no-nest", action="store_true")

    s = sub.add_parser("windows", parents=[common], help="parameter windows and scaling ratios")
    s.add_argument("--tau", type=str, required=False)
    s.add_argument("--levels", type=_pos_int, default=4)
    s.add_argument("--rel-tol", type=_pos_float, default=1e-8)

    s = sub.add_parser("phpa", parents=[common], help="phase-parameter tables and distortion")
    s.add_argument("--tau", type=str, required=False)
    s.add_argument("--level", type=_pos_int, default=2)
    s.add_argument("--kind", choices=("phpa1", "phpa2"), default="phpa2")
    s.add_argument("--width-floor", type=_pos_float, default=1e-3)
    s.add_argument("--max-lateral", type=_pos_int, default=24)

    s = sub.add_parser("capacity", parents=[common, fam], help="exclusion data and recursion bound")
    s.add_argument("--gamma", type=float)
    s.add_argument("--width-floor", type=_pos_float, default=1e-3)
    s.add_argument("--max-depth", type=_pos_int, default=64)

    s = sub.add_parser("modulus", parents=[common], help="annulus modulus estimates")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--annulus", type=_range, help="concentric circles r_in:r_out")
    g.add_argument("--lens", type=lambda t: _range(t, 6),
                   help="a:b:phi:c:d:psi, D_psi([c,d]) inside D_phi([a,b])")
    g.add_argument("--nest-tau", type=str, help="nest proxy for this tau")
    s.add_argument("--phi", type=float, default=math.pi / 2)
    s.add_argument("--psi", type=float, default=math.pi / 4)
    s.add_argument("--grid", type=_pos_int, default=512)
    s.add_argument("--method", choices=("cartesian", "logpolar", "auto"), default="cartesian")
    s.add_argument("--resolution", type=_pos_int, default=4096)

    s = sub.add_parser("mandel", parents=[common], help="complex parameter survey")
    s.add_argument("--box", type=lambda t: _range(t, 4), default=(-2.0, 0.5, -1.25, 1.25),
                   help="re_min:re_max:im_min:im_max")
    s.add_argument("--n", type=_pos_int, default=1000, help="number of samples")
    s.add_argument("--budget", type=_pos_int, default=10_000)
    s.add_argument("--radius", type=float, default=2.0)
    s.add_argument("--max-period", type=_pos_int, default=64)
    s.add_argument("--verdicts", action="store_true", help="emit one record per sample")
    s.add_argument("--raster", type=_size, help="WIDTHxHEIGHT verdict grid")
    s.add_argument("--ppm", help="write the raster as PPM to this file")
    return p


def load_config(path):
    """Read ``key=value`` lines (``#`` comments) into a dict of strings."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{no}: expected key=value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def config_hash(cfg):
    blob = json.dumps({k: _jsonable(v) for k, v in sorted(cfg.items()) if k not in _NO_HASH},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _parse(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = load_config(known.config)
        except ConfigError as exc:
            parser.error(str(exc))
        probe = parser.parse_known_args(argv)[0] if argv else None
        cmd = getattr(probe, "command", None)
        subparser = parser._subparsers._group_actions[0].choices.get(cmd)
        if subparser is None:
            parser.error("a command is required")
        valid = {a.dest for a in subparser._actions}
        bad = sorted(set(cfg) - valid)
        if bad:
            parser.error(f"unknown config keys: {', '.join(bad)}")
        for a in subparser._actions:
            if a.dest in cfg:
                raw = cfg[a.dest]
                if a.const is not None and a.nargs == 0:
                    cfg[a.dest] = raw.lower() in ("1", "true", "yes", "on")
                elif a.type is not None:
                    try:
                        cfg[a.dest] = a.type(raw)
                    except (argparse.ArgumentTypeError, ValueError) as exc:
                        parser.error(f"config key {a.dest}: {exc}")
        subparser.set_defaults(**cfg)
    args = parser.parse_args(argv)
    if args.command in ("survey", "mandel") and args.seed is None:
        parser.error(f"{args.command} requires --seed")
    if args.command in ("nest", "classify", "windows", "phpa", "capacity") and not args.tau:
        parser.error(f"{args.command} requires --tau")
    return args


# --- command implementations ------------------------------------------------------------

def _family(args):
    from .maps import Perturbed, RealQuadratic
    if getattr(args, "w", None):
        return Perturbed(float(args.tau), args.w, float(args.lam))
    return RealQuadratic(_tau_value(args.tau))


def _tau_value(text):
    from gmpy2 import mpfr
    # keep every digit the user typed: parse at a generous precision
    return mpfr(text, max(256, 4 * len(text))) if len(text) > 17 else float(text)


def _cmd_nest(args):
    from .nest import build_nest
    nest = build_nest(_family(args), max_depth=args.max_depth, min_width=args.min_width,
                      max_return_time=args.max_return_time)
    return list(nest.to_records()), None


def _classify_one(item):
    from .maps import RealQuadratic
    from .stats import Budget, classify
    tau, N, nest = item
    try:
        return classify(RealQuadratic(tau), Budget(N=N, nest=nest)).to_record()
    except NestlabError as exc:
        return exc.to_record()


def _cmd_classify(args):
    from .stats import Budget, classify
    rec = classify(_family(args), Budget(N=args.n, nest=not args.no_nest)).to_record()
    return [rec], None


def _cmd_survey(args):
    lo, hi = args.tau_range
    if not 0.5 <= lo < hi <= 2.0:
        raise ConfigError("tau range must satisfy 0.5 <= lo < hi <= 2")
    rng = np.random.default_rng(args.seed)
    taus = rng.uniform(lo, hi, args.n)
    items = [(float(t), args.iterations, not args.no_nest) for t in taus]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            recs = list(ex.map(_classify_one, items, chunksize=4))
    else:
        recs = [_classify_one(it) for it in items]
    out = []
    for i, (t, r) in enumerate(zip(taus, recs)):
        out.append({"index": i, "tau": float(t), **r})
    return out, None


def _phase_parameter(args):
    from .maps import QuadraticFamily
    from .params import PhaseParameter
    return PhaseParameter(QuadraticFamily(), args.tau, rel_tol=getattr(args, "rel_tol", 1e-8))


def _cmd_windows(args):
    from .params import windows_csv
    pp = _phase_parameter(args)
    levels = range(1, min(args.levels, pp.max_level) + 1)
    recs = []
    prev = None
    for i in levels:
        w = pp.window(i)
        lv = pp.nest.level(i)
        rec = {"record": "window", **w.to_record(), "log_phase_width": lv.log_width,
               "central_return": lv.central_return}
        if prev is not None:
            rec["log_param_ratio"] = w.log_width - prev[0]
            rec["log_phase_ratio"] = lv.log_width - prev[1]
        prev = (w.log_width, lv.log_width)
        recs.append(rec)
    return recs, windows_csv(pp, list(levels))


def _cmd_phpa(args):
    from .params import phpa1_addresses, phpa2_addresses, qs_distortion, xi_table_csv
    pp = _phase_parameter(args)
    make = phpa1_addresses if args.kind == "phpa1" else phpa2_addresses
    addrs = make(pp, args.level, width_floor=args.width_floor, max_lateral=args.max_lateral)
    tab = pp.xi_table(args.level, addrs, tag=args.kind)
    rep = qs_distortion(tab)
    recs = [{"record": "xi", "level": tab.level, "address": str(a), "x": str(x), "lam": str(l)}
            for a, x, l in zip(tab.addresses, tab.phase, tab.params)]
    recs.append({"record": "distortion", "level": rep.level, "tag": rep.tag, "M": rep.M,
                 "triples": rep.triples, "worst": list(rep.worst),
                 "monotone": tab.is_monotone()})
    return recs, xi_table_csv(tab)


def _cmd_capacity(args):
    from .capacity import exclusion_csv, exclusion_sequence, measure_exclusion_data
    from .nest import build_nest
    nest = build_nest(_family(args), max_depth=args.max_depth)
    rows = measure_exclusion_data(nest, width_floor=args.width_floor, gamma=args.gamma)
    recs = []
    if rows:
        seq = exclusion_sequence([r.eps for r in rows[1:]], min(rows[0].alpha, 1 - 1e-16))
        for r, b in zip(rows, seq.alpha):
            recs.append({"record": "exclusion", "level": r.level, "eps": r.eps, "alpha": r.alpha,
                         "bound": b, "kind": r.kind, "central": r.central,
                         "unresolved": r.unresolved, "gap": r.gap, "eps_qs": r.eps_qs})
    return recs, exclusion_csv(rows)


def _cmd_modulus(args):
    from .geometry import annulus_modulus, circle, d_theta_boundary, nest_modulus_proxy
    res = args.resolution
    if args.nest_tau:
        from .maps import RealQuadratic
        from .nest import build_nest
        nest = build_nest(RealQuadratic(_tau_value(args.nest_tau)))
        rows = nest_modulus_proxy(nest, args.phi, args.psi, grid=args.grid, resolution=res)
        recs = [{"record": "modulus", "k": k, "level": l, "value": e.value, "error": e.error,
                 "grid": e.grid, "method": e.method} for k, l, e in rows]
        return recs, None
    if args.lens:
        a, b, phi, c, d, psi = args.lens
        outer = d_theta_boundary((a, b), phi, res).boundary
        inner = d_theta_boundary((c, d), psi, res).boundary
        center = 0.5 * (c + d)
    else:
        r0, r1 = args.annulus or (1.0, math.e)
        outer, inner, center = circle(r1, res), circle(r0, res), 0.0
    e = annulus_modulus(outer, inner, args.grid, args.method, center=center)
    return [{"record": "modulus", "value": e.value, "error": e.error, "coarse": e.coarse,
             "grid": e.grid, "method": e.method}], None


def _cmd_mandel(args):
    from .mandel import box_survey, raster, raster_csv, raster_ppm, survey_csv
    if args.raster:
        w, h = args.raster
        grid = raster(args.box, w, h, args.budget, args.radius, args.max_period)
        if args.ppm:
            with open(args.ppm, "wb") as fh:
                fh.write(raster_ppm(grid))
        recs = [{"record": "raster_row", "row": j, "codes": [int(v) for v in row]}
                for j, row in enumerate(grid)]
        return recs, raster_csv(grid)
    s = box_survey(args.box, args.n, args.seed, args.budget, args.radius, args.max_period,
                   jobs=args.jobs)
    recs = [{"record": "survey", **s.to_record()}]
    if args.verdicts:
        recs += [{"record": "verdict", "index": i, **v.to_record()}
                 for i, v in enumerate(s.verdicts)]
    return recs, survey_csv([s])


_COMMANDS = {
    "nest": _cmd_nest, "classify": _cmd_classify, "survey": _cmd_survey,
    "windows": _cmd_windows, "phpa": _cmd_phpa, "capacity": _cmd_capacity,
    "modulus": _cmd_modulus, "mandel": _cmd_mandel,
}


def _tagged_csv(text, tag):
    lines = text.rstrip("\n").split("\n")
    head = lines[0] + ",config_hash,version"
    body = [ln + f",{tag['config_hash']},{tag['version']}" for ln in lines[1:]]
    return "\n".join([head] + body) + "\n"


def _records_csv(recs, tag):
    keys = []
    for r in recs:
        for k in r:
            if k not in keys:
                keys.append(k)
    lines = [",".join(keys + ["config_hash", "version"])]
    for r in recs:
        vals = [json.dumps(r.get(k)) if isinstance(r.get(k), (dict, list)) else
                ("" if r.get(k) is None else str(r.get(k))) for k in keys]
        vals = ['"' + v.replace('"', '""') + '"' if ("," in v or '"' in v) else v for v in vals]
        lines.append(",".join(vals + [tag["config_hash"], tag["version"]]))
    return "\n".join(lines) + "\n"


def run(args, stream):
    """Execute a parsed command, writing to ``stream``; returns the exit status."""
    if args.precision:
        os.environ["NESTLAB_PRECISION"] = args.precision
    cfg = {k: v for k, v in vars(args).items()}
    tag = {"config_hash": config_hash(cfg), "version": __version__}
    try:
        recs, table = _COMMANDS[args.command](args)
    except ConfigError as exc:
        stream.write(json.dumps({**exc.to_record(), **tag}, sort_keys=True) + "\n")
        return 2
    except (NestlabError, ValueError, ArithmeticError) as exc:
        rec = exc.to_record() if isinstance(exc, NestlabError) else {
            "error": type(exc).__name__, "message": str(exc)}
        stream.write(json.dumps({**rec, "command": args.command, **tag}, sort_keys=True) + "\n")
        return 1
    if args.format == "csv":
        stream.write(_tagged_csv(table, tag) if table else _records_csv(recs, tag))
    else:
        for r in recs:
            stream.write(json.dumps({**{k: _jsonable(v) for k, v in r.items()}, **tag},
                                    sort_keys=True) + "\n")
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            return run(args, fh)
    try:
        return run(args, sys.stdout)
    except BrokenPipeError:
        # the reader went away (e.g. piped into head); stop quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
