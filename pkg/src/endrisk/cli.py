"""Command-line front end.

Subcommands ``residual``, ``sample``, ``compare``, ``bounds`` and ``verify``
write CSV or JSON lines.  Every output starts with one ``#`` comment line
carrying the package version, a digest of the configuration and the seed.
Exit status is 0 on success, 1 when a verification report fails and 2 on
bad usage.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import DistSpecError, EndRiskError
from .marginal import Affine, Bernoulli, Empirical, Pareto, QuantileTable, Uniform
from .residual import ResidualTransform
from .riskagg import (convex_function, convex_sandwich, superadditive_ratio, tvar_envelope,
                      var_envelope, var_es_equivalence)
from .rng import default_seed
from .sampler import Scenario, antithetic_mix, compare_scenarios, sample_paths
from .verify import digest, run_suite

_FAMILIES = {
    "bernoulli": ({"p"}, set()),
    "uniform": ({"a", "b"}, set()),
    "pareto": ({"alpha"}, {"scale"}),
    "empirical": ({"file"}, set()),
    "qtable": ({"file"}, {"mode"}),
}
_TOKEN = re.compile(r"([A-Za-z_]\w*)=([^,]*)")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# distribution specs
# ---------------------------------------------------------------------------

def _read_column(path, text, pos):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and r[0].strip() and not r[0].startswith("#")]
    except FileNotFoundError:
        raise DistSpecError(f"file not found: {path}", text, pos) from None
    return rows


def _floats(rows, width, path, text, pos):
    out = []
    for i, r in enumerate(rows):
        try:
            vals = [float(v) for v in r[:width]]
        except ValueError:
            if i == 0:
                continue  # header
            raise DistSpecError(f"{path}: row {i + 1} is not numeric", text, pos) from None
        if len(vals) != width:
            raise DistSpecError(f"{path}: row {i + 1} needs {width} columns", text, pos)
        out.append(vals)
    if not out:
        raise DistSpecError(f"{path}: no data rows", text, pos)
    return np.array(out)


def parse_dist_spec(text: str):
    """Build a marginal law from ``family:key=value,...``.

    Families: ``bernoulli:p``, ``uniform:a,b``, ``pareto:alpha[,scale]``,
    ``empirical:file`` (one value per line) and ``qtable:file[,mode]``
    (rows ``t,x``; mode ``linear`` or ``step``).
    """
    name, sep, rest = text.partition(":")
    if not sep:
        raise DistSpecError("expected 'family:key=value,...'", text, len(name))
    fam = name.strip().lower()
    if fam not in _FAMILIES:
        raise DistSpecError(f"unknown family {name!r}", text, 0)
    required, optional = _FAMILIES[fam]
    kv, where = {}, {}
    pos = len(name) + 1
    for part in rest.split(","):
        m = _TOKEN.fullmatch(part.strip())
        if not m or not m.group(2).strip():
            raise DistSpecError("expected key=value", text, pos)
        key = m.group(1)
        if key not in required | optional:
            raise DistSpecError(f"unknown parameter {key!r} for {fam}", text, pos)
        if key in kv:
            raise DistSpecError(f"duplicate parameter {key!r}", text, pos)
        kv[key] = m.group(2).strip()
        where[key] = pos + part.index("=") + 1
        pos += len(part) + 1
    missing = required - kv.keys()
    if missing:
        raise DistSpecError(f"missing parameter(s) {sorted(missing)}", text, len(text))

    def num(key):
        try:
            return float(kv[key])
        except ValueError:
            raise DistSpecError(f"{key} is not a number", text, where[key]) from None

    try:
        if fam == "bernoulli":
            return Bernoulli(num("p"))
        if fam == "uniform":
            return Uniform(num("a"), num("b"))
        if fam == "pareto":
            base = Pareto(num("alpha"))
            return Affine(base, num("scale")) if "scale" in kv else base
        path = kv["file"]
        if fam == "empirical":
            rows = _read_column(path, text, where["file"])
            return Empirical(_floats(rows, 1, path, text, where["file"])[:, 0])
        mode = kv.get("mode", "linear")
        if mode not in ("linear", "step"):
            raise DistSpecError("mode must be linear or step", text, where["mode"])
        rows = _read_column(path, text, where["file"])
        tx = _floats(rows, 2, path, text, where["file"])
        return QuantileTable(tx[:, 0], tx[:, 1], step=(mode == "step"))
    except DistSpecError:
        raise
    except (ValueError, ArithmeticError) as exc:
        # domain and infinite-mean rejections keep their own type
        if isinstance(exc, EndRiskError):
            raise
        raise DistSpecError(str(exc), text, len(name) + 1) from None


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan; keep them as strings matching the CSV text
        return v if math.isfinite(v) else repr(v)
    return v


def write_table(fh, columns, rows, fmt):
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    else:
        for r in rows:
            fh.write(json.dumps({c: _json_value(v) for c, v in zip(columns, r)}) + "\n")


def _header(args, seed):
    cfg = {k: v for k, v in vars(args).items() if k not in ("output", "func")}
    cfg["seed"] = seed
    return f"# endrisk {__version__} config={digest(cfg)} seed={seed}\n"


# ---------------------------------------------------------------------------
# flag parsing
# ---------------------------------------------------------------------------

def _int_list(text):
    try:
        vals = [int(float(v)) if float(v).is_integer() else None for v in text.split(",")]
    except (ValueError, OverflowError):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if any(v is None or v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _positive_int(text):
    v = _int_list(text)
    if len(v) != 1:
        raise argparse.ArgumentTypeError("expected one integer")
    return v[0]


def _level(text):
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < p < 1.0:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return p


def _grid(text):
    v = _positive_int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("grid must be at least 2")
    return v


def _budget(text):
    if text in ("small", "medium", "large"):
        return text
    return _positive_int(text)


def _convex(text):
    kind, _, rest = text.partition(":")
    key = {"quad": "center", "abs": "center", "stoploss": "k"}.get(kind)
    m = re.fullmatch(r"(\w+)=(.+)", rest)
    if key is None or not m or m.group(1) != key:
        raise argparse.ArgumentTypeError("expected quad:center=C, abs:center=C or stoploss:k=K")
    try:
        return kind, float(m.group(2))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {m.group(2)!r}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _scenario(text, dist):
    mix = antithetic_mix(dist) if text in ("cm", "cm_periodic") else None
    return Scenario.parse(text, mix=mix)


def cmd_residual(args, seed):
    rt = ResidualTransform(args.dist)
    N = args.grid
    s = np.arange(N + 1) / N
    h = np.asarray(rt.h_transform(s), dtype=float)
    h = np.clip(h, rt.c, 0.0)
    A, B = rt.branches(h)
    A, B = np.asarray(A) + 0.0, np.asarray(B) + 0.0  # drop signed zeros
    K = rt.k_cdf(h)
    if rt.degenerate:
        u = np.full(h.shape, math.nan)
    else:
        with np.errstate(all="ignore"):
            u = np.asarray(rt.u_weight(h), dtype=float)
    q = s
    # the residual law lives on [0, inf), so its quantile at level 0 is 0
    Z = np.zeros_like(q)
    Z[1:] = rt.residual_quantile(q[1:])
    Ft = np.asarray(rt.residual_cdf(Z), dtype=float)
    cols = ["s", "H", "A", "B", "K", "u", "q", "Z", "Ftilde"]
    rows = zip(s, h, np.asarray(A), np.asarray(B), np.asarray(K), u, q, Z, Ft)
    return cols, list(rows), 0


def cmd_sample(args, seed):
    rt = ResidualTransform(args.dist)
    n = args.n
    x = sample_paths(rt, _scenario(args.scenario, args.dist), n, args.reps, seed)
    rows = [(r, k + 1, x[r, k]) for r in range(x.shape[0]) for k in range(n)]
    return ["rep", "k", "x"], rows, 0


def cmd_compare(args, seed):
    rt = ResidualTransform(args.dist)
    scen = [_scenario(s.strip(), args.dist) for s in args.scenarios.split(",")]
    rows = compare_scenarios(rt, scen, args.n, args.reps, seed)
    return ["n", "scenario", "var_estimate", "stderr"], [astuple_row(r) for r in rows], 0


def astuple_row(r):
    return tuple(asdict(r).values())


def cmd_bounds(args, seed):
    d, p = args.dist, args.p
    m = args.measure
    rows = []
    if m == "var":
        cols = ["n", "p", "sup_lower", "sup_upper", "inf_lower", "inf_upper", "q_star_sup", "q_star_inf"]
        for n in args.n:
            r = var_envelope(d, p, n, args.grid, k=args.k)
            rows.append((n, p, *r.var_sup, *r.var_inf, r.q_star_sup, r.q_star_inf))
    elif m == "tvar":
        cols = ["n", "p", "inf_lower", "inf_upper", "sup"]
        rt = ResidualTransform(d)
        for n in args.n:
            r = tvar_envelope(d, p, n, rt=rt)
            rows.append((n, p, *r.tvar_inf, r.tvar_sup))
    elif m == "convex":
        if args.g is None:
            raise UsageError("--measure convex needs --g")
        kind, val = args.g
        g = convex_function(kind, val)
        cols = ["n", "g", "lower", "upper"]
        for n in args.n:
            rows.append((n, f"{kind}:{val!r}", *convex_sandwich(d, g, n, seed=seed)))
    elif m == "ratio":
        cols = ["n", "p", "lower_ratio", "upper_ratio", "limit"]
        for n in args.n:
            (lo, hi), lim = superadditive_ratio(d, p, n, args.grid)
            rows.append((n, p, lo, hi, lim))
    else:
        cols = ["n", "p", "lower_ratio", "upper_ratio", "deficit", "q_star"]
        for r in var_es_equivalence(d, p, args.n, k=args.k, q_grid_size=args.grid):
            rows.append((r.n, p, r.lower_ratio, r.upper_ratio, r.deficit, r.q_star))
    return cols, rows, 0


def cmd_verify(args, seed):
    reports = run_suite(args.suite, args.budget, seed)
    status = 0 if all(r.passed for r in reports) else 1
    return None, [r.to_json(include_runtime=args.runtime) for r in reports], status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="endrisk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"endrisk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt=("csv", "jsonl")):
        p.add_argument("--seed", type=int, default=None, help="default: $ENDRISK_SEED or a fixed constant")
        p.add_argument("--out", choices=fmt, default=fmt[0])
        p.add_argument("--output", default="-", help="output path, '-' for stdout")

    p = sub.add_parser("residual", help="tabulate H, branches, K, u and the residual law")
    p.add_argument("--dist", required=True)
    p.add_argument("--grid", type=_grid, default=100)
    common(p)
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("sample", help="draw paths under one dependence scenario")
    p.add_argument("--dist", required=True)
    p.add_argument("--scenario", default="end", choices=["end", "iid", "independent", "comonotone",
                                                         "comonotonic", "cm"])
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--reps", type=_positive_int, default=1)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("compare", help="Var(S_n) across scenarios with standard errors")
    p.add_argument("--dist", required=True)
    p.add_argument("--scenarios", default="end,iid,comonotone")
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--reps", type=_positive_int, default=1000)
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bounds", help="risk aggregation bounds")
    p.add_argument("--dist", required=True)
    p.add_argument("--p", type=_level, default=0.9)
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--grid", type=_grid, default=64)
    p.add_argument("--measure", choices=["var", "tvar", "convex", "ratio", "equiv"], default="var")
    p.add_argument("--g", type=_convex, default=None, help="quad:center=C, abs:center=C or stoploss:k=K")
    p.add_argument("--k", type=float, default=None, help="moment order for extra q points")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", choices=["residual", "sampler", "bounds", "all"], default="all")
    p.add_argument("--budget", type=_budget, default="small")
    p.add_argument("--runtime", action="store_true", help="include runtimes (breaks byte stability)")
    common(p, fmt=("jsonl",))
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    seed = default_seed() if args.seed is None else args.seed
    try:
        if hasattr(args, "dist"):
            args.dist = parse_dist_spec(args.dist)
        if getattr(args, "g", None) is not None and args.measure != "convex":
            raise UsageError("--g applies to --measure convex only")
        cols, rows, status = args.func(args, seed)
    except DistSpecError as exc:
        print(f"endrisk: {exc}", file=sys.stderr)
        print(f"  {exc.text}\n  {' ' * exc.position}^", file=sys.stderr)
        return 2
    except (UsageError, EndRiskError, ValueError) as exc:
        print(f"endrisk: {exc}", file=sys.stderr)
        return 2

    buf = io.StringIO()
    hdr_args = argparse.Namespace(**{k: (v.params if k == "dist" else v) for k, v in vars(args).items()})
    buf.write(_header(hdr_args, seed))
    if cols is None:
        buf.writelines(r + "\n" for r in rows)
    else:
        write_table(buf, cols, rows, args.out)
    if args.output == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(args.output, "w", newline="") as fh:
            fh.write(buf.getvalue())
    return status


if __name__ == "__main__":
    sys.exit(main())
