"""Command-line entry point ``pik``.

Every subcommand writes CSV (to ``--out`` or stdout) whose first line is a
comment with the tool version, the root seed and a SHA-256 of the resolved
configuration, followed by a header row.  Human-readable summaries go to
stderr so stdout stays machine-readable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import inspect
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bp import run_bp
from .builtins import BUILTINS, builtin_model, parse_builtin
from .errors import BracketError, PikError, SubcriticalModel
from .model import load_model, validate_model
from .recovery import best_overlap, weak_recover
from .sampler import (read_colors, read_instance, sample_null, sample_planted, write_colors,
                      write_instance)
from .spectral import distinguish
from .stability import build_L, choose_kappa, spectral_radius, threshold_scan
from .stats import StatRecord, spectral_growth_curve


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


@dataclass
class ExperimentConfig:
    """Resolved settings of one invocation; everything that can change the output."""

    command: str
    model: str | None = None
    builtin: str | None = None
    n: int | None = None
    seed: int = 0
    trials: int | None = None
    s: int | None = None
    kappa: float | None = None
    delta: float | None = None
    C: int | None = None
    trange: list | None = None
    tol: float | None = None
    out: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        d = vars(args)
        extra = {k: v for k, v in d.items()
                 if k not in known and k not in ("func", "workers")}
        return cls(**{k: d.get(k) for k in known if k in d}, extra=extra)

    def to_argv(self) -> list:
        argv = [self.command]
        for k, v in [(k, getattr(self, k)) for k in self.__dataclass_fields__ if k != "command"]:
            if k == "extra":
                for ek, ev in v.items():
                    argv += _flag(ek, ev)
            else:
                argv += _flag(k, v)
        return argv


def _flag(name, value):
    if value is None or value is False:
        return []
    flag = "--" + name.replace("_", "-")
    if value is True:
        return [flag]
    if name == "grid":  # repeated flag
        return [x for v in value for x in (flag, str(v))]
    if isinstance(value, (list, tuple)):
        return [flag] + [str(v) for v in value]
    return [flag, str(value)]


def config_hash(args: argparse.Namespace) -> str:
    cfg = asdict(ExperimentConfig.from_args(args))
    cfg.pop("out")
    for k in ("vectors_out", "colors_out"):
        cfg["extra"].pop(k, None)
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def emit_csv(args, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# pik {__version__} seed={args.seed} config={config_hash(args)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def say(msg: str) -> None:
    print(msg, file=sys.stderr)


def resolve_model(args):
    if getattr(args, "model", None):
        path = Path(args.model)
        if not path.is_file():
            raise UsageError(f"model file {args.model!r} not found (use --builtin for named models)")
        return load_model(path)
    if getattr(args, "builtin", None):
        name, params = parse_builtin(args.builtin)
        return validate_model(builtin_model(name, params))
    raise UsageError("a model is required: pass --model FILE or --builtin NAME:PARAMS")


def _instance_or_sample(args, model):
    """Read ``--instance`` or, failing that, sample one from ``--kind`` and ``--n``."""
    if args.instance:
        if not Path(args.instance).is_file():
            raise UsageError(f"instance file {args.instance!r} not found")
        return read_instance(args.instance, model), None
    if args.n is None:
        raise UsageError("pass --instance FILE or --n N to sample one")
    rng = np.random.default_rng(args.seed)
    if args.kind == "planted":
        inst, colors = sample_planted(model, args.n, rng)
        return inst, colors
    return sample_null(model, args.n, rng), None


def _param_names(name):
    try:
        fn = BUILTINS[name]
    except KeyError:
        raise UsageError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    return list(inspect.signature(fn).parameters)


def _default_workers():
    try:
        return max(1, int(os.environ.get("PIK_WORKERS", "1")))
    except ValueError:
        return 1


# -------------------------------------------------------------- subcommands

def cmd_threshold(args):
    crit = None
    if args.scan:
        if not args.builtin:
            raise UsageError("--scan needs a --builtin family")
        pname, lo, hi = args.scan[0], float(args.scan[1]), float(args.scan[2])
        fam, params = parse_builtin(args.builtin)
        names = _param_names(fam)
        if pname not in names:
            raise UsageError(f"{fam} has parameters {names}, not {pname!r}")
        slot = names.index(pname)

        def make(x):
            p = list(params) + [x] * max(0, slot + 1 - len(params))
            p[slot] = x
            return validate_model(builtin_model(fam, p))

        crit = threshold_scan(make, lo, hi)
        model = make(crit)  # report lambda_L at the critical point
    else:
        model = resolve_model(args)
    lam = spectral_radius(build_L(model))
    try:
        kappa = choose_kappa(lam)
    except SubcriticalModel:
        kappa = float("nan")
    say(f"lambda_L = {lam:.6f}")
    say(f"kappa    = {kappa:.6f}" if not math.isnan(kappa) else "kappa    = n/a (lambda_L <= 1)")
    cols = ["model", "lambda_L", "kappa"]
    row = [model.name, lam, kappa]
    if crit is not None:
        say(f"{args.scan[0]}*       = {crit:.6f}")
        cols.append(f"{args.scan[0]}_star")
        row.append(crit)
    emit_csv(args, cols, [row])
    return 0


def cmd_sample(args):
    model = resolve_model(args)
    if args.n is None:
        raise UsageError("--n is required")
    if not args.out:
        raise UsageError("--out is required for sample (instance file path)")
    rng = np.random.default_rng(args.seed)
    if args.kind == "planted":
        inst, colors = sample_planted(model, args.n, rng)
    else:
        inst, colors = sample_null(model, args.n, rng), None
    inst.provenance = {"kind": args.kind, "seed": args.seed}
    write_instance(inst, args.out)
    if args.colors_out and colors is not None:
        write_colors(colors, args.colors_out)
    say(f"wrote {args.kind} instance: n={inst.n}, factors={inst.n_factors} -> {args.out}")
    return 0


def cmd_bp(args):
    model = resolve_model(args)
    inst, _ = _instance_or_sample(args, model)
    msgs, converged, bel, rounds = run_bp(inst, model, max_iters=args.iters, tol=args.tol)
    say(f"bp: converged={converged} rounds={rounds} fallbacks={msgs.fallbacks}")
    cols = ["variable"] + [f"belief_{c}" for c in range(model.q)]
    emit_csv(args, cols, [[v] + list(bel[v]) for v in range(inst.n)])
    return 0


def cmd_distinguish(args):
    model = resolve_model(args)
    inst, _ = _instance_or_sample(args, model)
    dec = distinguish(inst, model, s=args.s, kappa=args.kappa, rng=args.seed)
    say(f"label = {dec.label}")
    say(f"lambda = {dec.eigenvalue:.6g}   kappa^s = {dec.threshold:.6g}   (s = {dec.s})")
    emit_csv(args, ["label", "eigenvalue", "threshold", "s", "kappa", "lambda_L", "n"],
             [[dec.label, dec.eigenvalue, dec.threshold, dec.s, dec.kappa, dec.lambda_L, inst.n]])
    return 0


def cmd_recover(args):
    model = resolve_model(args)
    inst, colors = _instance_or_sample(args, model)
    if args.colors:
        colors = read_colors(args.colors)
    res = weak_recover(inst, model, delta=args.delta, C=args.C, t_range=tuple(args.trange),
                       rng=args.seed)
    cands = res.candidates()
    if args.vectors_out:
        mat = np.stack([u for _, u in cands], axis=1) if cands else np.zeros((inst.n, 0))
        header = " ".join(f"l{l}_b{b}" for (l, b), _ in cands)
        np.savetxt(args.vectors_out, mat, fmt="%.12e", header=header)
    overlap = float("nan")
    if colors is not None:
        overlap = best_overlap([u for _, u in cands], inst, colors, model)
        say(f"best overlap = {overlap:.6g}   (0.05 sqrt(n) = {0.05 * math.sqrt(inst.n):.4g})")
    say(f"m = {res.m}   path = {res.path}   exhausted = {res.exhausted}")
    emit_csv(args, ["m", "path", "delta", "C", "t_lo", "t_hi", "vectors", "best_overlap",
                    "exhausted"],
             [[res.m, "-".join(map(str, res.path)), res.delta, res.C, res.t_range[0],
               res.t_range[1], len(cands), overlap, res.exhausted]])
    return 0


def cmd_stats(args):
    model = resolve_model(args)
    if args.n is None:
        raise UsageError("--n is required")
    planted = args.kind == "planted"

    def one(k):
        # seed per trial keeps rows independent of the worker count
        return spectral_growth_curve(model, args.n, args.smax, 1, rng=[args.seed, k],
                                     planted=planted, s_min=args.smin)

    ks = range(args.trials)
    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as ex:
            parts = list(ex.map(one, ks))
    else:
        parts = [one(k) for k in ks]
    recs = []
    for k, part in enumerate(parts):
        for r in part:
            r.seed = f"{args.seed}/{k}"
            recs.append(r)
    emit_csv(args, StatRecord.columns(),
             [[getattr(r, c) for c in StatRecord.columns()] for r in recs])
    return 0


def _grid_values(spec: str):
    """``name=lo:hi:count`` or ``name=v1,v2,...``."""
    name, _, rest = spec.partition("=")
    if not rest:
        raise UsageError(f"bad --grid {spec!r}; expected name=lo:hi:count or name=v1,v2")
    if ":" in rest:
        lo, hi, cnt = rest.split(":")
        vals = np.linspace(float(lo), float(hi), int(cnt)).tolist()
    else:
        vals = [float(x) for x in rest.split(",")]
    return name.strip(), vals


def cmd_sweep(args):
    if not args.builtin:
        raise UsageError("sweep needs --builtin FAMILY[:defaults]")
    fam, defaults = parse_builtin(args.builtin)
    names = _param_names(fam)
    grids = [_grid_values(g) for g in args.grid or []]
    if not 1 <= len(grids) <= 2:
        raise UsageError("sweep takes one or two --grid parameters")
    for g, _ in grids:
        if g not in names:
            raise UsageError(f"{fam} has parameters {names}, not {g!r}")

    def params_for(assign):
        p = list(defaults) + [None] * (len(names) - len(defaults))
        for k, v in assign.items():
            p[names.index(k)] = v
        while p and p[-1] is None:
            p.pop()
        if any(x is None for x in p):
            missing = [names[i] for i, x in enumerate(p) if x is None]
            raise UsageError(f"no value for parameters {missing}")
        return p

    cells = [{grids[0][0]: a} for a in grids[0][1]]
    if len(grids) == 2:
        cells = [{grids[0][0]: a, grids[1][0]: b} for a in grids[0][1] for b in grids[1][1]]
    grid_names = [g for g, _ in grids]

    def run_cell(idx_assign):
        idx, assign = idx_assign
        row = [assign[g] for g in grid_names]
        try:
            model = validate_model(builtin_model(fam, params_for(assign)))
            lam = spectral_radius(build_L(model))
            acc = ""
            if args.trials:
                acc = _cell_accuracy(model, lam, args, idx)
            return row + [lam, lam > 1, acc, "ok"]
        except PikError as exc:
            return row + ["", "", "", f"error:{type(exc).__name__}"]

    jobs = list(enumerate(cells))
    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as ex:
            rows = list(ex.map(run_cell, jobs))
    else:
        rows = [run_cell(j) for j in jobs]
    cols = grid_names + ["lambda_L", "easy", "accuracy", "status"]

    if args.boundary:
        lo, hi = float(args.boundary[0]), float(args.boundary[1])
        scan = grid_names[0]
        others = grids[1][1] if len(grids) == 2 else [None]
        for other in others:
            def make(x, other=other):
                assign = {scan: x}
                if other is not None:
                    assign[grid_names[1]] = other
                return validate_model(builtin_model(fam, params_for(assign)))
            try:
                crit, status = threshold_scan(make, lo, hi), "boundary"
            except BracketError:
                crit, status = "", "boundary:bracket_error"
            row = [crit] + ([other] if other is not None else [])
            rows.append(row + ["", "", "", status])
    emit_csv(args, cols, rows)
    return 0


def _cell_accuracy(model, lam, args, idx):
    """Fraction of correct labels over ``trials`` null and ``trials`` planted samples."""
    if lam <= 1:
        return ""
    n = args.n or 2000
    correct = 0
    for k, ss in enumerate(np.random.SeedSequence([args.seed, idx]).spawn(2 * args.trials)):
        g = np.random.default_rng(ss)
        planted = k % 2 == 1
        inst = sample_planted(model, n, g)[0] if planted else sample_null(model, n, g)
        dec = distinguish(inst, model, s=args.s, kappa=args.kappa, rng=g)
        correct += (dec.label == "planted") == planted
    return correct / (2 * args.trials)


# ------------------------------------------------------------------- parser

def _add_model(p):
    g = p.add_mutually_exclusive_group(required=False)
    g.add_argument("--model", help="model description file (JSON)")
    g.add_argument("--builtin", help="named model, e.g. nae3sat:8 or sbm:2,5,1")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--workers", type=int, default=_default_workers(),
                   help="worker threads (default: $PIK_WORKERS or 1)")


def _add_instance(p):
    p.add_argument("--instance", help="instance file written by 'pik sample'")
    p.add_argument("--n", type=int, help="sample a fresh instance of this size instead")
    p.add_argument("--kind", choices=["planted", "null"], default="planted",
                   help="distribution for a freshly sampled instance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pik", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"pik {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="lambda_L, kappa and an optional critical parameter")
    _add_model(p); _add_common(p)
    p.add_argument("--scan", nargs=3, metavar=("PARAM", "LO", "HI"),
                   help="bisect PARAM of a builtin family for lambda_L = 1")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("sample", help="write a planted or null instance")
    _add_model(p); _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--kind", choices=["planted", "null"], default="planted")
    p.add_argument("--colors-out", help="where to write the hidden coloring (planted only)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bp", help="belief propagation from the trivial messages")
    _add_model(p); _add_common(p); _add_instance(p)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_bp)

    p = sub.add_parser("distinguish", help="spectral null-vs-planted test")
    _add_model(p); _add_common(p); _add_instance(p)
    p.add_argument("--s", type=int, help="walk length (default ceil(sqrt(ln n)))")
    p.add_argument("--kappa", type=float, help="threshold base (default (lambda_L + sqrt lambda_L)/2)")
    p.set_defaults(func=cmd_distinguish)

    p = sub.add_parser("recover", help="spectral weak recovery")
    _add_model(p); _add_common(p); _add_instance(p)
    p.add_argument("--colors", help="reference coloring file for overlap reporting")
    p.add_argument("--delta", type=float)
    p.add_argument("--C", type=int, default=8)
    p.add_argument("--trange", type=int, nargs=2, default=[4, 12], metavar=("LO", "HI"))
    p.add_argument("--vectors-out", help="text matrix file, one candidate vector per column")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("stats", help="spectral growth curve |lambda|_max(A^(s))^(1/s)")
    _add_model(p); _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--smax", type=int, default=6)
    p.add_argument("--smin", type=int, default=1)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--kind", choices=["planted", "null"], default="null")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="lambda_L over a parameter grid of a builtin family")
    _add_model(p); _add_common(p)
    p.add_argument("--grid", action="append", metavar="NAME=LO:HI:COUNT",
                   help="grid for one parameter; give once or twice")
    p.add_argument("--boundary", nargs=2, metavar=("LO", "HI"),
                   help="also bisect the first grid parameter for lambda_L = 1")
    p.add_argument("--trials", type=int, default=0,
                   help="empirical distinguisher trials per cell (0 = skip)")
    p.add_argument("--n", type=int, help="instance size for --trials (default 2000)")
    p.add_argument("--s", type=int)
    p.add_argument("--kappa", type=float)
    p.set_defaults(func=cmd_sweep)
    return ap


def cmd_run(config: ExperimentConfig) -> int:
    """Run one configured experiment; returns the exit status."""
    try:
        return main(config.to_argv())
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        ap.error(str(exc))  # exits with status 2
    except (PikError, OSError, ValueError) as exc:
        print(f"pik {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
