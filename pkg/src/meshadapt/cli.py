"""Command-line driver: ``meshadapt {generate,sample,metric,adapt,stats}``.

Errors are reported as one line on stderr, ``error: <kind>: <message>``,
with exit status 2 (usage), 3 (input) or 4 (solver).
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from . import medit
from .levelset import Circle, Flower, SpiralSizemapParams, sample, spiral_sizemap
from .mesh import MeshError, apply_displacement, generate_uniform, validate
from .metric import MetricBounds, intersect, levelset_metric, physical_metric, recover_hessian
from .mmpde import Elasticity, Laplacian, SolverConfig, SolverError, solve
from .monitor import Combined, GradientBased, PiecewiseConstant, Shoreline, Solution
from .quality import (DEFAULT_BINS, compression_ratio, edge_histogram, histogram_csv,
                      narrow_band_stats, stats_csv, stats_table)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- compact flag syntax ---------------------------------------------------

def _floats(text, flag, count=None):
    try:
        vals = [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) not in (count if isinstance(count, tuple) else (count,)):
        raise UsageError(f"{flag}: expected {count} numbers, got {len(vals)}")
    return vals


def parse_levelset(text, flag="--levelset"):
    """``circle:cx,cy,r`` or ``flower:cx,cy,R0,A[,lobes]``."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "circle":
            cx, cy, r = _floats(rest, flag, 3)
            return Circle((cx, cy), r)
        if kind == "flower":
            v = _floats(rest, flag, (4, 5))
            lobes = int(v[4]) if len(v) == 5 else 4
            return Flower((v[0], v[1]), v[2], v[3], lobes)
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None
    raise UsageError(f"{flag}: unknown level-set kind {kind!r} (circle, flower)")


def parse_monitor(text, flag="--monitor", curvature_source="local"):
    """Parse a monitor flag.

    ``gb:a0,a_phi,b_phi``; ``gbk:c,a_phi,b_phi`` (``a0 = c |kappa|``);
    ``pc:t1,t2,...;w1,w2,...``; ``solution:alpha_u,beta_u``;
    ``shoreline:eps_H,alpha_eta,alpha_dry``;
    ``combined:eps/<inner>/<outer>``.
    """
    kind, _, rest = text.partition(":")
    try:
        if kind == "gb":
            a0, ap, bp = _floats(rest, flag, 3)
            return GradientBased(a0, ap, bp)
        if kind == "gbk":
            c, ap, bp = _floats(rest, flag, 3)
            return GradientBased(c, ap, bp, curvature_scaled=True, curvature_source=curvature_source)
        if kind == "pc":
            t, _, w = rest.partition(";")
            return PiecewiseConstant(tuple(_floats(t, flag)), tuple(_floats(w, flag)))
        if kind == "solution":
            au, bu = _floats(rest, flag, 2)
            return Solution(au, bu)
        if kind == "shoreline":
            eh, ae, ad = _floats(rest, flag, 3)
            return Shoreline(eh, ae, ad)
        if kind == "combined":
            parts = rest.split("/")
            if len(parts) != 3:
                raise UsageError(f"{flag}: combined needs eps/<inner>/<outer>")
            return Combined(_floats(parts[0], flag, 1)[0], parse_monitor(parts[1], flag, curvature_source),
                            parse_monitor(parts[2], flag, curvature_source))
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None
    raise UsageError(f"{flag}: unknown monitor kind {kind!r}")


def read_config(path):
    """``key = value`` lines; ``#`` comments; keys use flag names."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"--config: cannot read {path}: {exc.strerror}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{no}: expected key = value")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(args, parser, argv):
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    actions = {a.dest: a for a in parser._actions}
    for key, value in cfg.items():
        if key not in actions or key in ("config", "help"):
            raise InputError(f"{args.config}: unknown key {key!r}")
        act = actions[key]
        if key in given:
            warnings.warn(f"config key {key!r} overrides the command-line flag", UserWarning, stacklevel=2)
        if isinstance(act, argparse._StoreTrueAction):
            setattr(args, key, value.lower() in ("1", "true", "yes", "on"))
            continue
        try:
            setattr(args, key, act.type(value) if act.type else value)
        except (TypeError, ValueError):
            raise InputError(f"{args.config}: bad value for {key!r}: {value!r}") from None
    return args


# --- file helpers -----------------------------------------------------------

def _load_mesh(path, flag):
    if not Path(path).is_file():
        raise InputError(f"{flag}: no such file {path}")
    return medit.read_mesh(path)


def _load_sol(path, flag, n=None, metric=True):
    if not Path(path).is_file():
        raise InputError(f"{flag}: no such file {path}")
    return medit.read_sol(path, n_vertices=n, metric=metric)


def _scalar(path, flag, n):
    v = _load_sol(path, flag, n, metric=False)
    if isinstance(v, list) or v.ndim != 1:
        raise InputError(f"{flag}: expected a single scalar field in {path}")
    return v


def _tensor(path, flag, n):
    v = _load_sol(path, flag, n)
    if isinstance(v, list) or v.ndim != 2:
        raise InputError(f"{flag}: expected a single tensor field in {path}")
    return v


def _spatial(mesh, values):
    """Piecewise-linear extension of vertex values to arbitrary points."""
    lin = LinearNDInterpolator(mesh.points, values)
    near = NearestNDInterpolator(mesh.points, values)

    def f(p):
        v = lin(p)
        bad = ~np.isfinite(v)
        if bad.any():
            v[bad] = near(p[bad])
        return v
    return f


def _bounds(args):
    try:
        return MetricBounds(args.hmin, args.hmax)
    except ValueError as exc:
        raise UsageError(f"--hmin/--hmax: {exc}") from None


# --- sub-commands -----------------------------------------------------------

def cmd_generate(args):
    dom = _floats(args.domain, "--domain", 4)
    if not args.h > 0:
        raise UsageError("--h: must be positive")
    if dom[1] <= dom[0] or dom[3] <= dom[2]:
        raise UsageError("--domain: expected x0,x1,y0,y1 with x0 < x1 and y0 < y1")
    try:
        mesh = generate_uniform(tuple(dom), args.h, args.pattern)
    except (ValueError, MeshError) as exc:
        raise UsageError(f"--h: {exc}") from None
    medit.write_mesh(mesh, args.out)


def cmd_sample(args):
    mesh = _load_mesh(args.mesh, "--mesh")
    if (args.levelset is None) == (args.spiral is None):
        raise UsageError("sample: give exactly one of --levelset, --spiral")
    if args.levelset is not None:
        values = sample(mesh, parse_levelset(args.levelset))
    else:
        a, s = _floats(args.spiral, "--spiral", 2)
        try:
            params = SpiralSizemapParams(a=a, s=s)
        except ValueError as exc:
            raise UsageError(f"--spiral: {exc}") from None
        values = sample(mesh, lambda p: spiral_sizemap(p, params))
    medit.write_sol(values, args.out)


def cmd_metric(args):
    if args.kind == "intersect":
        if not (args.a and args.b):
            raise UsageError("metric --kind intersect needs --a and --b")
        n = _load_mesh(args.mesh, "--mesh").n_vertices if args.mesh else None
        m1 = _tensor(args.a, "--a", n)
        m2 = _tensor(args.b, "--b", len(m1))
        medit.write_sol(intersect(m1, m2), args.out)
        return
    if not args.mesh:
        raise UsageError(f"metric --kind {args.kind} needs --mesh")
    mesh = _load_mesh(args.mesh, "--mesh")
    bounds = _bounds(args)
    if args.kind == "physical":
        if not args.field:
            raise UsageError("metric --kind physical needs --field")
        u = _scalar(args.field, "--field", mesh.n_vertices)
        medit.write_sol(physical_metric(recover_hessian(mesh, u), bounds), args.out)
        return
    if args.phi:
        phi = _scalar(args.phi, "--phi", mesh.n_vertices)
    elif args.levelset:
        phi = sample(mesh, parse_levelset(args.levelset))
    else:
        raise UsageError("metric --kind levelset needs --phi or --levelset")
    if not (args.eps > 0 and args.band > 0):
        raise UsageError("--eps/--band: must be positive")
    metric = levelset_metric(mesh, phi, args.eps, args.band, bounds, args.gradation)
    medit.write_sol(metric, args.out)


def _closure(args):
    if args.closure == "laplace":
        return Laplacian()
    try:
        return Elasticity(args.mu, args.lam)
    except ValueError as exc:
        raise UsageError(f"--mu/--lam: {exc}") from None


def cmd_adapt(args):
    mesh = _load_mesh(args.mesh, "--mesh")
    spec = parse_monitor(args.monitor, curvature_source=args.curvature)
    fields = {}
    if args.levelset:
        fields["phi"] = parse_levelset(args.levelset)
    elif args.phi:
        fields["phi"] = _spatial(mesh, _scalar(args.phi, "--phi", mesh.n_vertices))
    for name, flag in (("u", "u"), ("H", "depth"), ("eta", "eta")):
        path = getattr(args, flag)
        if path:
            fields[name] = _spatial(mesh, _scalar(path, f"--{flag}", mesh.n_vertices))
    try:
        config = SolverConfig(closure=_closure(args), max_outer_iters=args.max_iter,
                              jacobi_sweeps_per_outer=args.sweeps, residual_drop=args.tol,
                              step_limiter=args.step, safeguard=args.safeguard, tau=args.tau,
                              boundary=args.boundary)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        result = solve(mesh, spec, fields, config)
    except KeyError as exc:
        raise UsageError(f"--monitor: {exc.args[0]}") from None
    except SolverError as exc:
        if args.diag and exc.diagnostics is not None:
            exc.diagnostics.write_csv(args.diag, timings=args.timings)
        if exc.state is not None:
            medit.write_mesh(apply_displacement(mesh, exc.state), args.out)
        raise
    if args.diag:
        result.diagnostics.write_csv(args.diag, timings=args.timings)
    adapted = apply_displacement(mesh, result.displacement)
    if not validate(adapted).valid:
        raise SolverError("adapted mesh has inverted elements")
    medit.write_mesh(adapted, args.out)
    if not result.converged:
        raise SolverError(f"not converged after {result.diagnostics.outer_iterations} iterations")


def cmd_stats(args):
    ref = _load_mesh(args.ref, "--ref")
    adapted = _load_mesh(args.adapted, "--adapted") if args.adapted else None
    if args.levelset:
        ls = parse_levelset(args.levelset)
        phi_ref = sample(ref, ls)
        phi_ad = sample(adapted, ls) if adapted is not None else None
    elif args.phi:
        target = adapted if adapted is not None else ref
        phi_ad = _scalar(args.phi, "--phi", target.n_vertices)
        phi_ref = _scalar(args.phi_ref, "--phi-ref", ref.n_vertices) if args.phi_ref else None
        if adapted is None:
            phi_ref, phi_ad = phi_ad, None
    else:
        raise UsageError("stats needs --levelset or --phi")
    if not args.band > 0:
        raise UsageError("--band: must be positive")
    rows = []
    if phi_ref is not None:
        rows.append(("initial", narrow_band_stats(ref, phi_ref, args.band)))
    if adapted is not None:
        if adapted.topology_hash() != ref.topology_hash():
            raise InputError("--adapted: connectivity differs from --ref")
        rows.append(("adapted", narrow_band_stats(adapted, phi_ad, args.band)))
    Path(args.out).write_text(stats_csv(rows))
    print(stats_table(rows))
    if args.qr_out:
        if adapted is None:
            raise UsageError("--qr-out needs --adapted")
        qr = compression_ratio(ref, adapted)
        Path(args.qr_out).write_text("element,q_r\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(qr)))
    if args.metric:
        target = adapted if adapted is not None else ref
        metric = _tensor(args.metric, "--metric", target.n_vertices)
        bins = tuple(_floats(args.bins, "--bins")) if args.bins else DEFAULT_BINS
        if len(bins) < 2:
            raise UsageError("--bins: need at least two edges")
        text = histogram_csv(edge_histogram(target, metric, bins))
        if args.hist_out:
            Path(args.hist_out).write_text(text)
        else:
            print(text, end="")


# --- parser -----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="meshadapt", description="2D metric construction and r-adaptation toolkit")
    p.add_argument("--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="structured uniform triangle mesh")
    g.add_argument("--domain", default="-1,1,-1,1", help="x0,x1,y0,y1")
    g.add_argument("--h", type=float, required=True, help="target average edge length")
    g.add_argument("--pattern", choices=("alternating", "equilateral"), default="alternating")
    g.add_argument("--out", required=True)

    s = sub.add_parser("sample", help="analytic level-set or spiral sizemap at the vertices")
    s.add_argument("--mesh", required=True)
    s.add_argument("--levelset", help="circle:cx,cy,r or flower:cx,cy,R0,A[,lobes]")
    s.add_argument("--spiral", help="a,s (constants of the double spiral)")
    s.add_argument("--out", required=True)

    m = sub.add_parser("metric", help="physical, level-set or intersected metric field")
    m.add_argument("--kind", choices=("physical", "levelset", "intersect"), required=True)
    m.add_argument("--mesh")
    m.add_argument("--field", help="scalar .sol for the physical metric")
    m.add_argument("--phi", help="level-set .sol")
    m.add_argument("--levelset", help="analytic level-set instead of --phi")
    m.add_argument("--eps", type=float, default=0.01)
    m.add_argument("--band", type=float, default=0.05)
    m.add_argument("--gradation", type=float, default=1.0)
    m.add_argument("--hmin", type=float, default=1e-3)
    m.add_argument("--hmax", type=float, default=0.5)
    m.add_argument("--a")
    m.add_argument("--b")
    m.add_argument("--out", required=True)

    a = sub.add_parser("adapt", help="solve the mesh PDE and write the deformed mesh")
    a.add_argument("--config", help="key = value file; its values win over flags")
    a.add_argument("--mesh", required=True)
    a.add_argument("--levelset")
    a.add_argument("--phi")
    a.add_argument("--u", help="solution .sol for solution/combined monitors")
    a.add_argument("--depth", help="water depth .sol for the shoreline monitor")
    a.add_argument("--eta", help="free surface .sol for the shoreline monitor")
    a.add_argument("--monitor", default="gb:1,40,300")
    a.add_argument("--curvature", choices=("local", "zero-level"), default="local",
                   help="curvature used by gbk monitors")
    a.add_argument("--closure", choices=("laplace", "elasticity"), default="laplace")
    a.add_argument("--mu", type=float, default=1.0)
    a.add_argument("--lam", type=float, default=1.0)
    a.add_argument("--tol", type=float, default=1e-3)
    a.add_argument("--max-iter", type=int, default=5000)
    a.add_argument("--sweeps", type=int, default=10)
    a.add_argument("--step", type=float, default=0.6)
    a.add_argument("--safeguard", choices=("reject-and-halve", "clamp"), default="reject-and-halve")
    a.add_argument("--boundary", choices=("dirichlet", "slip"), default="dirichlet")
    a.add_argument("--tau", type=float, default=0.0)
    a.add_argument("--diag", help="diagnostics CSV")
    a.add_argument("--timings", action="store_true", help="record wall times in the diagnostics CSV")
    a.add_argument("--out", required=True)

    t = sub.add_parser("stats", help="narrow-band statistics, compression ratio and edge histogram")
    t.add_argument("--ref", required=True)
    t.add_argument("--adapted")
    t.add_argument("--levelset")
    t.add_argument("--phi", help="level-set .sol on the adapted mesh (on --ref without --adapted)")
    t.add_argument("--phi-ref", help="level-set .sol on the reference mesh")
    t.add_argument("--band", type=float, default=1e-2)
    t.add_argument("--metric", help="metric .sol for the edge histogram")
    t.add_argument("--bins", help="comma-separated bin edges; 'inf' allowed")
    t.add_argument("--hist-out")
    t.add_argument("--qr-out", help="per-element compression ratio CSV")
    t.add_argument("--out", required=True)
    return p


COMMANDS = {"generate": cmd_generate, "sample": cmd_sample, "metric": cmd_metric,
            "adapt": cmd_adapt, "stats": cmd_stats}


def _fail(kind, message, code):
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def _attach_negative_values(argv):
    """Join ``--flag -1,...`` into ``--flag=-1,...``; argparse would read the value as an option."""
    out = []
    for tok in argv:
        if (out and re.match(r"-[\d.]", tok) and out[-1].startswith("--") and "=" not in out[-1]):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def run(argv=None) -> int:
    argv = _attach_negative_values(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing sub-command (generate, sample, metric, adapt, stats)")
        if args.command == "adapt":
            args = _apply_config(args, sub_parser(parser, "adapt"), argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (InputError, medit.MeditError, MeshError) as exc:
        return _fail("input", exc, EXIT_INPUT)
    except SolverError as exc:
        return _fail("solver", exc, EXIT_SOLVER)
    except OSError as exc:
        return _fail("input", f"{exc.filename}: {exc.strerror}", EXIT_INPUT)
    except ValueError as exc:
        return _fail("input", exc, EXIT_INPUT)
    return EXIT_OK


def sub_parser(parser, name):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def main():
    sys.exit(run())
