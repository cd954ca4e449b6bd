"""Command-line front end: ``srwalk {verify,laplacian,flow,walk,converge,oracle}``.

Every output file carries the tool version, the fully resolved
configuration and the seed. ``--replay FILE`` re-runs a command from the
configuration embedded in one of its own output files.

Exit codes: 0 success, 1 verification or tolerance failure, 2 usage
error, 3 runtime or model error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fields import BUILTIN_FIELDS, ExpressionField, Polynomial, builtin_field
from .geometry import (
    DegenerateRankError,
    ModelEvaluationError,
    PhaseState,
    cometric_eval,
    metric_eval,
    sample_horizontal_sphere,
    validate_compatibility,
)
from .hamiltonian import IntegrationError, flow, hamiltonian, integrate, raised_christoffel
from .manifolds import (
    EuclideanModel,
    ExpressionSyntaxError,
    HeisenbergModel,
    ModelSpecError,
    ModelValidationError,
    load_model_file,
)
from .montecarlo import (
    EstimationError,
    chunk_rng,
    convergence_sweep,
    heisenberg_sde_oracle,
)
from .sublaplacian import sublaplacian_local, sublaplacian_sphere_avg
from .walker import WalkConfig, WalkError, sample_walk

TOOL = "subriemannian_walk"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

# flags that only control where output goes; never part of the replayable config
_OUTPUT_KEYS = {"out", "format", "summary", "replay", "workers", "func"}


class UsageError(Exception):
    pass


# -- argument parsing --------------------------------------------------------

def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _common(parser, *, f=True, point=True, default_format="json"):
    g = parser.add_argument_group("model")
    g.add_argument("--model", choices=("heisenberg", "euclidean"), default="heisenberg")
    g.add_argument("--model-file", metavar="PATH", help="model spec file (overrides --model)")
    g.add_argument("--lambda", dest="lam", type=_positive(float), default=1.0,
                   help="Heisenberg vertical metric scale g(Z, Z)")
    g.add_argument("--dim", type=_positive(int), default=3, help="Euclidean dimension")
    if f:
        fg = parser.add_mutually_exclusive_group()
        fg.add_argument("--f", dest="f_name", metavar="NAME", help=f"built-in field: {', '.join(BUILTIN_FIELDS)}")
        fg.add_argument("--f-expr", metavar="EXPR", help="field as an expression in x1..xd")
    if point:
        parser.add_argument("--point", type=_floats, action="append", metavar="X1,X2,...",
                            help="chart point; repeatable where several points make sense")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=_positive(int), default=1,
                        help="worker processes; results do not depend on this")
    parser.add_argument("--out", metavar="PATH")
    parser.add_argument("--format", choices=("csv", "json"), default=default_format)
    parser.add_argument("--replay", metavar="FILE", help="re-run with the config embedded in FILE")


def build_parser():
    parser = argparse.ArgumentParser(prog="srwalk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the model's identity and property checks")
    _common(p, f=False, point=False)
    p.add_argument("--n-samples", type=_positive(int), default=100_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("laplacian", help="evaluate the sub-Laplacian both ways at points")
    _common(p)
    p.add_argument("--n-samples", type=_positive(int), default=100_000)
    p.set_defaults(func=cmd_laplacian)

    p = sub.add_parser("flow", help="trace the Hamilton-Jacobi flow")
    _common(p, f=False, default_format="csv")
    p.add_argument("--momentum", type=_floats, required=False, metavar="P1,P2,...")
    p.add_argument("--t", type=float, default=1.0, help="flow duration")
    p.add_argument("--step", type=_positive(float), default=1e-3)
    p.add_argument("--compare-exact", action="store_true", help="compare with the closed-form flow")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("walk", help="sample scaled random walks and record their legs")
    _common(p, f=False, default_format="csv")
    p.add_argument("--epsilon", type=_positive(float), default=0.1)
    p.add_argument("--t", type=_positive(float), default=None,
                   help="diffusion time; walk horizon is t / epsilon^2")
    p.add_argument("--horizon", type=_positive(float), default=None, help="walk-clock horizon")
    p.add_argument("--n-walks", "--n-paths", dest="n_walks", type=_positive(int), default=1)
    p.add_argument("--step", type=_positive(float), default=None)
    p.add_argument("--rk4", action="store_true", help="integrate legs with RK4 even if a closed form exists")
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("converge", help="semigroup estimates over a decreasing epsilon list")
    _common(p, default_format="csv")
    p.add_argument("--eps-list", type=_floats, help="strictly decreasing, e.g. 0.2,0.1,0.05")
    p.add_argument("--t", type=_positive(float), default=1.0)
    p.add_argument("--n-paths", type=_positive(int), default=1000)
    p.add_argument("--step", type=_positive(float), default=None)
    p.add_argument("--rk4", action="store_true")
    p.add_argument("--oracle-file", metavar="PATH", help="reference moments from `srwalk oracle`")
    p.add_argument("--oracle-dt", type=_positive(float), default=1e-3)
    p.add_argument("--summary", metavar="PATH", help="JSON summary path (default: <out>.summary.json)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("oracle", help="Euler-Maruyama moments of Heisenberg horizontal Brownian motion")
    p.add_argument("--t", type=_positive(float), default=1.0)
    p.add_argument("--n-paths", type=_positive(int), default=100_000)
    p.add_argument("--dt", type=_positive(float), default=1e-3)
    p.add_argument("--frequency", type=float, default=1.0, help="frequency for E[cos(frequency z)]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive(int), default=1)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--replay", metavar="FILE")
    p.set_defaults(func=cmd_oracle)
    return parser


# -- resolution helpers ------------------------------------------------------

def resolve_model(args, validate=True):
    if getattr(args, "model_file", None):
        return load_model_file(args.model_file, validate=validate)
    if args.model == "heisenberg":
        return HeisenbergModel(args.lam)
    return EuclideanModel(args.dim)


def resolve_field(args, dim, default="x_sq"):
    if getattr(args, "f_expr", None):
        try:
            return ExpressionField(args.f_expr, dim)
        except ExpressionSyntaxError as exc:
            raise UsageError(f"--f-expr: {exc}") from None
    name = getattr(args, "f_name", None) or default
    try:
        return builtin_field(name, dim)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def resolve_points(args, dim, default=None):
    pts = args.point or ([default] if default is not None else [[0.0] * dim])
    for pt in pts:
        if len(pt) != dim:
            raise UsageError(f"point {pt} has {len(pt)} coordinates, model dimension is {dim}")
    return [list(map(float, pt)) for pt in pts]


def resolved_config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _OUTPUT_KEYS}


def _envelope(kind, args, result):
    return {
        "kind": kind,
        "tool": TOOL,
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "config": resolved_config(args),
        "result": result,
    }


def _write_text(text, path):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def write_json(doc, path):
    _write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", path)


def write_csv(kind, args, header, rows, path):
    buf = io.StringIO()
    buf.write(f"# tool: {TOOL} {__version__}\n")
    buf.write(f"# kind: {kind}\n")
    buf.write(f"# seed: {getattr(args, 'seed', None)}\n")
    buf.write(f"# config: {json.dumps(resolved_config(args), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    _write_text(buf.getvalue(), path)


def read_embedded_config(path):
    """The resolved config stored in a JSON or CSV output file."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc["command"], doc["config"]
    command = None
    for line in text.splitlines():
        if line.startswith("# config:"):
            config = json.loads(line[len("# config:"):])
            return config.get("command", command), config
    raise UsageError(f"no embedded config found in {path}")


# -- verify ------------------------------------------------------------------

def _check(name, value, tol, passed=None, detail=""):
    ok = bool(value <= tol) if passed is None else bool(passed)
    return {"check": name, "value": float(value), "tolerance": float(tol), "passed": ok, "detail": detail}


def _random_states(model, rng, n, pmax=1.0):
    qs = rng.uniform(-1.5, 1.5, (n, model.dim))
    ps = rng.uniform(-1.0, 1.0, (n, model.dim))
    ps *= pmax * rng.uniform(0.2, 1.0, (n, 1)) / np.linalg.norm(ps, axis=1, keepdims=True)
    return qs, ps


def run_verify(model, seed=0, n_samples=100_000):
    """All model checks; returns a list of check records."""
    rng = np.random.default_rng(seed)
    checks = []
    spec = getattr(model, "spec", None)
    pts = rng.uniform(-1.5, 1.5, (10, model.dim))
    if spec is not None:
        pts = np.vstack([np.asarray(spec.samples, dtype=float), pts])

    reports = [validate_compatibility(model, q) for q in pts]
    worst = max(reports, key=lambda r: r.residual)
    checks.append(_check("compatibility |B G c - c|", worst.residual, 1e-9,
                         passed=all(r.passed for r in reports),
                         detail=f"worst at {np.round(worst.point, 4).tolist()}"))
    if not all(r.rank_ok and r.metric_spd and r.cometric_psd for r in reports):
        # later checks need a valid frame everywhere
        checks.append(_check("rank/PSD/SPD", 1.0, 0.0, passed=False, detail="structure invalid at a test point"))
        return checks

    # sphere moments
    z_worst = 0.0
    for q in pts[:3]:
        v = sample_horizontal_sphere(model, q, rng, size=n_samples)
        p = v @ metric_eval(model, q).T
        B = cometric_eval(model, q)
        G = metric_eval(model, q)
        for samples, target in ((v[:, :, None] * v[:, None, :], B / model.rank),
                                (p[:, :, None] * p[:, None, :], G @ B @ G / model.rank)):
            mean = samples.mean(axis=0)
            se = samples.std(axis=0, ddof=1) / math.sqrt(n_samples)
            z = np.abs(mean - target) / (4 * se + 1e-12)
            z_worst = max(z_worst, float(z.max()))
    checks.append(_check("sphere moments (|err| / (4 stderr))", z_worst, 1.0))

    # Christoffel: symmetry and acceleration identity along RK4 flows
    qs, ps = _random_states(model, rng, 5)
    sym = max(float(np.max(np.abs(raised_christoffel(model, q).gamma
                                  - np.swapaxes(raised_christoffel(model, q).gamma, 0, 1)))) for q in qs)
    checks.append(_check("christoffel symmetry", sym, 1e-12))
    acc_err = 0.0
    delta, h = 1e-3, 1e-4
    for q, p in zip(qs, ps):
        qp = integrate(model, q, p, delta, h)[0]
        qm = integrate(model, q, p, -delta, h)[0]
        fd = (qp - 2 * q + qm) / delta**2
        acc_err = max(acc_err, float(np.max(np.abs(fd - raised_christoffel(model, q).contract(p)))))
    checks.append(_check("acceleration identity", acc_err, 1e-5))

    drift = 0.0
    for q, p in zip(qs, ps):
        drift = max(drift, flow(model, PhaseState(q, p), 1.0, 1e-3).energy_drift)
    checks.append(_check("energy drift (T=1, h=1e-3)", drift, 1e-9))

    if isinstance(model, HeisenbergModel):
        gbg_err = 0.0
        target = np.diag([1.0, 1.0, 0.0])
        for q in pts:
            B, G = cometric_eval(model, q), metric_eval(model, q)
            gbg_err = max(gbg_err, float(np.max(np.abs(G @ B @ G - target))))
        checks.append(_check("GBG = diag(1,1,0)", gbg_err, 1e-12))
        other = HeisenbergModel(7.0 * model.lam)
        lam_err = 0.0
        for _ in range(5):
            f = Polynomial.random(rng, 3, degree=4)
            lam_err = max(lam_err, float(np.max(np.abs(sublaplacian_local(model, f, pts)
                                                        - sublaplacian_local(other, f, pts)))))
        checks.append(_check("lambda independence (lambda vs 7 lambda)", lam_err, 1e-10))

    cross = 0.0
    for q in pts[:5]:
        f = Polynomial.random(rng, model.dim, degree=3)
        mc = sublaplacian_sphere_avg(model, f, q, n_samples, rng)
        loc = float(sublaplacian_local(model, f, q))
        cross = max(cross, abs(mc.value - loc) / (4 * mc.stderr + 1e-12))
    checks.append(_check("sphere-average vs local formula (|diff| / (4 stderr))", cross, 1.0))
    return checks


def cmd_verify(args):
    model = resolve_model(args, validate=False)
    checks = run_verify(model, seed=args.seed, n_samples=args.n_samples)
    ok = all(c["passed"] for c in checks)
    out = sys.stdout if args.out else sys.stderr
    print(f"verify {model.name}", file=out)
    for c in checks:
        print(f"  [{'PASS' if c['passed'] else 'FAIL'}] {c['check']}: {c['value']:.3e} (tol {c['tolerance']:.1e}) {c['detail']}",
              file=out)
    result = {"model": model.name, "passed": ok, "checks": checks}
    if args.format == "csv":
        write_csv("verify", args, ["check", "value", "tolerance", "passed"],
                  [[c["check"], c["value"], c["tolerance"], c["passed"]] for c in checks], args.out)
    else:
        write_json(_envelope("verify", args, result), args.out)
    return EXIT_OK if ok else EXIT_FAIL


# -- laplacian ---------------------------------------------------------------

def cmd_laplacian(args):
    model = resolve_model(args)
    f = resolve_field(args, model.dim)
    rng = np.random.default_rng(args.seed)
    rows = []
    for pt in resolve_points(args, model.dim):
        local = float(sublaplacian_local(model, f, np.array(pt)))
        mc = sublaplacian_sphere_avg(model, f, np.array(pt), args.n_samples, rng)
        rows.append({"point": pt, "local": local, "sphere_avg": mc.value, "stderr": mc.stderr,
                     "difference": mc.value - local})
    if args.format == "csv":
        write_csv("laplacian", args, ["point", "local", "sphere_avg", "stderr", "difference"],
                  [[" ".join(map(repr, r["point"])), r["local"], r["sphere_avg"], r["stderr"], r["difference"]]
                   for r in rows], args.out)
    else:
        write_json(_envelope("laplacian", args, {"model": model.name, "f": f.name, "values": rows}), args.out)
    return EXIT_OK


# -- flow --------------------------------------------------------------------

def cmd_flow(args):
    model = resolve_model(args)
    (q0,) = resolve_points(args, model.dim)[:1]
    p0 = args.momentum or [1.0] + [0.0] * (model.dim - 1)
    if len(p0) != model.dim:
        raise UsageError(f"momentum has {len(p0)} components, model dimension is {model.dim}")
    if args.t < 0:
        raise UsageError("--t must be non-negative for flow")
    state = PhaseState(q0, p0)
    res = flow(model, state, args.t, args.step, trace=True)
    d = model.dim
    rows = [[t] + s.q.tolist() + s.p.tolist() + [float(hamiltonian(model, s))] for t, s in res.trace]
    summary = {"model": model.name, "final_q": res.final.q.tolist(), "final_p": res.final.p.tolist(),
               "energy_drift": res.energy_drift, "n_steps": res.n_steps}
    if args.compare_exact:
        if model.exact_flow is None:
            raise UsageError(f"model {model.name} has no closed-form flow")
        disc = 0.0
        for t, s in res.trace:
            qe, pe = model.exact_flow(state.q, state.p, t)
            disc = max(disc, float(np.max(np.abs(np.concatenate([s.q - qe, s.p - pe])))))
        summary["exact_discrepancy"] = disc
        print(f"sup discrepancy vs closed form: {disc:.3e}", file=sys.stderr)
    print(f"energy drift: {res.energy_drift:.3e}", file=sys.stderr)
    if args.format == "csv":
        header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H"]
        write_csv("flow", args, header, rows, args.out)
    else:
        summary["trace"] = rows
        write_json(_envelope("flow", args, summary), args.out)
    return EXIT_OK


# -- walk --------------------------------------------------------------------

def cmd_walk(args):
    model = resolve_model(args)
    (x0,) = resolve_points(args, model.dim)[:1]
    if args.horizon is not None and args.t is not None:
        raise UsageError("give either --horizon or --t, not both")
    horizon = args.horizon if args.horizon is not None else (args.t or 1.0) / args.epsilon**2
    cfg = WalkConfig(epsilon=args.epsilon, horizon=horizon, step=args.step, exact_legs=not args.rk4, seed=args.seed)
    d = model.dim
    rows = []
    walks = []
    for w in range(args.n_walks):
        path = sample_walk(model, x0, cfg, chunk_rng(args.seed, w))
        for k in range(path.n_legs):
            rows.append([w, "leg", k, path.jump_times[k]] + path.leg_q[k].tolist() + path.leg_p[k].tolist())
        rows.append([w, "final", path.n_legs, path.horizon] + path.final.q.tolist() + path.final.p.tolist())
        walks.append({"n_legs": path.n_legs, "jump_times": path.jump_times.tolist(),
                      "leg_q": path.leg_q.tolist(), "leg_p": path.leg_p.tolist(),
                      "final_q": path.final.q.tolist(), "final_p": path.final.p.tolist()})
    mean_legs = float(np.mean([w["n_legs"] for w in walks]))
    print(f"{args.n_walks} walk(s), horizon {horizon:g}, mean legs {mean_legs:.2f}", file=sys.stderr)
    if args.format == "csv":
        header = ["walk", "kind", "leg", "time"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)]
        write_csv("walk", args, header, rows, args.out)
    else:
        write_json(_envelope("walk", args, {"model": model.name, "horizon": horizon, "epsilon": args.epsilon,
                                            "mean_legs": mean_legs, "walks": walks}), args.out)
    return EXIT_OK


# -- converge / oracle -------------------------------------------------------

def default_reference(model, f_name, x0, t, args):
    """Reference value and provenance for the built-in cases that have one."""
    at_origin = not np.any(x0)
    if f_name is None or not at_origin:
        return None, None, None
    if isinstance(model, HeisenbergModel):
        if f_name == "z":
            return 0.0, 0.0, "symmetry (x,y,z) -> (x,-y,-z)"
        if f_name in ("x_sq", "y_sq"):
            key = "E[x^2]" if f_name == "x_sq" else "E[y^2]"
            if args.oracle_file:
                doc = json.loads(Path(args.oracle_file).read_text(encoding="utf-8"))
                mom = doc["result"]["moments"][key]
                if not math.isclose(doc["result"]["t"], t):
                    raise UsageError(f"oracle file is for t={doc['result']['t']}, not t={t}")
                return mom["value"], mom["stderr"], f"sde-oracle file {args.oracle_file}"
            rep = heisenberg_sde_oracle(t, args.n_paths, args.oracle_dt, seed=args.seed + 1, workers=args.workers)
            return rep.value(key), rep.stderr(key), f"sde-oracle (dt={rep.dt:g}, n={rep.n_paths}, seed={rep.seed})"
    if isinstance(model, EuclideanModel):
        if f_name in ("x_sq", "y_sq", "z_sq"):
            return 2 * t / model.dim, 0.0, "heat semigroup of (1/d) Laplacian: 2t/d"
        if f_name == "norm_sq":
            return 2 * t, 0.0, "heat semigroup of (1/d) Laplacian: 2t"
    return None, None, None


def cmd_converge(args):
    if not args.eps_list:
        raise UsageError("--eps-list is missing or empty")
    model = resolve_model(args)
    f = resolve_field(args, model.dim)
    (x0,) = resolve_points(args, model.dim)[:1]
    x0 = np.array(x0)
    f_name = None if args.f_expr else (args.f_name or "x_sq")
    ref, ref_se, prov = default_reference(model, f_name, x0, args.t, args)
    try:
        table = convergence_sweep(model, f, x0, args.t, args.eps_list, args.n_paths, args.seed,
                                  reference=ref, reference_stderr=ref_se, provenance=prov,
                                  workers=args.workers, exact_legs=not args.rk4, step=args.step)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [[r.epsilon, r.estimate, r.stderr, r.n_paths,
             "" if ref is None else ref, prov or ""] for r in table.rows]
    summary = _envelope("converge", args, table.as_dict())
    for r in table.rows:
        dev = "" if ref is None else f"  |dev| {abs(r.estimate - ref):.4f}"
        print(f"eps {r.epsilon:<8g} estimate {r.estimate:.5f} +- {r.stderr:.5f}{dev}", file=sys.stderr)
    if args.format == "csv":
        write_csv("converge", args, ["epsilon", "estimate", "stderr", "n_paths", "reference", "provenance"],
                  rows, args.out)
        summary_path = args.summary or (f"{args.out}.summary.json" if args.out else None)
        if summary_path:
            write_json(summary, summary_path)
    else:
        write_json(summary, args.out)
    return EXIT_OK


def cmd_oracle(args):
    rep = heisenberg_sde_oracle(args.t, args.n_paths, args.dt, args.seed, args.frequency, workers=args.workers)
    for k, m in rep.moments.items():
        print(f"{k:<12} {m['value']:.5f} +- {m['stderr']:.5f}", file=sys.stderr)
    write_json(_envelope("oracle", args, rep.payload()), args.out)
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replay:
        try:
            command, config = read_embedded_config(args.replay)
        except (OSError, ValueError, KeyError, UsageError) as exc:
            parser.exit(EXIT_USAGE, f"srwalk: error: cannot replay {args.replay}: {exc}\n")
        if command != args.command:
            parser.exit(EXIT_USAGE, f"srwalk: error: {args.replay} was written by {command!r}, not {args.command!r}\n")
        for k, v in config.items():
            setattr(args, k, v)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"srwalk: error: {exc}\n")
    except (ModelSpecError, ModelValidationError, ExpressionSyntaxError, ModelEvaluationError,
            DegenerateRankError, IntegrationError, WalkError, EstimationError, OSError) as exc:
        print(f"srwalk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
