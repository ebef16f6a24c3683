"""Command line front end: bundleopt {zeta,solve,oracle,certify,sweep,report}.

Every command reads a JSON run configuration (see ``config.CONFIG_SCHEMA``),
writes deterministic CSV/JSON files under ``--out`` and exits with 0 on
success, 2 when a certificate's necessary condition fails and 1 on errors.
"""

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import certify as cert
from .config import RESULT_SCHEMA, SWEEP_VARS, TARGETS, load_config, marginal_from_config, model_from_config, validate
from .errors import BundleOptError, ConfigInvalid, DerivativeUnavailable
from .mech import demand_interval, fmt, participation_floor
from .oracle import lp_oracle, variational_oracle
from .solver import FollowZeta, Phi, SolveOptions, SolveResult, solve_two_good
from .zeta import reference_line, sample_zeta, shear, zeta_derivs

log = logging.getLogger("bundleopt")

EXIT_OK, EXIT_ERROR, EXIT_NECESSARY_FAILS = 0, 1, 2


# ---------------------------------------------------------------------------
# output helpers


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, float, np.integer, np.floating)):
        return fmt(v)
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _outdir(cfg):
    out = cfg.get("out", ".")
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_zeta(cfg):
    model = model_from_config(cfg)
    k = cfg["k"]
    n = cfg.get("zeta", {}).get("n", 401)
    curve = sample_zeta(model, k, n)
    xs, vals = curve.xs, curve.values
    d1 = d2 = None
    if k == 1.0 and model.iid:
        try:
            d1, d2 = zeta_derivs(model.marginal, xs)
        except DerivativeUnavailable:
            pass
    if d1 is None:  # sampled curve: finite differences
        d1 = np.gradient(vals, xs)
        d2 = np.gradient(d1, xs)
    out = _outdir(cfg)
    write_csv(os.path.join(out, "zeta.csv"), ["x", "zeta", "zeta_prime", "zeta_second", "reference_line"],
              zip(xs, vals, d1, d2, reference_line(k, xs)))
    sh = curve.shape
    write_json(os.path.join(out, "zeta_shape.json"), {
        "k": k,
        "monotonicity": sh.monotonicity.value,
        "curvature": sh.curvature.value,
        "crossings": list(sh.crossings),
        "double_regular": sh.double_regular,
        "zero_plateaus": [list(p) for p in sh.zero_plateaus],
        "closed_form": list(curve.closed_form) if curve.closed_form else None,
    })
    return EXIT_OK


def _solve_options(cfg):
    opts = dict(cfg.get("solve", {}))
    return SolveOptions(**opts)


def _figure_data(out, model, res, k, zeta):
    u = res.ubar
    xs = np.linspace(0.0, 1.0, 201)
    c = shear(k)
    # participation boundary of the upper half, as points of the square
    t = participation_floor(u, k)(xs)
    write_csv(os.path.join(out, "fig_participation.csv"), ["y", "x1", "x2"],
              zip(xs, xs - (1.0 - t) * c, t))
    write_csv(os.path.join(out, "fig_zeta.csv"), ["x", "zeta_k", "one_minus_ubar"],
              zip(xs, zeta(xs), 1.0 - u(xs)))
    write_csv(os.path.join(out, "fig_phi.csv"), ["x", "Phi"], zip(xs, Phi(model, u, k, xs)))
    floor = participation_floor(u, k)
    rows = []
    for e in res.menu.entries:
        if e.q1 > e.q2:
            continue  # mirror of an upper-half bundle
        a, b = demand_interval(u, e.slope) if e.status != "Separating" else (e.a, e.b)
        for y in sorted({a, b}):
            bottom = float(floor(y))
            rows.append((e.q1, e.q2, y, y, 1.0, y - (1.0 - bottom) * c, bottom))
    write_csv(os.path.join(out, "fig_demand.csv"),
              ["q1", "q2", "y", "x1_top", "x2_top", "x1_bottom", "x2_bottom"], rows)


def cmd_solve(cfg):
    model = model_from_config(cfg)
    k = cfg["k"]
    res = solve_two_good(model, k, _solve_options(cfg))
    out = _outdir(cfg)
    doc = {"config": cfg, "result": res.to_dict()}
    validate(json.loads(json.dumps(doc, default=_json_default)), RESULT_SCHEMA)
    write_json(os.path.join(out, "solve_result.json"), doc)
    res.menu.write_csv(os.path.join(out, "menu.csv"))
    xs = np.linspace(0.0, 1.0, 201)
    u = res.ubar
    write_csv(os.path.join(out, "ubar.csv"), ["x", "ubar", "slope_right"],
              zip(xs, u(xs), [u.slope(x, "right") if x < 1.0 else u.slope(x, "left") for x in xs]))
    rep = res.report
    write_csv(os.path.join(out, "mr_report.csv"),
              ["q", "q1", "q2", "mr", "phi_left", "phi_right", "status", "flags", "passed"], rep.to_rows())
    zeta = FollowZeta.from_curve(sample_zeta(model, k))
    _figure_data(out, model, res, k, zeta)
    log.info("solve: %s revenue %.10f", res.menu.label, res.revenue)
    return EXIT_OK


def load_solve_result(path):
    """Validate a solve_result.json file and rebuild its SolveResult."""
    with open(path) as fh:
        doc = json.load(fh)
    validate(doc, RESULT_SCHEMA)
    cfg = doc["config"]
    zeta = None
    if any(s["kind"] == "follow" for s in doc["result"]["ubar"]["segments"]):
        zeta = FollowZeta.from_curve(sample_zeta(model_from_config(cfg), cfg["k"]))
    return SolveResult.from_dict(doc["result"], zeta=zeta)


def cmd_oracle(cfg):
    model = model_from_config(cfg)
    k = cfg["k"]
    o = dict(cfg.get("oracle", {}))
    method = o.pop("method", "lp")
    out = _outdir(cfg)
    if method == "lp":
        n = o.get("n", 21)
        kw = {key: o[key] for key in ("max_iter", "tol", "allow_large") if key in o}
        g = lp_oracle(model, n, k, **kw)
        write_csv(os.path.join(out, "grid_u.csv"), ["x1", "x2", "u"],
                  ((p[0], p[1], v) for p, v in zip(g.points, g.u)))
        write_csv(os.path.join(out, "grid_grad.csv"), ["x1", "x2", "q1", "q2"],
                  ((p[0], p[1], q[0], q[1]) for p, q in zip(g.points, g.grad)))
        write_json(os.path.join(out, "revenue.json"), {
            "method": "lp", "n": n, "k": k, "revenue": g.revenue,
            "ic_min_slack": g.ic_min, "slackness_max": g.cs_max, "active_share": g.qa_share,
        })
    else:
        n = o.get("n", 400)
        kw = {key: o[key] for key in ("max_iter", "tol") if key in o}
        r = variational_oracle(model, n, k, **kw)
        xs = r.knots
        u = r.ubar(xs)
        write_csv(os.path.join(out, "grid_u.csv"), ["x", "ubar", "lcal"], zip(xs, u, r.lcal))
        slopes = np.diff(u) / np.diff(xs)
        write_csv(os.path.join(out, "grid_grad.csv"), ["x_lo", "x_hi", "slope"], zip(xs[:-1], xs[1:], slopes))
        write_json(os.path.join(out, "revenue.json"), {
            "method": "variational", "n": n, "k": k, "revenue": r.revenue, "iterations": r.iterations,
            "lcal_d0": r.lcal_d0, "support_gap": r.support_gap,
        })
    return EXIT_OK


def run_certificate(cfg, target=None):
    c = dict(cfg.get("certify", {}))
    target = target or c.get("target", "pure2d")
    prices = c.get("prices", {})
    k = cfg["k"]
    if target in ("pureN", "separateN"):
        marg = marginal_from_config(cfg["marginal"])
        N = c.get("N", cfg.get("dims", 2))
        if target == "pureN":
            return cert.certify_pure_N(marg, N, p1=prices.get("p1"), qmc_seed=cfg.get("seed"))
        return cert.certify_separate_N(marg, N, p_single=prices.get("p_single"))
    model = model_from_config(cfg)
    if target == "pure2d":
        return cert.certify_pure_2d(model, prices.get("p1"), k=k)
    if target == "mixed2d":
        return cert.certify_mixed_2d(model, prices.get("p_single"), prices.get("p_bundle"))
    if target == "separate2d":
        return cert.certify_separate_2d(model, prices.get("p_single"))
    return cert.exclusion_check(model, c.get("space", "hypercube"), k)


def cmd_certify(cfg):
    res = run_certificate(cfg)
    out = _outdir(cfg)
    doc = res.to_dict()
    if cfg.get("seed") is not None:
        doc["seed"] = cfg["seed"]
    write_json(os.path.join(out, "certificate.json"), doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_NECESSARY_FAILS if not res.necessary else EXIT_OK


def sweep_values(sw):
    n = int(np.floor((sw["stop"] - sw["start"]) / sw["step"] + 1e-9)) + 1
    vals = sw["start"] + sw["step"] * np.arange(n)
    return [float(round(v, 12)) for v in vals]


def _point_config(cfg, var, val):
    pc = json.loads(json.dumps(cfg))
    pc.pop("sweep", None)
    if var in ("eta", "theta", "lam"):
        pc["marginal"][var] = val
    elif var == "k":
        pc["k"] = val
    elif var == "N":
        pc.setdefault("certify", {})["N"] = int(round(val))
    elif var == "xlo":
        pc["marginal"]["support"] = [val, val + 1.0]
    return pc


def sweep_point(cfg, var, val, target=None):
    """One summary row of a sweep (module level so worker processes can run it)."""
    pc = _point_config(cfg, var, val)
    row = {"value": val, "branch": "", "class": "", "family": "", "cutoffs": "", "revenue": None}
    if var in ("N", "xlo"):
        targets = [target] if target else ["pureN", "separateN"]
    else:
        targets = [target] if target else ["pure2d"]
        try:
            res = solve_two_good(model_from_config(pc), pc["k"], _solve_options(pc))
            row.update(branch=res.branch, family=res.family, revenue=res.revenue,
                       cutoffs=json.dumps(res.cutoffs, sort_keys=True))
            row["class"] = res.menu.label
        except BundleOptError as exc:
            row["class"] = f"error:{type(exc).__name__}"
            if getattr(exc, "result", None) is not None:
                row["class"] += f"({exc.result.menu.label})"
    for t in targets:
        try:
            row[f"cert_{t}"] = run_certificate(pc, t).verdict.value
        except BundleOptError as exc:
            row[f"cert_{t}"] = f"error:{type(exc).__name__}"
    return row


def transitions(rows, keys):
    out = []
    for key in keys:
        for prev, cur in zip(rows, rows[1:]):
            if prev.get(key) != cur.get(key):
                out.append({"field": key, "from": prev.get(key), "to": cur.get(key),
                            "after": prev["value"], "at": cur["value"]})
    return out


def cmd_sweep(cfg, jobs=1):
    sw = cfg.get("sweep")
    if sw is None:
        raise ConfigInvalid("/sweep: required for the sweep command")
    var = sw["variable"]
    vals = sweep_values(sw)
    target = sw.get("target")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(sweep_point, [cfg] * len(vals), [var] * len(vals), vals, [target] * len(vals)))
    else:
        rows = [sweep_point(cfg, var, v, target) for v in vals]
    keys = ["value", "branch", "class", "family", "cutoffs", "revenue"]
    keys += sorted({k for r in rows for k in r if k.startswith("cert_")})
    out = _outdir(cfg)
    write_csv(os.path.join(out, "sweep.csv"), [var if k == "value" else k for k in keys],
              ([r.get(k) for k in keys] for r in rows))
    trans = transitions(rows, ["class"] + [k for k in keys if k.startswith("cert_")])
    write_json(os.path.join(out, "transitions.json"), {"variable": var, "transitions": trans})
    for t in trans:
        print(f"{t['field']}: {t['from']} -> {t['to']} between {var}={fmt(t['after'])} and {fmt(t['at'])}")
    return EXIT_OK


def cmd_report(cfg):
    """Collect the JSON outputs found in --out into report.md."""
    out = _outdir(cfg)
    lines = ["# bundleopt report", ""]
    path = os.path.join(out, "solve_result.json")
    if os.path.exists(path):
        res = load_solve_result(path)
        lines += ["## Solve", "", f"- class: {res.menu.label}", f"- family: {res.family}",
                  f"- revenue: {fmt(res.revenue)}", f"- FOC/SOC passed: {res.report.passed}"]
        lines += [f"- {name} = {fmt(v)}" for name, v in sorted(res.cutoffs.items())]
        lines += ["", "| q1 | q2 | price | status |", "|---|---|---|---|"]
        lines += [f"| {fmt(e.q1)} | {fmt(e.q2)} | {fmt(e.price)} | {e.status} |" for e in res.menu.entries]
        lines.append("")
    path = os.path.join(out, "revenue.json")
    if os.path.exists(path):
        with open(path) as fh:
            rv = json.load(fh)
        lines += ["## Oracle", "", f"- {rv['method']} (n={rv['n']}, k={fmt(rv['k'])}): revenue {fmt(rv['revenue'])}", ""]
    path = os.path.join(out, "certificate.json")
    if os.path.exists(path):
        with open(path) as fh:
            cd = json.load(fh)
        lines += ["## Certificate", "", f"- {cd['target']}: {cd['verdict']}"]
        lines += [f"- {k} = {fmt(v)}" for k, v in sorted(cd["residuals"].items())]
        lines.append("")
    path = os.path.join(out, "transitions.json")
    if os.path.exists(path):
        with open(path) as fh:
            td = json.load(fh)
        lines += ["## Sweep transitions", ""]
        lines += [f"- {t['field']}: {t['from']} -> {t['to']} between {fmt(t['after'])} and {fmt(t['at'])}"
                  for t in td["transitions"]] or ["- none"]
        lines.append("")
    with open(os.path.join(out, "report.md"), "w") as fh:
        fh.write("\n".join(lines))
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {"zeta": cmd_zeta, "solve": cmd_solve, "oracle": cmd_oracle, "certify": cmd_certify,
            "sweep": cmd_sweep, "report": cmd_report}


# ---------------------------------------------------------------------------
# argument parsing


def _kv(text):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def build_parser():
    p = argparse.ArgumentParser(prog="bundleopt", description="Optimal multi-good selling mechanisms.")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: config 'out' or .)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--seed", type=int, help="seed recorded in outputs (QMC certificates)")
    p.add_argument("--tol-override", type=float, help="replace the FOC / oracle tolerance")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--k", type=float)
        s.add_argument("--marginal", help="marginal kind, e.g. uniform or trunc_pareto")
        s.add_argument("--param", action="append", type=_kv, default=[], help="marginal parameter key=value")
        if name == "oracle":
            s.add_argument("--method", choices=["lp", "variational"])
            s.add_argument("--n", type=int)
        if name == "zeta":
            s.add_argument("--n", type=int)
        if name == "certify":
            s.add_argument("--target", choices=TARGETS)
            s.add_argument("--N", type=int)
            s.add_argument("--params", type=json.loads, help="JSON object of prices (p1, p_single, p_bundle)")
        if name == "sweep":
            s.add_argument("--var", choices=SWEEP_VARS)
            s.add_argument("--start", type=float)
            s.add_argument("--stop", type=float)
            s.add_argument("--step", type=float)
            s.add_argument("--target", choices=TARGETS)
    return p


def config_from_args(args):
    over = {"k": args.k, "out": args.out, "seed": args.seed}
    cfg = load_config(args.config, over)
    if args.marginal:
        cfg["marginal"] = {"kind": args.marginal}
    for key, val in args.param:
        cfg["marginal"][key] = val
    cmd = args.command
    if cmd in ("oracle", "zeta"):
        sect = cfg.setdefault(cmd, {})
        if cmd == "oracle" and args.method:
            sect["method"] = args.method
        if args.n is not None:
            sect["n"] = args.n
    if cmd == "certify":
        sect = cfg.setdefault("certify", {})
        if args.target:
            sect["target"] = args.target
        if args.N is not None:
            sect["N"] = args.N
        if args.params:
            sect["prices"] = args.params
    if cmd == "sweep":
        given = {"variable": args.var, "start": args.start, "stop": args.stop, "step": args.step,
                 "target": args.target}
        if any(v is not None for v in given.values()):
            sect = cfg.setdefault("sweep", {})
            sect.update({k: v for k, v in given.items() if v is not None})
    if args.tol_override is not None:
        cfg.setdefault("solve", {})["foc_tol"] = args.tol_override
        if cmd == "oracle":
            cfg["oracle"]["tol"] = args.tol_override
    return validate(cfg)


def _setup_logging():
    level = os.environ.get("BUNDLEOPT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "sweep":
            return cmd_sweep(cfg, max(1, args.jobs))
        return COMMANDS[args.command](cfg)
    except BundleOptError as exc:
        print(f"bundleopt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"bundleopt: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
