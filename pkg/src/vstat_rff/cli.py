"""Command-line driver: ``vstat-rff <subcommand> [--config FILE] [--set k=v]``.

Exit status is 0 on success, 1 on validation errors (including unknown
subcommands and missing files) and 2 on numeric or resource errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np
from scipy import optimize

from . import (__version__, artifacts, bounds, experiments, hoeffding, kernels, mixing,
               rff, vstat)
from .artifacts import fmt
from .config import ExperimentConfig, apply_overrides, load_config
from .errors import NumericError, ResourceError, ValidationError

COMMANDS = ("kernel-info", "approx", "decompose", "simulate", "bound", "calibrate", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="vstat-rff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vstat-rff {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the master seed")
        return p

    ki = common(sub.add_parser("kernel-info", help="Fourier facts about a kernel"))
    ki.add_argument("name", nargs="?", help="kernel name (default: config kernel)")
    ki.add_argument("--m", type=int)
    ki.add_argument("--d", type=int)
    common(sub.add_parser("approx", help="build an RFF expansion and measure its error"))
    common(sub.add_parser("decompose", help="Monte Carlo Hoeffding decomposition"))
    common(sub.add_parser("simulate", help="simulate a path and its V-statistic series"))
    bd = common(sub.add_parser("bound", help="evaluate bound constants and tail curve"))
    bd.add_argument("--n", type=int, help="sample size (default: first of nList)")
    common(sub.add_parser("calibrate", help="calibrate C and test it on fresh tails"))
    common(sub.add_parser("report", help="calibration, scaling study and plots"))
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return apply_overrides(cfg, overrides)


def _out(cfg, name):
    return os.path.join(cfg.out, name)


def _header(cfg):
    return artifacts.header_lines(cfg.sha256(), cfg.seed)


def _say(key, value):
    print(f"{key} = {fmt(value)}")


def _kernel(cfg, name=None, m=None, d=None):
    return kernels.make_kernel(name or cfg.kernel, m=m or cfg.m, d=d or cfg.d,
                               **({} if name and name != cfg.kernel else cfg.kernelParams))


# ---------------------------------------------------------------------------
# subcommands


def cmd_kernel_info(cfg, args):
    spec = _kernel(cfg, args.name, args.m, args.d)
    info = kernels.kernel_info(spec)
    _say("kernel", spec.kind)
    _say("f0(0)", spec.value_at_zero())
    _say("fhat_l1", kernels.fourier_l1_norm(spec))
    _say("PD", spec.pd)
    for key in sorted(info):
        if key not in ("kernel", "f0(0)", "fourier_l1", "pd"):
            _say(key, info[key])
    return 0


def cmd_approx(cfg, args):
    spec = _kernel(cfg)
    seeds = mixing.SeedSpec(cfg.seed)
    exp = rff.build_expansion(spec, cfg.D, seeds.sequence(mixing.STREAM_FEATURES))
    err = rff.uniform_error(exp, spec, cfg.M, cfg.gridPoints)
    parts = rff.decompose_sign_measure(spec)
    mu = kernels.fourier_moment(spec, cfg.q)
    budget = None
    if math.isfinite(mu):
        budget = rff.required_sample_size(cfg.t, cfg.M, cfg.q, mu, parts.masses, spec.m, spec.d)
    os.makedirs(cfg.out, exist_ok=True)
    artifacts.write_json(_out(cfg, "expansion.json"), exp.to_dict(), _header(cfg))
    summary = {"kernel": spec.kind, "D": cfg.D, "n_bases": exp.n_bases, "n_terms": exp.n_terms,
               "F": exp.F, "F_cap": 2 ** spec.m * kernels.fourier_l1_norm(spec),
               "sup_error": err, "M": cfg.M, "grid_points": cfg.gridPoints,
               "masses": parts.masses,
               "required_D": list(budget.D) if budget else None,
               "t": cfg.t, "covering_radius": budget.r if budget else None,
               "config": cfg.to_dict()}
    artifacts.write_json(_out(cfg, "approx.json"), summary, _header(cfg))
    for key in ("n_bases", "n_terms", "F", "F_cap", "sup_error"):
        _say(key, summary[key])
    if budget:
        _say("required_D", "/".join(str(x) for x in budget.D))
    print(f"check budget F <= 2^m |fhat|: {'pass' if exp.F <= summary['F_cap'] + 1e-9 else 'FAIL'}")
    return 0


def cmd_decompose(cfg, args):
    spec = _kernel(cfg)
    process = mixing.ProcessSpec(cfg.process, cfg.processParams, cfg.d)
    marginal = hoeffding.MarginalSampler.for_process(process)
    seeds = mixing.SeedSpec(cfg.seed)
    res = hoeffding.decompose(spec, marginal, 2000, seeds.sequence(mixing.STREAM_MARGINAL),
                              r=cfg.r, check_N=20000)
    artifacts.write_json(_out(cfg, "decomposition.json"),
                         dict(res.to_dict(), config=cfg.to_dict()), _header(cfg))
    _say("theta", res.theta.value)
    _say("theta_stderr", res.theta.stderr)
    _say("r", res.r)
    for rep in res.degeneracy:
        print(f"check degeneracy p={rep.p}: {'pass' if rep.passed else 'FAIL'}")
    return 0


def cmd_simulate(cfg, args):
    st = experiments.setup(cfg)
    n = cfg.nList[0]
    p = cfg.level
    path = mixing.generate_path(st.process, n, st.seeds.rng(mixing.STREAM_PATH, 0))
    series, table = vstat.v_features(st.component(p), path)
    T = vstat.maximal_statistic(series)
    hdr = _header(cfg)
    artifacts.write_csv(_out(cfg, "path.csv"), ["index"] + [f"x{j + 1}" for j in range(path.d)],
                        [[i + 1, *row] for i, row in enumerate(path.points)], hdr)
    sc = series.scaled()
    artifacts.write_csv(_out(cfg, "series.csv"), ["k", "V_k", "scaled_abs", "running_max"],
                        zip(range(1, n + 1), series.values, sc, np.maximum.accumulate(sc)), hdr)
    _say("n", n)
    _say("p", p)
    _say("T_p", T.value)
    _say("argmax_k", T.argmax)
    ok = bool(np.all(table.Z >= np.abs(table.S[-1]) - 1e-12))
    print(f"check Z_j >= |S_nj|: {'pass' if ok else 'FAIL'}")
    return 0


def _x_grid(cfg, bc, points=30, floor=1e-6):
    """``cfg.xGrid``, or ``points`` values from 0 to where the bound hits ``floor``."""
    if isinstance(cfg.xGrid, list):
        return np.asarray(cfg.xGrid, dtype=float)
    target = lambda x: bounds.tail_bound(bc, x=x) - floor  # noqa: E731
    hi = 1.0
    while target(hi) > 0:
        hi *= 2.0
    return np.linspace(0.0, optimize.brentq(target, 0.0, hi), points)


def cmd_bound(cfg, args):
    n = args.n or cfg.nList[0]
    p = cfg.level
    bc = experiments.config_constants(cfg, n, p)
    curve = bounds.TailCurve.build(bc, _x_grid(cfg, bc))
    hdr = _header(cfg) + [f"variant {bc.provenance}", f"C {fmt(bc.C)}"]
    artifacts.write_csv(_out(cfg, "bound.csv"), ["x", "bound"], zip(curve.x, curve.values), hdr)
    artifacts.write_json(_out(cfg, "bound.json"), dict(curve.to_dict(), config=cfg.to_dict()),
                         hdr)
    _say("variant", bc.provenance)
    _say("n", n)
    _say("p", p)
    _say("A", bc.A)
    _say("M", bc.M)
    _say("C", bc.C)
    ok = curve.values[0] <= 6.0 and bool(np.all(np.diff(curve.values) <= 0))
    print(f"check curve monotone and <= 6: {'pass' if ok else 'FAIL'}")
    return 0


def _tail_rows(tail, curve):
    return zip(tail.x, tail.phat, tail.lo, tail.hi, curve)


TAIL_COLUMNS = ["x", "phat", "wilsonLo", "wilsonHi", "bound"]


def _calibrate(cfg, plots):
    from . import plotting

    if len(cfg.nList) < 2:
        raise ValidationError("calibrate needs nList = [n_calibrate, n_fresh, ...]", "nList")
    res = experiments.dominance_study(cfg)
    cal = res.calibration
    hdr = _header(cfg)
    tail = res.calibration_tail
    cal_curve = np.atleast_1d(bounds.tail_bound(cal.constants, x=tail.x))
    artifacts.write_csv(_out(cfg, f"tail_n{tail.n}.csv"), TAIL_COLUMNS,
                        _tail_rows(tail, cal_curve), hdr + [f"C {fmt(cal.C)}"])
    if plots:
        plotting.tail_plot(_out(cfg, f"tail_n{tail.n}.svg"), tail, cal_curve, header=hdr)
    fresh = []
    for ft, (ok, curve) in zip(res.fresh, res.checks):
        artifacts.write_csv(_out(cfg, f"tail_n{ft.n}.csv"), TAIL_COLUMNS,
                            _tail_rows(ft, curve), hdr + [f"C {fmt(cal.C)}"])
        if plots:
            plotting.tail_plot(_out(cfg, f"tail_n{ft.n}.svg"), ft, curve, header=hdr)
        fresh.append({"n": ft.n, "dominates": ok})
    summary = {"C": cal.C, "capped": cal.capped, "binding_x": cal.binding_x,
               "n_calibrate": tail.n, "A": cal.constants.A, "M": cal.constants.M,
               "variant": cal.constants.provenance, "clip_rate": tail.clip_rate,
               "audit_max_rel_gap": tail.audit, "fresh": fresh, "passed": res.passed}
    _say("C", cal.C)
    _say("binding_x", cal.binding_x)
    _say("A", cal.constants.A)
    _say("M", cal.constants.M)
    _say("audit_max_rel_gap", tail.audit)
    for item in fresh:
        print(f"check dominance at n={item['n']}: {'pass' if item['dominates'] else 'FAIL'}")
    return summary, res


def cmd_calibrate(cfg, args):
    summary, _ = _calibrate(cfg, plots=True)
    artifacts.write_json(_out(cfg, "calibration.json"), dict(summary, config=cfg.to_dict()),
                         _header(cfg))
    return 0


def cmd_report(cfg, args):
    from . import plotting

    summary, _ = _calibrate(cfg, plots=True)
    hdr = _header(cfg)
    if len(cfg.nList) >= 3:
        rep = experiments.scaling_study(cfg)
        artifacts.write_csv(_out(cfg, "scaling.csv"), ["n", "medianTp", "scaledMedian"],
                            zip(rep.n, rep.median, rep.scaled), hdr)
        plotting.scaling_plot(_out(cfg, "scaling.svg"), rep, header=hdr)
        summary["scaling_spread"] = rep.spread
        _say("scaling_spread", rep.spread)
    artifacts.write_json(_out(cfg, "summary.json"), dict(summary, config=cfg.to_dict()), hdr)
    return 0


HANDLERS = {"kernel-info": cmd_kernel_info, "approx": cmd_approx, "decompose": cmd_decompose,
            "simulate": cmd_simulate, "bound": cmd_bound, "calibrate": cmd_calibrate,
            "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        print("config: " + json.dumps(cfg.to_dict(), sort_keys=True))
        return HANDLERS[args.command](cfg, args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MemoryError:
        print("error: out of memory; reduce n, R or D", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
