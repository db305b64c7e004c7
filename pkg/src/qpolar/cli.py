"""Command line driver: surveys, code construction/simulation, MAC runs and linear-mixture analysis.

Exit codes: 0 success, 1 parse error, 2 validation error, 3 resource limit.
Set QPOLAR_THREADS to run Monte Carlo chunks on several threads.
"""
from __future__ import annotations

import argparse
import itertools
import sys

import numpy as np

from . import io, linmac
from .errors import ParseError, QpolarError, ValidationError
from .macpolar import construct_mac_code, mac_simulate, mac_survey, rate_region
from .polarcode import CodeConfig, bec_code, construct_code, simulate
from .polarize import survey


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, channel=True, depth=True, out_help="output path ('-' for stdout)"):
    if channel:
        p.add_argument("--channel", required=True, help="channel JSON file or built-in name (default: required)")
    if depth:
        p.add_argument("--depth", type=int, default=4, help="number of polarization steps n (default: 4)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--out", default="-", help=out_help + " (default: -)")


def _polar_opts(p: argparse.ArgumentParser, modes=("exact", "mc")):
    p.add_argument("--mode", choices=modes, default="exact", help="exact recursion or Monte Carlo (default: exact)")
    p.add_argument("--delta", type=float, default=0.1, help="classification tolerance (default: 0.1)")
    p.add_argument("--samples", type=int, default=10_000, help="Monte Carlo samples per run (default: 10000)")
    p.add_argument("--branch-sample", type=int, default=None,
                   help="Monte Carlo: number of branches sampled (default: all)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qpolar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qpolar {io.__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("survey", help="classify every branch of a polarized channel")
    _common(p)
    p.add_argument("--quasigroup", required=True, help="quasigroup JSON file or built-in name")
    _polar_opts(p)

    code = sub.add_parser("code", help="polar code construction and simulation")
    csub = code.add_subparsers(dest="action", required=True, parser_class=_Parser)
    b = csub.add_parser("build", help="construct a code and write its JSON description")
    _common(b)
    b.add_argument("--quasigroup", default="XOR:1", help="quasigroup (default: XOR:1)")
    _polar_opts(b, modes=("exact", "mc", "bec"))
    b.add_argument("--z-threshold", type=float, default=1e-3, help="max projected Z of active branches (default: 1e-3)")
    s = csub.add_parser("simulate", help="simulate a constructed code over a channel")
    _common(s, depth=False)
    s.add_argument("--code", required=True, help="code JSON written by 'code build'")
    s.add_argument("--trials", type=int, default=1000, help="number of blocks (default: 1000)")

    m = sub.add_parser("mac-survey", help="classify branches of a polarized MAC by generalized matrices")
    _common(m)
    _polar_opts(m)
    m.add_argument("--z-threshold", type=float, default=1e-3, help="Z threshold for usable branches (default: 1e-3)")

    mc = sub.add_parser("mac-code", help="construct and simulate a MAC polar code")
    _common(mc)
    _polar_opts(mc)
    mc.add_argument("--z-threshold", type=float, default=1e-3, help="max Z of active branches (default: 1e-3)")
    mc.add_argument("--policy", choices=("first", "last"), default="first",
                    help="which independent rows carry information (default: first)")
    mc.add_argument("--trials", type=int, default=0, help="simulated blocks, 0 to skip (default: 0)")

    lm = sub.add_parser("linmac", help="mixtures of linear MACs")
    lsub = lm.add_subparsers(dest="action", required=True, parser_class=_Parser)
    e = lsub.add_parser("evolve", help="averaged weight trajectory of a binary 2-user mixture")
    _common(e, channel=False)
    e.add_argument("--mixture", required=True, help="mixture JSON file")
    c = lsub.add_parser("consistency", help="per-subset consistency and sufficient-condition report")
    _common(c, channel=False, depth=False)
    c.add_argument("--mixture", required=True, help="mixture JSON file")
    return ap


def _config(args, keys) -> dict:
    return {k: getattr(args, k.replace("-", "_")) for k in keys}


def cmd_survey(args) -> str:
    ch = io.load_channel(args.channel)
    g = io.load_quasigroup(args.quasigroup)
    res = survey(ch, g, args.depth, mode=args.mode, delta=args.delta, branch_sample=args.branch_sample,
                 seed=args.seed, samples=args.samples)
    rows = []
    for r in res.reports:
        h = r.matched_partition
        rows.append([r.index, str(r.signs), r.mutual_info, h.signature() if h is not None else "",
                     np.log2(h.block_count) if h is not None else "", r.partition_info if h is not None else "",
                     r.z_projected if h is not None else ""])
    head = io.header("survey", args.seed, _config(args, ["channel", "quasigroup", "depth", "mode", "delta",
                                                         "samples", "branch-sample"]))
    foot = [f"classified_fraction={io.fmt(res.classified_fraction)}", f"mean_info={io.fmt(res.mean_info)}",
            f"base_info={io.fmt(res.base_info)}"]
    return io.render_csv(head, ["branch", "signs", "info", "partition", "log2_blocks", "projected_info", "z"],
                         rows, foot)


def cmd_code_build(args) -> str:
    ch_name = args.channel
    if args.mode == "bec":
        name, _, eps = ch_name.partition(":")
        if name != "BEC" or not eps:
            raise ValidationError("--mode bec needs a BEC:eps channel")
        c = bec_code(float(eps), args.depth, args.z_threshold, args.delta, args.seed)
    else:
        c = construct_code(io.load_channel(ch_name), io.load_quasigroup(args.quasigroup), args.depth,
                           delta=args.delta, z_threshold=args.z_threshold, mode=args.mode, samples=args.samples,
                           seed=args.seed)
    d = c.to_dict(args.quasigroup if args.mode != "bec" else "XOR:1")
    d["union_bound"] = c.union_bound
    d["active_count"] = len(c.active_branches)
    head = io.header("code build", args.seed, _config(args, ["channel", "quasigroup", "depth", "mode", "delta",
                                                             "z-threshold"]))
    return io.render_json(head, d)


def cmd_code_simulate(args) -> str:
    c = CodeConfig.from_dict(io.read_json_with_header(args.code))
    ch = io.load_channel(args.channel)
    r = simulate(c, ch, args.trials, args.seed)
    head = io.header("code simulate", args.seed, _config(args, ["channel", "code", "trials"]))
    return io.render_csv(head, ["n", "rate_bits", "trials", "block_error_rate", "symbol_error_rate", "stderr",
                                "union_bound"],
                         [[c.n, c.rate_bits, r.trials, r.block_error_rate, r.symbol_error_rate, r.stderr,
                           r.union_bound]])


def cmd_mac_survey(args) -> str:
    p = io.load_mac(args.channel)
    res = mac_survey(p, args.depth, mode=args.mode, delta=args.delta, z_threshold=args.z_threshold,
                     branch_sample=args.branch_sample, seed=args.seed, samples=args.samples)
    rows = []
    for r in res.reports:
        ok = r.classified
        rows.append([r.index, str(r.signs), r.sum_info, r.matrix.signature() if ok else "",
                     r.lrank if ok else "", r.projected_info if ok else "", r.z if ok else "",
                     bool(ok and r.z < args.z_threshold)])
    head = io.header("mac-survey", args.seed, _config(args, ["channel", "depth", "mode", "delta", "z-threshold",
                                                             "samples", "branch-sample"]))
    foot = [f"classified_fraction={io.fmt(res.classified_fraction)}", f"mean_info={io.fmt(res.mean_info)}",
            f"base_info={io.fmt(res.base_info)}"]
    return io.render_csv(head, ["branch", "signs", "sum_info", "matrix", "lrank", "projected_info", "z", "usable"],
                         rows, foot)


def cmd_mac_code(args) -> str:
    p = io.load_mac(args.channel)
    c = construct_mac_code(p, args.depth, delta=args.delta, z_threshold=args.z_threshold, mode=args.mode,
                           seed=args.seed, policy=args.policy, samples=args.samples)
    d = {"code": c.to_dict(), "union_bound": c.union_bound,
         "rate_region": {",".join(str(k + 1) for k in s): v for s, v in rate_region(p).items()}}
    if args.trials > 0:
        r = mac_simulate(c, p, args.trials, args.seed)
        d["simulation"] = {"trials": r.trials, "block_error_rate": r.block_error_rate, "stderr": r.stderr}
    head = io.header("mac-code", args.seed, _config(args, ["channel", "depth", "mode", "delta", "z-threshold",
                                                           "policy", "trials"]))
    return io.render_json(head, d)


def cmd_linmac_evolve(args) -> str:
    ch = io.load_mixture(args.mixture)
    st = linmac.state_from_mixture(ch)
    rep = linmac.loss_report(st, args.depth)
    ev = linmac.binary_evolve(st, args.depth)
    info = ev.info
    rows = [[k, *ev.trajectory[k], *info[k]] for k in range(args.depth + 1)]
    head = io.header("linmac evolve", args.seed, _config(args, ["mixture", "depth"]))
    foot = [f"analytic_loss_condition={str(rep.analytic_loss_flag).lower()}",
            f"numeric_loss_detected={str(rep.numeric_loss_detected).lower()}",
            f"converged={str(rep.converged).lower()}", f"merging_exact={str(rep.exact).lower()}"]
    if not rep.analytic_loss_flag:
        foot.append("note=state outside the proven loss condition; trajectory reported for exploration only")
    return io.render_csv(head, ["n", "p0", "p1", "p2", "p3", "p4", "I1", "I2", "Isum"], rows, foot)


def _sub_label(s) -> str:
    return "{" + ",".join(str(k + 1) for k in s) + "}"


def cmd_linmac_consistency(args) -> str:
    ch = io.load_mixture(args.mixture)
    vs = ch.subspaces
    subsets = []
    for r in range(1, ch.m + 1):
        for s in itertools.combinations(range(ch.m), r):
            ok, wit = linmac.is_consistent(vs, s)
            suff = linmac.sufficient_preservation(vs, s)
            subsets.append({
                "subset": _sub_label(s),
                "consistent": ok,
                "witness": None if ok else [w.basis.tolist() for w in wit],
                "sufficient_witness": None if suff is None else suff.basis.tolist(),
                "rate": linmac.lin_rate_region(ch, s),
            })
    cl = linmac.closure(vs)
    payload = {"q": ch.q, "m": ch.m, "closure": [v.basis.tolist() for v in cl], "subsets": subsets}
    head = io.header("linmac consistency", args.seed, _config(args, ["mixture"]))
    return io.render_json(head, payload)


COMMANDS = {
    ("survey", None): cmd_survey,
    ("code", "build"): cmd_code_build,
    ("code", "simulate"): cmd_code_simulate,
    ("mac-survey", None): cmd_mac_survey,
    ("mac-code", None): cmd_mac_code,
    ("linmac", "evolve"): cmd_linmac_evolve,
    ("linmac", "consistency"): cmd_linmac_consistency,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    fn = COMMANDS[(args.command, getattr(args, "action", None))]
    try:
        text = fn(args)
        io.write_text(args.out, text)
    except QpolarError as e:
        print(f"qpolar: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, KeyError, TypeError) as e:
        print(f"qpolar: {type(e).__name__}: {e}", file=sys.stderr)
        return ParseError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
