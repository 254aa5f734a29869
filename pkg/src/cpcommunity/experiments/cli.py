"""Command-line entry point ``cpcommunity``.

Exit codes: 0 success, 2 configuration or input error, 3 a ``--check`` threshold failed.
"""

import argparse
import json
import os
import sys

from ..cp_engine import SimParams, simulate_contact
from ..graph import CommunityConfig, build_community_graph, degree_stats
from ..rng import generator, split_seed
from .campaign import (atomic_write, figure1_trajectories, load_graph, prepare_out,
                       run_campaign)
from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3

MODE_HELP = """modes (experiment.mode in a config file):
  figure1      two communities; survival at r, crossing time tau, bridge attempts
  tau-law      as figure1, checked only by the KS test of tau against Exp((b-1)^2/b)
  survival     survival at r(n) for several n at fixed b
  duality      forward/dual agreement on the edge and triangle fixtures
  mixing       random-walk TV distances on ER(n, n^(a-1))
  branching    branching-process formulas vs. simulation
  chi-process  multi-community saturation times vs. the SI chain
"""


def _common(p, trials=True):
    p.add_argument("--config", help="INI or JSON experiment file")
    p.add_argument("--seed", type=int, help="64-bit campaign seed")
    p.add_argument("--out", help="output directory")
    if trials:
        p.add_argument("--trials", type=int, help="number of trials (logs/runs for dual-check/branching)")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--check", action="store_true", help="exit 3 if an acceptance check fails")


def build_parser():
    ap = argparse.ArgumentParser(prog="cpcommunity", description="Contact process on community graphs.",
                                 epilog=MODE_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a community graph")
    g.add_argument("--config", help="experiment file whose [graph] section is used")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--p", type=float)
    g.add_argument("--a", type=float)
    g.add_argument("--bridges", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output file (.bin for binary, else text)")

    s = sub.add_parser("simulate", help="simulate one trajectory")
    _common(s, trials=False)
    s.add_argument("--lam", type=float, help="infection rate (overrides sim.lambda)")
    s.add_argument("--init-size", type=int, default=2)

    for name, help_ in (("dual-check", "duality check on small fixtures"),
                        ("mixing", "random-walk mixing diagnostics"),
                        ("branching", "branching-process formula check"),
                        ("campaign", "run the campaign described by --config"),
                        ("replicate-figure1", "two-community campaign at n=500, p=0.1, lambda=0.06, |B|=2")):
        _common(sub.add_parser(name, help=help_, epilog=MODE_HELP,
                               formatter_class=argparse.RawDescriptionHelpFormatter))
    return ap


def _load(args, mode):
    if args.config:
        cfg = load_config(args.config)
        if mode and cfg.mode != mode:
            raise ConfigError(f"{args.config}: mode is {cfg.mode!r}, this command expects {mode!r}")
    elif mode == "figure1":
        cfg = ExperimentConfig(mode="figure1", trials=500, seed=0, out="runs/figure1",
                               graph=CommunityConfig.two_community(500, 2, seed=0, p=0.1), lam=0.06)
    elif mode in ("duality", "mixing", "branching"):
        cfg = ExperimentConfig(mode=mode, out=f"runs/{mode}")
    else:
        raise ConfigError("--config is required for this command")
    over = {"seed": args.seed, "out": getattr(args, "out", None)}
    trials = getattr(args, "trials", None)
    if trials is not None:
        if cfg.mode == "duality":
            cfg.extra["logs"] = trials
        elif cfg.mode == "branching":
            cfg.extra["runs"] = trials
        else:
            over["trials"] = trials
    if args.seed is not None and cfg.graph is not None and not args.config:
        over["graph"] = CommunityConfig(n=cfg.graph.n, bridge_counts=cfg.graph.bridge_counts,
                                        seed=args.seed, a=cfg.graph.a, p=cfg.graph.p)
    return cfg.with_overrides(**over)


def _report(summary, check):
    failed = [c for c in summary["checks"] if not c["ok"]]
    for c in summary["checks"]:
        lo, hi = c["interval"]
        print(f"{'PASS' if c['ok'] else 'FAIL'} {c['name']} = {c['value']:.6g} (target [{lo:.6g}, {hi:.6g}])")
    return EXIT_CHECK if check and failed else EXIT_OK


def cmd_generate(args):
    if args.config:
        cfg = load_config(args.config)
        g = load_graph(cfg)
    else:
        if (args.p is None) == (args.a is None):
            raise ConfigError("give exactly one of --p or --a")
        try:
            cc = CommunityConfig.two_community(args.n, args.bridges, seed=args.seed, a=args.a, p=args.p)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        g = build_community_graph(cc)
    d = os.path.dirname(os.path.abspath(args.out))
    prepare_out(d)
    g.save(args.out)
    st = degree_stats(g)
    print(f"wrote {args.out}: {g.num_vertices} vertices, {g.num_edges} edges, "
          f"{g.bridge_total} bridges, degree min/mean/max {st.min_degree}/{st.mean_degree:.2f}/{st.max_degree}")
    return EXIT_OK


def cmd_simulate(args):
    if not args.config:
        raise ConfigError("--config is required for simulate")
    cfg = load_config(args.config)
    lam = args.lam if args.lam is not None else cfg.lam
    if lam is None:
        raise ConfigError("sim.lambda: required (or pass --lam)")
    seed = cfg.seed if args.seed is None else args.seed
    out = args.out or cfg.out
    g = load_graph(cfg)
    init = generator(split_seed(seed, 0)).choice(g.community_size, size=args.init_size, replace=False)
    params = SimParams(lam=lam, horizon=cfg.horizon, tau_threshold_eps=cfg.eps,
                       record_dt=cfg.record_dt, seed=split_seed(seed, 1))
    tr = simulate_contact(g, params, init)
    prepare_out(out)
    atomic_write(os.path.join(out, "trajectory.csv"), tr.to_csv())
    atomic_write(os.path.join(out, "trajectory.json"), json.dumps(tr.sidecar(), indent=2) + "\n")
    print(f"end_time={tr.end_time:.4g} extinct={tr.extinction_time is not None} "
          f"tau={tr.tau_by_community}")
    return EXIT_OK


def _campaign_cmd(mode):
    def run(args):
        cfg = _load(args, mode)
        summary, _ = run_campaign(cfg, threads=args.threads)
        if cfg.mode == "figure1" and mode == "figure1":
            g = load_graph(cfg)
            atomic_write(os.path.join(cfg.out, "trajectories.csv"), figure1_trajectories(g, cfg))
        print(f"wrote {cfg.out}")
        return _report(summary, args.check)
    return run


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "dual-check": _campaign_cmd("duality"),
    "mixing": _campaign_cmd("mixing"),
    "branching": _campaign_cmd("branching"),
    "campaign": _campaign_cmd(None),
    "replicate-figure1": _campaign_cmd("figure1"),
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
