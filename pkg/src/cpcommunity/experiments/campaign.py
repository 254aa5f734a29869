"""Seeded trial campaigns and their summaries.

Trial ``i`` of a campaign with seed ``s`` uses ``split_seed(s, i)``: its initial
set is drawn from ``split_seed(., 0)`` and the simulation kernel is seeded from
``split_seed(., 1)``.  Results are therefore independent of the worker pool size
and of scheduling, and ``trials.csv`` is byte-identical across reruns.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from .. import analytics, graphical_log, rw_mixing
from ..cp_engine import SimParams, default_survival_time, simulate_contact
from ..graph import CommunityConfig, Graph, build_community_graph, from_edges, generate_er
from ..rng import generator, split_seed
from .config import ConfigError
from .stats import binomial_se, exp_fit_report, geometric_fit, ks_2samp

SUMMARY_VERSION = 1
TRIALS_HEADER = ["trial", "seed", "survived_at_r", "extinction_time", "tau", "tau_normalized",
                 "censored", "bridge_attempts", "bridge_attempts_raw"]
FIGURE1_INIT = 2


@dataclass
class TrialRecord:
    """One campaign trial.

    ``bridge_attempts`` counts bridge arrows into the target community, fired
    after the source community crossed its threshold, up to and including the
    arrow that started the successful ignition; ``bridge_attempts_raw`` counts all
    bridge arrows into the target up to that point.
    """

    trial: int
    seed: int
    survived_at_r: bool
    extinction_time: float | None
    tau: float | None
    tau_normalized: float | None
    censored: bool
    bridge_attempts: int | None
    bridge_attempts_raw: int | None
    community_tau: list = field(default_factory=list)

    def row(self):
        return [self.trial, self.seed, int(self.survived_at_r), _fmt(self.extinction_time),
                _fmt(self.tau), _fmt(self.tau_normalized), int(self.censored),
                _fmt(self.bridge_attempts), _fmt(self.bridge_attempts_raw)]


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _opt(text, typ):
    return None if text == "" else typ(text)


def trials_csv(records, extra_cols=0):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIALS_HEADER + [f"tau_community_{c}" for c in range(extra_cols)])
    for r in records:
        w.writerow(r.row() + ([_fmt(x) for x in r.community_tau] if extra_cols else []))
    return buf.getvalue()


def read_trials_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    header, out = rows[0], []
    ncomm = sum(1 for h in header if h.startswith("tau_community_"))
    for row in rows[1:]:
        d = dict(zip(header, row))
        out.append(TrialRecord(
            trial=int(d["trial"]), seed=int(d["seed"]), survived_at_r=d["survived_at_r"] == "1",
            extinction_time=_opt(d["extinction_time"], float), tau=_opt(d["tau"], float),
            tau_normalized=_opt(d["tau_normalized"], float), censored=d["censored"] == "1",
            bridge_attempts=_opt(d["bridge_attempts"], int),
            bridge_attempts_raw=_opt(d["bridge_attempts_raw"], int),
            community_tau=[_opt(d[f"tau_community_{c}"], float) for c in range(ncomm)]))
    return out


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prepare_out(out):
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e.strerror}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")


# -- trials ----------------------------------------------------------------------

def load_graph(cfg):
    if cfg.graph_path is not None:
        try:
            return Graph.load(cfg.graph_path)
        except OSError as e:
            raise ConfigError(f"graph.path: cannot read {cfg.graph_path}: {e.strerror}") from None
    return build_community_graph(cfg.graph)


def _bridge_unit(g):
    """max |B_kl| over community pairs (|B| for two communities)."""
    return max((len(v) for v in g.bridges.values()), default=0)


def constants_for(g, lam):
    bt = _bridge_unit(g)
    return analytics.theory_constants(g.community_size, lam, p=g.p, bridge_total=bt)


def survival_time_for(cfg, g):
    b = g.mean_degree_param * cfg.lam
    if cfg.survival_time == "clean":
        return default_survival_time(g.community_size, b)
    if cfg.survival_time == "adjusted":
        return analytics.theory_constants(g.community_size, cfg.lam, p=g.p).r_adjusted
    return float(cfg.survival_time)


def run_trial(g, cfg, index, target=1, stop=(1,), init_size=None):
    """Run trial ``index`` and return ``(TrialRecord, Trajectory)``."""
    seed = split_seed(cfg.seed, index)
    n = g.community_size
    k = cfg.init_size if init_size is None else init_size
    init = generator(split_seed(seed, 0)).choice(n, size=k, replace=False)
    params = SimParams(lam=cfg.lam, horizon=cfg.horizon, tau_threshold_eps=cfg.eps,
                       record_dt=cfg.record_dt, seed=split_seed(seed, 1),
                       survival_time=survival_time_for(cfg, g), stop_at_tau=tuple(stop))
    tr = simulate_contact(g, params, init)
    tau = tr.tau_by_community[target]
    unit = _bridge_unit(g)
    np_ = g.mean_degree_param
    rec = TrialRecord(
        trial=index, seed=seed, survived_at_r=bool(tr.survival_at_r),
        extinction_time=tr.extinction_time, tau=tau,
        tau_normalized=None if tau is None or unit == 0 else tau * unit / np_,
        censored=tau is None and tr.extinction_time is None,
        bridge_attempts=tr.attempts_post_growth[target] if tau is not None else None,
        bridge_attempts_raw=tr.attempts_before_tau[target] if tau is not None else None,
        community_tau=list(tr.tau_by_community))
    return rec, tr


def run_trials(g, cfg, threads=1, **kw):
    """All trials, sorted by index.  Trial 0 runs first in the caller's thread."""
    first = run_trial(g, cfg, 0, **kw)[0]
    if cfg.trials == 1:
        return [first]
    fn = lambda i: run_trial(g, cfg, i, **kw)[0]  # noqa: E731
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        rest = list(ex.map(fn, range(1, cfg.trials)))
    return [first] + rest


# -- summaries ------------------------------------------------------------------

def summarize_records(records, tc):
    """Summary block for a two-community (or target-community) campaign."""
    m = len(records)
    crossed = [r for r in records if r.tau is not None]
    extinct = [r for r in records if r.tau is None and r.extinction_time is not None]
    censored = [r for r in records if r.censored]
    surv = sum(r.survived_at_r for r in records)
    out = {
        "trials": m,
        "counts": {"crossed": len(crossed), "extinct": len(extinct), "censored": len(censored),
                   "survived_at_r": surv},
        "survival_fraction": surv / m,
        "survival_se": binomial_se(surv, m),
        "crossed_fraction": len(crossed) / m,
        "extinction_fraction": len(extinct) / m,
        "censored_fraction": len(censored) / m,
        "discrepancies": sum(1 for r in crossed if not r.survived_at_r),
    }
    rate = tc.limit_rate
    vals = [r.tau_normalized for r in crossed if r.tau_normalized is not None]
    fit = exp_fit_report(vals, rate) if rate else None
    out["tau_normalized"] = fit.as_dict() if fit else {"n": len(vals)}
    out["bridge_attempts"] = geometric_fit([r.bridge_attempts for r in crossed]).as_dict()
    out["bridge_attempts_raw"] = geometric_fit([r.bridge_attempts_raw for r in crossed]).as_dict()
    out["theory_constants"] = tc.as_dict()
    return out


def bridge_attempt_stats(records, raw=False):
    """Geometric MLE for the attempt count at the successful ignition."""
    key = "bridge_attempts_raw" if raw else "bridge_attempts"
    return geometric_fit([getattr(r, key) for r in records if r.tau is not None])


FIGURE1_CHECKS = {
    "survival_fraction": (0.607, 0.727),
    "tau_mean": (0.63, 0.87),
    "ks_p": (0.01, 1.0),
    "geometric_p": (4 / 9 - 0.07, 4 / 9 + 0.07),
}


def check_summary(summary):
    """List of ``(name, value, (lo, hi), ok)`` acceptance checks for the mode."""
    mode = summary["mode"]
    rows = []
    if mode in ("figure1", "tau-law"):
        tn = summary["tau_normalized"]
        if mode == "figure1":
            rows.append(("survival_fraction", summary["survival_fraction"], FIGURE1_CHECKS["survival_fraction"]))
            rows.append(("tau_mean", tn.get("mean", math.nan), FIGURE1_CHECKS["tau_mean"]))
            rows.append(("geometric_p", summary["bridge_attempts"]["p_hat"] or math.nan,
                         FIGURE1_CHECKS["geometric_p"]))
        rows.append(("ks_p", tn.get("ks_p", math.nan), FIGURE1_CHECKS["ks_p"]))
    elif mode == "chi-process":
        for c, rep in enumerate(summary["chi"]["communities"]):
            if rep["oracle_mean"] and math.isfinite(rep["oracle_mean"]) and rep["oracle_mean"] > 0:
                rows.append((f"community_{c}_mean_ratio", rep["mean_ratio"], (0.8, 1.2)))
    elif mode == "survival":
        rows.append(("gap_trend", float(summary["gap_trend_ok"]), (1.0, 1.0)))
    else:
        rows.append(("all_ok", float(summary["all_ok"]), (1.0, 1.0)))
    return [(name, v, iv, bool(iv[0] <= v <= iv[1])) for name, v, iv in rows]


def _header(cfg, g=None):
    d = {"version": SUMMARY_VERSION, "mode": cfg.mode, "seed": cfg.seed, "trials": cfg.trials,
         "lambda": cfg.lam, "init_size": cfg.init_size}
    if g is not None:
        d["graph"] = {"num_communities": g.num_communities, "n": g.community_size, "p": g.p,
                      "edges": g.num_edges,
                      "bridges": {f"{i}-{j}": len(v) for (i, j), v in sorted(g.bridges.items())}}
    return d


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


# -- modes ----------------------------------------------------------------------

def _two_community(cfg, threads):
    g = load_graph(cfg)
    records = run_trials(g, cfg, threads)
    tc = constants_for(g, cfg.lam)
    summary = _header(cfg, g) | summarize_records(records, tc)
    return summary, {"trials.csv": trials_csv(records)}


def figure1_trajectories(g, cfg, runs=10, horizon=100.0, record_dt=0.5):
    """Overlay data in the style of the motivating picture: independent runs from
    two infected vertices, no early stop.  Rows ``run,t,community_0,...``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "t"] + [f"community_{c}" for c in range(g.num_communities)])
    for k in range(runs):
        seed = split_seed(cfg.seed, 10**9 + k)
        init = generator(split_seed(seed, 0)).choice(g.community_size, size=FIGURE1_INIT, replace=False)
        tr = simulate_contact(g, SimParams(lam=cfg.lam, horizon=horizon, record_dt=record_dt,
                                           seed=split_seed(seed, 1)), init)
        for t, row in zip(tr.samples_t, tr.samples):
            w.writerow([k, repr(float(t))] + [int(x) for x in row])
    return buf.getvalue()


def _reachable(g, src=0):
    seen, stack = {src}, [src]
    while stack:
        i = stack.pop()
        for (a, b) in g.bridges:
            for j in ((b,) if a == i else (a,) if b == i else ()):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
    return seen


def chi_compare(g, cfg, records, si_samples=2000):
    """Per-community saturation times (in units of n p / max|B_kl|) vs. the SI chain.

    Times are taken over trials in which community 0 crossed.  ``shifted`` reports
    the same times measured from community 0's own crossing.
    """
    N = g.num_communities
    tc = constants_for(g, cfg.lam)
    unit = g.mean_degree_param / _bridge_unit(g)
    counts = np.zeros((N, N), dtype=int)
    for (i, j), v in g.bridges.items():
        counts[i, j] = counts[j, i] = len(v)
    beta = analytics.normalize_bridge_counts(counts)
    x0 = [1] + [0] * (N - 1)
    oracle, _ = analytics.si_expected_hitting_times(beta, tc.b, x0)
    si = np.array([analytics.community_si_limit(beta, tc.b, x0, math.inf,
                                                split_seed(cfg.seed, 2 * 10**9 + k)).hitting_times
                   for k in range(si_samples)])
    base = [r for r in records if r.community_tau[0] is not None]
    reps = []
    for c in range(N):
        times = np.array([r.community_tau[c] / unit for r in base if r.community_tau[c] is not None])
        shifted = np.array([(r.community_tau[c] - r.community_tau[0]) / unit
                            for r in base if r.community_tau[c] is not None])
        rep = {"community": c, "crossed": len(times), "censored": len(base) - len(times),
               "oracle_mean": float(oracle[c]),
               "mean": float(times.mean()) if len(times) else None,
               "shifted_mean": float(shifted.mean()) if len(shifted) else None}
        finite = oracle[c] > 0 and math.isfinite(oracle[c])
        rep["mean_ratio"] = rep["mean"] / oracle[c] if finite and len(times) else None
        rep["shifted_mean_ratio"] = rep["shifted_mean"] / oracle[c] if finite and len(times) else None
        if finite and len(times) >= 8:
            rep["ks_D"], rep["ks_p"] = ks_2samp(times, si[:, c])
            rep["shifted_ks_D"], rep["shifted_ks_p"] = ks_2samp(shifted, si[:, c])
        reps.append(rep)
    return {"time_unit": unit, "conditioned_trials": len(base), "communities": reps}


def _chi(cfg, threads):
    g = load_graph(cfg)
    reach = _reachable(g)
    target = max(reach)
    stop = tuple(sorted(c for c in reach if c != 0)) or (0,)
    records = run_trials(g, cfg, threads, target=target, stop=stop)
    tc = constants_for(g, cfg.lam)
    summary = _header(cfg, g) | summarize_records(records, tc)
    summary["target_community"] = target
    summary["chi"] = chi_compare(g, cfg, records)
    return summary, {"trials.csv": trials_csv(records, extra_cols=g.num_communities)}


def survival_curve(cfg, threads=1):
    """Rows ``(n, trials, survival, se, 1-1/b, gap, bp_survival, low_power)``.

    Each n gets a single community with ``p = np/n`` so that ``b`` stays fixed;
    trials start from one uniform vertex and are probed at ``r(n)``.  For b <= 1
    the probe time is ``2 loglog n / |b - 1|``.  ``bp_survival`` is the branching
    process value ``1 - P10(b, r)``.
    """
    np_, b = cfg.extra["np"], cfg.extra["np"] * cfg.lam
    rows = []
    for idx, n in enumerate(cfg.extra["n_values"]):
        g = build_community_graph(CommunityConfig(n=n, bridge_counts=[[0]], p=np_ / n,
                                                  seed=split_seed(cfg.seed, 3 * 10**9 + idx)))
        r = 2.0 * math.log(math.log(n)) / abs(b - 1.0)
        sub = cfg.with_overrides(seed=split_seed(cfg.seed, idx), survival_time=r, horizon=r)

        def one(i, g=g, sub=sub):
            seed = split_seed(sub.seed, i)
            init = generator(split_seed(seed, 0)).choice(n, size=1)
            tr = simulate_contact(g, SimParams(lam=cfg.lam, horizon=r, survival_time=r,
                                               record_dt=r, seed=split_seed(seed, 1)), init)
            return bool(tr.survival_at_r)

        first = one(0)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
            alive = [first] + list(ex.map(one, range(1, cfg.trials)))
        k = sum(alive)
        q = k / cfg.trials
        limit = 1.0 - 1.0 / b if b > 1 else 0.0
        rows.append({"n": n, "trials": cfg.trials, "survival": q, "se": binomial_se(k, cfg.trials),
                     "limit": limit, "gap": q - limit, "r": r,
                     "bp_survival": 1.0 - analytics.bp_p10(b, r), "low_power": cfg.trials < 100})
    return rows


def _gap_trend_ok(rows):
    for a, b in zip(rows, rows[1:]):
        if abs(b["gap"]) > abs(a["gap"]) + 2.0 * math.hypot(a["se"], b["se"]):
            return False
    return True


def _survival(cfg, threads):
    rows = survival_curve(cfg, threads)
    buf = io.StringIO()
    cols = ["n", "trials", "survival", "se", "limit", "gap", "r", "bp_survival", "low_power"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) if isinstance(row[c], float) else int(row[c]) for c in cols])
    summary = _header(cfg) | {"b": cfg.extra["np"] * cfg.lam, "curve": rows,
                              "gap_trend_ok": _gap_trend_ok(rows)}
    return summary, {"survival.csv": buf.getvalue()}


def duality_fixtures():
    return {"edge": from_edges([(0, 1)]), "triangle": from_edges([(0, 1), (1, 2), (0, 2)])}


def _duality(cfg, threads):
    lams = cfg.extra.get("lambdas", [0.5, 1.0])
    times = cfg.extra.get("times", [1.0, 2.0])
    logs = cfg.extra.get("logs", 10**5)
    rows, ok = [], True
    for gi, (name, g) in enumerate(duality_fixtures().items()):
        A, B = ({0}, {1}) if name == "edge" else ({0}, {1, 2})
        for li, lam in enumerate(lams):
            for ti, t in enumerate(times):
                res = graphical_log.duality_check(g, lam, t, A, B, logs,
                                                  split_seed(cfg.seed, 100 * gi + 10 * li + ti))
                exact = graphical_log.exact_hit_probability(g, lam, t, A, B)
                se = math.sqrt(res.p_forward * (1 - res.p_forward) / logs)
                z_exact = (res.p_forward - exact) / se if se > 0 else 0.0
                good = abs(res.z_score) <= 3 and abs(z_exact) <= 3
                ok &= good
                rows.append({"graph": name, "lambda": lam, "t": t, "p_forward": res.p_forward,
                             "p_dual": res.p_dual, "z": res.z_score, "exact": exact,
                             "z_exact": z_exact, "ok": good})
    return _header(cfg) | {"logs": logs, "rows": rows, "all_ok": ok}, {}


def _mixing(cfg, threads):
    a = cfg.extra.get("a", 0.7)
    ns = cfg.extra.get("n_values", [500, 1000, 2000])
    origins = cfg.extra.get("origins", 50)
    tc0 = analytics.theory_constants(ns[0], 1.0, a=a)
    kappa, k_mix = tc0.kappa, tc0.k_mix
    rows, curve = [], None
    for idx, n in enumerate(ns):
        g = generate_er(n, n ** (a - 1.0), split_seed(cfg.seed, idx))
        s = split_seed(cfg.seed, 1000 + idx)
        short = rw_mixing.worst_case_tv(g, kappa, origins, s)
        long_ = rw_mixing.worst_case_tv(g, k_mix, origins, s)
        bound = 4.0 * n ** (-(1.0 + a / 3.0))
        rows.append({"n": n, "kappa": kappa, "tv_kappa_pi": short.max_tv_to_pi,
                     "tv_kappa_uniform": short.max_tv_to_uniform, "k_mix": k_mix,
                     "singleton_dev_kmix": long_.max_singleton_dev, "singleton_bound": bound,
                     "bound_ok": long_.max_singleton_dev <= bound})
        if idx == len(ns) - 1:
            curve = rw_mixing.tv_curve(g, range(0, k_mix + 1), origins, s)
    decreasing = all(x["tv_kappa_pi"] > y["tv_kappa_pi"] for x, y in zip(rows, rows[1:]))
    ok = decreasing and all(r["bound_ok"] for r in rows)
    summary = _header(cfg) | {"a": a, "rows": rows, "tv_decreasing": decreasing, "all_ok": ok}
    return summary, {"tv_curve.csv": rw_mixing.tv_curve_csv(curve)}


def _branching(cfg, threads):
    betas = cfg.extra.get("betas", [1.5, 3.0])
    times = sorted(cfg.extra.get("times", [0.5, 1.0, 2.0]))
    runs = cfg.extra.get("runs", 10**6)
    rows, ok = [], True
    for bi, beta in enumerate(betas):
        z, _, overflow = analytics.bp_ensemble(beta, times, runs, split_seed(cfg.seed, bi))
        for j, t in enumerate(times):
            col = z[:, j]
            for k in range(11):
                emp = float(np.mean(col == k))
                exact = analytics.bp_p10(beta, t) if k == 0 else analytics.bp_p1k(beta, t, k)
                se = math.sqrt(exact * (1 - exact) / runs)
                zs = (emp - exact) / se if se > 0 else 0.0
                ok &= abs(zs) <= 4
                rows.append({"beta": beta, "t": t, "k": k, "empirical": emp, "exact": exact, "z": zs})
        ext = analytics.bp_extinction_frequency(beta, 50.0, runs, split_seed(cfg.seed, 100 + bi))
        target = analytics.bp_extinction_prob(beta)
        se = math.sqrt(target * (1 - target) / runs)
        ze = (ext - target) / se
        ok &= abs(ze) <= 3
        rows.append({"beta": beta, "t": 50.0, "k": "extinct", "empirical": ext, "exact": target, "z": ze})
    return _header(cfg) | {"runs": runs, "rows": rows, "all_ok": ok}, {}


_MODES = {"figure1": _two_community, "tau-law": _two_community, "chi-process": _chi,
          "survival": _survival, "duality": _duality, "mixing": _mixing, "branching": _branching}


def run_campaign(cfg, threads=1, out=None, write=True):
    """Run the configured mode; returns the summary dict and writes its files.

    Files go to ``out`` (default ``cfg.out``): ``summary.json`` plus
    ``trials.csv`` (trial modes) or the mode's table.  Each file is written
    atomically.
    """
    out = cfg.out if out is None else out
    if write:
        prepare_out(out)
    summary, files = _MODES[cfg.mode](cfg, threads)
    summary["checks"] = [{"name": n, "value": v, "interval": list(iv), "ok": ok}
                         for n, v, iv, ok in check_summary(summary)]
    if write:
        for name, text in files.items():
            atomic_write(os.path.join(out, name), text)
        atomic_write(os.path.join(out, "summary.json"), _dump(summary))
    return summary, files
