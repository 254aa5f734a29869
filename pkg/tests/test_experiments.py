import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpcommunity.analytics import si_expected_hitting_times, normalize_bridge_counts
from cpcommunity.experiments import (ConfigError, ExperimentConfig, bridge_attempt_stats,
                                     check_summary, ks_test, load_config, read_trials_csv,
                                     run_campaign)
from cpcommunity.experiments import campaign as cp
from cpcommunity.experiments.cli import main
from cpcommunity.experiments.stats import (exp_cdf, exp_fit_report, geometric_fit,
                                           kolmogorov_sf)
from cpcommunity.graph import CommunityConfig
from cpcommunity.rng import generator

SMALL_INI = """
[experiment]
mode = {mode}
trials = {trials}
seed = 11
out = {out}

[graph]
n = 100
p = 0.3          ; b = 3 at lambda 0.1
{bridges}

[sim]
lambda = {lam}
record_dt = 0.5
"""


def write_cfg(tmp_path, name="c.ini", mode="figure1", trials=30, lam=0.1, bridges="bridges = 2"):
    path = tmp_path / name
    path.write_text(SMALL_INI.format(mode=mode, trials=trials, out=tmp_path / f"out-{name}",
                                     lam=lam, bridges=bridges))
    return str(path)


# -- configuration ----------------------------------------------------------------

def test_ini_and_json_agree(tmp_path):
    a = load_config(write_cfg(tmp_path))
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"experiment": {"mode": "figure1", "trials": 30, "seed": 11,
                                            "out": str(tmp_path / "out-c.ini")},
                             "graph": {"n": 100, "p": 0.3, "bridges": 2},
                             "sim": {"lambda": 0.1, "record_dt": 0.5}}))
    b = load_config(str(j))
    assert a == b
    assert a.graph.bridge_counts == ((0, 2), (2, 0)) or np.array_equal(a.graph.bridge_counts, [[0, 2], [2, 0]])


def test_bridge_matrix_and_lists(tmp_path):
    cfg = load_config(write_cfg(tmp_path, mode="chi-process", bridges="bridge_counts = 0 2 0; 2 0 2; 0 2 0"))
    assert cfg.graph.num_communities == 3
    p = tmp_path / "d.ini"
    p.write_text("[experiment]\nmode = duality\n[sim]\nlambdas = 0.5, 1\ntimes = 1 2\nlogs = 100\n")
    cfg = load_config(str(p))
    assert cfg.extra == {"lambdas": [0.5, 1.0], "times": [1.0, 2.0], "logs": 100}


@pytest.mark.parametrize("text, match", [
    ("[experiment]\ntrials = 3\n", "experiment.mode"),
    ("[experiment]\nmode = nope\n", "unknown mode"),
    ("[experiment]\nmode = figure1\ntrials = x\n", "experiment.trials"),
    ("[experiment]\nmode = figure1\ntrials = 0\n[sim]\nlambda = 1\n[graph]\nn = 10\np = 0.5\nbridges = 1\n",
     "trials: must be >= 1"),
    ("[experiment]\nmode = figure1\n[graph]\nn = 10\np = 0.5\nbridges = 1\n", "sim.lambda"),
    ("[experiment]\nmode = figure1\n[sim]\nlambda = 0.1\n", "graph"),
    ("[experiment]\nmode = figure1\n[sim]\nlambda = 0.1\n[graph]\nn = 10\np = 0.5\n"
     "bridge_counts = 0 1 0; 1 0 1; 0 1 0\n", "exactly 2 communities"),
    ("[experiment]\nmode = survival\n[sim]\nlambda = 0.1\n", "n_values"),
    ("[experiment]\nmode = duality\n[bogus]\nx = 1\n", "unknown section"),
    ("[experiment]\nmode = figure1\n[sim]\nlambda = 0.1\nsurvival_time = soon\n"
     "[graph]\nn = 10\np = 0.5\nbridges = 1\n", "survival_time"),
    ("{not json", "invalid JSON"),
    ("no section header", "File contains no section headers"),
])
def test_config_errors(tmp_path, text, match):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(str(p))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(str(tmp_path / "missing.ini"))


def test_unwritable_out(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = load_config(write_cfg(tmp_path, trials=1)).with_overrides(out=str(blocker / "sub"))
    with pytest.raises(ConfigError, match="cannot create output directory"):
        run_campaign(cfg)


# -- statistics -------------------------------------------------------------------

def test_kolmogorov_sf_matches_scipy():
    from scipy.special import kolmogorov
    for x in np.linspace(0.2, 3.0, 57):
        assert kolmogorov_sf(x) == pytest.approx(kolmogorov(x), abs=2e-8)


def test_ks_self_calibration():
    rng = generator(2024)
    cdf = exp_cdf(1.0)
    ps = [ks_test(np.sort(rng.exponential(1.0, 1000)), cdf)[1] for _ in range(200)]
    frac = np.mean(np.array(ps) < 0.05)
    assert 0.02 <= frac <= 0.09


def test_ks_trivial_and_power():
    D, p = ks_test(np.zeros(20), exp_cdf(1.0))
    assert D == 1.0 and p < 1e-12
    x = np.sort(generator(5).exponential(0.5, 1000))
    assert ks_test(x, exp_cdf(1.0))[1] < 1e-6


def test_ks_argument_errors():
    cdf = exp_cdf(1.0)
    with pytest.raises(ValueError, match="at least 8"):
        ks_test([0.1] * 7, cdf)
    with pytest.raises(ValueError, match="sorted"):
        ks_test([2.0, 1.0] + [3.0] * 8, cdf)
    with pytest.raises(ValueError, match="NaN"):
        ks_test([float("nan")] + [1.0] * 9, cdf)


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 300), st.integers(0, 2**32 - 1))
def test_ks_outputs_in_range(m, seed):
    x = np.sort(generator(seed).exponential(1.0, m))
    D, p = ks_test(x, exp_cdf(1.3))
    assert 0 < D <= 1 and 0 <= p <= 1


def test_exp_fit_report_shift():
    x = 2.0 + generator(3).exponential(1.0, 500)
    rep = exp_fit_report(x, 1.0)
    assert rep.ks_p < 1e-6 and rep.better == "shifted"
    assert rep.shift == pytest.approx(2.0, abs=0.15)
    assert exp_fit_report([1.0] * 5, 1.0) is None


def test_geometric_fit_cases():
    f = geometric_fit([1] * 40)
    assert f.p_hat == 1.0 and f.se == 0.0 and not f.empty
    f = geometric_fit([])
    assert f.empty and f.p_hat is None
    f = geometric_fit([0, 0, 2, 2, None])
    assert f.zeros_excluded == 2 and f.p_hat == 0.5
    draws = generator(8).geometric(0.3, 20000)
    f = geometric_fit(draws)
    assert abs(f.p_hat - 0.3) < 4 * f.se


# -- campaigns --------------------------------------------------------------------

def test_lambda_zero_single_trial(tmp_path):
    cfg = load_config(write_cfg(tmp_path, trials=1, lam=0.0))
    summary, files = run_campaign(cfg)
    recs = read_trials_csv(files["trials.csv"])
    assert len(recs) == 1
    r = recs[0]
    assert r.tau is None and r.extinction_time is not None and not r.censored
    assert summary["extinction_fraction"] == 1.0
    assert summary["bridge_attempts"]["empty"]


def test_trials_csv_header(tmp_path):
    cfg = load_config(write_cfg(tmp_path, trials=3))
    _, files = run_campaign(cfg, write=False)
    head = files["trials.csv"].splitlines()[0].split(",")
    assert head[:8] == ["trial", "seed", "survived_at_r", "extinction_time", "tau",
                        "tau_normalized", "censored", "bridge_attempts"]


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("camp")
    cfg = load_config(write_cfg(tmp, trials=60))
    summary, files = run_campaign(cfg, threads=1)
    return cfg, summary, files


def test_determinism_across_threads_and_reruns(small_run, tmp_path):
    cfg, _, files = small_run
    again = run_campaign(cfg, threads=4, out=str(tmp_path / "b"))[1]
    assert again["trials.csv"] == files["trials.csv"]
    on_disk = open(os.path.join(cfg.out, "trials.csv")).read()
    assert on_disk == files["trials.csv"]


def test_outcome_partition(small_run):
    _, s, _ = small_run
    total = s["crossed_fraction"] + s["extinction_fraction"] + s["censored_fraction"]
    assert total == 1.0 or math.isclose(total, 1.0, abs_tol=1e-15)
    c = s["counts"]
    assert c["crossed"] + c["extinct"] + c["censored"] == s["trials"]
    assert 0 <= s["tau_normalized"]["ks_p"] <= 1


def test_summary_audit_from_csv(small_run):
    cfg, _, _ = small_run
    on_disk = json.load(open(os.path.join(cfg.out, "summary.json")))
    recs = read_trials_csv(open(os.path.join(cfg.out, "trials.csv")).read())
    g = cp.load_graph(cfg)
    recomputed = cp._header(cfg, g) | cp.summarize_records(recs, cp.constants_for(g, cfg.lam))
    recomputed["checks"] = [{"name": n, "value": v, "interval": list(iv), "ok": ok}
                            for n, v, iv, ok in check_summary(recomputed)]
    assert json.loads(cp._dump(recomputed)) == on_disk
    assert on_disk["version"] == 1


def test_record_invariants(small_run):
    _, _, files = small_run
    for r in read_trials_csv(files["trials.csv"]):
        assert r.censored == (r.tau is None and r.extinction_time is None)
        if r.tau is not None:
            assert r.bridge_attempts_raw >= r.bridge_attempts >= 0
            assert r.tau_normalized == pytest.approx(r.tau * 2 / 30)


def test_bridge_attempt_stats_matches_summary(small_run):
    _, s, files = small_run
    recs = read_trials_csv(files["trials.csv"])
    assert bridge_attempt_stats(recs).as_dict() == s["bridge_attempts"]
    assert bridge_attempt_stats(recs, raw=True).as_dict() == s["bridge_attempts_raw"]


def test_bridge_attempts_large_b(tmp_path):
    # b = 10: survival ~ 0.9, geometric parameter near 0.81
    cfg = load_config(write_cfg(tmp_path, trials=150, lam=1 / 3))
    s, _ = run_campaign(cfg, threads=4, write=False)
    f = s["bridge_attempts"]
    assert f["p_hat"] > 4 / 9 + 0.1


def test_chi_two_communities_equals_tau_law(tmp_path):
    a = load_config(write_cfg(tmp_path, "a.ini", mode="tau-law", trials=20))
    b = load_config(write_cfg(tmp_path, "b.ini", mode="chi-process", trials=20))
    sa, fa = run_campaign(a, write=False)
    sb, fb = run_campaign(b, write=False)
    rows_a = [line.split(",")[:9] for line in fa["trials.csv"].splitlines()]
    rows_b = [line.split(",")[:9] for line in fb["trials.csv"].splitlines()]
    assert rows_a == rows_b
    assert sa["tau_normalized"] == sb["tau_normalized"]


def test_chi_isolated_community_censored(tmp_path):
    cfg = load_config(write_cfg(tmp_path, mode="chi-process", trials=10,
                                bridges="bridge_counts = 0 2 0; 2 0 0; 0 0 0"))
    s, files = run_campaign(cfg, write=False)
    rep = s["chi"]["communities"][2]
    assert rep["crossed"] == 0 and rep["censored"] == s["chi"]["conditioned_trials"]
    assert all(r.community_tau[2] is None for r in read_trials_csv(files["trials.csv"]))
    beta = normalize_bridge_counts(np.array([[0, 2, 0], [2, 0, 0], [0, 0, 0]]))
    assert math.isinf(si_expected_hitting_times(beta, 3.0, [1, 0, 0])[0][2])


def test_survival_curve_single_trial_low_power(tmp_path):
    cfg = ExperimentConfig(mode="survival", trials=1, lam=0.01, out=str(tmp_path),
                           extra={"n_values": [100], "np": 50.0})
    rows = cp.survival_curve(cfg)
    assert rows[0]["low_power"] and math.isfinite(rows[0]["gap"])


def test_survival_curve_subcritical(tmp_path):
    cfg = ExperimentConfig(mode="survival", trials=2000, lam=0.005, seed=3, out=str(tmp_path),
                           extra={"n_values": [500], "np": 100.0})
    row = cp.survival_curve(cfg, threads=4)[0]
    assert row["limit"] == 0.0
    assert abs(row["survival"] - row["bp_survival"]) < 4 * max(row["se"], 1e-3)
    assert row["survival"] < 0.2


def test_mixing_and_branching_modes_small(tmp_path):
    cfg = ExperimentConfig(mode="mixing", out=str(tmp_path / "m"),
                           extra={"n_values": [300, 600], "origins": 10, "a": 0.7})
    s, files = run_campaign(cfg)
    assert files["tv_curve.csv"].startswith("k,max_tv_pi,max_tv_uniform")
    assert os.path.exists(tmp_path / "m" / "tv_curve.csv")
    cfg = ExperimentConfig(mode="branching", out=str(tmp_path / "b"), extra={"runs": 20000})
    s, _ = run_campaign(cfg)
    assert s["all_ok"]


# -- command line -----------------------------------------------------------------

def test_cli_help_lists_modes(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    for mode in ("figure1", "tau-law", "survival", "duality", "mixing", "branching", "chi-process"):
        assert mode in text
    for cmd in ("generate", "simulate", "dual-check", "campaign", "replicate-figure1"):
        assert cmd in text


def test_cli_missing_config_exit_2(tmp_path, capsys):
    assert main(["campaign", "--config", str(tmp_path / "missing.toml")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_cli_check_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, "bad.ini", trials=10, lam=0.0)
    assert main(["campaign", "--config", bad, "--check"]) == 3
    assert main(["campaign", "--config", bad]) == 0
    out = capsys.readouterr().out
    assert "FAIL survival_fraction" in out
    good = tmp_path / "dual.ini"
    good.write_text(f"[experiment]\nmode = duality\nseed = 1\nout = {tmp_path / 'dual'}\n[sim]\nlogs = 4000\n")
    assert main(["campaign", "--config", str(good), "--check"]) == 0


def test_cli_generate_and_simulate(tmp_path, capsys):
    gpath = tmp_path / "g.bin"
    assert main(["generate", "--n", "60", "--p", "0.2", "--bridges", "3", "--seed", "4",
                 "--out", str(gpath)]) == 0
    assert main(["generate", "--n", "60", "--out", str(tmp_path / "x.txt")]) == 2
    cfg = tmp_path / "s.ini"
    cfg.write_text(f"[experiment]\nmode = figure1\nout = {tmp_path / 'sim'}\n"
                   f"[graph]\npath = g.bin\n[sim]\nlambda = 0.25\nhorizon = 5\n")
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "sim" / "trajectory.csv").exists()
    meta = json.load(open(tmp_path / "sim" / "trajectory.json"))
    assert isinstance(meta, dict)


def test_cli_trials_override_and_seed(tmp_path):
    cfgp = write_cfg(tmp_path, trials=50)
    out = tmp_path / "o"
    assert main(["campaign", "--config", cfgp, "--trials", "4", "--seed", "99", "--out", str(out)]) == 0
    s = json.load(open(out / "summary.json"))
    assert s["trials"] == 4 and s["seed"] == 99
    assert len(open(out / "trials.csv").read().splitlines()) == 5


@pytest.mark.slow
def test_survival_curve_gap_trend(tmp_path):
    cfg = ExperimentConfig(mode="survival", trials=5000, lam=0.06, seed=21, out=str(tmp_path),
                           extra={"n_values": [200, 500, 2000], "np": 50.0})
    s, files = run_campaign(cfg, threads=os.cpu_count() or 1)
    assert s["gap_trend_ok"]
    assert files["survival.csv"].startswith("n,trials,survival,se,limit,gap")
    for row in s["curve"]:
        assert row["limit"] == pytest.approx(2 / 3) and not row["low_power"]
        assert abs(row["gap"]) < 0.1
