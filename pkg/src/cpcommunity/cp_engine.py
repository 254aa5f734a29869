"""Event-driven simulation of the contact process on a community graph.

The kernel is a direct (Gillespie) method over three aggregate clocks:

* recoveries, total rate ``|I|`` -- a uniformly chosen infected vertex heals;
* intra-community arrows, total rate ``lambda * sum_{v in I} deg_intra(v)`` --
  an infected vertex is chosen proportionally to its intra degree (by rejection
  against the maximum degree), then a uniform neighbor;
* bridge arrows, constant rate ``lambda * 2|B|`` -- a uniform directed bridge.

Arrows that land on an infected vertex, and bridge arrows whose source is
healthy, are explicit no-ops.  Bridge arrows are clocked whether or not their
source is infected; this is what lets a trial count bridge transmission
*attempts* in the sense of the graphical construction.

For every community the kernel records, at the excursion (from a count of zero)
that first pushes it past the threshold, how many bridge attempts into it had
occurred: all of them (``attempts_before_tau``), and only those fired after the
attempting bridge's source community had itself crossed its threshold
(``attempts_post_growth``).  The second count excludes attempts made while the
source community was still growing from its first infections.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np
from numba import njit

from .rng import check_seed, kernel_seed


@dataclass(frozen=True)
class SimParams:
    """Simulation parameters.

    ``tau_threshold_eps`` defaults to ``(1 - b**(-1/3)) / 4`` when None, with ``b``
    taken from the graph; ``horizon`` defaults as in :func:`default_horizon`.
    ``stop_at_tau`` ends the run once every listed community has crossed (and the
    survival probe time has passed).
    """

    lam: float
    horizon: float = None
    tau_threshold_eps: float = None
    record_dt: float = 0.1
    restrict_to: int = None
    seed: int = 0
    survival_time: float = None
    stop_at_tau: tuple = ()
    record_events: bool = False
    audit: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if self.tau_threshold_eps is not None and not 0 < self.tau_threshold_eps < 1:
            raise ValueError("tau_threshold_eps must lie in (0, 1)")
        if not self.record_dt > 0:
            raise ValueError("record_dt must be > 0")
        check_seed(self.seed)


def default_eps(b):
    return 0.25 * (1.0 - b ** (-1.0 / 3.0)) if b > 1 else 0.25


def default_survival_time(n, b):
    """Clean survival probe time 2 loglog n / (b-1); None when b <= 1."""
    if b <= 1 or n < 3:
        return None
    return 2.0 * math.log(math.log(n)) / (b - 1.0)


def default_horizon(g, lam):
    np_ = g.mean_degree_param
    b = np_ * lam
    if g.bridge_total > 0 and np_ > 0:
        return 50.0 * np_ / g.bridge_total
    n = g.community_size
    if b > 1:
        eps = default_eps(b)
        eta3 = 4.0 / ((1.0 - 4.0 * eps) * b - 1.0)
        return 20.0 * eta3 * math.log(n)
    return 20.0 * math.log(max(n, 3))


@dataclass
class Trajectory:
    """One simulated sample path.

    ``samples_t`` / ``samples`` hold per-community counts on the ``record_dt`` grid
    up to ``end_time``.  ``events`` (when recorded) holds every count change as
    rows ``(t, community, delta)`` and allows exact first-passage queries at any
    threshold.
    """

    num_communities: int
    community_size: int
    samples_t: np.ndarray
    samples: np.ndarray
    end_time: float
    extinction_time: float | None
    tau_by_community: list
    tau_eps: float
    survival_time: float | None
    survival_at_r: bool | None
    bridge_transmissions: list
    attempts_before_tau: list
    attempts_post_growth: list
    attempts_total: list
    init_counts: np.ndarray
    events: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"community_{c}" for c in range(self.num_communities)])
        for t, row in zip(self.samples_t, self.samples):
            w.writerow([repr(float(t))] + [int(x) for x in row])
        return buf.getvalue()

    def sidecar(self):
        return {
            "extinction_time": self.extinction_time,
            "end_time": self.end_time,
            "tau_eps": self.tau_eps,
            "tau_by_community": self.tau_by_community,
            "survival_time": self.survival_time,
            "survival_at_r": self.survival_at_r,
            "bridge_transmissions": [list(x) for x in self.bridge_transmissions],
            "attempts_before_tau": self.attempts_before_tau,
            "attempts_post_growth": self.attempts_post_growth,
        }

    def save(self, csv_path, json_path):
        with open(csv_path, "w") as fh:
            fh.write(self.to_csv())
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2)


# Kernel status codes
_RUNNING, _EXTINCT, _HORIZON, _STOPPED = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def _grow(arr, rows):
    out = np.empty((max(2 * arr.shape[0], rows), arr.shape[1]), dtype=arr.dtype)
    out[:arr.shape[0]] = arr
    return out


@njit(cache=True, nogil=True)
def _run(indptr, indices, deg, comm, N, allowed, bsrc, bdst, lam, horizon,
         thr, record_dt, survival_time, stop_mask, init, seed, record_events, audit):
    np.random.seed(seed)
    nv = deg.shape[0]
    infected = np.zeros(nv, dtype=np.bool_)
    pos = np.full(nv, -1, dtype=np.int64)
    ilist = np.empty(nv, dtype=np.int64)
    size = 0
    pressure = 0
    counts = np.zeros(N, dtype=np.int64)
    maxdeg = 1
    for v in range(nv):
        if allowed[v] and deg[v] > maxdeg:
            maxdeg = deg[v]
    for v in init:
        if not infected[v]:
            infected[v] = True
            pos[v] = size
            ilist[size] = v
            size += 1
            pressure += deg[v]
            counts[comm[v]] += 1
    nb = bsrc.shape[0]
    bridge_rate = lam * nb

    n_grid = int(math.floor(horizon / record_dt)) + 1
    grid = np.zeros((n_grid, N), dtype=np.int64)
    next_grid = 0
    tau = np.full(N, np.nan)
    attempts = np.zeros(N, dtype=np.int64)
    attempts_post = np.zeros(N, dtype=np.int64)
    exc_attempts = np.full(N, -1, dtype=np.int64)
    exc_post = np.full(N, -1, dtype=np.int64)
    att_tau = np.full(N, -1, dtype=np.int64)
    post_tau = np.full(N, -1, dtype=np.int64)
    for c in range(N):
        if counts[c] > thr:
            tau[c] = 0.0
    btx = np.zeros((16, 3))
    nbtx = 0
    ev = np.zeros((1024 if record_events else 1, 3))
    nev = 0
    surv = -1
    if survival_time < 0:
        surv = -2
    audit_fail = 0
    n_events = 0
    t = 0.0
    status = _RUNNING
    while status == _RUNNING:
        total = size + lam * pressure + bridge_rate
        if size == 0:
            status = _EXTINCT
            break
        dt = np.random.exponential(1.0 / total)
        t_next = t + dt
        t_stop = min(t_next, horizon)
        while next_grid < n_grid and next_grid * record_dt <= t_stop:
            for c in range(N):
                grid[next_grid, c] = counts[c]
            next_grid += 1
        if surv == -1 and survival_time <= t_stop:
            surv = 1 if size > 0 else 0
        if t_next >= horizon:
            t = horizon
            status = _HORIZON
            break
        t = t_next
        n_events += 1
        u = np.random.random() * total
        changed = -1
        delta = 0
        if u < size:
            k = int(np.random.random() * size)
            if k >= size:
                k = size - 1
            v = ilist[k]
            last = ilist[size - 1]
            ilist[k] = last
            pos[last] = k
            pos[v] = -1
            size -= 1
            infected[v] = False
            pressure -= deg[v]
            counts[comm[v]] -= 1
            changed = comm[v]
            delta = -1
        elif u < size + lam * pressure:
            while True:
                k = int(np.random.random() * size)
                if k >= size:
                    k = size - 1
                v = ilist[k]
                if np.random.random() * maxdeg < deg[v]:
                    break
            j = indptr[v] + int(np.random.random() * deg[v])
            if j >= indptr[v + 1]:
                j = indptr[v + 1] - 1
            w = indices[j]
            if not infected[w] and allowed[w]:
                infected[w] = True
                pos[w] = size
                ilist[size] = w
                size += 1
                pressure += deg[w]
                counts[comm[w]] += 1
                changed = comm[w]
                delta = 1
        else:
            k = int(np.random.random() * nb)
            if k >= nb:
                k = nb - 1
            s = bsrc[k]
            w = bdst[k]
            cw = comm[w]
            attempts[cw] += 1
            if not np.isnan(tau[comm[s]]):
                attempts_post[cw] += 1
            if infected[s] and not infected[w]:
                infected[w] = True
                pos[w] = size
                ilist[size] = w
                size += 1
                pressure += deg[w]
                counts[cw] += 1
                changed = cw
                delta = 1
                if nbtx == btx.shape[0]:
                    btx = _grow(btx, nbtx + 1)
                btx[nbtx, 0] = t
                btx[nbtx, 1] = comm[s]
                btx[nbtx, 2] = cw
                nbtx += 1
                if counts[cw] == 1:
                    exc_attempts[cw] = attempts[cw]
                    exc_post[cw] = attempts_post[cw]
        if changed >= 0:
            if record_events:
                if nev == ev.shape[0]:
                    ev = _grow(ev, nev + 1)
                ev[nev, 0] = t
                ev[nev, 1] = changed
                ev[nev, 2] = delta
                nev += 1
            if delta > 0 and np.isnan(tau[changed]) and counts[changed] > thr:
                tau[changed] = t
                att_tau[changed] = exc_attempts[changed]
                post_tau[changed] = exc_post[changed]
            if delta < 0 and counts[changed] == 0:
                exc_attempts[changed] = -1
                exc_post[changed] = -1
        if audit:
            p2 = 0
            s2 = 0
            c2 = np.zeros(N, dtype=np.int64)
            for x in range(nv):
                if infected[x]:
                    p2 += deg[x]
                    s2 += 1
                    c2[comm[x]] += 1
            if p2 != pressure or s2 != size or np.any(c2 != counts):
                audit_fail += 1
            for q in range(size):
                if pos[ilist[q]] != q or not infected[ilist[q]]:
                    audit_fail += 1
                    break
        if size == 0:
            status = _EXTINCT
            break
        if surv != -1:
            done = True
            for c in range(N):
                if stop_mask[c] and np.isnan(tau[c]):
                    done = False
            if done and np.any(stop_mask):
                status = _STOPPED
                break
    if status == _EXTINCT:
        while next_grid < n_grid and next_grid * record_dt <= t:
            for c in range(N):
                grid[next_grid, c] = counts[c]
            next_grid += 1
        if surv == -1:
            surv = 0
    return (status, t, grid[:next_grid], tau, att_tau, post_tau, attempts, btx[:nbtx],
            ev[:nev], surv, audit_fail, n_events)


def _allowed_mask(g, restrict_to):
    if restrict_to is None:
        return np.ones(g.num_vertices, dtype=np.bool_)
    if not 0 <= restrict_to < g.num_communities:
        raise ValueError(f"restrict_to={restrict_to} is not a community index")
    return g.community_of == restrict_to


def simulate_contact(g, params, init):
    """Sample one contact-process path from the infected set ``init``.

    Runs until extinction, the horizon, or (with ``stop_at_tau``) until the
    listed communities have crossed their thresholds.  Deterministic given
    ``(g, params, init)``.
    """
    init = np.unique(np.asarray(list(init), dtype=np.int64))
    if len(init) == 0:
        raise ValueError("init must be nonempty")
    if init.min() < 0 or init.max() >= g.num_vertices:
        raise ValueError("init vertex out of range")
    allowed = _allowed_mask(g, params.restrict_to)
    if not np.all(allowed[init]):
        raise ValueError(f"init contains vertices outside community {params.restrict_to}")

    indptr, indices = g.intra
    deg = np.diff(indptr)
    b = g.mean_degree_param * params.lam
    eps = params.tau_threshold_eps if params.tau_threshold_eps is not None else default_eps(b)
    thr = eps * g.community_size
    horizon = params.horizon if params.horizon is not None else default_horizon(g, params.lam)
    r = params.survival_time
    if r is None:
        r = default_survival_time(g.community_size, b)
    if r is not None and r > horizon:
        raise ValueError("survival probe time exceeds the horizon")
    if params.restrict_to is None:
        bsrc, bdst = g.directed_bridges
    else:
        bsrc = bdst = np.zeros(0, dtype=np.int64)
    stop_mask = np.zeros(g.num_communities, dtype=np.bool_)
    for c in params.stop_at_tau:
        stop_mask[c] = True
    init_counts = np.bincount(g.community_of[init], minlength=g.num_communities)

    (status, t_end, grid, tau, att_tau, post_tau, attempts, btx, ev, surv, audit_fail,
     n_events) = _run(indptr, indices, deg, g.community_of, g.num_communities, allowed,
                      bsrc, bdst, float(params.lam), float(horizon), float(thr),
                      float(params.record_dt), -1.0 if r is None else float(r), stop_mask,
                      init, kernel_seed(params.seed), params.record_events, params.audit)
    if params.audit and audit_fail:
        raise AssertionError(f"rate bookkeeping audit failed {audit_fail} times")
    samples_t = np.arange(len(grid)) * params.record_dt
    return Trajectory(
        num_communities=g.num_communities,
        community_size=g.community_size,
        samples_t=samples_t,
        samples=grid,
        end_time=float(t_end),
        extinction_time=float(t_end) if status == _EXTINCT else None,
        tau_by_community=[None if math.isnan(x) else float(x) for x in tau],
        tau_eps=float(eps),
        survival_time=r,
        survival_at_r=None if r is None else bool(surv == 1),
        bridge_transmissions=[(float(a), int(s), int(d)) for a, s, d in btx],
        attempts_before_tau=[int(x) if x >= 0 else None for x in att_tau],
        attempts_post_growth=[int(x) if x >= 0 else None for x in post_tau],
        attempts_total=[int(x) for x in attempts],
        init_counts=init_counts,
        events=ev if params.record_events else None,
        stats={"events": int(n_events), "status": int(status), "audit_failures": int(audit_fail)},
    )


def first_passage_tau(traj, community, eps=None):
    """First time the community's count strictly exceeds ``eps * n``.

    With ``eps`` equal to the trajectory's own threshold the kernel's exact
    record is returned; other thresholds need ``record_events=True``.
    """
    if eps is None or eps == traj.tau_eps:
        return traj.tau_by_community[community]
    if traj.events is None:
        raise ValueError("querying a new threshold needs a trajectory recorded with record_events=True")
    thr = eps * traj.community_size
    count = traj.init_counts[community]
    if count > thr:
        return 0.0
    for t, c, d in traj.events:
        if int(c) == community:
            count += int(d)
            if count > thr:
                return float(t)
    return None


def survival_probe(traj, r):
    """True iff the total infected count at time ``r`` is positive."""
    if traj.extinction_time is not None:
        return r < traj.extinction_time
    if r <= traj.end_time:
        return True
    if traj.survival_time is not None and math.isclose(r, traj.survival_time):
        return bool(traj.survival_at_r)
    raise ValueError("r lies beyond the simulated time")


def quasi_equilibrium_density(traj, window, region_size=None):
    """(minimum, time-averaged mean) infected fraction over ``window``.

    Uses the exact event record when present, otherwise the sampling grid.
    ``region_size`` defaults to all vertices.
    """
    t1, t2 = window
    if not t2 > t1:
        raise ValueError("window is empty")
    if region_size is None:
        region_size = traj.num_communities * traj.community_size
    end = traj.end_time
    if traj.events is not None:
        times = np.concatenate([[0.0], traj.events[:, 0]])
        totals = int(traj.init_counts.sum()) + np.concatenate([[0], np.cumsum(traj.events[:, 2])])
    else:
        times = traj.samples_t
        totals = traj.samples.sum(axis=1)
    if traj.extinction_time is not None:
        times = np.append(times, traj.extinction_time)
        totals = np.append(totals, 0)
        end = max(end, t2)
    if t2 > end + 1e-12:
        raise ValueError("window extends beyond the simulated time")
    # piecewise-constant path: value totals[i] on [times[i], times[i+1])
    i0 = max(np.searchsorted(times, t1, side="right") - 1, 0)
    i1 = max(np.searchsorted(times, t2, side="right") - 1, 0)
    vals = totals[i0:i1 + 1].astype(float)
    edges = np.clip(np.append(times[i0:i1 + 1], t2), t1, t2)
    widths = np.diff(edges)
    mean = float(np.dot(vals, widths) / (t2 - t1))
    return float(vals.min()) / region_size, mean / region_size
