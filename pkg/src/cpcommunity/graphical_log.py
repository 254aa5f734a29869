"""Harris graphical representation on small graphs.

An :class:`EventLog` holds every recovery mark (rate 1 per vertex) and every
infection arrow (rate ``lambda`` per ordered adjacent pair) on ``[0, T]``, merged
into one time-sorted stream.  Recovery marks are stored with ``dst == -1``.

Active-path conventions: an arrow is usable at its own time stamp, and a
recovery mark kills the path on the half-open interval starting at the arrival
time.  Forward sweeps process the stream in increasing time, dual sweeps in
decreasing time; both only look at events with time ``<= t``.
"""

from dataclasses import dataclass
import json
import math

import numpy as np
from numba import njit

from .graph import SizeLimitError
from .rng import check_seed, kernel_seed, split_seed

LOG_EVENT_BUDGET = 10**7


@njit(cache=True, nogil=True)
def _sample_arrays(nv, esrc, edst, lam, T):
    m = esrc.shape[0]
    nrec = np.zeros(nv, dtype=np.int64)
    narr = np.zeros(m, dtype=np.int64)
    total = 0
    if T > 0:
        for v in range(nv):
            nrec[v] = np.random.poisson(T)
            total += nrec[v]
        if lam > 0:
            for e in range(m):
                narr[e] = np.random.poisson(lam * T)
                total += narr[e]
    times = np.empty(total)
    src = np.empty(total, dtype=np.int64)
    dst = np.empty(total, dtype=np.int64)
    k = 0
    for v in range(nv):
        for _ in range(nrec[v]):
            times[k] = np.random.random() * T
            src[k] = v
            dst[k] = -1
            k += 1
    for e in range(m):
        for _ in range(narr[e]):
            times[k] = np.random.random() * T
            src[k] = esrc[e]
            dst[k] = edst[e]
            k += 1
    order = np.argsort(times)
    times = times[order]
    src = src[order]
    dst = dst[order]
    ties = 0
    for i in range(1, total):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
            ties += 1
    return times, src, dst, ties


@njit(cache=True, nogil=True)
def _forward(times, src, dst, mask, t0, t1):
    cur = mask.copy()
    for i in range(times.shape[0]):
        s = times[i]
        if s < t0:
            continue
        if s > t1:
            break
        if dst[i] < 0:
            cur[src[i]] = False
        elif cur[src[i]]:
            cur[dst[i]] = True
    return cur


@njit(cache=True, nogil=True)
def _dual(times, src, dst, mask, t0, t1):
    cur = mask.copy()
    for i in range(times.shape[0] - 1, -1, -1):
        s = times[i]
        if s > t1:
            continue
        if s < t0:
            break
        if dst[i] < 0:
            cur[src[i]] = False
        elif cur[dst[i]]:
            cur[src[i]] = True
    return cur


@njit(cache=True, nogil=True)
def _monotone(times, src, dst, small, big, t):
    a = small.copy()
    b = big.copy()
    for i in range(times.shape[0]):
        if times[i] > t:
            break
        if dst[i] < 0:
            a[src[i]] = False
            b[src[i]] = False
        else:
            if a[src[i]]:
                a[dst[i]] = True
            if b[src[i]]:
                b[dst[i]] = True
        for v in range(a.shape[0]):
            if a[v] and not b[v]:
                return False
    return True


@njit(cache=True, nogil=True)
def _ensemble_hits(nv, esrc, edst, lam, t, start, target, num_logs, seed, dual):
    np.random.seed(seed)
    hits = 0
    for _ in range(num_logs):
        times, src, dst, _ties = _sample_arrays(nv, esrc, edst, lam, t)
        if dual:
            out = _dual(times, src, dst, start, 0.0, t)
        else:
            out = _forward(times, src, dst, start, 0.0, t)
        for v in range(nv):
            if out[v] and target[v]:
                hits += 1
                break
    return hits


@dataclass(frozen=True, eq=False)
class EventLog:
    num_vertices: int
    T: float
    lam: float
    seed: int
    times: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edges: tuple = ()
    perturbed_ties: int = 0

    def __len__(self):
        return len(self.times)

    def recovery_marks(self, v):
        return self.times[(self.dst == -1) & (self.src == v)]

    def arrows(self, u, v):
        return self.times[(self.src == u) & (self.dst == v)]

    def to_json(self):
        rec = {str(v): self.recovery_marks(v).tolist() for v in range(self.num_vertices)}
        arr = {f"{u}->{v}": self.arrows(u, v).tolist() for u, v in self.edges}
        return json.dumps({"window": [0.0, self.T], "lambda": self.lam, "seed": self.seed,
                           "num_vertices": self.num_vertices, "recovery_marks": rec,
                           "arrows": arr, "perturbed_ties": self.perturbed_ties})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        times, src, dst, edges = [], [], [], []
        for v, ts in d["recovery_marks"].items():
            times += ts
            src += [int(v)] * len(ts)
            dst += [-1] * len(ts)
        for key, ts in d["arrows"].items():
            u, v = map(int, key.split("->"))
            edges.append((u, v))
            times += ts
            src += [u] * len(ts)
            dst += [v] * len(ts)
        times = np.asarray(times, dtype=float)
        order = np.argsort(times, kind="stable")
        return cls(int(d["num_vertices"]), float(d["window"][1]), float(d["lambda"]),
                   int(d["seed"]), times[order], np.asarray(src, dtype=np.int64)[order],
                   np.asarray(dst, dtype=np.int64)[order], tuple(edges),
                   int(d.get("perturbed_ties", 0)))


def _directed_edges(g):
    rows = np.repeat(np.arange(g.num_vertices), g.degrees).astype(np.int64)
    return rows, np.ascontiguousarray(g.indices, dtype=np.int64)


def _check_budget(g, lam, T):
    maxdeg = int(g.degrees.max()) if g.num_vertices else 0
    expected = g.num_vertices * T * (1.0 + lam * maxdeg)
    if expected > LOG_EVENT_BUDGET:
        raise SizeLimitError(f"expected {expected:.3g} log events exceeds the budget of {LOG_EVENT_BUDGET}")


def sample_event_log(g, lam, T, seed):
    """Independent Poisson recovery and arrow streams on ``[0, T]``."""
    if lam < 0 or T < 0:
        raise ValueError("lambda and T must be nonnegative")
    _check_budget(g, lam, T)
    esrc, edst = _directed_edges(g)
    _seed_kernel(kernel_seed(check_seed(seed)))
    times, src, dst, ties = _sample_arrays(g.num_vertices, esrc, edst, float(lam), float(T))
    return EventLog(g.num_vertices, float(T), float(lam), int(seed), times, src, dst,
                    tuple(zip(esrc.tolist(), edst.tolist())), int(ties))


@njit(cache=True)
def _seed_kernel(seed):
    np.random.seed(seed)


def _mask(nv, vertices):
    m = np.zeros(nv, dtype=np.bool_)
    idx = np.asarray(list(vertices), dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= nv):
        raise ValueError("vertex out of range")
    m[idx] = True
    return m


def _as_set(mask):
    return frozenset(np.flatnonzero(mask).tolist())


def forward_infected(log, A, t, t0=0.0):
    """Vertices reached at time ``t`` by active paths from ``A`` at time ``t0``."""
    if t > log.T + 1e-12:
        raise ValueError("t exceeds the log window")
    return _as_set(_forward(log.times, log.src, log.dst, _mask(log.num_vertices, A), t0, t))


def dual_infected(log, Bset, t, t0=0.0):
    """Vertices ``u`` with an active path from ``(u, t0)`` into ``Bset`` at time ``t``."""
    if t > log.T + 1e-12:
        raise ValueError("t exceeds the log window")
    return _as_set(_dual(log.times, log.src, log.dst, _mask(log.num_vertices, Bset), t0, t))


def replay_monotone(log, A, A_sup, t):
    """Check forward(A) ⊆ forward(A_sup) after every event up to ``t``.

    Always True for a correct sweep; False signals a bug.
    """
    A, A_sup = set(A), set(A_sup)
    if not A <= A_sup:
        raise ValueError("A must be a subset of A_sup")
    nv = log.num_vertices
    return bool(_monotone(log.times, log.src, log.dst, _mask(nv, A), _mask(nv, A_sup), t))


@dataclass(frozen=True)
class DualityResult:
    p_forward: float
    p_dual: float
    z_score: float
    num_logs: int

    @property
    def joint_se(self):
        m = self.num_logs
        return math.sqrt(self.p_forward * (1 - self.p_forward) / m + self.p_dual * (1 - self.p_dual) / m)

    def __iter__(self):
        return iter((self.p_forward, self.p_dual, self.z_score))


def duality_check(g, lam, t, A, Bset, num_logs, seed):
    """Monte Carlo estimates of P(ξ_t^A ∩ B ≠ ∅) and P(ξ_t^B ∩ A ≠ ∅).

    The forward side reads ``num_logs`` logs from stream ``split_seed(seed, 0)``;
    the dual side reads an independent ensemble from ``split_seed(seed, 1)``.
    """
    _check_budget(g, lam, t)
    esrc, edst = _directed_edges(g)
    nv = g.num_vertices
    a, b = _mask(nv, A), _mask(nv, Bset)
    hf = _ensemble_hits(nv, esrc, edst, float(lam), float(t), a, b, num_logs,
                        kernel_seed(split_seed(seed, 0)), False)
    hd = _ensemble_hits(nv, esrc, edst, float(lam), float(t), b, a, num_logs,
                        kernel_seed(split_seed(seed, 1)), True)
    pf, pd = hf / num_logs, hd / num_logs
    se = math.sqrt(pf * (1 - pf) / num_logs + pd * (1 - pd) / num_logs)
    if se == 0:
        z = 0.0 if pf == pd else math.inf
    else:
        z = (pf - pd) / se
    return DualityResult(pf, pd, z, num_logs)


def forward_size_sample(g, lam, t, A, num_logs, seed):
    """Sizes |forward_infected(log, A, t)| over independent logs."""
    esrc, edst = _directed_edges(g)
    a = _mask(g.num_vertices, A)
    return _forward_sizes(g.num_vertices, esrc, edst, float(lam), float(t), a, num_logs,
                          kernel_seed(check_seed(seed)))


@njit(cache=True, nogil=True)
def _forward_sizes(nv, esrc, edst, lam, t, start, num_logs, seed):
    np.random.seed(seed)
    out = np.empty(num_logs, dtype=np.int64)
    for i in range(num_logs):
        times, src, dst, _ties = _sample_arrays(nv, esrc, edst, lam, t)
        out[i] = _forward(times, src, dst, start, 0.0, t).sum()
    return out


def bridge_arrow_duals(log, bridge, lookback, A=None):
    """Duals started at the arrow times of a directed bridge ``(u_b, v_b)``.

    For each arrow time ``T_k`` with ``T_k >= lookback`` this returns
    ``(T_k, dual set at T_k - lookback, u_b infected at T_k)``.  The dual set is
    grown backwards from ``{u_b}``; when ``A`` is given, the last entry is read
    off the forward process from ``A`` at time 0, otherwise it is None.  The
    infection status of ``u_b`` at ``T_k`` equals "dual meets the forward set at
    ``T_k - lookback``" on every log.
    """
    u_b, v_b = bridge
    out = []
    for Tk in log.arrows(u_b, v_b):
        if Tk < lookback:
            continue
        dual = dual_infected(log, {u_b}, float(Tk), t0=float(Tk - lookback))
        status = None
        if A is not None:
            status = u_b in forward_infected(log, A, float(Tk))
        out.append((float(Tk), dual, status))
    return out


EXACT_STATE_LIMIT = 12


def exact_hit_probability(g, lam, t, A, Bset):
    """P(ξ_t^A ∩ B ≠ ∅) from the full 2^|V| generator via a matrix exponential."""
    nv = g.num_vertices
    if nv > EXACT_STATE_LIMIT:
        raise SizeLimitError(f"exact generator limited to {EXACT_STATE_LIMIT} vertices")
    from scipy.linalg import expm

    S = 1 << nv
    Q = np.zeros((S, S))
    for s in range(S):
        for v in range(nv):
            if s >> v & 1:
                Q[s, s ^ (1 << v)] += 1.0
            else:
                k = sum(1 for w in g.neighbors(v) if s >> int(w) & 1)
                if k:
                    Q[s, s | (1 << v)] += lam * k
        Q[s, s] = -Q[s].sum()
    start = sum(1 << int(v) for v in A)
    bmask = sum(1 << int(v) for v in Bset)
    row = expm(Q * t)[start]
    return float(sum(row[s] for s in range(S) if s & bmask))
