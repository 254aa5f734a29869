"""Closed forms and reference processes.

* Linear birth-death branching process (birth rate ``beta`` per individual,
  death rate 1): transition probabilities, extinction probability, an exact
  CTMC sampler.
* Constants derived from ``(n, a or p, lambda, |B|)``.
* The limiting (defective) law of the rescaled crossing time.
* The mean-field count of bridge crossings before saturation.
* The community-level SI chain and exact hitting-time means for it.
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np
from numba import njit
from scipy import integrate

from .rng import check_seed, kernel_seed


# -- branching process: closed forms ---------------------------------------------

def bp_p10(beta, t):
    """P(Z_t = 0 | Z_0 = 1)."""
    if beta <= 0 or t < 0:
        raise ValueError("need beta > 0 and t >= 0")
    if beta == 1.0:
        return t / (1.0 + t)
    x = (beta - 1.0) * t
    if x >= 0:
        e = math.exp(-x)
        if e == 0.0:
            return 1.0 / beta
        return -math.expm1(-x) / (beta - e)
    f = math.exp(x)                     # subcritical: divide through by e^{-x}
    return (1.0 - f) / (1.0 - beta * f) if f > 0 else 1.0


def bp_eta(beta, t):
    """The geometric ratio eta(t) of the size distribution given survival."""
    if beta <= 0 or t < 0:
        raise ValueError("need beta > 0 and t >= 0")
    if beta == 1.0:
        return t / (1.0 + t)
    x = (beta - 1.0) * t
    if x >= 0:
        e = math.exp(-x)
        return -math.expm1(-x) / (1.0 - e / beta)
    f = math.exp(x)
    return beta * (1.0 - f) / (1.0 - beta * f)


def bp_p1k(beta, t, k):
    """P(Z_t = k | Z_0 = 1) for k >= 1."""
    if k < 1:
        raise ValueError("k must be >= 1; use bp_p10 for k = 0")
    eta = bp_eta(beta, t)
    return (1.0 - bp_p10(beta, t)) * (1.0 - eta) * eta ** (k - 1)


def bp_prob_between(beta, t, kmax):
    """P(0 < Z_t <= kmax), summed in closed form."""
    kmax = int(math.floor(kmax))
    if kmax < 1:
        return 0.0
    survive = 1.0 - bp_p10(beta, t)
    eta = bp_eta(beta, t)
    if eta == 0.0:
        return survive
    return survive * -math.expm1(kmax * math.log(eta))


def bp_extinction_prob(beta, alpha=1):
    """Eventual extinction probability from ``alpha`` individuals: beta^(-alpha), capped at 1."""
    if beta <= 1.0:
        return 1.0
    return beta ** (-alpha)


def log_bounds_check(y):
    """Return (-y - y^2, log(1-y), -y - y^2/2) and assert the sandwich."""
    if not 0 < y < 0.5:
        raise ValueError("y must lie in (0, 1/2)")
    lower, value, upper = -y - y * y, math.log1p(-y), -y - 0.5 * y * y
    assert lower <= value <= upper, (lower, value, upper)
    return lower, value, upper


# -- branching process: simulation -------------------------------------------------

@njit(cache=True, nogil=True)
def _bp_paths(beta, times, runs, cap, seed):
    np.random.seed(seed)
    nt = times.shape[0]
    t_end = times[nt - 1] if nt else 0.0
    out = np.empty((runs, nt), dtype=np.int64)
    runmax = np.empty(runs, dtype=np.int64)
    overflow = np.zeros(runs, dtype=np.bool_)
    p_birth = beta / (beta + 1.0)
    for i in range(runs):
        z = 1
        zmax = 1
        t = 0.0
        j = 0
        while True:
            if z == 0:
                break
            if z >= cap:
                overflow[i] = True
                break
            t_next = t + np.random.exponential(1.0 / ((beta + 1.0) * z))
            while j < nt and times[j] < t_next:
                out[i, j] = z
                j += 1
            if t_next > t_end:
                break
            t = t_next
            if np.random.random() < p_birth:
                z += 1
                if z > zmax:
                    zmax = z
            else:
                z -= 1
        while j < nt:
            out[i, j] = z if not overflow[i] else -1
            j += 1
        runmax[i] = zmax
    return out, runmax, overflow


@dataclass(frozen=True)
class BPSample:
    population: int
    running_max: int
    overflow: bool


def bp_simulate(beta, t_end, seed, cap=10**7):
    """One exact CTMC sample of Z_{t_end} from Z_0 = 1.

    Stops with ``overflow=True`` (population -1) once the population reaches ``cap``.
    """
    z, m, o = bp_ensemble(beta, [t_end], 1, seed, cap)
    return BPSample(int(z[0, 0]), int(m[0]), bool(o[0]))


def bp_ensemble(beta, times, runs, seed, cap=10**7):
    """``runs`` independent paths observed at ``times`` (nondecreasing).

    Returns ``(values, running_max, overflow)``; ``values[i, j]`` is Z at
    ``times[j]`` on path ``i``, or -1 if that path hit ``cap`` first.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    return _bp_paths(float(beta), times, int(runs), int(cap), kernel_seed(check_seed(seed)))


def bp_extinction_frequency(beta, t, runs, seed, cap=200):
    """Fraction of runs extinct by time ``t``.

    Runs reaching ``cap`` are counted as surviving; the error this introduces
    is at most ``beta**(-cap)`` per run.
    """
    z, _, overflow = bp_ensemble(beta, [t], runs, seed, cap)
    return float(np.mean((z[:, 0] == 0) & ~overflow))


# -- constants ------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoryConstants:
    n: int
    a: float
    p: float
    lam: float
    bridge_total: int
    np_: float
    b: float
    subcritical: bool
    eps: float = None
    r: float = None
    r_adjusted: float = None
    t_mix: float = None
    eta1: float = None
    eta2: float = None
    eta3: float = None
    kappa: int = None
    k_mix: int = None
    timescale: float = None
    limit_rate: float = None
    survival_prob: float = None

    def s(self, beta=None):
        """3 log n / (beta - 1), with beta defaulting to b."""
        beta = self.b if beta is None else beta
        return 3.0 * math.log(self.n) / (beta - 1.0)

    @property
    def expected_conditional_crossing_time(self):
        return self.timescale / self.limit_rate if self.timescale and self.limit_rate else None

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["np"] = d.pop("np_")
        return d


def _snap(x):
    r = round(x)
    return r if abs(x - r) < 1e-9 else x


def theory_constants(n, lam, a=None, p=None, bridge_total=0):
    """All derived constants for ``n`` vertices per community and rate ``lam``.

    Give ``a`` (so ``p = n**(a-1)``) or ``p`` (so ``a = 1 + log p / log n``).
    Supercritical fields are None when ``b = n p lam <= 1``.
    """
    if (a is None) == (p is None):
        raise ValueError("give exactly one of a or p")
    if a is None:
        a = 1.0 + math.log(p) / math.log(n)
    else:
        p = n ** (a - 1.0)
    np_ = n * p
    b = np_ * lam
    timescale = np_ / bridge_total if bridge_total else None
    base = dict(n=n, a=a, p=p, lam=lam, bridge_total=bridge_total, np_=np_, b=b,
                kappa=int(math.floor(_snap(1.0 + 1.0 / a))),
                k_mix=12 * int(math.ceil(_snap(1.0 / a))) ** 2, timescale=timescale)
    if b <= 1:
        return TheoryConstants(subcritical=True, **base)
    eps = 0.25 * (1.0 - b ** (-1.0 / 3.0))
    assert math.isclose((1 - 4 * eps) * b, b ** (2.0 / 3.0)) and (1 - 4 * eps) * b > 1
    llog = math.log(math.log(n))
    denom_adj = b - 1.0 - 2.0 * np_ ** (-1.0 / 3.0)
    return TheoryConstants(
        subcritical=False,
        eps=eps,
        r=2.0 * llog / (b - 1.0),
        r_adjusted=2.0 * llog / denom_adj if denom_adj > 0 else None,
        t_mix=2.0 * llog / (b + 1.0),
        eta1=6.0 * b / ((b - 1.0) * math.log(b)),
        eta2=3.0 / math.log(b),
        eta3=4.0 / ((1.0 - 4.0 * eps) * b - 1.0),
        limit_rate=(b - 1.0) ** 2 / b,
        survival_prob=1.0 - 1.0 / b,
        **base,
    )


# -- limit law --------------------------------------------------------------------

@dataclass(frozen=True)
class LimitLaw:
    b: float

    @property
    def survival_prob(self):
        return 1.0 - 1.0 / self.b

    @property
    def rate(self):
        return (self.b - 1.0) ** 2 / self.b

    def cdf(self, x):
        return limit_cdf_tau(x, self.b)

    def conditional_cdf(self, x):
        """CDF of the rescaled crossing time given that a crossing happens."""
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0)), 0.0)


def limit_cdf_tau(x, b):
    """(1 - 1/b) (1 - exp(-(b-1)^2/b * x)) for x >= 0."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be >= 0")
    rate = (b - 1.0) ** 2 / b
    out = (1.0 - 1.0 / b) * -np.expm1(-rate * np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


# -- mean-field crossing count -------------------------------------------------------

@dataclass(frozen=True)
class MeanFieldCrossing:
    closed_form: float
    integral: float
    integral_exact: float
    s: float

    @property
    def likely_to_spread_early(self):
        """True when crossings before saturation are expected (>= 1)."""
        return self.integral >= 1.0


def mean_field_crossing_count(bridge_total, n, a, b, eps):
    """Expected bridge transmissions before the source reaches ``eps n``.

    ``integral`` integrates ``b^{t+1}|B|/n^{1+a}`` over ``[0, s]`` with
    ``s = log(eps n)/log b`` by quadrature; ``integral_exact`` is its
    antiderivative value ``|B| b (b^s - 1) / (n^{1+a} log b)``.  ``closed_form``
    is the published approximation ``|B| eps b log b / n^a``; it differs from the
    integral by the factor ``(log b)^2`` and coincides with it only at ``b = e``.
    """
    if b <= 1:
        raise ValueError("need b > 1")
    s = math.log(eps * n) / math.log(b)
    scale = bridge_total / n ** (1.0 + a)
    integral, _ = integrate.quad(lambda t: b ** (t + 1.0) * scale, 0.0, s)
    exact = scale * b * (b ** s - 1.0) / math.log(b)
    closed = bridge_total * eps * b * math.log(b) / n ** a
    return MeanFieldCrossing(closed, integral, exact, s)


# -- community-level SI chain -------------------------------------------------------

def normalize_bridge_counts(counts, max_ratio=100.0):
    """beta_ij = |B_ij| / max |B_kl|.

    Nonzero counts spanning more than ``max_ratio`` are rejected: that regime
    has several time scales and is not modeled by a single SI chain.
    """
    counts = np.asarray(counts, dtype=float)
    nz = counts[counts > 0]
    if len(nz) == 0:
        return np.zeros_like(counts)
    if nz.max() / nz.min() > max_ratio:
        raise ValueError(f"bridge counts span a factor {nz.max() / nz.min():.3g} > {max_ratio}; "
                         "multiple time scales are not supported")
    return counts / nz.max()


def _check_beta_matrix(beta):
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
        raise ValueError("beta_matrix must be square")
    if not np.allclose(beta, beta.T) or beta.min() < 0 or beta.max() > 1:
        raise ValueError("beta_matrix must be symmetric with entries in [0, 1]")
    if beta.size > 1 and beta.max() > 0 and not math.isclose(beta.max(), 1.0):
        raise ValueError("beta_matrix must be normalized to max entry 1")
    return beta


@dataclass(frozen=True)
class SIPath:
    times: np.ndarray           # flip times, increasing
    states: np.ndarray          # state after each flip, shape (len(times)+1, N); row 0 is x0
    hitting_times: np.ndarray   # per community, inf if never, 0 if initially on

    @property
    def all_ones_time(self):
        return float(self.hitting_times.max())


def community_si_limit(beta_matrix, b, x0, t_end, seed):
    """Exact sample path of the monotone SI chain on {0,1}^N.

    Community ``i`` switches on at rate ``sum_j x(j) beta_ij (b-1)^2/b``.
    """
    beta = _check_beta_matrix(beta_matrix)
    x = np.array(x0, dtype=np.int64)
    if x.shape != (beta.shape[0],) or not set(np.unique(x)) <= {0, 1}:
        raise ValueError("x0 must be a 0/1 vector of length N")
    rate_unit = (b - 1.0) ** 2 / b
    rng = np.random.default_rng(check_seed(seed))
    hit = np.where(x == 1, 0.0, np.inf)
    times, states = [], [x.copy()]
    t = 0.0
    while True:
        rates = rate_unit * (beta @ x) * (1 - x)
        total = rates.sum()
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t > t_end:
            break
        i = int(rng.choice(len(x), p=rates / total))
        x[i] = 1
        hit[i] = t
        times.append(t)
        states.append(x.copy())
    return SIPath(np.array(times), np.array(states), hit)


def si_expected_hitting_times(beta_matrix, b, x0):
    """Exact expected switch-on time of every community (and of all-ones).

    Solves the first-step equations of the absorbing chain over the 2^N states
    reachable from ``x0``.  Returns ``(per_community, all_ones)``; entries are inf
    for communities that can never switch on.
    """
    beta = _check_beta_matrix(beta_matrix)
    N = beta.shape[0]
    rate_unit = (b - 1.0) ** 2 / b
    x0 = tuple(int(v) for v in x0)
    states = [s for s in itertools.product((0, 1), repeat=N)
              if all(si >= xi for si, xi in zip(s, x0))]
    index = {s: i for i, s in enumerate(states)}

    def rates(s):
        x = np.array(s)
        return rate_unit * (beta @ x) * (1 - x)

    def expected_time_until(done):
        # E[time to reach a state with done(s)] from every state, by first-step analysis
        m = len(states)
        A = np.eye(m)
        rhs = np.zeros(m)
        for s, i in index.items():
            if done(s):
                continue
            r = rates(s)
            tot = r.sum()
            if tot <= 0:
                A[i, i] = 1.0
                rhs[i] = np.inf
                continue
            rhs[i] = 1.0 / tot
            for j in np.flatnonzero(r):
                s2 = list(s)
                s2[j] = 1
                A[i, index[tuple(s2)]] -= r[j] / tot
        with np.errstate(invalid="ignore"):
            finite = np.isfinite(rhs)
            sol = np.full(m, np.inf)
            if finite.all():
                sol = np.linalg.solve(A, rhs)
            else:
                sol = _solve_with_inf(A, rhs)
        return sol[index[x0]]

    per = np.array([expected_time_until(lambda s, c=c: s[c] == 1) for c in range(N)])
    return per, expected_time_until(lambda s: all(s))


def _solve_with_inf(A, rhs):
    # states with no way forward get inf; propagate inf to anything that can reach them
    m = len(rhs)
    inf = ~np.isfinite(rhs)
    changed = True
    while changed:
        changed = False
        for i in range(m):
            if not inf[i] and np.any(inf & (A[i] < 0)):
                inf[i] = True
                changed = True
    sol = np.full(m, np.inf)
    keep = ~inf
    if keep.any():
        sol[keep] = np.linalg.solve(A[np.ix_(keep, keep)], rhs[keep])
    return sol
