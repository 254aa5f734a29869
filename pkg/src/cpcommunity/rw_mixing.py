"""Simple random walks on a Graph.

Discrete-time k-step distributions are computed exactly by sparse propagation
(``x <- P^T x`` with ``P = D^{-1} A``), so total-variation checks carry no
sampling noise.  The continuous-time dying walkers of the dual coupling are
simulated walker by walker, each from its own seed.
"""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .rng import check_seed, generator, split_seed


class DisconnectedGraphError(ValueError):
    pass


def _transition_T(g):
    """Sparse P^T for the simple random walk (columns of isolated vertices are zero)."""
    deg = g.degrees.astype(float)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    nv = g.num_vertices
    A = sparse.csr_matrix((np.ones(len(g.indices)), g.indices, g.indptr), shape=(nv, nv))
    return (A @ sparse.diags(inv)).tocsr()


def propagate(g, origins, k, PT=None):
    """Columns are P^k(u, .) for each origin u."""
    origins = np.asarray(origins, dtype=np.int64)
    if k >= 1 and np.any(g.degrees[origins] == 0):
        raise ValueError("the walk from an isolated vertex is undefined for k >= 1")
    PT = _transition_T(g) if PT is None else PT
    X = np.zeros((g.num_vertices, len(origins)))
    X[origins, np.arange(len(origins))] = 1.0
    for _ in range(k):
        X = PT @ X
    return X


@dataclass(frozen=True)
class WalkDistribution:
    origin: int
    k: int
    probs: np.ndarray


def rw_distribution(g, u, k):
    return WalkDistribution(int(u), int(k), propagate(g, [u], k)[:, 0])


def tv_distance(mu, nu):
    """Half the L1 distance between two probability vectors."""
    mu, nu = np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("vectors live on different supports")
    for x in (mu, nu):
        if np.any(x < -1e-15) or abs(x.sum() - 1.0) > 1e-9:
            raise ValueError("argument is not a probability vector")
    return float(0.5 * np.abs(mu - nu).sum())


def is_bipartite(g):
    nv = g.num_vertices
    color = np.full(nv, -1, dtype=np.int64)
    for s in range(nv):
        if color[s] >= 0:
            continue
        color[s] = 0
        frontier = np.array([s])
        while len(frontier):
            nxt = []
            for v in frontier:
                nb = g.neighbors(v)
                if np.any(color[nb] == color[v]):
                    return False
                new = nb[color[nb] < 0]
                color[new] = 1 - color[v]
                nxt.append(new)
            frontier = np.concatenate(nxt) if nxt else np.zeros(0, dtype=np.int64)
    return True


@dataclass(frozen=True)
class Stationary:
    pi: np.ndarray
    bipartite: bool


def stationary(g):
    """Degree-proportional stationary law; bipartite graphs are flagged (periodic walk)."""
    nv = g.num_vertices
    A = sparse.csr_matrix((np.ones(len(g.indices)), g.indices, g.indptr), shape=(nv, nv))
    ncomp, labels = csgraph.connected_components(A, directed=False)
    if ncomp > 1:
        sizes = np.bincount(labels)
        reps = [int(np.flatnonzero(labels == c)[0]) for c in range(min(ncomp, 5))]
        raise DisconnectedGraphError(
            f"graph has {ncomp} components (sizes {sizes[:5].tolist()}..., containing "
            f"vertices {reps}...)")
    deg = g.degrees.astype(float)
    return Stationary(deg / deg.sum(), is_bipartite(g))


def _origins(g, sample_origins, seed):
    nv = g.num_vertices
    if sample_origins >= nv:
        return np.arange(nv)
    return np.sort(generator(seed).choice(nv, size=sample_origins, replace=False))


@dataclass(frozen=True)
class TVResult:
    max_tv_to_pi: float
    max_tv_to_uniform: float
    max_singleton_dev: float
    origins: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.max_tv_to_pi, self.max_tv_to_uniform))


def worst_case_tv(g, k, sample_origins, seed):
    """Max over origins of the k-step TV distance to pi and to uniform.

    All origins are used when ``sample_origins >= |V|``.  ``max_singleton_dev`` is
    ``max_u max_v |P^k(u, v) - 1/n|``.
    """
    origins = _origins(g, sample_origins, seed)
    X = propagate(g, origins, k)
    pi = stationary(g).pi
    nv = g.num_vertices
    tv_pi = 0.5 * np.abs(X - pi[:, None]).sum(axis=0)
    tv_u = 0.5 * np.abs(X - 1.0 / nv).sum(axis=0)
    dev = np.abs(X - 1.0 / nv).max()
    return TVResult(float(tv_pi.max()), float(tv_u.max()), float(dev), origins)


def tv_curve(g, ks, sample_origins, seed):
    """Rows (k, max_tv_pi, max_tv_uniform) for each k in ``ks`` (one propagation pass)."""
    ks = sorted(set(int(k) for k in ks))
    origins = _origins(g, sample_origins, seed)
    PT = _transition_T(g)
    pi = stationary(g).pi
    nv = g.num_vertices
    X = propagate(g, origins, 0)
    rows, done = [], 0
    for k in ks:
        for _ in range(k - done):
            X = PT @ X
        done = k
        rows.append((k, float(0.5 * np.abs(X - pi[:, None]).sum(axis=0).max()),
                     float(0.5 * np.abs(X - 1.0 / nv).sum(axis=0).max())))
    return rows


def tv_curve_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "max_tv_pi", "max_tv_uniform"])
    for k, a, b in rows:
        w.writerow([k, repr(a), repr(b)])
    return buf.getvalue()


# -- continuous-time dying walkers ---------------------------------------------------

@dataclass
class WalkerEnsemble:
    """Outcome of one run of independent dying walkers.

    ``positions``/``alive``/``jumps`` describe each walker at ``elapsed``;
    ``paths[i]`` lists ``(time, vertex)`` for the start and every jump;
    ``collision_time`` is the first time two living walkers share a vertex.
    """

    positions: np.ndarray
    alive: np.ndarray
    jumps: np.ndarray
    death_times: np.ndarray
    elapsed: float
    collision_time: float | None
    paths: list

    @property
    def survivors(self):
        return int(self.alive.sum())

    @property
    def death_time(self):
        """Time at which every walker has died (inf if some survive)."""
        if self.alive.any():
            return math.inf
        return float(self.death_times.max()) if len(self.death_times) else 0.0


def _one_walker(g, start, lam, duration, rng):
    death = rng.exponential(1.0)
    end = min(death, duration)
    t, v = 0.0, int(start)
    path = [(0.0, v)]
    deg = g.degrees
    while deg[v] > 0 and lam > 0:
        t += rng.exponential(1.0 / (lam * deg[v]))
        if t >= end:
            break
        nb = g.neighbors(v)
        v = int(nb[rng.integers(len(nb))])
        path.append((t, v))
    return path, death


def _first_collision(paths, deaths, duration):
    events = []
    for i, path in enumerate(paths):
        for t, v in path[1:]:
            events.append((t, 0, i, v))
        if deaths[i] < duration:
            events.append((deaths[i], 1, i, -1))
    events.sort()
    where = {}
    for i, path in enumerate(paths):
        where.setdefault(path[0][1], set()).add(i)
    pos = [p[0][1] for p in paths]
    for t, kind, i, v in events:
        where[pos[i]].discard(i)
        if kind == 1:
            continue
        if where.get(v):
            return t
        where.setdefault(v, set()).add(i)
        pos[i] = v
    return None


def walker_ensemble_sim(g, m, lam, init, duration, seed, walker_seeds=None):
    """``m`` independent continuous-time walkers that die at rate 1.

    A walker at ``u`` waits Exp(lam * deg(u)), then moves to a uniform neighbor.
    Walker ``i`` draws from ``walker_seeds[i]`` (default ``split_seed(seed, i)``),
    so permuting ``init`` together with ``walker_seeds`` permutes the output.
    """
    init = [int(v) for v in init]
    if len(init) != m:
        raise ValueError("init must list one vertex per walker")
    if len(set(init)) != m:
        raise ValueError("walkers must start at distinct vertices")
    if walker_seeds is None:
        walker_seeds = [split_seed(check_seed(seed), i) for i in range(m)]
    paths, deaths = [], []
    for start, ws in zip(init, walker_seeds):
        path, death = _one_walker(g, start, lam, duration, generator(ws))
        paths.append(path)
        deaths.append(death)
    deaths = np.array(deaths)
    return WalkerEnsemble(
        positions=np.array([p[-1][1] for p in paths], dtype=np.int64),
        alive=deaths > duration,
        jumps=np.array([len(p) - 1 for p in paths], dtype=np.int64),
        death_times=deaths,
        elapsed=float(duration),
        collision_time=_first_collision(paths, deaths, duration),
        paths=paths,
    )


def hitting_probability(histories, A):
    """Fraction of runs in which some living walker ends inside ``A``, with its SE."""
    A = set(int(v) for v in A)
    if not A:
        raise ValueError("A must be nonempty")
    hits = np.array([any(int(v) in A for v, ok in zip(h.positions, h.alive) if ok)
                     for h in histories])
    p = float(hits.mean())
    return p, math.sqrt(p * (1 - p) / len(hits))


def hitting_miss_bound(n, a, b, eps):
    """(1 - eps(1 - 4 n^{-a/3}))^{eta2 (log n)^{(b-1)/(b+1)} / 2}: bound on missing a density-eps set."""
    eta2 = 3.0 / math.log(b)
    exponent = 0.5 * eta2 * math.log(n) ** ((b - 1.0) / (b + 1.0))
    return (1.0 - eps * (1.0 - 4.0 * n ** (-a / 3.0))) ** exponent


def collision_bound(t_mix, lam, walkers):
    """1 - exp(-t_mix * lam * walkers^2): bound on a collision by t_mix."""
    return -math.expm1(-t_mix * lam * walkers ** 2)
