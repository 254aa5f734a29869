"""Multi-community Erdős–Rényi graphs joined by bridge edges.

Vertices are numbered contiguously: community ``c`` owns ``[c*n, (c+1)*n)``.
Adjacency is stored in CSR form (``indptr``, ``indices``) with sorted neighbor
lists.  Bridges are kept per community pair as ``(k, 2)`` arrays whose first
column lies in the lower-indexed community.

Serialization
-------------
Text format, one record per line::

    communities N n p
    edge u v        # intra-community edge, u < v
    bridge u v      # bridge edge, u in the lower-indexed community

Binary format, all fields little-endian::

    8 bytes   magic b"CPGRAPH1"
    u64       N (communities)
    u64       n (vertices per community)
    f64       p
    u64       number of intra-community edges E
    u64       number of bridge edges B
    E x (u64 u, u64 v)
    B x (u64 u, u64 v)
"""

from dataclasses import dataclass, field
from functools import cached_property
import math
import struct

import numpy as np
from numba import njit

from .rng import check_seed, generator, split_seed

EXACT_ISOPERIMETRIC_LIMIT = 24
_MAGIC = b"CPGRAPH1"


class SizeLimitError(ValueError):
    """Raised when an exact computation would be too large to run."""


@dataclass(frozen=True, eq=False)
class Graph:
    num_communities: int
    community_size: int
    indptr: np.ndarray
    indices: np.ndarray
    bridges: dict
    p: float = float("nan")

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @property
    def num_vertices(self):
        return self.num_communities * self.community_size

    @property
    def num_edges(self):
        return len(self.indices) // 2

    @cached_property
    def community_of(self):
        c = np.arange(self.num_vertices, dtype=np.int64) // self.community_size
        c.setflags(write=False)
        return c

    @cached_property
    def degrees(self):
        return np.diff(self.indptr)

    @property
    def mean_degree_param(self):
        """``np`` -- the expected within-community degree."""
        return self.community_size * self.p

    @property
    def bridge_total(self):
        return sum(len(b) for b in self.bridges.values())

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def vertices_of(self, c):
        return np.arange(c * self.community_size, (c + 1) * self.community_size)

    @cached_property
    def intra(self):
        """CSR ``(indptr, indices)`` of the intra-community edges only."""
        rows = np.repeat(np.arange(self.num_vertices), self.degrees)
        keep = self.community_of[rows] == self.community_of[self.indices]
        indices = np.ascontiguousarray(self.indices[keep])
        counts = np.bincount(rows[keep], minlength=self.num_vertices)
        indptr = np.zeros(self.num_vertices + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, indices

    @cached_property
    def directed_bridges(self):
        """All bridges in both orientations as ``(src, dst)`` int64 arrays, sorted."""
        if self.bridge_total == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        pairs = np.concatenate([b for _, b in sorted(self.bridges.items())])
        src = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
        return src, dst

    def edge_list(self):
        """Intra-community edges as a ``(m, 2)`` array with ``u < v``, lexicographic."""
        indptr, indices = self.intra
        rows = np.repeat(np.arange(self.num_vertices), np.diff(indptr))
        keep = rows < indices
        return np.column_stack([rows[keep], indices[keep]]).astype(np.int64)

    def without_bridges(self):
        return from_edges(self.edge_list(), self.num_communities, self.community_size, p=self.p)

    # -- serialization -------------------------------------------------------

    def to_text(self):
        lines = [f"communities {self.num_communities} {self.community_size} {self.p!r}"]
        lines += [f"edge {u} {v}" for u, v in self.edge_list()]
        for _, pairs in sorted(self.bridges.items()):
            lines += [f"bridge {u} {v}" for u, v in pairs]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        header = None
        edges, bridges = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "communities" and len(tok) == 4 and header is None:
                header = int(tok[1]), int(tok[2]), float(tok[3])
            elif tok[0] in ("edge", "bridge") and len(tok) == 3 and header is not None:
                (edges if tok[0] == "edge" else bridges).append((int(tok[1]), int(tok[2])))
            else:
                raise ValueError(f"line {lineno}: cannot parse {raw!r}")
        if header is None:
            raise ValueError("missing 'communities N n p' header")
        N, n, p = header
        g = from_edges(edges + bridges, N, n, p=p)
        if g.bridge_total != len(bridges) or g.num_edges != len(edges) + len(bridges):
            raise ValueError("edge/bridge records disagree with community layout")
        return g

    def to_bytes(self):
        edges = self.edge_list()
        bridges = [pairs for _, pairs in sorted(self.bridges.items())]
        bridges = np.concatenate(bridges) if bridges else np.zeros((0, 2), dtype=np.int64)
        head = _MAGIC + struct.pack("<QQdQQ", self.num_communities, self.community_size,
                                    self.p, len(edges), len(bridges))
        return head + edges.astype("<u8").tobytes() + bridges.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data):
        if data[:8] != _MAGIC:
            raise ValueError("not a binary graph file")
        N, n, p, ne, nb = struct.unpack_from("<QQdQQ", data, 8)
        off = 8 + struct.calcsize("<QQdQQ")
        body = np.frombuffer(data, dtype="<u8", offset=off).astype(np.int64)
        if len(body) != 2 * (ne + nb):
            raise ValueError("truncated binary graph file")
        g = from_edges(body.reshape(-1, 2), N, n, p=p)
        if g.bridge_total != nb:
            raise ValueError("bridge records disagree with community layout")
        return g

    def save(self, path):
        path = str(path)
        if path.endswith(".bin"):
            with open(path, "wb") as fh:
                fh.write(self.to_bytes())
        else:
            with open(path, "w") as fh:
                fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if data.startswith(_MAGIC):
            return cls.from_bytes(data)
        return cls.from_text(data.decode())


def from_edges(edges, num_communities=1, community_size=None, p=float("nan")):
    """Build a Graph from an undirected edge list.

    Edges joining different communities become bridges.  Self-loops and
    duplicate edges are rejected.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if community_size is None:
        community_size = int(edges.max()) + 1 if len(edges) else 1
    nv = num_communities * community_size
    if community_size <= 0 or num_communities <= 0:
        raise ValueError("graph must have at least one vertex")
    if len(edges) and (edges.min() < 0 or edges.max() >= nv):
        raise ValueError("edge endpoint out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise ValueError("self-loops are not allowed")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    if len(np.unique(lo * nv + hi)) != len(edges):
        raise ValueError("duplicate edges are not allowed")

    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    order = np.lexsort((cols, rows))
    indices = np.ascontiguousarray(cols[order])
    indptr = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nv), out=indptr[1:])

    clo, chi = lo // community_size, hi // community_size
    bridges = {}
    for i in range(num_communities):
        for j in range(i + 1, num_communities):
            sel = (clo == i) & (chi == j)
            pairs = np.column_stack([lo[sel], hi[sel]])
            bridges[(i, j)] = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return Graph(num_communities, community_size, indptr, indices, bridges, float(p))


# -- generation ---------------------------------------------------------------

def _er_pairs(n, p, rng):
    """Linear indices of the selected pairs among the n(n-1)/2 pairs i<j."""
    total = n * (n - 1) // 2
    if total == 0 or p <= 0.0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    mean = total * p
    while True:
        size = int(mean + 6 * math.sqrt(mean + 1) + 64)
        # tiny p gives gaps near int64 max; clipping keeps cumsum from wrapping
        gaps = np.minimum(rng.geometric(p, size=size), total + 1)
        idx = pos + np.cumsum(gaps)
        if idx[-1] >= total:
            chunks.append(idx[idx < total])
            break
        chunks.append(idx)
        pos = int(idx[-1])
    return np.concatenate(chunks).astype(np.int64)


def _pairs_from_linear(k, n):
    # row i starts at i*n - i*(i+1)/2 in the row-major upper triangle
    i = np.arange(n, dtype=np.int64)
    starts = i * n - i * (i + 1) // 2
    row = np.searchsorted(starts, k, side="right") - 1
    col = k - starts[row] + row + 1
    return np.column_stack([row, col])


def generate_er(n, p, seed):
    """Single-community G(n, p).

    Pairs are visited in row-major order over ``i < j`` and selected by geometric
    skipping, so the work is proportional to the number of edges.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = generator(check_seed(seed))
    edges = _pairs_from_linear(_er_pairs(n, p, rng), n)
    return from_edges(edges, 1, n, p=p)


@dataclass(frozen=True)
class CommunityConfig:
    """Parameters of a community graph.

    Give either ``a`` (then ``p = n**(a-1)``) or ``p`` directly.
    ``bridge_counts`` is a symmetric N x N matrix with zero diagonal.
    """

    n: int
    bridge_counts: tuple
    seed: int = 0
    a: float = None
    p: float = None

    def __post_init__(self):
        counts = np.asarray(self.bridge_counts, dtype=np.int64)
        object.__setattr__(self, "bridge_counts", tuple(map(tuple, counts.tolist())))
        if self.n <= 0:
            raise ValueError("n must be positive")
        if (self.a is None) == (self.p is None):
            raise ValueError("give exactly one of a or p")
        if self.a is not None and not 0 < self.a <= 1:
            raise ValueError(f"a must lie in (0, 1], got {self.a}")
        if self.p is not None and not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] == 0:
            raise ValueError("bridge_counts must be a square N x N matrix")
        if np.any(counts != counts.T) or np.any(np.diag(counts) != 0) or np.any(counts < 0):
            raise ValueError("bridge_counts must be symmetric, nonnegative, zero on the diagonal")
        if np.any(counts > self.n * self.n):
            raise ValueError(f"a bridge count exceeds the n^2 = {self.n * self.n} possible cross pairs")
        check_seed(self.seed)

    @property
    def num_communities(self):
        return len(self.bridge_counts)

    @property
    def edge_prob(self):
        return self.p if self.p is not None else self.n ** (self.a - 1.0)

    @classmethod
    def two_community(cls, n, bridges, seed=0, a=None, p=None):
        return cls(n=n, bridge_counts=((0, bridges), (bridges, 0)), seed=seed, a=a, p=p)


def build_community_graph(cfg, bridge_edges=None):
    """Independent G(n, p) communities plus uniformly drawn distinct bridges.

    Community ``c`` uses seed ``split_seed(cfg.seed, c)``; the bridges between
    ``i < j`` use ``split_seed(cfg.seed, N + i*N + j)``, so bridges are independent
    of the intra-community edges.  ``bridge_edges`` (global vertex pairs) replaces
    the random bridges when given.
    """
    N, n, p = cfg.num_communities, cfg.n, cfg.edge_prob
    parts = []
    for c in range(N):
        rng = generator(split_seed(cfg.seed, c))
        parts.append(_pairs_from_linear(_er_pairs(n, p, rng), n) + c * n)
    if bridge_edges is not None:
        parts.append(np.asarray(bridge_edges, dtype=np.int64).reshape(-1, 2))
    else:
        for i in range(N):
            for j in range(i + 1, N):
                k = cfg.bridge_counts[i][j]
                if k == 0:
                    continue
                rng = generator(split_seed(cfg.seed, N + i * N + j))
                chosen, seen = [], set()
                while len(chosen) < k:
                    x = int(rng.integers(n * n))
                    if x not in seen:
                        seen.add(x)
                        chosen.append(x)
                chosen = np.array(chosen, dtype=np.int64)
                parts.append(np.column_stack([i * n + chosen // n, j * n + chosen % n]))
    g = from_edges(np.concatenate(parts) if parts else np.zeros((0, 2)), N, n, p=p)
    if bridge_edges is None:
        for (i, j), pairs in g.bridges.items():
            assert len(pairs) == cfg.bridge_counts[i][j]
    return g


def validate_graph(g, bridge_counts=None):
    """Check the structural invariants; raise ValueError listing every violation."""
    problems = []
    nv = g.num_vertices
    rows = np.repeat(np.arange(nv), g.degrees)
    cols = g.indices
    if np.any(rows == cols):
        problems.append("self-loop present")
    for v in range(nv):
        nb = g.neighbors(v)
        if len(nb) > 1 and np.any(np.diff(nb) <= 0):
            problems.append(f"neighbors of {v} not strictly increasing (duplicate edge?)")
            break
    fwd = set(zip(rows.tolist(), cols.tolist()))
    if any((v, u) not in fwd for u, v in fwd):
        problems.append("adjacency is not symmetric")
    comm = g.community_of
    cross = {(min(u, v), max(u, v)) for u, v in fwd if comm[u] != comm[v]}
    listed = set()
    for (i, j), pairs in g.bridges.items():
        for u, v in pairs.tolist():
            if not (comm[u] == i and comm[v] == j):
                problems.append(f"bridge {u}-{v} not between communities {i} and {j}")
            listed.add((u, v))
        if bridge_counts is not None and len(pairs) != bridge_counts[i][j]:
            problems.append(f"|B_{i}{j}| = {len(pairs)}, expected {bridge_counts[i][j]}")
    if listed != cross:
        problems.append("bridge lists disagree with cross-community adjacency")
    if problems:
        raise ValueError("; ".join(problems))
    return True


# -- measurements ---------------------------------------------------------------

@dataclass(frozen=True)
class DegreeStats:
    min_degree: int
    max_degree: int
    mean_degree: float
    concentration_interval: tuple
    fraction_outside: float = field(default=0.0)


def degree_stats(g):
    deg = g.degrees
    mean_param = g.mean_degree_param
    if math.isnan(mean_param):
        mean_param = float(deg.mean()) if len(deg) else 0.0
    half = mean_param ** (2.0 / 3.0)
    lo, hi = mean_param - half, mean_param + half
    outside = float(np.mean((deg < lo) | (deg > hi))) if len(deg) else 0.0
    return DegreeStats(int(deg.min()), int(deg.max()), float(deg.mean()), (lo, hi), outside)


@njit(cache=True)
def _boundary(indptr, indices, members, mask):
    total = 0
    for v in members:
        for k in range(indptr[v], indptr[v + 1]):
            if not mask[indices[k]]:
                total += 1
    return total


def edge_boundary(g, U):
    """Number of edges with exactly one endpoint in ``U``."""
    members = np.unique(np.asarray(list(U), dtype=np.int64))
    mask = np.zeros(g.num_vertices, dtype=np.bool_)
    mask[members] = True
    return int(_boundary(g.indptr, g.indices, members, mask))


@njit(cache=True)
def _iso_exact(nbr_masks, nv, kmax):
    best = np.inf
    for k in range(1, kmax + 1):
        s = (np.int64(1) << k) - 1
        limit = np.int64(1) << nv
        while s < limit:
            b = 0
            rest = s
            while rest:
                low = rest & -rest
                v = 0
                while (np.int64(1) << v) != low:
                    v += 1
                out = nbr_masks[v] & ~s
                while out:
                    out &= out - 1
                    b += 1
                rest ^= low
            ratio = b / k
            if ratio < best:
                best = ratio
            # next subset of the same size (Gosper's hack)
            c = s & -s
            r = s + c
            s = (((r ^ s) >> 2) // c) | r
    return best


def isoperimetric_exact(g, eps):
    """Exact min |∂U|/|U| over nonempty U with |U| <= eps|V| (|V| <= 24)."""
    nv = g.num_vertices
    if nv > EXACT_ISOPERIMETRIC_LIMIT:
        raise SizeLimitError(f"|V| = {nv} exceeds {EXACT_ISOPERIMETRIC_LIMIT}; "
                             "use isoperimetric_sampled instead")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    kmax = int(math.floor(eps * nv + 1e-9))
    if kmax < 1:
        raise ValueError(f"no nonempty set has size <= {eps} * {nv}")
    masks = np.zeros(nv, dtype=np.int64)
    for v in range(nv):
        for w in g.neighbors(v):
            masks[v] |= np.int64(1) << int(w)
    return float(_iso_exact(masks, nv, kmax))


def isoperimetric_bound(np_, eps):
    """Lower bound (1-eps)np - (np)^(2/3) on the eps-isoperimetric number."""
    return (1.0 - eps) * np_ - np_ ** (2.0 / 3.0)


def isoperimetric_sampled(g, eps, num_samples, seed):
    """Smallest |∂U|/|U| over random sets U, alongside the isoperimetric bound.

    Set sizes are uniform on ``[1, floor(eps|V|)]`` and each set is uniform given
    its size.  Sampling only ever finds ratios >= the true minimum, so this is a
    one-sided sanity check and cannot certify the bound.
    """
    nv = g.num_vertices
    kmax = max(1, int(math.floor(eps * nv + 1e-9)))
    rng = generator(seed)
    mask = np.zeros(nv, dtype=np.bool_)
    best = math.inf
    for _ in range(num_samples):
        k = int(rng.integers(1, kmax + 1))
        members = rng.choice(nv, size=k, replace=False).astype(np.int64)
        mask[members] = True
        best = min(best, _boundary(g.indptr, g.indices, members, mask) / k)
        mask[members] = False
    return best, isoperimetric_bound(g.mean_degree_param, eps)
