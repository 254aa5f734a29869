"""Experiment configuration.

Files are INI-style (``configparser``) with three sections, or the same keys as a
JSON object of objects.  Example::

    [experiment]
    mode = figure1          ; figure1 | tau-law | survival | duality | mixing | branching | chi-process
    trials = 500
    seed = 42
    out = runs/f1
    init_size = 1           ; initially infected vertices, drawn uniformly in community 0

    [graph]
    n = 500
    p = 0.1                 ; or a = 0.7
    bridges = 2             ; two communities with 2 bridges, or
    ; bridge_counts = 0 2 0; 2 0 2; 0 2 0
    ; path = graph.bin      ; a saved Graph instead of n/p/bridges
    seed = 7                ; graph seed, defaults to the experiment seed

    [sim]
    lambda = 0.06
    horizon = 1250          ; optional
    eps = 0.0767            ; optional threshold fraction
    survival_time = clean   ; clean | adjusted | a number
    record_dt = 0.1

Mode-specific keys: ``n_values`` and ``np`` (survival, which keeps ``n p`` fixed), ``lambdas``/``times``/``logs``
(duality), ``a``/``n_values``/``origins`` (mixing), ``betas``/``times``/``runs``
(branching).  Comma- or space-separated lists.
"""

from dataclasses import dataclass, field
import configparser
import json
import os

from ..graph import CommunityConfig
from ..rng import check_seed

MODES = ("figure1", "tau-law", "survival", "duality", "mixing", "branching", "chi-process")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    trials: int = 1
    seed: int = 0
    out: str = "runs/out"
    init_size: int = 1
    graph: CommunityConfig = None
    graph_path: str = None
    lam: float = None
    horizon: float = None
    eps: float = None
    survival_time: object = "clean"
    record_dt: float = 0.1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"experiment.mode: unknown mode {self.mode!r}; choose one of {', '.join(MODES)}")
        if self.record_dt <= 0:
            raise ConfigError(f"sim.record_dt: must be > 0, got {self.record_dt}")
        if self.trials < 1:
            raise ConfigError(f"experiment.trials: must be >= 1, got {self.trials}")
        if self.init_size < 1:
            raise ConfigError(f"experiment.init_size: must be >= 1, got {self.init_size}")
        try:
            check_seed(self.seed)
        except ValueError as e:
            raise ConfigError(f"experiment.seed: {e}") from None
        if self.mode in ("figure1", "tau-law", "chi-process", "survival"):
            if self.lam is None:
                raise ConfigError(f"sim.lambda: required for mode {self.mode}")
            if self.lam < 0:
                raise ConfigError(f"sim.lambda: must be >= 0, got {self.lam}")
        if self.mode in ("figure1", "tau-law", "chi-process"):
            if self.graph is None and self.graph_path is None:
                raise ConfigError(f"graph: mode {self.mode} needs n and p/a, or path")
        if self.mode in ("figure1", "tau-law") and self.graph is not None:
            if self.graph.num_communities != 2:
                raise ConfigError(f"graph: mode {self.mode} needs exactly 2 communities")
        if self.mode == "chi-process" and self.graph is not None and self.graph.num_communities < 2:
            raise ConfigError("graph: chi-process needs at least 2 communities")
        if self.mode == "survival" and not (self.extra.get("n_values") and self.extra.get("np")):
            raise ConfigError("graph.n_values and graph.np: required for mode survival")
        if isinstance(self.survival_time, str) and self.survival_time not in ("clean", "adjusted"):
            raise ConfigError(f"sim.survival_time: expected clean, adjusted or a number, "
                              f"got {self.survival_time!r}")

    def with_overrides(self, **kw):
        d = dict(self.__dict__)
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)


def _list(text, typ):
    return [typ(x) for x in text.replace(",", " ").split()]


def _matrix(text):
    return [[int(x) for x in row.replace(",", " ").split()] for row in text.split(";") if row.strip()]


_LIST_KEYS = {"n_values": int, "lambdas": float, "times": float, "betas": float}


def _get(sec, key, typ, where):
    raw = sec.get(key)
    if raw is None:
        return None
    if typ is not str and isinstance(raw, typ) and not isinstance(raw, bool):
        return raw
    try:
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected {typ.__name__}, got {raw!r}") from None


def _default(x, d):
    return d if x is None else x


def from_mapping(d, base_dir="."):
    """Build an :class:`ExperimentConfig` from ``{section: {key: value}}``."""
    unknown = set(d) - {"experiment", "graph", "sim"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    exp, gr, sim = d.get("experiment", {}), d.get("graph", {}), d.get("sim", {})
    if "mode" not in exp:
        raise ConfigError("experiment.mode: required")
    extra = {}
    for sec in (exp, gr, sim):
        for key, typ in _LIST_KEYS.items():
            if key in sec:
                v = sec[key]
                try:
                    extra[key] = [typ(x) for x in v] if isinstance(v, list) else _list(str(v), typ)
                except ValueError:
                    raise ConfigError(f"{key}: cannot parse {v!r} as a list of {typ.__name__}") from None
        for key in ("logs", "runs", "origins"):
            if key in sec:
                extra[key] = _get(sec, key, int, "")

    seed = _get(exp, "seed", int, "experiment")
    seed = 0 if seed is None else seed
    graph, path = None, gr.get("path")
    if path is not None:
        path = os.path.join(base_dir, path)
    elif "n" in gr:
        n = _get(gr, "n", int, "graph")
        a, p = _get(gr, "a", float, "graph"), _get(gr, "p", float, "graph")
        if "bridge_counts" in gr:
            v = gr["bridge_counts"]
            counts = v if isinstance(v, list) else _matrix(str(v))
        else:
            counts = [[0, _get(gr, "bridges", int, "graph") or 0],
                      [_get(gr, "bridges", int, "graph") or 0, 0]]
        gseed = _get(gr, "seed", int, "graph")
        try:
            graph = CommunityConfig(n=n, bridge_counts=counts, seed=seed if gseed is None else gseed,
                                    a=a, p=p)
        except ValueError as e:
            raise ConfigError(f"graph: {e}") from None
    if "a" in gr:
        extra["a"] = _get(gr, "a", float, "graph")
    if "np" in gr:
        extra["np"] = _get(gr, "np", float, "graph")

    st = sim.get("survival_time", "clean")
    if not isinstance(st, (int, float)) and str(st) not in ("clean", "adjusted"):
        st = _get(sim, "survival_time", float, "sim")
    return ExperimentConfig(
        mode=str(exp["mode"]),
        trials=_default(_get(exp, "trials", int, "experiment"), 1),
        seed=seed,
        out=str(exp.get("out", "runs/out")),
        init_size=_default(_get(exp, "init_size", int, "experiment"), 1),
        graph=graph,
        graph_path=path,
        lam=_get(sim, "lambda", float, "sim"),
        horizon=_get(sim, "horizon", float, "sim"),
        eps=_get(sim, "eps", float, "sim"),
        survival_time=st,
        record_dt=_default(_get(sim, "record_dt", float, "sim"), 0.1),
        extra=extra,
    )


def load_config(path):
    """Read an INI or JSON experiment file (JSON if it starts with ``{``)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    base = os.path.dirname(os.path.abspath(path))
    if text.lstrip().startswith("{"):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return from_mapping(d, base)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    return from_mapping({s: dict(cp[s]) for s in cp.sections()}, base)
