"""Landscape analysis over tuning caches.

Three families of questions about a recorded search space:

* How much does tuning matter? :func:`perf_stats` compares the global
  optimum against the median configuration (the *impact* ratio), and
  :func:`export_distribution` emits the full performance distribution
  normalized by the optimum, ready for violin plots.

* How hard is the space for a local optimizer? :func:`build_ffg`
  constructs the fitness flow graph: a directed edge connects each
  configuration to every strictly faster neighbor, so a random walk on
  the graph mimics a local search trajectory and its sinks are exactly
  the local minima. PageRank centrality over that walk estimates where
  trajectories end up, and the centrality proportion

      C_p = sum of centrality over minima within (1+p) of the optimum
            / sum of centrality over all minima

  measures how much of that probability mass lies on acceptable minima.
  C_p near 1 at small p means local search tends to land close to the
  global optimum.

* How portable is a tuned configuration? A configuration's efficiency
  on a device is its performance divided by the best performance any
  configuration reaches on that device; the portability score over a
  device set is the harmonic mean of those efficiencies and drops to
  zero as soon as one device fails entirely.

Failed configurations never enter flow graphs or efficiency maxima:
they have no fitness. Records without a stored metric value fall back
to ``1 / time_ms``, so every ratio-based statistic here is independent
of the metric's unit.
"""

import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import (
    IncompleteCache,
    NoFeasibleData,
    NonConvergence,
    NoPortableConfiguration,
    ProtocolError,
    UnknownDevice,
)
from .measure import Observation
from .paramspace import Config, NeighborScheme, SearchSpaceSpec, config_key
from .store import TuningCache, check_space

DEFAULT_DAMPING = 0.85
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
DEFAULT_P_GRID = tuple(round(i * 0.005, 10) for i in range(31))  # 0% .. 15%

QUANTILE_PERCENTS = (1, 5, 25, 50, 75, 95, 99)


def metric_of(obs: Observation) -> float:
    """Stored metric value, or the unit-free ``1/time_ms`` convention."""
    if obs.metric_value is not None:
        return obs.metric_value
    return 1.0 / obs.time_ms


# ---------------------------------------------------------------------------
# Tuning impact


@dataclass(frozen=True)
class PerfStats:
    n_ok: int
    n_failed: int
    median_perf: float
    max_perf: float
    min_time_ms: float
    impact: float  # max_perf / median_perf


def perf_stats(cache: TuningCache) -> PerfStats:
    """Impact statistics of a cache; needs at least one ok record."""
    ok = cache.ok_records()
    if not ok:
        raise NoFeasibleData(
            f"cache {cache.kernel_name}/{cache.device_name} has no successful records"
        )
    perfs = [metric_of(o) for o in ok.values()]
    median = statistics.median(perfs)
    best = max(perfs)
    return PerfStats(
        n_ok=len(ok),
        n_failed=cache.n_failed(),
        median_perf=median,
        max_perf=best,
        min_time_ms=min(o.time_ms for o in ok.values()),
        impact=best / median,
    )


# ---------------------------------------------------------------------------
# Fitness flow graph


@dataclass
class FitnessFlowGraph:
    """Directed graph over successful configurations of a complete cache.

    Nodes follow the space's enumeration order. An edge u -> v exists
    iff v is a neighbor of u under ``scheme`` and strictly faster; ties
    produce no edge, so the graph is acyclic and its sinks are the local
    minima.
    """

    scheme: NeighborScheme
    keys: tuple[str, ...]
    configs: tuple[Config, ...]
    times: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    f_opt: float
    kernel_name: str = ""
    device_name: str = ""
    excluded_failures: int = 0
    _out_degrees: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.keys)

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)

    def out_degrees(self) -> np.ndarray:
        if self._out_degrees is None:
            self._out_degrees = np.bincount(
                self.edge_src, minlength=self.n_nodes
            ).astype(np.int64)
        return self._out_degrees

    def sink_indices(self) -> np.ndarray:
        return np.flatnonzero(self.out_degrees() == 0)


def build_ffg(
    cache: TuningCache,
    space: SearchSpaceSpec,
    scheme: NeighborScheme | str | None = None,
) -> FitnessFlowGraph:
    """Build the fitness flow graph of a complete cache.

    The cache must cover every valid configuration of the space (any
    status); failed configurations are excluded from the node set.
    """
    check_space(cache, space)
    scheme = NeighborScheme(scheme) if scheme else space.neighbor_scheme

    keys: list[str] = []
    configs: list[Config] = []
    times: list[float] = []
    missing = 0
    total = 0
    for config in space.enumerate_configs():
        total += 1
        obs = cache.records.get(config_key(config))
        if obs is None:
            missing += 1
            continue
        if obs.ok:
            keys.append(config_key(config))
            configs.append(config)
            times.append(obs.time_ms)
    if missing:
        raise IncompleteCache(missing, total)

    node_index = {k: i for i, k in enumerate(keys)}
    times_arr = np.asarray(times, dtype=np.float64)
    src: list[int] = []
    dst: list[int] = []
    params = space.parameters
    for u, config in enumerate(configs):
        t_u = times_arr[u]
        for i, p in enumerate(params):
            if scheme is NeighborScheme.HAMMING1:
                candidates = (v for v in p.values if v != config[i])
            else:
                pos = p.values.index(config[i])
                candidates = (
                    p.values[j] for j in (pos - 1, pos + 1) if 0 <= j < len(p.values)
                )
            for v in candidates:
                cand_key = config_key(config[:i] + (v,) + config[i + 1 :])
                w = node_index.get(cand_key)
                if w is not None and times_arr[w] < t_u:
                    src.append(u)
                    dst.append(w)

    return FitnessFlowGraph(
        scheme=scheme,
        keys=tuple(keys),
        configs=tuple(configs),
        times=times_arr,
        edge_src=np.asarray(src, dtype=np.int64),
        edge_dst=np.asarray(dst, dtype=np.int64),
        f_opt=float(times_arr.min()) if len(times_arr) else float("nan"),
        kernel_name=cache.kernel_name,
        device_name=cache.device_name,
        excluded_failures=cache.n_failed(),
    )


def find_local_minima(g: FitnessFlowGraph) -> list[Config]:
    """Configurations with no strictly faster neighbor (the graph sinks)."""
    return [g.configs[i] for i in g.sink_indices()]


def pagerank(
    g: FitnessFlowGraph,
    damping: float = DEFAULT_DAMPING,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """PageRank scores of the edge-following walk, one per node.

    Power iteration with uniform teleport of weight ``1 - damping`` and
    the mass of dangling nodes (the sinks) redistributed uniformly over
    all nodes. Converged when the L1 change drops below ``tol``; the
    scores always sum to 1 up to rounding.
    """
    n = g.n_nodes
    if n == 0:
        raise NoFeasibleData("flow graph has no nodes")
    outdeg = g.out_degrees()
    if g.n_edges:
        weights = 1.0 / outdeg[g.edge_src]
        walk = sparse.csr_matrix(
            (weights, (g.edge_dst, g.edge_src)), shape=(n, n), dtype=np.float64
        )
    else:
        walk = None
    dangling = outdeg == 0
    scores = np.full(n, 1.0 / n)
    residual = float("inf")
    for _ in range(max_iter):
        spread = walk @ scores if walk is not None else np.zeros(n)
        dangling_mass = float(scores[dangling].sum())
        fresh = damping * spread + (damping * dangling_mass + (1.0 - damping)) / n
        residual = float(np.abs(fresh - scores).sum())
        scores = fresh
        if residual < tol:
            return scores
    raise NonConvergence(max_iter, residual, tol)


def proportion_of_centrality(
    g: FitnessFlowGraph, scores: np.ndarray, p: float
) -> float:
    """Share of local-minima centrality held by acceptable minima.

    A minimum is acceptable when its time is within a factor ``1 + p``
    of the best time (boundary included, so p = 0 admits exactly the
    global optimum).
    """
    sinks = g.sink_indices()
    if len(sinks) == 0:
        raise NoFeasibleData("flow graph has no local minima")
    threshold = (1.0 + p) * g.f_opt
    acceptable = sinks[g.times[sinks] <= threshold]
    total = float(scores[sinks].sum())
    return float(scores[acceptable].sum()) / total


@dataclass(frozen=True)
class CentralityCurve:
    p_grid: tuple[float, ...]
    c_p_values: tuple[float, ...]
    damping: float
    minima_count: int


def centrality_curve(
    g: FitnessFlowGraph,
    damping: float = DEFAULT_DAMPING,
    p_grid: Sequence[float] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CentralityCurve:
    """C_p over a grid of proportions (default 0% to 15% in 0.5% steps)."""
    grid = DEFAULT_P_GRID if p_grid is None else tuple(p_grid)
    scores = pagerank(g, damping=damping, tol=tol, max_iter=max_iter)
    values = tuple(proportion_of_centrality(g, scores, p) for p in grid)
    return CentralityCurve(
        p_grid=grid,
        c_p_values=values,
        damping=damping,
        minima_count=int(len(g.sink_indices())),
    )


def write_centrality_csv(curve: CentralityCurve, path: str | Path) -> Path:
    path = Path(path)
    lines = ["p,c_p"]
    lines += [f"{p!r},{c!r}" for p, c in zip(curve.p_grid, curve.c_p_values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Performance portability


@dataclass(frozen=True)
class PortabilityReport:
    devices: tuple[str, ...]
    config: str  # canonical configuration key
    efficiencies: tuple[float, ...]  # aligned with devices
    pp: float

    def as_dict(self) -> dict:
        return {
            "devices": list(self.devices),
            "config": self.config,
            "efficiencies": {d: e for d, e in zip(self.devices, self.efficiencies)},
            "pp": self.pp,
        }


def _as_key(config: "Config | str") -> str:
    return config if isinstance(config, str) else config_key(config)


def _device_max(cache: TuningCache) -> float:
    ok = cache.ok_records()
    if not ok:
        raise NoFeasibleData(
            f"cache {cache.kernel_name}/{cache.device_name} has no successful records"
        )
    return max(metric_of(o) for o in ok.values())


def app_efficiency(cache: TuningCache, config: "Config | str") -> float:
    """Performance relative to the device's best; 0 for absent or failed."""
    best = _device_max(cache)
    obs = cache.records.get(_as_key(config))
    if obs is None or not obs.ok:
        return 0.0
    return metric_of(obs) / best


def harmonic_pp(efficiencies: Sequence[float]) -> float:
    """Harmonic mean of efficiencies; zero as soon as one entry is zero."""
    if not efficiencies:
        raise ProtocolError("device subset must be non-empty")
    if any(e == 0.0 for e in efficiencies):
        return 0.0
    return len(efficiencies) / sum(1.0 / e for e in efficiencies)


def _resolve_subset(
    caches: Mapping[str, TuningCache], subset: Sequence[str] | None
) -> list[str]:
    devices = list(subset) if subset is not None else list(caches)
    if not devices:
        raise ProtocolError("device subset must be non-empty")
    unknown = [d for d in devices if d not in caches]
    if unknown:
        raise UnknownDevice(
            f"no cache for device(s): {', '.join(unknown)}; "
            f"available: {', '.join(caches)}"
        )
    return devices


def perf_portability(
    caches: Mapping[str, TuningCache],
    subset: Sequence[str],
    config: "Config | str",
) -> PortabilityReport:
    """Portability of one configuration across a device subset."""
    devices = _resolve_subset(caches, subset)
    key = _as_key(config)
    effs = tuple(app_efficiency(caches[d], key) for d in devices)
    return PortabilityReport(
        devices=tuple(devices), config=key, efficiencies=effs, pp=harmonic_pp(effs)
    )


def best_portable_config(
    caches: Mapping[str, TuningCache], subset: Sequence[str] | None = None
) -> PortabilityReport:
    """The configuration maximizing the portability score over a subset.

    Candidates are the configurations present (any status) in every
    cache of the subset; failures contribute zero efficiency. Ties
    break toward the smaller canonical key.
    """
    devices = _resolve_subset(caches, subset)
    candidates = set(caches[devices[0]].records)
    for d in devices[1:]:
        candidates &= set(caches[d].records)
    if not candidates:
        raise NoPortableConfiguration(
            "no configuration is present in every cache of the subset"
        )
    maxima = {d: _device_max(caches[d]) for d in devices}

    def efficiencies(key: str) -> tuple[float, ...]:
        effs = []
        for d in devices:
            obs = caches[d].records.get(key)
            effs.append(
                metric_of(obs) / maxima[d] if obs is not None and obs.ok else 0.0
            )
        return tuple(effs)

    best_key: str | None = None
    best_effs: tuple[float, ...] = ()
    best_pp = 0.0
    for key in sorted(candidates):
        effs = efficiencies(key)
        pp = harmonic_pp(effs)
        if pp > best_pp:
            best_key, best_effs, best_pp = key, effs, pp
    if best_key is None:
        raise NoPortableConfiguration(
            "no portable configuration: every candidate fails on some device"
        )
    return PortabilityReport(
        devices=tuple(devices), config=best_key, efficiencies=best_effs, pp=best_pp
    )


def write_portability_json(report: PortabilityReport, path: str | Path) -> Path:
    import json

    path = Path(path)
    path.write_text(
        json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return path


# ---------------------------------------------------------------------------
# Rankings and distribution export


def top_k(cache: TuningCache, k: int) -> list[tuple[str, float]]:
    """The k best configurations by metric, descending; ties by key."""
    if k < 1:
        raise ProtocolError("k must be at least 1")
    ranked = sorted(
        ((key, metric_of(o)) for key, o in cache.ok_records().items()),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:k]


@dataclass(frozen=True)
class DistributionDataset:
    """Per-configuration performance relative to the optimum, plus quantiles."""

    rows: tuple[tuple[str, float, float], ...]  # key, metric, fraction of optimum
    quantiles: tuple[tuple[int, float], ...]  # percent, fraction of optimum


def export_distribution(cache: TuningCache) -> DistributionDataset:
    ok = cache.ok_records()
    if not ok:
        raise NoFeasibleData(
            f"cache {cache.kernel_name}/{cache.device_name} has no successful records"
        )
    best = max(metric_of(o) for o in ok.values())
    rows = tuple(
        (key, metric_of(o), metric_of(o) / best) for key, o in sorted(ok.items())
    )
    fractions = np.asarray([r[2] for r in rows])
    quantiles = tuple(
        (q, float(np.percentile(fractions, q))) for q in QUANTILE_PERCENTS
    )
    return DistributionDataset(rows=rows, quantiles=quantiles)


def write_distribution_csv(dataset: DistributionDataset, path: str | Path) -> Path:
    path = Path(path)
    lines = ["config_key,metric_value,fraction_of_optimum"]
    lines += [
        f"\"{key}\",{metric!r},{fraction!r}" for key, metric, fraction in dataset.rows
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# DOT export


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(g: FitnessFlowGraph) -> str:
    """Graphviz DOT text of the flow graph.

    Node names and labels are canonical configuration keys; the
    ``bucket`` attribute is the node's fitness decile (0 = fastest).
    """
    n = g.n_nodes
    lines = ["digraph ffg {"]
    lines.append(
        f"  // kernel={g.kernel_name or '?'} device={g.device_name or '?'}"
        f" scheme={g.scheme.value} nodes={n} edges={g.n_edges}"
        f" excluded_failures={g.excluded_failures}"
    )
    if n:
        order = np.sort(g.times)
        ranks = np.searchsorted(order, g.times, side="left")
        buckets = np.minimum(9, (ranks * 10) // n)
        for key, bucket in zip(g.keys, buckets):
            lines.append(f"  {_quote(key)} [label={_quote(key)}, bucket={bucket}];")
        for u, w in zip(g.edge_src, g.edge_dst):
            lines.append(f"  {_quote(g.keys[u])} -> {_quote(g.keys[w])};")
    lines.append("}")
    return "\n".join(lines) + "\n"
