"""Search strategies producing observation traces and tuning caches.

Fitness is the measured time, minimized; performance metrics are derived
views. All randomness flows from one integer seed, so any run can be
replayed exactly. Measurements are memoized within a run: revisiting a
configuration costs no budget and returns the recorded observation.

The two searchers here (uniform random sampling and greedy hill
descent with random restarts) are deliberately plain; they exist to
exercise spaces and to validate landscape difficulty analysis, not to
compete with serious optimizers.
"""

import random
from dataclasses import dataclass

from .errors import ProtocolError
from .measure import BackendDescriptor, MeasurementProtocol, Observation, run_config
from .paramspace import Config, NeighborScheme, SearchSpaceSpec, config_key
from .store import TuningCache

# Consecutive rejected/duplicate draws tolerated before sampling falls
# back to materializing the remaining valid configurations.
_MISS_LIMIT = 200


@dataclass(frozen=True)
class SearchSegment:
    """One descent of local search: the accepted path from a restart."""

    path: tuple[Config, ...]
    reached_minimum: bool


@dataclass(frozen=True)
class StrategyResult:
    best: Config | None
    best_observation: Observation | None
    trace: tuple[tuple[Config, Observation], ...]
    evaluations_used: int
    notes: tuple[str, ...] = ()
    segments: tuple[SearchSegment, ...] = ()


class _Runner:
    """Memoizing measurement driver shared by all strategies."""

    def __init__(self, space, backend, protocol):
        self.space = space
        self.backend = backend
        self.protocol = protocol
        self.seen: dict[str, Observation] = {}
        self.trace: list[tuple[Config, Observation]] = []
        self.best: Config | None = None
        self.best_obs: Observation | None = None

    @property
    def evaluations(self) -> int:
        return len(self.trace)

    def lookup(self, config: Config) -> Observation | None:
        return self.seen.get(config_key(config))

    def evaluate(self, config: Config) -> Observation:
        key = config_key(config)
        obs = self.seen.get(key)
        if obs is not None:
            return obs
        obs = run_config(self.space, self.backend, self.protocol, config)
        self.seen[key] = obs
        self.trace.append((config, obs))
        if obs.ok and (self.best_obs is None or obs.time_ms < self.best_obs.time_ms):
            self.best, self.best_obs = config, obs
        return obs

    def result(self, notes=(), segments=()) -> StrategyResult:
        notes = tuple(notes)
        if self.best is None:
            notes += ("no feasible optimum: every measured configuration failed",)
        return StrategyResult(
            best=self.best,
            best_observation=self.best_obs,
            trace=tuple(self.trace),
            evaluations_used=self.evaluations,
            notes=notes,
            segments=tuple(segments),
        )


def result_to_cache(
    space: SearchSpaceSpec,
    result: StrategyResult,
    device_name: str = "unknown",
    metadata: dict[str, str] | None = None,
) -> TuningCache:
    """Persistable cache holding every observation of a strategy run."""
    return TuningCache(
        kernel_name=space.kernel_name,
        device_name=device_name,
        param_order=space.param_names,
        records={config_key(c): o for c, o in result.trace},
        space_fingerprint=space.fingerprint(),
        provenance="native",
        metadata=dict(metadata or {}),
    )


def default_device_name(backend: BackendDescriptor, override: str | None = None) -> str:
    """Device recorded in result caches: override, replay source, or unknown."""
    if override:
        return override
    if backend.kind == "simulated":
        return backend.cache.device_name
    return "unknown"


def brute_force(
    space: SearchSpaceSpec,
    backend: BackendDescriptor,
    protocol: MeasurementProtocol,
    device_name: str | None = None,
    metadata: dict[str, str] | None = None,
) -> tuple[StrategyResult, TuningCache]:
    """Measure every valid configuration exactly once.

    The returned cache is complete over the space, so it can feed every
    landscape analysis, including flow-graph construction. No metadata
    is attached unless given, so replaying a cache produced here through
    a simulated backend yields an identical cache.
    """
    runner = _Runner(space, backend, protocol)
    for config in space.enumerate_configs():
        runner.evaluate(config)
    result = runner.result()
    cache = result_to_cache(
        space,
        result,
        device_name=default_device_name(backend, device_name),
        metadata=metadata,
    )
    return result, cache


def _random_cartesian(rng: random.Random, space: SearchSpaceSpec) -> Config:
    return tuple(rng.choice(p.values) for p in space.parameters)


def random_search(
    space: SearchSpaceSpec,
    backend: BackendDescriptor,
    protocol: MeasurementProtocol,
    budget: int,
    seed: int,
) -> StrategyResult:
    """Sample distinct valid configurations uniformly, without replacement.

    Draws reject invalid and already-seen points, which keeps the
    distribution uniform over the valid space; after too many
    consecutive misses the remaining candidates are materialized once
    and drawn from directly, so exhaustion terminates deterministically.
    A budget above the space size is clamped and noted in the result.
    """
    if budget < 1:
        raise ProtocolError("random search needs a budget of at least 1")
    rng = random.Random(seed)
    runner = _Runner(space, backend, protocol)
    notes: list[str] = []
    remaining: list[Config] | None = None
    misses = 0
    while runner.evaluations < budget:
        if remaining is None:
            config = _random_cartesian(rng, space)
            if not space.satisfies(config) or config_key(config) in runner.seen:
                misses += 1
                if misses >= _MISS_LIMIT:
                    remaining = [
                        c
                        for c in space.enumerate_configs()
                        if config_key(c) not in runner.seen
                    ]
                continue
            misses = 0
            runner.evaluate(config)
        else:
            if not remaining:
                notes.append(
                    f"budget {budget} clamped to space size {runner.evaluations}"
                )
                break
            config = remaining.pop(rng.randrange(len(remaining)))
            runner.evaluate(config)
    return runner.result(notes=notes)


def greedy_local_search(
    space: SearchSpaceSpec,
    backend: BackendDescriptor,
    protocol: MeasurementProtocol,
    budget: int,
    seed: int,
    scheme: NeighborScheme | str | None = None,
    first_improvement: bool = False,
    start: Config | None = None,
) -> StrategyResult:
    """Hill descent with random restarts.

    From a random valid start (or ``start`` for the first segment), move
    to the strictly best improving neighbor (or the first improving one
    with ``first_improvement``) until no neighbor improves, then restart
    from a fresh random point. Equally good neighbors are broken by
    canonical configuration order. Stops when the budget is exhausted or
    the whole space has been evaluated.
    """
    if budget < 1:
        raise ProtocolError("local search needs a budget of at least 1")
    scheme = NeighborScheme(scheme) if scheme else space.neighbor_scheme
    rng = random.Random(seed)
    runner = _Runner(space, backend, protocol)
    segments: list[SearchSegment] = []
    notes: list[str] = []
    start_pool: list[Config] | None = None
    space_size: int | None = None

    def indices(config: Config) -> tuple[int, ...]:
        return tuple(p.values.index(v) for p, v in zip(space.parameters, config))

    def random_start() -> Config | None:
        nonlocal start_pool
        misses = 0
        while start_pool is None:
            cand = _random_cartesian(rng, space)
            if space.satisfies(cand):
                return cand
            misses += 1
            if misses >= _MISS_LIMIT:
                start_pool = list(space.enumerate_configs())
        if not start_pool:
            return None
        return start_pool[rng.randrange(len(start_pool))]

    first_segment = True
    while runner.evaluations < budget:
        if first_segment and start is not None:
            origin = start
        else:
            origin = random_start()
        first_segment = False
        if origin is None:
            notes.append("space has no valid configurations")
            break
        evals_before = runner.evaluations
        path = [origin]
        obs = runner.evaluate(origin)
        current, current_obs = origin, obs
        reached_minimum = False
        out_of_budget = False
        while current_obs.ok:
            best_move: Config | None = None
            best_time = None
            for cand in space.neighbors(current, scheme):
                if runner.lookup(cand) is None and runner.evaluations >= budget:
                    out_of_budget = True
                    break
                cand_obs = runner.evaluate(cand)
                if not cand_obs.ok or cand_obs.time_ms >= current_obs.time_ms:
                    continue
                if first_improvement:
                    best_move, best_time = cand, cand_obs.time_ms
                    break
                if (
                    best_move is None
                    or cand_obs.time_ms < best_time
                    or (
                        cand_obs.time_ms == best_time
                        and indices(cand) < indices(best_move)
                    )
                ):
                    best_move, best_time = cand, cand_obs.time_ms
            if out_of_budget:
                break
            if best_move is None:
                reached_minimum = True
                break
            current = best_move
            current_obs = runner.seen[config_key(current)]
            path.append(current)
        segments.append(SearchSegment(tuple(path), reached_minimum))
        if out_of_budget or runner.evaluations >= budget:
            break
        if runner.evaluations == evals_before:
            # Restart produced nothing new; check for exhaustion.
            if space_size is None:
                space_size = space.space_size()
            if len(runner.seen) >= space_size:
                notes.append("entire space evaluated before budget ran out")
                break
    return runner.result(notes=notes, segments=segments)
