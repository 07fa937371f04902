"""Shared helpers: synthetic spaces, synthetic caches, independent oracles.

The oracles here deliberately avoid the production code paths they
check: space enumeration is validated against a plain Cartesian filter
with a separately compiled predicate, local minima against a direct
neighbor scan, and PageRank against dense-matrix power iteration.
"""

import random

import numpy as np
import pytest

from tunescape import expressions as ex
from tunescape.measure import Observation, Status
from tunescape.paramspace import (
    ConstraintExpr,
    ParameterDef,
    SearchSpaceSpec,
    config_key,
)
from tunescape.store import TuningCache


def make_space(
    params: dict[str, list],
    constraints: tuple[str, ...] = (),
    metric: str | None = None,
    scheme: str = "hamming1",
    kernel: str = "synthetic",
) -> SearchSpaceSpec:
    parameters = tuple(ParameterDef(n, tuple(v)) for n, v in params.items())
    return SearchSpaceSpec(
        kernel_name=kernel,
        parameters=parameters,
        constraints=tuple(ConstraintExpr.parse(c, parameters) for c in constraints),
        metric_source=metric,
        neighbor_scheme=scheme,
    )


def make_cache(
    space: SearchSpaceSpec,
    outcomes: dict[str, "float | str"],
    device: str = "devA",
    with_metric: bool = True,
) -> TuningCache:
    """Cache from key -> time (float) or failure status (str)."""
    records = {}
    for key, outcome in outcomes.items():
        if isinstance(outcome, str):
            records[key] = Observation(Status(outcome))
        else:
            metric = None
            if with_metric:
                metric = space.metric_value(outcome, space.config_from_key(key))
            records[key] = Observation(
                Status.OK, (float(outcome),), float(outcome), metric
            )
    return TuningCache(
        kernel_name=space.kernel_name,
        device_name=device,
        param_order=space.param_names,
        records=records,
        space_fingerprint=space.fingerprint(),
    )


def complete_cache(
    space: SearchSpaceSpec,
    rng: random.Random,
    device: str = "devA",
    fail_rate: float = 0.0,
) -> TuningCache:
    """Complete cache with random times (and optional random failures)."""
    outcomes: dict[str, float | str] = {}
    for config in space.enumerate_configs():
        if fail_rate and rng.random() < fail_rate:
            outcomes[config_key(config)] = rng.choice(
                ["compile_failed", "runtime_failed", "invalid"]
            )
        else:
            outcomes[config_key(config)] = round(rng.uniform(0.1, 100.0), 6)
    return make_cache(space, outcomes, device=device)


_CONSTRAINT_POOL = (
    "{a} * {b} <= {cap}",
    "{a} % {b} == 0",
    "{a} <= {b}",
    "{a} + {b} >= {low}",
    "{a} == {v} || {b} != {v}",
)


def random_space(
    rng: random.Random,
    max_params: int = 5,
    max_values: int = 8,
    max_constraints: int = 2,
    kernel: str = "random",
) -> SearchSpaceSpec:
    n_params = rng.randint(2, max_params)
    params = {}
    for i in range(n_params):
        n_values = rng.randint(2, max_values)
        start = rng.randint(1, 4)
        step = rng.randint(1, 4)
        params[f"p{i}"] = [start + step * j for j in range(n_values)]
    names = list(params)
    constraints = []
    for _ in range(rng.randint(0, max_constraints)):
        a, b = rng.sample(names, 2)
        template = rng.choice(_CONSTRAINT_POOL)
        cap = rng.choice([16, 64, 256])
        low = rng.randint(2, 8)
        v = rng.choice(params[a])
        constraints.append(template.format(a=a, b=b, cap=cap, low=low, v=v))
    return make_space(params, tuple(constraints), kernel=kernel)


# ---------------------------------------------------------------------------
# Independent oracles


def oracle_valid_configs(space: SearchSpaceSpec) -> list[tuple]:
    """Cartesian product filtered by a separately compiled predicate."""
    from itertools import product

    names = sorted(space.param_names)
    order = [space.param_names.index(n) for n in names]
    checks = [ex.compile_expression(c.ast, names) for c in space.constraints]
    result = []
    for combo in product(*(p.values for p in space.parameters)):
        reordered = [combo[i] for i in order]
        if all(fn(*reordered) for fn in checks):
            result.append(combo)
    return result


def oracle_local_minima(space: SearchSpaceSpec, cache: TuningCache, scheme) -> set[str]:
    """Every ok config with no strictly faster ok neighbor."""
    minima = set()
    for config in space.enumerate_configs():
        obs = cache.records[config_key(config)]
        if not obs.ok:
            continue
        better = False
        for neighbor in space.neighbors(config, scheme):
            n_obs = cache.records[config_key(neighbor)]
            if n_obs.ok and n_obs.time_ms < obs.time_ms:
                better = True
                break
        if not better:
            minima.add(config_key(config))
    return minima


def oracle_dense_pagerank(g, damping=0.85, tol=1e-12, max_iter=200_000) -> np.ndarray:
    """Dense-matrix power iteration, independent of the sparse solver."""
    n = g.n_nodes
    outdeg = np.zeros(n, dtype=np.int64)
    for u in g.edge_src:
        outdeg[u] += 1
    M = np.zeros((n, n))
    for u, w in zip(g.edge_src, g.edge_dst):
        M[w, u] += 1.0 / outdeg[u]
    for u in range(n):
        if outdeg[u] == 0:
            M[:, u] = 1.0 / n
    s = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        fresh = damping * (M @ s) + (1.0 - damping) / n
        if np.abs(fresh - s).sum() < tol:
            return fresh
        s = fresh
    raise AssertionError("dense oracle did not converge")


def assert_valid_dot(text: str) -> None:
    """Strict checker for the DOT subset this package emits."""
    lines = text.splitlines()
    assert lines[0] == "digraph ffg {"
    assert lines[-1] == "}"
    import re

    quoted = r'"(?:[^"\\]|\\.)*"'
    node_re = re.compile(rf"^  {quoted} \[label={quoted}, bucket=\d\];$")
    edge_re = re.compile(rf"^  {quoted} -> {quoted};$")
    comment_re = re.compile(r"^  //")
    for line in lines[1:-1]:
        assert (
            node_re.match(line) or edge_re.match(line) or comment_re.match(line)
        ), f"unexpected DOT line: {line!r}"


@pytest.fixture
def chain_space() -> SearchSpaceSpec:
    """Single-parameter chain used by the flow-graph examples."""
    return make_space({"x": [1, 2, 3, 4, 5]}, scheme="adjacent")


@pytest.fixture
def chain_cache(chain_space) -> TuningCache:
    """Times 3,2,5,1,4 along the chain: minima at x=2 and x=4."""
    times = {"1": 3.0, "2": 2.0, "3": 5.0, "4": 1.0, "5": 4.0}
    return make_cache(chain_space, times, with_metric=False)
