"""Measurement of single configurations through pluggable backends.

Two backends exist. The *simulated* backend replays a recorded tuning
cache verbatim, which makes every analysis in this package reproducible
without the original hardware. The *command* backend runs an external
benchmark program once per run (or once in total if the program
self-reports its runs) and reads timings from its standard output.

Interop contract for command backends, one ASCII line per measurement::

    TUNE_TIME_MS <float>

A failing program may add a line ``TUNE_STATUS <status>`` with one of
``compile_failed``, ``runtime_failed`` or ``invalid`` to classify a
non-zero exit; without it, any non-zero exit counts as runtime_failed.
Times are milliseconds everywhere.
"""

import os
import re
import shlex
import statistics
import string
import subprocess
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import TYPE_CHECKING, Mapping, Sequence

from . import expressions as ex
from .errors import EvaluationError, MissingEntry, ProtocolError

if TYPE_CHECKING:  # pragma: no cover
    from .paramspace import Config
    from .store import TuningCache


class Status(str, Enum):
    OK = "ok"
    COMPILE_FAILED = "compile_failed"
    RUNTIME_FAILED = "runtime_failed"
    INVALID = "invalid"
    TIMEOUT = "timeout"


class Aggregate(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"
    MIN = "min"


_AGGREGATORS = {
    Aggregate.MEAN: statistics.fmean,
    Aggregate.MEDIAN: statistics.median,
    Aggregate.MIN: min,
}


@dataclass(frozen=True)
class MeasurementProtocol:
    """How a single configuration is benchmarked.

    Warmup runs execute but are never recorded; the aggregate collapses
    the benchmark runs into the observation's ``time_ms``.
    """

    warmup_runs: int = 1
    benchmark_runs: int = 7
    aggregate: Aggregate = Aggregate.MEAN
    timeout_ms: float = 60_000.0

    def __post_init__(self):
        if self.warmup_runs < 0:
            raise ProtocolError("warmup_runs must be >= 0")
        if self.benchmark_runs < 1:
            raise ProtocolError("benchmark_runs must be >= 1")
        if self.timeout_ms <= 0:
            raise ProtocolError("timeout must be positive")
        object.__setattr__(self, "aggregate", Aggregate(self.aggregate))


@dataclass(frozen=True)
class Observation:
    """Outcome of measuring one configuration.

    Failures are recorded outcomes, not exceptions: tuning spaces
    legitimately contain configurations that do not compile or run.
    Timing fields are only ever populated for ``ok``.
    """

    status: Status
    times_ms: tuple[float, ...] = ()
    time_ms: float | None = None
    metric_value: float | None = None
    detail: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "status", Status(self.status))
        if self.status is Status.OK:
            if self.time_ms is None or self.time_ms <= 0:
                raise ProtocolError("ok observation needs a positive time_ms")
        else:
            if self.times_ms or self.time_ms is not None or self.metric_value is not None:
                raise ProtocolError("failed observation must not carry timing data")

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    def with_metric(self, value: float) -> "Observation":
        return Observation(self.status, self.times_ms, self.time_ms, value, self.detail)


@dataclass(frozen=True)
class BackendDescriptor:
    """Where measurements come from: a recorded cache or a command line.

    Command templates name configuration values as ``{param_name}``
    placeholders; a template with no placeholder must be declared
    ``parameterless`` explicitly.
    """

    kind: str  # "simulated" | "command"
    cache: "TuningCache | None" = None
    command_template: str | None = None
    workdir: str | None = None
    env: Mapping[str, str] = field(default_factory=dict)
    parameterless: bool = False

    def __post_init__(self):
        if self.kind == "simulated":
            if self.cache is None:
                raise ProtocolError("simulated backend needs a source cache")
        elif self.kind == "command":
            if not self.command_template:
                raise ProtocolError("command backend needs a command template")
            placeholders = _template_fields(self.command_template)
            if not placeholders and not self.parameterless:
                raise ProtocolError(
                    "command template has no {param} placeholder; "
                    "pass parameterless=True if that is intended"
                )
        else:
            raise ProtocolError(f"unknown backend kind {self.kind!r}")


def simulated_backend(cache: "TuningCache") -> BackendDescriptor:
    return BackendDescriptor(kind="simulated", cache=cache)


def command_backend(
    template: str,
    workdir: str | None = None,
    env: Mapping[str, str] | None = None,
    parameterless: bool = False,
) -> BackendDescriptor:
    return BackendDescriptor(
        kind="command",
        command_template=template,
        workdir=workdir,
        env=dict(env or {}),
        parameterless=parameterless,
    )


def _template_fields(template: str) -> list[str]:
    return [f for _, f, _, _ in string.Formatter().parse(template) if f]


def simulated_lookup(cache: "TuningCache", config: "Config") -> Observation:
    """Return the stored observation verbatim; absent keys are an error.

    A recorded failure is data; a missing record means the cache simply
    does not speak for this configuration, which raises
    :class:`MissingEntry` instead of fabricating a failure.
    """
    from .paramspace import config_key

    key = config_key(config)
    try:
        return cache.records[key]
    except KeyError:
        raise MissingEntry(
            f"no record for configuration ({key}) in cache "
            f"{cache.kernel_name}/{cache.device_name}"
        ) from None


_TIME_LINE = re.compile(r"^TUNE_TIME_MS\s+(\S+)\s*$", re.MULTILINE)
_STATUS_LINE = re.compile(r"^TUNE_STATUS\s+(\S+)\s*$", re.MULTILINE)


def _parse_times(output: str) -> tuple[list[float], str | None]:
    times = []
    for raw in _TIME_LINE.findall(output):
        try:
            t = float(raw)
        except ValueError:
            return [], f"garbled TUNE_TIME_MS value {raw!r}"
        if not t > 0:
            return [], f"non-positive TUNE_TIME_MS value {raw!r}"
        times.append(t)
    return times, None


def _failure_status(output: str) -> Status:
    m = _STATUS_LINE.search(output)
    if m:
        try:
            status = Status(m.group(1))
        except ValueError:
            return Status.RUNTIME_FAILED
        if status is not Status.OK:
            return status
    return Status.RUNTIME_FAILED


def command_execute(
    descriptor: BackendDescriptor,
    config: "Config",
    protocol: MeasurementProtocol,
    param_names: Sequence[str],
) -> Observation:
    """Run the benchmark command for one configuration.

    The command runs once per warmup+benchmark run when it reports a
    single time per invocation. If the first invocation prints several
    TUNE_TIME_MS lines the program is treated as self-reporting: it must
    emit at least ``benchmark_runs`` times and the last ones count.
    """
    if descriptor.kind != "command":
        raise ProtocolError("command_execute needs a command backend")
    values = {name: value for name, value in zip(param_names, config)}
    missing = [f for f in _template_fields(descriptor.command_template) if f not in values]
    if missing:
        raise ProtocolError(
            f"command template references unknown parameter(s): {', '.join(missing)}"
        )
    argv = shlex.split(descriptor.command_template.format(**values))
    env = {**os.environ, **descriptor.env} if descriptor.env else None
    cwd = descriptor.workdir

    def launch() -> tuple[subprocess.CompletedProcess | None, Observation | None]:
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=protocol.timeout_ms / 1000.0,
                cwd=cwd,
                env=env,
            )
        except subprocess.TimeoutExpired:
            return None, Observation(
                Status.TIMEOUT, detail=f"exceeded {protocol.timeout_ms:g} ms"
            )
        except OSError as e:
            return None, Observation(Status.RUNTIME_FAILED, detail=str(e))
        if proc.returncode != 0:
            status = _failure_status(proc.stdout + "\n" + proc.stderr)
            return None, Observation(
                status, detail=f"exit code {proc.returncode}"
            )
        return proc, None

    proc, failure = launch()
    if failure:
        return failure
    times, problem = _parse_times(proc.stdout)
    if problem:
        return Observation(Status.RUNTIME_FAILED, detail=problem)

    if len(times) > 1:
        # Self-reporting program: one launch covered all runs.
        if len(times) < protocol.benchmark_runs:
            return Observation(
                Status.RUNTIME_FAILED,
                detail=(
                    f"program reported {len(times)} times, "
                    f"protocol needs {protocol.benchmark_runs}"
                ),
            )
        bench = times[-protocol.benchmark_runs :]
    else:
        if not times:
            return Observation(
                Status.RUNTIME_FAILED, detail="no TUNE_TIME_MS line in output"
            )
        per_run = times  # first launch already done
        total = protocol.warmup_runs + protocol.benchmark_runs
        for _ in range(total - 1):
            proc, failure = launch()
            if failure:
                return failure
            times, problem = _parse_times(proc.stdout)
            if problem or len(times) != 1:
                return Observation(
                    Status.RUNTIME_FAILED,
                    detail=problem or f"expected one TUNE_TIME_MS line, got {len(times)}",
                )
            per_run.append(times[0])
        bench = per_run[protocol.warmup_runs :]

    agg = _AGGREGATORS[protocol.aggregate](bench)
    return Observation(Status.OK, times_ms=tuple(bench), time_ms=float(agg))


def measure(
    backend: BackendDescriptor,
    config: "Config",
    protocol: MeasurementProtocol,
    param_names: Sequence[str] | None = None,
) -> Observation:
    """Measure one configuration; backend failures become statuses.

    Simulated backends return the stored record untouched (and raise
    :class:`MissingEntry` when there is none). Command backends need
    ``param_names`` to fill their placeholders.
    """
    if backend.kind == "simulated":
        return simulated_lookup(backend.cache, config)
    if param_names is None:
        raise ProtocolError("command backends need param_names")
    return command_execute(backend, config, protocol, param_names)


@lru_cache(maxsize=256)
def _compiled_metric(source: str, names: tuple[str, ...], types: tuple[str, ...]):
    ast = ex.parse_expression(source)
    ex.check_types(ast, dict(zip(names, types)) | {"time_ms": "float"}, source)
    return ex.compile_expression(ast, list(names) + ["time_ms"])


def compute_metric(
    metric_source: str | None, time_ms: float, params: Mapping[str, "int | str"]
) -> float:
    """Convert a time into the performance metric (higher is better).

    With no metric expression the convention is ``1 / time_ms``, which
    preserves every ranking and every ratio-based statistic.
    """
    if time_ms <= 0:
        raise EvaluationError(f"time must be positive, got {time_ms}")
    if metric_source is None:
        return 1.0 / time_ms
    names = tuple(params)
    types = tuple("int" if isinstance(params[n], int) else "str" for n in names)
    fn = _compiled_metric(metric_source, names, types)
    try:
        return float(fn(*(params[n] for n in names), time_ms))
    except ZeroDivisionError as e:
        raise EvaluationError(f"{e} while evaluating metric {metric_source!r}") from None


def run_config(space, backend, protocol, config) -> Observation:
    """Measure and attach the space's metric value.

    Simulated lookups pass through verbatim so that replaying a cache
    reproduces it exactly; freshly measured observations get the metric
    computed from the aggregated time.
    """
    obs = measure(backend, config, protocol, space.param_names)
    if backend.kind == "simulated":
        return obs
    if obs.ok and obs.metric_value is None:
        return obs.with_metric(space.metric_value(obs.time_ms, config))
    return obs
