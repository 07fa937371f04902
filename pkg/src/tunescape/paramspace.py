"""Constrained tunable-parameter search spaces.

A space is declared in a small YAML document::

    kernel: dedispersion
    neighbor_scheme: hamming1        # optional, default hamming1
    metric: "1000 / time_ms"         # optional, higher-is-better
    params:
      block_size_x: [1, 2, 4, 8, 16, 32]
      block_size_y: [32, 40, 48]
    constraints:
      - "block_size_x * block_size_y <= 1024"

Parameter order in the document is canonical: it fixes the order of
values inside a configuration tuple and in its text key (values joined
by commas). Constraints use the expression language of
:mod:`tunescape.expressions`; configurations that violate any constraint
do not exist as far as enumeration and neighborhoods are concerned.
"""

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Callable, Iterator, Union

import yaml

from . import expressions as ex
from .errors import (
    EvaluationError,
    ExpressionTypeError,
    SpecSyntaxError,
    SpecValidationError,
)

Value = Union[int, str]
Config = tuple[Value, ...]

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

BUNDLED_SPACES = ("convolution", "hotspot", "dedispersion", "gemm")


class NeighborScheme(str, Enum):
    """How two configurations qualify as neighbors.

    hamming1: differ in exactly one parameter, by any other value.
    adjacent: differ in exactly one parameter, by one position in that
    parameter's declared value order.
    """

    HAMMING1 = "hamming1"
    ADJACENT = "adjacent"


def config_key(config: Config) -> str:
    """Canonical text key: values joined by commas in parameter order."""
    return ",".join(str(v) for v in config)


@dataclass(frozen=True)
class ParameterDef:
    name: str
    values: tuple[Value, ...]

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise SpecValidationError(f"invalid parameter name {self.name!r}")
        if not self.values:
            raise SpecValidationError(f"parameter '{self.name}' has no values")
        if len(set(self.values)) != len(self.values):
            raise SpecValidationError(f"parameter '{self.name}' has duplicate values")
        kinds = {type(v) for v in self.values}
        if not (kinds <= {int} or kinds <= {str}):
            raise SpecValidationError(
                f"parameter '{self.name}' mixes integer and string values"
            )

    @property
    def value_type(self) -> str:
        return "int" if isinstance(self.values[0], int) else "str"


@dataclass(frozen=True)
class ConstraintExpr:
    """A boolean predicate over parameter values, kept with its source text."""

    source: str
    ast: ex.Node = field(compare=False, repr=False)
    fn: Callable[..., bool] = field(compare=False, repr=False)

    @staticmethod
    def parse(source: str, parameters: tuple[ParameterDef, ...]) -> "ConstraintExpr":
        ast = ex.parse_expression(source)
        types = {p.name: p.value_type for p in parameters}
        result = ex.check_types(ast, types, source)
        if result != "bool":
            raise ExpressionTypeError(
                f"constraint must be boolean, got {result} in {source!r}"
            )
        fn = ex.compile_expression(ast, [p.name for p in parameters])
        return ConstraintExpr(source, ast, fn)

    def evaluate(self, config: Config) -> bool:
        """Evaluate against a full configuration (values in parameter order)."""
        try:
            return self.fn(*config)
        except ZeroDivisionError as e:
            raise EvaluationError(
                f"{e} while evaluating {self.source!r} on ({config_key(config)})"
            ) from None


@dataclass(frozen=True)
class SearchSpaceSpec:
    kernel_name: str
    parameters: tuple[ParameterDef, ...]
    constraints: tuple[ConstraintExpr, ...] = ()
    metric_source: str | None = None
    neighbor_scheme: NeighborScheme = NeighborScheme.HAMMING1
    _metric_fn: Callable[..., float] | None = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        object.__setattr__(self, "neighbor_scheme", NeighborScheme(self.neighbor_scheme))
        names = [p.name for p in self.parameters]
        if not self.parameters:
            raise SpecValidationError("space declares no parameters")
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SpecValidationError(
                f"duplicate parameter name(s): {', '.join(sorted(dupes))}"
            )
        if self.metric_source is not None:
            ast = ex.parse_expression(self.metric_source)
            types = {p.name: p.value_type for p in self.parameters}
            types["time_ms"] = "float"
            result = ex.check_types(ast, types, self.metric_source)
            if result not in ("int", "float"):
                raise ExpressionTypeError(
                    f"metric must be numeric, got {result} in {self.metric_source!r}"
                )
            fn = ex.compile_expression(ast, names + ["time_ms"])
            object.__setattr__(self, "_metric_fn", fn)

    # -- basic shape ----------------------------------------------------

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def cartesian_size(self) -> int:
        """Unconstrained size: product of per-parameter value counts."""
        n = 1
        for p in self.parameters:
            n *= len(p.values)
        return n

    def space_size(self) -> int:
        """Number of valid configurations (requires enumeration)."""
        return sum(1 for _ in self.enumerate_configs())

    # -- configurations --------------------------------------------------

    def is_valid(self, config: Config) -> bool:
        """True iff every value is in its list and all constraints hold."""
        if len(config) != len(self.parameters):
            return False
        for p, v in zip(self.parameters, config):
            if v not in p.values:
                return False
        return all(c.evaluate(config) for c in self.constraints)

    def satisfies(self, config: Config) -> bool:
        """Constraint check only (values assumed to come from the lists)."""
        return all(c.evaluate(config) for c in self.constraints)

    def config_from_key(self, key: str) -> Config:
        parts = key.split(",")
        if len(parts) != len(self.parameters):
            raise SpecValidationError(
                f"key {key!r} has {len(parts)} values, space has "
                f"{len(self.parameters)} parameters"
            )
        return tuple(
            int(part) if p.value_type == "int" else part
            for p, part in zip(self.parameters, parts)
        )

    def enumerate_configs(self) -> Iterator[Config]:
        """Yield all valid configurations.

        Order is lexicographic in value-list indices with the last
        parameter varying fastest; restarting the iterator replays the
        identical sequence.
        """
        lists = [p.values for p in self.parameters]
        if not self.constraints:
            yield from product(*lists)
            return
        fns = [c.fn for c in self.constraints]
        for config in product(*lists):
            ok = True
            for c, fn in zip(self.constraints, fns):
                try:
                    if not fn(*config):
                        ok = False
                        break
                except ZeroDivisionError as e:
                    raise EvaluationError(
                        f"{e} while evaluating {c.source!r} on ({config_key(config)})"
                    ) from None
            if ok:
                yield config

    def neighbors(
        self, config: Config, scheme: NeighborScheme | str | None = None
    ) -> list[Config]:
        """Valid configurations adjacent to ``config`` under the scheme.

        Output never contains ``config`` itself or constraint violators,
        and is ordered by parameter, then by value-list position.
        """
        scheme = NeighborScheme(scheme) if scheme else self.neighbor_scheme
        result = []
        for i, p in enumerate(self.parameters):
            try:
                pos = p.values.index(config[i])
            except ValueError:
                raise SpecValidationError(
                    f"value {config[i]!r} is not in parameter '{p.name}'"
                ) from None
            if scheme is NeighborScheme.HAMMING1:
                candidates = [v for v in p.values if v != config[i]]
            else:
                candidates = [
                    p.values[j] for j in (pos - 1, pos + 1) if 0 <= j < len(p.values)
                ]
            for v in candidates:
                cand = config[:i] + (v,) + config[i + 1 :]
                if self.satisfies(cand):
                    result.append(cand)
        return result

    def metric_value(self, time_ms: float, config: Config) -> float:
        """Performance of a measurement; defaults to ``1 / time_ms``."""
        if self._metric_fn is None:
            return 1.0 / time_ms
        try:
            return float(self._metric_fn(*config, time_ms))
        except ZeroDivisionError as e:
            raise EvaluationError(
                f"{e} while evaluating metric {self.metric_source!r} "
                f"on ({config_key(config)})"
            ) from None

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        """Canonical spec document; re-parsing yields an equal space."""
        lines = [f"kernel: {self.kernel_name}"]
        lines.append(f"neighbor_scheme: {self.neighbor_scheme.value}")
        if self.metric_source is not None:
            lines.append(f"metric: {self.metric_source!r}")
        lines.append("params:")
        for p in self.parameters:
            values = ", ".join(
                repr(v) if isinstance(v, str) else str(v) for v in p.values
            )
            lines.append(f"  {p.name}: [{values}]")
        if self.constraints:
            lines.append("constraints:")
            for c in self.constraints:
                lines.append(f"  - {c.source!r}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        """Hash identifying the space; caches record it at creation."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of merging."""


def _strict_mapping(loader, node, deep=False):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            raise SpecSyntaxError(
                f"duplicate key {key!r}",
                key_node.start_mark.line + 1,
                key_node.start_mark.column + 1,
            )
        mapping[key] = loader.construct_object(value_node, deep=deep)
    return mapping


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping
)

_KNOWN_KEYS = {"kernel", "params", "constraints", "metric", "neighbor_scheme"}


def _coerce_value(raw, param: str) -> Value:
    if isinstance(raw, bool):
        return int(raw)
    if isinstance(raw, int):
        return raw
    if isinstance(raw, str):
        return raw
    raise SpecValidationError(
        f"parameter '{param}' has unsupported value {raw!r} "
        "(only integers, booleans and strings are allowed)"
    )


def parse_space_spec(text: str) -> SearchSpaceSpec:
    """Parse a spec document into a :class:`SearchSpaceSpec`.

    Raises :class:`SpecSyntaxError` with line/column on malformed YAML
    or duplicate keys, and :class:`SpecValidationError` /
    :class:`ExpressionTypeError` on semantic problems such as a
    constraint referencing an unknown parameter.
    """
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except SpecSyntaxError:
        raise
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        raise SpecSyntaxError(
            e.problem or "invalid YAML",
            None if mark is None else mark.line + 1,
            None if mark is None else mark.column + 1,
        ) from None
    except yaml.YAMLError as e:
        raise SpecSyntaxError(str(e)) from None

    if not isinstance(doc, dict):
        raise SpecValidationError("spec document must be a mapping")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise SpecValidationError(
            f"unknown field(s): {', '.join(sorted(map(str, unknown)))}"
        )

    kernel = doc.get("kernel")
    if not isinstance(kernel, str) or not kernel:
        raise SpecValidationError("'kernel' must be a non-empty string")

    raw_params = doc.get("params")
    if not isinstance(raw_params, dict) or not raw_params:
        raise SpecValidationError("'params' must be a non-empty mapping")
    parameters = []
    for name, values in raw_params.items():
        if not isinstance(values, list):
            raise SpecValidationError(f"parameter '{name}' must map to a list")
        parameters.append(
            ParameterDef(str(name), tuple(_coerce_value(v, str(name)) for v in values))
        )
    parameters = tuple(parameters)

    raw_constraints = doc.get("constraints", [])
    if not isinstance(raw_constraints, list):
        raise SpecValidationError("'constraints' must be a list of strings")
    constraints = []
    for raw in raw_constraints:
        if not isinstance(raw, str):
            raise SpecValidationError(f"constraint {raw!r} is not a string")
        constraints.append(ConstraintExpr.parse(raw, parameters))

    metric = doc.get("metric")
    if metric is not None and not isinstance(metric, str):
        raise SpecValidationError("'metric' must be a string expression")

    scheme = doc.get("neighbor_scheme", NeighborScheme.HAMMING1.value)
    try:
        scheme = NeighborScheme(scheme)
    except ValueError:
        raise SpecValidationError(
            f"neighbor_scheme must be one of "
            f"{[s.value for s in NeighborScheme]}, got {scheme!r}"
        ) from None

    return SearchSpaceSpec(
        kernel_name=kernel,
        parameters=parameters,
        constraints=tuple(constraints),
        metric_source=metric,
        neighbor_scheme=scheme,
    )


def load_space_spec(path: str | Path) -> SearchSpaceSpec:
    """Read and parse a spec file; bare bundled names also resolve."""
    p = Path(path)
    if not p.exists() and p.name == str(path) and p.stem in BUNDLED_SPACES:
        return bundled_space(p.stem)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise SpecValidationError(f"cannot read spec {path}: {e}") from None
    return parse_space_spec(text)


def bundled_space(name: str) -> SearchSpaceSpec:
    """Load one of the spaces shipped with the package."""
    if name not in BUNDLED_SPACES:
        raise SpecValidationError(
            f"no bundled space {name!r}; available: {', '.join(BUNDLED_SPACES)}"
        )
    text = (resources.files("tunescape") / "spaces" / f"{name}.spec").read_text(
        encoding="utf-8"
    )
    return parse_space_spec(text)
