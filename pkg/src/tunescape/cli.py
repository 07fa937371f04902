"""Command-line interface.

Thin adapters over the library: every subcommand calls exactly one
module-level operation and formats its result. Human-readable summaries
go to standard output; machine-readable artifacts (CSV, JSON, DOT,
cache files) are written only to paths named by ``--out``.

Exit codes: 0 success, 1 domain error (no feasible data, incomplete
cache, ...), 2 usage error.
"""

import sys
from pathlib import Path

import click

from . import landscape, store, strategies
from .errors import TunescapeError
from .measure import Aggregate, MeasurementProtocol, command_backend, simulated_backend
from .paramspace import NeighborScheme, load_space_spec


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _load_backend(spec: str, workdir, env_pairs, parameterless):
    kind, _, rest = spec.partition(":")
    if kind == "sim" and rest:
        return simulated_backend(store.read_cache(rest))
    if kind == "cmd" and rest:
        env = {}
        for pair in env_pairs:
            name, _, value = pair.partition("=")
            env[name] = value
        return command_backend(
            rest, workdir=workdir, env=env, parameterless=parameterless
        )
    raise click.UsageError(
        f"backend must be sim:<cache-file> or cmd:<template>, got {spec!r}"
    )


def _protocol(warmup, runs, aggregate, timeout_ms) -> MeasurementProtocol:
    return MeasurementProtocol(
        warmup_runs=warmup,
        benchmark_runs=runs,
        aggregate=Aggregate(aggregate),
        timeout_ms=timeout_ms,
    )


@click.group()
def cli():
    """Tune parameterized programs and analyze their search spaces."""


@cli.command()
@click.option("--space", "space_path", required=True, help="Space spec file.")
@click.option(
    "--backend",
    "backend_spec",
    required=True,
    help="sim:<cache-file> or cmd:<command template with {param} slots>.",
)
@click.option(
    "--strategy",
    type=click.Choice(["brute", "random", "local"]),
    default="brute",
    show_default=True,
)
@click.option("--budget", type=int, default=0, help="Max evaluations (random/local).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, help="Cache file to write.")
@click.option("--device", default=None, help="Device name recorded in the cache.")
@click.option("--scheme", type=click.Choice([s.value for s in NeighborScheme]), default=None)
@click.option("--first-improvement", is_flag=True, help="Local search takes the first improving neighbor.")
@click.option("--warmup", type=int, default=1, show_default=True)
@click.option("--runs", type=int, default=7, show_default=True)
@click.option("--aggregate", type=click.Choice([a.value for a in Aggregate]), default="mean", show_default=True)
@click.option("--timeout-ms", type=float, default=60_000.0, show_default=True)
@click.option("--workdir", default=None, help="Working directory for cmd backends.")
@click.option("--env", "env_pairs", multiple=True, help="NAME=VALUE for cmd backends (repeatable).")
@click.option("--parameterless", is_flag=True, help="Allow a cmd template without placeholders.")
def tune(
    space_path,
    backend_spec,
    strategy,
    budget,
    seed,
    out_path,
    device,
    scheme,
    first_improvement,
    warmup,
    runs,
    aggregate,
    timeout_ms,
    workdir,
    env_pairs,
    parameterless,
):
    """Search a space for the best configuration and record a cache."""
    space = load_space_spec(space_path)
    backend = _load_backend(backend_spec, workdir, env_pairs, parameterless)
    protocol = _protocol(warmup, runs, aggregate, timeout_ms)
    metadata = {"strategy": strategy, "seed": str(seed)}
    if strategy == "brute":
        result, cache = strategies.brute_force(
            space, backend, protocol, device, metadata=metadata
        )
    else:
        if strategy == "random":
            result = strategies.random_search(space, backend, protocol, budget, seed)
        else:
            result = strategies.greedy_local_search(
                space,
                backend,
                protocol,
                budget,
                seed,
                scheme=scheme,
                first_improvement=first_improvement,
            )
        metadata["budget"] = str(budget)
        cache = strategies.result_to_cache(
            space,
            result,
            device_name=strategies.default_device_name(backend, device),
            metadata=metadata,
        )
    store.write_cache(cache, out_path)
    click.echo(f"evaluations : {result.evaluations_used}")
    if result.best is not None:
        click.echo(f"best config : {','.join(map(str, result.best))}")
        click.echo(f"best_ms     : {_fmt(result.best_observation.time_ms)}")
    for note in result.notes:
        click.echo(f"note        : {note}")
    click.echo(f"wrote {out_path}")


@cli.group()
def analyze():
    """Compute statistics from recorded caches."""


@analyze.command()
@click.option("--cache", "cache_path", required=True)
def stats(cache_path):
    """Median, maximum and tuning impact of a cache."""
    cache = store.read_cache(cache_path)
    s = landscape.perf_stats(cache)
    click.echo(f"kernel  : {cache.kernel_name}")
    click.echo(f"device  : {cache.device_name}")
    click.echo(f"records : {s.n_ok} ok, {s.n_failed} failed")
    click.echo(f"median  : {_fmt(s.median_perf)}")
    click.echo(f"maximum : {_fmt(s.max_perf)}")
    click.echo(f"impact  : {s.impact:.1f}x")
    click.echo(f"best_ms : {_fmt(s.min_time_ms)}")


@analyze.command()
@click.option("--cache", "cache_path", required=True)
@click.option("--space", "space_path", required=True)
@click.option("--scheme", type=click.Choice([s.value for s in NeighborScheme]), default=None)
@click.option("--p-max", type=float, default=0.15, show_default=True)
@click.option("--p-step", type=float, default=0.005, show_default=True)
@click.option("--damping", type=float, default=landscape.DEFAULT_DAMPING, show_default=True)
@click.option("--out", "out_path", required=True, help="CSV file (p,c_p).")
def centrality(cache_path, space_path, scheme, p_max, p_step, damping, out_path):
    """Difficulty curve: centrality proportion over acceptable-optimum p."""
    if p_step <= 0 or p_max < 0:
        raise click.UsageError("--p-step must be positive and --p-max non-negative")
    cache = store.read_cache(cache_path)
    space = load_space_spec(space_path)
    g = landscape.build_ffg(cache, space, scheme)
    steps = int(round(p_max / p_step))
    grid = tuple(round(i * p_step, 10) for i in range(steps + 1))
    curve = landscape.centrality_curve(g, damping=damping, p_grid=grid)
    landscape.write_centrality_csv(curve, out_path)
    click.echo(f"scheme       : {g.scheme.value}")
    click.echo(f"damping      : {_fmt(curve.damping)}")
    click.echo(f"nodes        : {g.n_nodes} ({g.excluded_failures} failed excluded)")
    click.echo(f"local minima : {curve.minima_count}")
    click.echo(f"C_0          : {_fmt(curve.c_p_values[0])}")
    click.echo(f"C_{_fmt(grid[-1])}       : {_fmt(curve.c_p_values[-1])}")
    click.echo(f"wrote {out_path}")


@analyze.command()
@click.option("--caches", "cache_paths", required=True, help="Comma-separated cache files.")
@click.option("--subset", default=None, help="Comma-separated device names (default: all).")
@click.option("--out", "out_path", default=None, help="JSON report file.")
def portability(cache_paths, subset, out_path):
    """Most portable configuration across a set of device caches."""
    caches = {}
    for raw in cache_paths.split(","):
        cache = store.read_cache(raw)
        name = cache.device_name or Path(raw).stem
        if name in caches:
            raise click.UsageError(f"duplicate device name {name!r} in --caches")
        caches[name] = cache
    devices = subset.split(",") if subset else None
    report = landscape.best_portable_config(caches, devices)
    click.echo(f"devices : {', '.join(report.devices)}")
    click.echo(f"config  : {report.config}")
    for d, e in zip(report.devices, report.efficiencies):
        click.echo(f"eff     : {d} = {_fmt(e)}")
    click.echo(f"pp      : {_fmt(report.pp)}")
    if out_path:
        landscape.write_portability_json(report, out_path)
        click.echo(f"wrote {out_path}")


@analyze.command()
@click.option("--cache", "cache_path", required=True)
@click.option("-k", type=int, default=5, show_default=True)
def topk(cache_path, k):
    """Best configurations by metric, descending."""
    cache = store.read_cache(cache_path)
    rows = landscape.top_k(cache, k)
    click.echo(f"# top {len(rows)} of {cache.kernel_name}/{cache.device_name}")
    for key, metric in rows:
        click.echo(f"{key}  {_fmt(metric)}")


@cli.group(name="export")
def export_group():
    """Emit plotting-ready datasets."""


@export_group.command()
@click.option("--cache", "cache_path", required=True)
@click.option("--out", "out_path", required=True, help="CSV file.")
def dist(cache_path, out_path):
    """Performance distribution normalized by the optimum."""
    cache = store.read_cache(cache_path)
    dataset = landscape.export_distribution(cache)
    landscape.write_distribution_csv(dataset, out_path)
    for percent, value in dataset.quantiles:
        click.echo(f"q{percent:02d} : {_fmt(value)}")
    click.echo(f"wrote {out_path}")


@export_group.command()
@click.option("--cache", "cache_path", required=True)
@click.option("--space", "space_path", required=True)
@click.option("--scheme", type=click.Choice([s.value for s in NeighborScheme]), default=None)
@click.option("--out", "out_path", required=True, help="DOT file.")
def ffg(cache_path, space_path, scheme, out_path):
    """Fitness flow graph in Graphviz DOT form."""
    cache = store.read_cache(cache_path)
    space = load_space_spec(space_path)
    g = landscape.build_ffg(cache, space, scheme)
    Path(out_path).write_text(landscape.export_dot(g), encoding="utf-8")
    click.echo(f"scheme : {g.scheme.value}")
    click.echo(f"nodes  : {g.n_nodes}")
    click.echo(f"edges  : {g.n_edges}")
    click.echo(f"wrote {out_path}")


@cli.command(name="import")
@click.option("--from", "source_kind", type=click.Choice(["external"]), default="external", show_default=True)
@click.option("--in", "in_path", required=True, help="External cache file.")
@click.option("--space", "space_path", default=None, help="Space spec to validate against.")
@click.option("--out", "out_path", required=True, help="Native cache file to write.")
@click.option("--device", default=None, help="Device name override.")
def import_cmd(source_kind, in_path, space_path, out_path, device):
    """Convert an external tuner cache into the native format."""
    space = load_space_spec(space_path) if space_path else None
    cache = store.import_external_cache(in_path, expected_space=space, device_name=device)
    store.write_cache(cache, out_path)
    click.echo(f"records : {len(cache.records)}")
    click.echo(f"wrote {out_path}")


def main(argv=None):
    """Entry point mapping domain errors to exit code 1."""
    try:
        cli.main(args=argv, prog_name="tunescape", standalone_mode=True)
    except TunescapeError as e:
        click.echo(f"error: {type(e).__name__}: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
