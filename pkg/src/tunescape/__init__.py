"""tunescape: auto-tuning over constrained parameter spaces, plus the
landscape analysis that tells you whether tuning was worth it, how hard
the space is for a local optimizer, and how portable a tuned
configuration is across devices.
"""

from .errors import TunescapeError
from .landscape import (
    CentralityCurve,
    DistributionDataset,
    FitnessFlowGraph,
    PerfStats,
    PortabilityReport,
    app_efficiency,
    best_portable_config,
    build_ffg,
    centrality_curve,
    export_distribution,
    export_dot,
    find_local_minima,
    harmonic_pp,
    pagerank,
    perf_portability,
    perf_stats,
    proportion_of_centrality,
    top_k,
)
from .measure import (
    Aggregate,
    BackendDescriptor,
    MeasurementProtocol,
    Observation,
    Status,
    command_backend,
    compute_metric,
    measure,
    run_config,
    simulated_backend,
    simulated_lookup,
)
from .paramspace import (
    Config,
    ConstraintExpr,
    NeighborScheme,
    ParameterDef,
    SearchSpaceSpec,
    bundled_space,
    config_key,
    load_space_spec,
    parse_space_spec,
)
from .store import (
    DeviceMeta,
    TuningCache,
    import_external_cache,
    read_cache,
    write_cache,
)
from .strategies import (
    SearchSegment,
    StrategyResult,
    brute_force,
    greedy_local_search,
    random_search,
    result_to_cache,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
