"""breathenet: a simulator and optimizer for breathing cellular networks.

Per-period traffic is sampled over an antenna grid, busy-degrees are derived
from measurement-report data, and pilot powers are rebalanced so that load
equalizes across antennas without dropping coverage below a floor.
"""

from .balancer import (
    DegenerateDiagonal,
    SingularJacobian,
    BalanceStep,
    apply_and_clamp,
    bdba_solve,
    bfdba_solve,
    save_steps_jsonl,
    step,
)
from .busy import BusyState, ZeroTraffic, busy_degrees, disagreement, relative_busy, targets
from .coverage import (
    CoverageReport,
    ExactNeighbourhoodEvaluator,
    InfeasibleCoverage,
    MonotoneMlp,
    SurrogateNeighbourhoodEvaluator,
    build_fail_graph,
    exact_coverage,
    load_surrogate,
    min_power_search,
    neighbourhood_coverage,
    save_surrogate,
    surrogate_coverage,
    train_neighbourhood_surrogates,
    train_surrogate,
)
from .harness import (
    ExperimentResult,
    ExperimentSpec,
    MetricsSeries,
    PropertyCheck,
    compare_runs,
    property_suite,
    run_experiment,
    write_results,
)
from .jacobian import (
    JacobianApprox,
    LaplacianReport,
    SupportGraph,
    estimate_jacobian,
    laplacian_check,
    support_graph,
)
from .model import (
    AlgorithmConfig,
    Antenna,
    ConfigError,
    NetworkTopology,
    SimulationClock,
    ValidationReport,
    dbm_to_watts,
    symmetrize,
    topology_from_dict,
    topology_from_json,
    topology_to_dict,
    validate_topology,
    watts_to_dbm,
)
from .mrdata import (
    LoadReport,
    MrDataset,
    MrRecord,
    build_per_antenna_tables,
    co_neighbours,
    dataset_from_records,
    generate_mr,
    load_csv,
    remove_redundant,
    sample_for_jacobian,
    save_csv,
    subsample,
    to_attenuation,
    to_signal,
)
from .synth import (
    ScenarioBundle,
    drift_bundle,
    grid_topology,
    line_topology,
    proportional_bundle,
    random_bundle,
    tidal_bundle,
    two_island_bundle,
)
from .traffic import (
    Hotspot,
    PathlossModel,
    PeriodSpec,
    TrafficScenario,
    UserBatch,
    assign_users,
    sample_users,
    total_traffic,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
