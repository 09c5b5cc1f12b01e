"""Block-level hardware-aware neural architecture search engine.

Pipeline: define a block search space, attach a block library of per-option
distillation losses and costs, prune cost-inefficient options, then run a
bi-objective NSGA-II search over (surrogate loss, cost) with either analytic
MAC costs or on-device latency measured through a wire protocol.
"""

__version__ = "0.1.0"

from .errors import (
    BlockNasError,
    BudgetInfeasibleError,
    CardinalityBoundError,
    ConfigurationError,
    LibraryFormatError,
    LibraryValidationError,
    ProtocolError,
    ReferencePointError,
    SpaceFormatError,
    SpaceValidationError,
    TransportError,
)
from .space import (
    BlockOption,
    BlockSlot,
    ModelGenome,
    SearchSpace,
    all_genomes,
    cardinality,
    enumerate_genomes,
    load_space,
    random_genome,
    validate_space,
)
from .library import (
    BkdRecord,
    BlockLibrary,
    SynthProfile,
    load_library,
    save_library,
    surrogate_loss,
    synth_library,
)
from .costs import (
    CompositionalTableProvider,
    CostEvaluator,
    CostVector,
    MeasurementClient,
    ServiceProvider,
    macs_of_block,
    macs_of_model,
    measure_latency,
    params_of_block,
)
from .filtering import (
    FilterConfig,
    FilterReport,
    cost_ratio,
    filter_library,
    filtered_cardinality,
    reduced_space,
)
from .nsga2 import (
    EvaluatedGenome,
    SearchConfig,
    SearchResult,
    crowding_distance,
    dominates,
    evolve,
    non_dominated_sort,
)
from .oracle import OracleResult, exhaustive_front, hypervolume
from .pareto import estimate_search_cost, export_front, select_by_budget
