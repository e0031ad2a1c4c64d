"""Birth-death processes with killing and catastrophes.

Exact solvers for absorption probabilities and stationary tails, Siegmund
duality, Monte Carlo estimation with excursion statistics, and the
population-genetics application (ancestral selection graphs for the Moran
model and its diffusion limit).
"""

from .duality import (
    BarIdentityReport,
    ClosureReport,
    DualityReport,
    absorption_ratios_from_tail,
    detailed_balance_product,
    dual_stationary_from_absorption,
    siegmund_dual,
    tail_ratios_from_absorption,
    verify_bar_identity,
    verify_duality,
    verify_ratio_identities,
)
from .errors import (
    BdcatError,
    DegenerateDenominator,
    HypothesisViolated,
    NoConvergence,
    NotIrreducible,
    NotMonotone,
    ParseError,
    QuadratureNoConvergence,
    RangeError,
    SingularSystem,
    SpecError,
    TruncationError,
    ValidationError,
)
from .generators import (
    CEMETERY,
    FLAG_LIVE,
    FLAG_STRUCK,
    KINDS,
    Generator,
    MarkedGenerator,
    build_generator,
)
from .montecarlo import (
    ExcursionStats,
    MCEstimate,
    PathRecord,
    SimConfig,
    StationaryEstimate,
    estimate_absorption,
    estimate_stationary,
    excursion_statistics,
    geometric_fit_pvalue,
    replicate_rng,
    simulate_path,
)
from .popgen import (
    DiffusionParams,
    MoranParams,
    RelationReport,
    ancestral_type_prob_diffusion,
    ancestral_type_prob_finite,
    diffusion_kasg_schedule,
    diffusion_pldasg_schedule,
    diffusion_relations,
    fearnhead_tails,
    finite_relations,
    kasg_schedule,
    moran_forward,
    pldasg_schedule,
    sampling_moment,
    wright_moments,
    wright_polynomial_means,
)
from .schedules import (
    Finite,
    Infinite,
    RateSchedule,
    bar_transform,
    constant_schedule,
    make_schedule,
    tail_sum_diagnostic,
)
from .solvers import (
    SolutionVector,
    first_passage_prob,
    solve_absorption,
    solve_stationary_tail,
    stationary_distribution,
    transient_distribution,
    transition_matrix,
)

__version__ = "0.1.0"
