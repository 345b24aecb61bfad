"""Massive MIMO downlink simulation with a BS-side beyond-diagonal RIS."""

from .geometry import (
    BsRisChannel,
    SystemGeometry,
    UpaConfig,
    UserChannelModel,
    build_bs_ris_channel,
    build_upa_positions,
    composite_channel,
    make_bs_ris_geometry,
    pathloss_db,
    sample_channels,
    spatial_correlation,
)
from .estimation import (
    LmmseEstimator,
    PilotBook,
    StackedTrainingMatrix,
    TrainingSchedule,
    build_lmmse,
    estimate,
    make_pilots,
    make_training_configs,
    simulate_uplink_training,
    stack_training_matrix,
)
from .ris_opt import (
    BEYOND_DIAGONAL,
    DIAGONAL,
    CostContext,
    OptimizerSettings,
    OptimizerTrace,
    RisMatrix,
    cost,
    euclidean_gradient,
    optimize,
    optimize_diagonal,
)
from .power import (
    BisectionSettings,
    LinkScenario,
    LinkStatistics,
    PowerSolution,
    bisection_maxmin,
    check_feasibility,
    estimate_link_statistics,
    mrt_precoder,
    se_lower_bound,
    sinr_lower_bound,
)
from .scenario import (
    ResultRecord,
    ScenarioConfig,
    drop_users,
    load_config,
    run_baseline_mamimo,
    run_scenario,
    run_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
