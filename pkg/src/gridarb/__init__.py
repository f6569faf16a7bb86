"""Energy-storage arbitrage environments on radial distribution feeders."""

from .augmentation import (
    CopulaModel,
    GmcModel,
    GmmComponentSet,
    augment_dataset,
    fit_copula,
    fit_gmc,
    fit_gmm,
    gmm_cdf,
    gmm_quantile,
    sample_copula,
)
from .benchmark import (
    CostReport,
    DispatchSchedule,
    DpGrid,
    evaluate_schedule,
    performance_bound,
    solve_optimal_dp,
)
from .config import (
    CONFIG_ENV_VAR,
    RunConfig,
    load_config,
    resolve_config_path,
)
from .environment import (
    Action,
    DaySelector,
    EnvConfig,
    EnvState,
    RandomDaySelector,
    RewardBreakdown,
    StateVector,
    Transition,
    build_state,
    cal_reward,
    register_state_builder,
    reset,
    step,
)
from .errors import (
    GridArbError,
    NotConverged,
)
from .ess import (
    EssParams,
    EssState,
    apply_dispatch,
    load_fleet,
)
from .feeders import (
    FEEDER_SIZES,
    default_config_path,
    fixture_path,
    load_demo_fleet,
    load_demo_timeseries,
    load_feeder,
    load_toy_feeder,
    load_toy_fleet,
    load_toy_timeseries,
    toy_config_path,
    toy_dp_config_path,
)
from .network import (
    AdmittancePartition,
    Line,
    NetworkModel,
    Node,
    build_admittance,
    load_network,
)
from .powerflow import (
    InjectionSet,
    PowerFlowSolution,
    SolveOptions,
    batch_solve,
    solve_fixed_point,
    solve_reference,
)
from .server import (
    PROTOCOL_VERSION,
    ProtocolSession,
    serve_stdio,
    serve_tcp,
)
from .timeseries import (
    EpisodeSlice,
    SlotRecord,
    TimeSeriesDataset,
    load_timeseries,
    select_day,
    select_timeslot,
    split_train_test,
)

__version__ = "0.1.0"
