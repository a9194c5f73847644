"""Group-sequential design and simulation for survival trials with
non-proportional hazards.

The package goes from a declared trial model (piecewise enrollment,
hazards and dropout) to expected events, weighted logrank moments, joint
boundary solving with error spending, power and sample size, and a
subject-level simulator to verify the asymptotics.
"""

from .ahr import AhrResult, ahr_lr, ahr_wlr, bridge_weight, estimate_ahr
from .design import (
    CrossingTable,
    DesignBounds,
    DesignSummary,
    SpendingFunction,
    asymptotic_power,
    build_design,
    crossing_table,
    cumulative_spends,
    efficacy_bounds,
    futility_bounds,
    planned_n,
    power,
    sample_size_dn,
    sample_size_nd,
    schedule_times,
    spending_fractions,
)
from .dist import (
    JointDistribution,
    MvnResult,
    canonical,
    gs_crossing,
    maxcombo_corr,
    maxcombo_critical,
    mvn_rectangle,
)
from .expect import (
    cumulative_enrollment,
    enrollment_cdf,
    expected_events,
    pooled_expected_events,
    pooled_survival_fn,
)
from .model import (
    AnalysisSchedule,
    PiecewiseConstant,
    TestSpec,
    TrialModel,
    WeightSpec,
    null_model,
    simple_model,
    validate,
)
from .sim import (
    SimReport,
    SimTest,
    cut_dataset,
    maxcombo_pvalue,
    milestone_statistic,
    rmst_statistic,
    run_study,
    scenario_model,
    simulate_trial,
    standard_tests,
    wlr_statistic,
)
from .wlr import WlrMoments, anchored_info_fraction, info_fraction, wlr_moments

__version__ = "0.1.0"

__all__ = [
    "AhrResult",
    "AnalysisSchedule",
    "CrossingTable",
    "DesignBounds",
    "DesignSummary",
    "JointDistribution",
    "MvnResult",
    "PiecewiseConstant",
    "SimReport",
    "SimTest",
    "SpendingFunction",
    "TestSpec",
    "TrialModel",
    "WeightSpec",
    "WlrMoments",
    "ahr_lr",
    "ahr_wlr",
    "anchored_info_fraction",
    "asymptotic_power",
    "bridge_weight",
    "build_design",
    "canonical",
    "crossing_table",
    "cumulative_enrollment",
    "cumulative_spends",
    "cut_dataset",
    "efficacy_bounds",
    "enrollment_cdf",
    "estimate_ahr",
    "expected_events",
    "futility_bounds",
    "gs_crossing",
    "info_fraction",
    "maxcombo_corr",
    "maxcombo_critical",
    "maxcombo_pvalue",
    "milestone_statistic",
    "mvn_rectangle",
    "null_model",
    "planned_n",
    "pooled_expected_events",
    "pooled_survival_fn",
    "power",
    "rmst_statistic",
    "run_study",
    "sample_size_dn",
    "sample_size_nd",
    "scenario_model",
    "schedule_times",
    "simple_model",
    "simulate_trial",
    "spending_fractions",
    "standard_tests",
    "validate",
    "wlr_moments",
    "wlr_statistic",
]
