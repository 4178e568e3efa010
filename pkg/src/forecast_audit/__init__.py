"""Forecast plausibility auditing toolkit.

Generates synthetic series, corrupts forecast segments in controlled ways,
renders plots, submits them to a multimodal critic (HTTP or scripted mock),
and scores the verdicts (SMAPE, F1, CRPS/sCRPS, Mann-Whitney U).
"""

from .basis import Component, SeriesSpec, eval_basis, generate, sample_spec
from .critic import (
    BackendConfig,
    HttpBackend,
    PromptTemplate,
    ScriptedBackend,
    TEMPLATES,
    Verdict,
    build_prompt,
    critique,
    parse_verdict,
    verdict_response,
)
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    ParameterError,
    TransientBackendError,
    UndefinedScaleError,
    UnparseableVerdictError,
)
from .harness import (
    CaseRecord,
    ExperimentConfig,
    RealWorldCase,
    annotate_cases,
    emit_report,
    load_realworld_cases,
    run_experiment,
    run_perturbation_experiment,
    run_promo_experiment,
    run_realworld_experiment,
)
from .metrics import (
    Confusion,
    RankTestResult,
    crps,
    f1_per_class,
    mann_whitney_u,
    pct_diff,
    quantile_loss,
    scrps,
    summary_stats,
    weighted_f1,
)
from .perturb import (
    LinearFit,
    filter_worst,
    fit_linear,
    random_spikes,
    smape,
    time_stretch,
    trend_modify,
    vertical_shift,
)
from .promo import PromoScenario, build_scenario, inject_spike
from .render import PlotStyle, render_point, render_probabilistic
from .series import (
    QuantileForecast,
    SeriesView,
    TimeGrid,
    TimeSeries,
    join,
    make_grid,
    split,
)

__version__ = "0.1.0"
