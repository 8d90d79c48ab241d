"""Environmental visual load (EVL) model of near-work myopia trends."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: F401
    AgeGroupBaseline,
    BalanceClass,
    ElongationMode,
    ModelConfig,
    NearWorkObservation,
    OcularEvaluation,
    axial_length,
    balance_crossing_axial_length,
    balance_crossing_time,
    classify,
    evaluate_observation,
    evl_ratio,
    ratio_at_axial_length,
    refractive_error,
    resting_points,
    responses,
)
from .cohort import (  # noqa: F401
    BaselineTable,
    CohortRecord,
    ConsistencyReport,
    TrendReport,
    builtin_baselines,
    check_paper_table,
    evaluate_cohort,
    spearman,
    trend_association,
)
from .ingest import (  # noqa: F401
    estimate_lux,
    parse_baselines,
    parse_config,
    parse_observations,
    serialize_observations,
)
from .pnm import GrayscaleImage, decode_pnm  # noqa: F401
