from .space import Dimension, SearchSpace  # noqa: F401
from .samplers import TpeParams, random_suggest, tpe_suggest  # noqa: F401
from .hyperband import Bracket, HyperbandSchedule, hyperband_schedule  # noqa: F401
from .study import (  # noqa: F401
    StudyTrace,
    TrialRecord,
    first_hit_iteration,
    hp_importance,
    run_study,
)
