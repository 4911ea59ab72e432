"""Event analytics for micro-PMU phasor streams from solar distribution feeders.

Submodules
----------
phasors       domain types and complex-phasor arithmetic
io            CSV ingestion, gap reporting, cross-feeder alignment
detect        GAN event detector plus a robust statistical baseline
locate        locally- vs grid-induced source-region classification
characterize  event statistics, power-factor impact, power-law fits
dynamics      five-stage segmentation of inverter control responses
simulate      labeled synthetic feeder scenarios (ground-truth generator)
cli           command-line pipeline (simulate / detect / analyze)
"""

from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    FeatureError,
    FitConvergenceError,
    FormatError,
    IndeterminateImpedanceError,
    InsufficientDataError,
    PmuEventsError,
    SegmentationError,
    TrainingError,
)
from .phasors import (
    DEFAULT_PHASE_FACTOR,
    DEFAULT_RATE,
    DEFAULT_RATED_POWER,
    PhasorSample,
    PhasorStream,
    phase_angle_difference,
    power_factor,
    production_level,
    to_complex,
    to_polar,
    wrap_angle_deg,
)

__version__ = "0.1.0"

from .characterize import (  # noqa: E402
    CurveFitResult,
    EventFeatures,
    ProductionHistogram,
    extract_features,
    fit_power_law,
    grid_response_report,
    production_histogram,
)
from .detect import (  # noqa: E402
    ChannelStats,
    EventWindow,
    GanModel,
    TrainConfig,
    WindowTensor,
    anomaly_score,
    build_windows,
    detect_events,
    detect_events_baseline,
    event_from_interval,
    events_from_jsonl,
    events_to_jsonl,
    fit_discriminator,
    load_model,
    save_model,
    train_gan,
)
from .dynamics import (  # noqa: E402
    StageLabel,
    StageSegmentation,
    label_stages,
    segment_stages,
    segment_trace,
)
from .io import (  # noqa: E402
    AlignedPair,
    GapReport,
    align,
    parse_stream,
    serialize_stream,
)
from .locate import (  # noqa: E402
    DifferentialPhasor,
    Origin,
    OriginLabel,
    classify_origin,
    combined_origin,
    differential_phasor,
    signature_match,
)
from .simulate import (  # noqa: E402
    EventSpec,
    LabeledStream,
    NoiseLevels,
    ScenarioConfig,
    TruthEvent,
    simulate,
    write_labeled_stream,
)
