"""Synthetic CMOS gate-delay data: surrogate Monte-Carlo simulation, a tabular
denoising diffusion model, simulator-replay evaluation and a GBR augmentation
benchmark."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Circuit,
    Dataset,
    DatasetSchema,
    FeatureRole,
    FeatureSpec,
    NormStats,
    denormalize,
    fit_normalizer,
    load_csv,
    normalize,
    save_csv,
    schema_for,
    train_test_split,
)
from .diffusion import (  # noqa: F401
    DenoiserConfig,
    DiffusionModel,
    NoiseSchedule,
    forward_jump,
    forward_step,
    linear_schedule,
    load_checkpoint,
    reverse_formula,
    reverse_step,
    sample,
    save_checkpoint,
    train,
)
from .evaluate import (  # noqa: F401
    EvalReport,
    evaluate,
    evaluate_dataset,
    export_histograms,
    ks_statistic,
    mape,
)
from .gbr import (  # noqa: F401
    BenchReport,
    GbrConfig,
    GbrModel,
    RegressionTree,
    fit_gbr,
    regression_metrics,
    run_benchmark,
)
from .simulator import (  # noqa: F401
    GateTopology,
    ProcessNominals,
    PvtSample,
    delay_oracle,
    generate_dataset,
    nominal_pvt,
    sample_pvt,
    topology_for,
)
