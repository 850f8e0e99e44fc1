"""schedarb: competitive scheduler selection for heterogeneous multicore systems.

Six workload-to-core assignment algorithms compete per problem instance; a
neural denoiser+classifier arbiter, trained on synthetically generated,
overhead-aware labeled instances, picks the one expected to deliver the best
effective aIPC.
"""

from .model import (
    AIPC_MAX,
    CANONICAL_KINDS,
    FIRST100,
    FIRST400,
    FP_THRESHOLD,
    GOALS_BY_NAME,
    GREEDY,
    HUNGARIAN,
    LOCAL,
    MOST50,
    MOST200,
    NUM_CLASSES,
    RANDOM,
    SERIAL_HUNGARIAN_4,
    SMART_RANDOM,
    CoreDescriptor,
    Isa,
    MulticoreSystem,
    PerfMatrix,
    Schedule,
    SchedulerKind,
    SchedulingGoal,
    WorkloadBatch,
    WorkloadDescriptor,
    assigned_rates,
    canonical_kinds,
    class_to_kind,
    kind_from_key,
    kind_to_class,
    schedule_value,
)
from .schedulers import (
    SchedulerInput,
    brute_force_optimal,
    greedy,
    hungarian,
    local_search,
    random_schedule,
    run_scheduler,
    serial_hungarian,
    smart_random,
)
from .evaluation import (
    CalibrationError,
    OverheadModel,
    ScoredLabel,
    StrategyRow,
    calibrate_overhead,
    compare_strategies,
    default_overhead_model,
    effective_aipc,
    eos,
    label_instance,
    overhead_cycles,
    write_report,
    zero_overhead_model,
)
from .datagen import (
    ErrorSpec,
    GenConfig,
    LabeledInstance,
    ProblemInstance,
    add_noise,
    build_oracular,
    gen_pools,
    inject_error,
    label_dataset,
    load_dataset,
    sample_batches,
    sample_systems,
    save_dataset,
    split_dataset,
    synth_true_aipc,
    upsample,
)
from .arbiter import (
    ArbiterConfig,
    all_configs,
    build,
    build_frontend,
    denoise,
    load_bundle,
    save_bundle,
    select,
    train_classifier,
    train_denoiser,
    train_linked,
)

__version__ = "0.1.0"
