"""Trainable logic-circuit regression: threshold binarization, learned
two-input Boolean gates, and a gated weighted sum, trained end to end by
annealed continuous relaxation and compiled to a discrete circuit."""

from .circuit import (
    ConstNode,
    GateNode,
    HardCircuit,
    RuleSet,
    SumLink,
    ThresholdNode,
    discretize,
    evaluate_circuit,
    export_dot,
    extract_rules,
    predict_original_units,
    simplify,
)
from .costs import CostReport, CostTable, count_ops, set_cost_table
from .data import (
    ColumnSchema,
    Dataset,
    FoldPlan,
    RawTable,
    default_fold_count,
    load_csv,
    make_folds,
    preprocess,
    split,
)
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    LogicRegError,
    ModelFormatError,
)
from .gates import (
    COEFFS,
    GATE_COSTS,
    GATE_NAMES,
    HARD_TABLE,
    hard_gate_eval,
    soft_gate_eval,
    soft_gate_partials,
)
from .model_io import LoadedModel, load_model, save_model
from .network import (
    LogicLayerParams,
    NetworkParams,
    STEConfig,
    SumParams,
    ThresholdParams,
    logic_forward_hard,
    logic_forward_soft,
    network_backward,
    network_forward_soft,
    sum_forward_hard,
    sum_forward_soft,
    threshold_forward_hard,
    threshold_forward_soft,
)
from .search import (
    SearchSpace,
    TrialResult,
    default_search_space,
    final_fit,
    run_search,
)
from .training import (
    LossReport,
    Metrics,
    TrainConfig,
    evaluate,
    init_params,
    mse_loss,
    predict_standardized,
    train,
)

__version__ = "0.1.0"
