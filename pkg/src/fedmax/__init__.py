"""Federated min-max AUC maximization (NPA, CODA+, CODASCA) on simulated clients."""

from .algorithms import (
    ClientState,
    CodascaRound,
    CommLedger,
    ControlVariate,
    Federation,
    RunConfig,
    RunResult,
    client_stochastic_grad,
    coda_plus_inner,
    codasca_inner,
    codasca_round,
    draw_indices,
    run_coda_plus,
    run_codasca,
    run_npa,
)
from .core import (
    ConfigError,
    DivergenceError,
    EmptyDatasetError,
    FedmaxError,
    IoError,
    NumericalError,
    ParseError,
    PrimalDualPoint,
    RngStream,
    ShapeError,
    SingleClassError,
    derive_stream,
    finite_diff_grad,
)
from .data import (
    ClientShard,
    Dataset,
    SynthSpec,
    generate_synthetic,
    load_csv,
    partition_heterogeneous,
    partition_homogeneous,
    train_test_split,
)
from .metrics import RunTrace, TraceRow, client_drift_proxy, duality_gap_linear, empirical_auc, linear_saddle
from .models import ScorerKind, ScorerSpec, score, score_grad
from .objective import (
    GradV,
    ObjectiveContext,
    Sample,
    closed_form_inner,
    full_objective,
    minibatch_grad,
    pairwise_auc_square_loss,
    sample_grad_alpha,
    sample_grad_v,
    sample_loss,
)
from .schedules import (
    Stage,
    StageSchedule,
    TheoryConstants,
    practical_schedule,
    theory_schedule_coda_plus,
    theory_schedule_codasca,
)

__version__ = "0.1.0"
