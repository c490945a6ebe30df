"""spdkit: learned log-det divergences and SPD dictionary learning."""

from .errors import (
    CorruptFile,
    DegenerateDivergence,
    DimensionMismatch,
    InvalidDataset,
    InvalidGradient,
    InvalidInput,
    InvalidStart,
    NotPositiveDefinite,
    NumericalBreakdown,
    SingularSystem,
    SpdKitError,
    StepOverflow,
)
from .linalg import (
    PD_TOL,
    SymEig,
    gen_eigvals,
    is_spd,
    random_spd,
    regularize,
    schur_sym,
    spd_exp,
    spd_invsqrt,
    spd_log,
    spd_power,
    spd_sqrt,
    sym,
    sym_eig,
)
from .divergence import (
    PARAM_FLOOR,
    AbldParams,
    abld,
    abld_airm,
    abld_eigen,
    burg,
    degeneracy_margin,
    jbld,
    jeffreys_kl,
)
from .manifold import (
    PARAM_CEILING,
    RcgConfig,
    TangentVector,
    metric_inner,
    parallel_transport,
    positive_scalar_step,
    rcg_minimize,
    retract,
    riemannian_grad,
)
from .iddl import (
    FitConfig,
    FitHistory,
    IddlModel,
    LabeledSpdDataset,
    encode,
    encode_batch,
    encoding_loss_grad,
    fit,
    grad_alpha_beta,
    grad_atom,
    grad_atom_airm,
    grad_atom_reference,
    init_dictionary,
    init_params,
    load_model,
    objective,
    one_hot,
    save_model,
    solve_w,
)
from .classify import (
    PredictionReport,
    evaluate,
    nn1,
    nn1_predictor,
    predict,
    predict_batch,
)
from .dataio import (
    SyntheticSpec,
    covariance_descriptor,
    generate_synthetic,
    read_dataset,
    read_dataset_text,
    split,
    write_dataset,
)

__version__ = "0.1.0"
