"""Physics toolkit for deep-learning-ready voxel topology optimization.

Core pieces: a matrix-free voxel linear-elasticity solver, a SIMP compliance
optimizer, physics-based input preprocessings, exact group-averaging
equivariance over grid symmetries, and a physical-correctness evaluation
suite (IoU on the editable region, fail percentage, sample-efficiency
aggregation).
"""

from .errors import (
    BisectionError,
    ChecksumError,
    ConvergenceError,
    EvaluationError,
    ExternalExitError,
    ExternalPredictorError,
    ExternalTimeoutError,
    FormatError,
    GroupActionError,
    MalformedOutputError,
    ManifestError,
    NormalizationError,
    NotFittedError,
    PredictorError,
    ShapeError,
    SingularSystemError,
    TopovoxError,
    TruncatedTensorError,
    VersionError,
)
from .grid import (
    DEFAULT_MATERIAL,
    DESIGN_FREE,
    DESIGN_SOLID,
    DESIGN_VOID,
    Material,
    Problem,
    ValidationReport,
    binarize,
    clamp_density,
    make_problem,
    validate_problem,
)
from .io import read_sample, read_tensor_dir, write_sample, write_tensor_dir
from .elasticity import (
    ElementStiffness,
    SolveStats,
    apply_stiffness,
    assemble_loads,
    compliance,
    element_stiffness,
    solve_displacements,
    von_mises,
)
from .simp import SimpParams, SimpState, density_filter, oc_update, run_simp, sensitivity
from .preproc import (
    InputTensor,
    PreprocConfig,
    build_rho_init,
    concat,
    convex_hull_preprocess,
    fit_normalization,
    pde_preprocess,
    preprocess,
    trivial_preprocess,
)
from .symmetry import (
    GroupElement,
    SymmetryGroup,
    act_scalar,
    act_vector,
    group,
    transform_problem,
    trivial_group,
    wrap,
)
from .evaluate import (
    FailReport,
    SECurve,
    TRAIN_SIZE_PRESETS,
    auc_150,
    bce_weight,
    check_fail,
    connectivity_ok,
    fail_percentage,
    final_score,
    iou,
    weighted_bce,
)
from .predictors import (
    ExternalPredictorSpec,
    baseline_hull,
    baseline_rho_init,
    run_external,
)

__version__ = "0.1.0"
