"""Preconditioned weighted SGD for overdetermined l1/l2 regression.

The pipeline: sketch the tall matrix, QR the sketch to get a triangular R
whose inverse conditions the basis, estimate row leverage scores of A R^-1,
then run weighted SGD on the preconditioned geometry.  Baselines (weighted
randomized Kaczmarz, vanilla SGD, sample-and-solve RLA, sensitivity-sampled
coresets) and a benchmark harness round out the package.
"""

from .problems import L1Ball, RegressionProblem
from .linalg import (
    ConditioningReport,
    elementwise_p_norm,
    kappa_hat,
    l1_distortion_probe,
    l2_conditioning,
    qr_factorize,
)
from .sketching import (
    SketchSpec,
    apply_sketch,
    default_sketch_rows,
    distortion_estimate,
    materialize_sketch,
)
from .preconditioning import (
    Preconditioner,
    compute_R,
    conditioning_bound,
    identity_preconditioner,
    make_preconditioner,
)
from .leverage import (
    SamplingDistribution,
    approx_scores_l1,
    approx_scores_l2,
    exact_scores,
    row_norm_distribution,
    sample_index,
    uniform_distribution,
)
from .solvers import (
    SolverConfig,
    SolverTrace,
    constrained_step,
    minibatch_gradient,
    pwsgd_solve,
    vanilla_sgd_solve,
    weighted_rk_solve,
)
from .theory import (
    TheoryConstants,
    compute_theory_constants,
    predicted_bound_l1,
    predicted_bound_l2,
    theory_stepsize_l1,
    theory_stepsize_l2,
)
from .rla import (
    augmented_leverage_distribution,
    direct_ls_solve,
    irls_l1_solve,
    rla_sampling_solve,
    sampling_size_bound,
)
from .coresets import (
    SensitivityProfile,
    coreset_construct,
    hinge_sensitivity_construction,
    sensitivity_lower_bounds,
    sensitivity_upper_bounds,
)
from .datasets import (
    DatasetRecipe,
    gen_sparse_instance,
    gen_synthetic1,
    gen_synthetic2,
    load_csv_dataset,
)
from .bench import (
    ExperimentSpec,
    SolverRecipe,
    emit_plot_data,
    grid_search_stepsize,
    run_condition_sweep,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
