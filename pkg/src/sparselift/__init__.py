"""sparselift: sparse phase retrieval and sparse PCA via lifted factored programs."""

from .gauge import (
    FactoredMatrix,
    SubgradientSpec,
    atomic_decompose,
    factor_gauge,
    factorization_value,
    project_model_space,
    prox_l2_l1,
    sparse_split,
    subgradient_basic,
    subgradient_family,
    theta_s,
    w_beta,
)
from .model import (
    GroundTruth,
    NoiseConfig,
    ProblemInstance,
    apply_noise,
    forward_clean,
    generate_truth,
    lifted_forward,
    lifted_inner,
    load_instance,
    make_instance,
    sample_design,
    save_instance,
    trial_seed,
)
from .solver import (
    CertificateInconsistency,
    DualCertificate,
    NumericalFailure,
    SolveDiagnostics,
    SolverConfig,
    add_atom,
    certificate_1sparse,
    error_metric,
    extract_estimate,
    inner_minimize,
    objective,
    rebalance,
    solve,
    spectral_init,
    stationarity_gap,
    write_diagnostics,
)

__version__ = "0.1.0"
