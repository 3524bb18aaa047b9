"""gmddtest: pivotal chi-squared tests of conditional mean independence
and regression specification, built on the generalized martingale
difference divergence, with wild-bootstrap ICM baselines and a Monte
Carlo harness."""

__version__ = "0.1.0"

from .bootstrap_icm import (
    BootstrapConfig,
    BootstrapResult,
    IcmStatistic,
    icm_statistic,
    mi_wild_bootstrap_pvalue,
    wild_bootstrap_many,
    wild_bootstrap_pvalue,
)
from .dataio import Dataset, emit_result, load_csv, load_sim_csv
from .estimators import EstimationResult, ModelSpec, NonConvergenceError, fit
from .gmdd import (
    gmdd_known_mean,
    gmdd_plugin_mean,
    gmdd_u_centered,
    gmdd_u_centered_enum,
    population_gmdd_discrete,
    u_center,
)
from .kernels import KernelSpec, eval_kernel, kernel_matrix, parse_kernel
from .linalg import DegenerateCovarianceError, ThresholdedInverse, thresholded_pinv
from .mc import (
    DgpSpec,
    SimResult,
    SimRow,
    TimingRow,
    generate,
    run_power_curve,
    run_size_experiment,
    run_timing_benchmark,
)
from .mi_test import MiTestResult, VSpec, build_v, default_h, mi_test, mi_test_kmat
from .spec_test import (
    SpecTestResult,
    SpecVSpec,
    build_v_spec,
    omega_delta,
    spec_test,
    spec_test_kmat,
)

__all__ = [
    "__version__",
    "BootstrapConfig",
    "BootstrapResult",
    "Dataset",
    "DegenerateCovarianceError",
    "DgpSpec",
    "EstimationResult",
    "IcmStatistic",
    "KernelSpec",
    "MiTestResult",
    "ModelSpec",
    "NonConvergenceError",
    "SimResult",
    "SimRow",
    "SpecTestResult",
    "SpecVSpec",
    "ThresholdedInverse",
    "TimingRow",
    "VSpec",
    "build_v",
    "build_v_spec",
    "default_h",
    "emit_result",
    "eval_kernel",
    "fit",
    "generate",
    "gmdd_known_mean",
    "gmdd_plugin_mean",
    "gmdd_u_centered",
    "gmdd_u_centered_enum",
    "icm_statistic",
    "kernel_matrix",
    "load_csv",
    "load_sim_csv",
    "mi_test",
    "mi_test_kmat",
    "mi_wild_bootstrap_pvalue",
    "omega_delta",
    "parse_kernel",
    "population_gmdd_discrete",
    "run_power_curve",
    "run_size_experiment",
    "run_timing_benchmark",
    "spec_test",
    "spec_test_kmat",
    "thresholded_pinv",
    "u_center",
    "wild_bootstrap_many",
    "wild_bootstrap_pvalue",
]
