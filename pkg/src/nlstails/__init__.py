"""Power-law tails for the 1D cubic Schrodinger equation.

Builds solutions of i w_t + w_xx + mu |w|^2 w = 0 whose behaviour at
x -> +-infinity follows prescribed power laws: a formal coefficient series
at each end, a smooth global profile interpolating the two, an implicit
marching scheme for the rapidly decaying correction, and band-limited
interpolation back to the continuum, with verification utilities on top.
"""

from .mesh import (
    Mesh,
    energy_inner,
    energy_norm,
    inner_l2h,
    norm_l2h,
    schwartz_seminorm,
)
from .series import (
    CoefficientPath,
    ExponentSet,
    FormalSeries,
    PositiveLeadingExponent,
    build_exponent_set,
    evaluate_series,
    formal_residual,
    solve_coefficients,
)
from .background import (
    AsymptoticProfile,
    PlaneWaveBackground,
    SolitonBackground,
    ZeroBackground,
    compute_defect,
    initial_correction,
    make_profile,
    schwartz_check,
)
from .stepper import (
    BlowUpDetected,
    BoundaryMassExceeded,
    ExtendedField,
    MarchResult,
    SingularStep,
    extend_time,
    march,
)
from .sincinterp import (
    SpaceInterpolant,
    SpaceTimeInterpolant,
    check_norm_relations,
    check_weighted_relations,
    combined_interp,
    sinc_interp,
    sinc_kernel,
)
from .verify import (
    CombinedSolution,
    ConvergenceTable,
    IndependenceReport,
    ResidualReport,
    UniquenessReport,
    convergence_study,
    gnls_residual,
    gronwall_constant,
    pde_residual,
    profile_independence_check,
    schwartz_observable,
    uniqueness_experiment,
)
from .cli import ExperimentConfig, emit_plotdata, load_config, run_experiment

__version__ = "0.1.0"
