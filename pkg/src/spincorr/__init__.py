"""Semi-analytic dynamics of dissipatively driven spin-1/2 lattices."""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    Lattice,
    LatticeError,
    PairIndex,
    build_lattice,
    uniform_mode_weight,
)
from .jump_algebra import (  # noqa: F401
    AntisymmetricBilocalCoefficients,
    JumpOperatorSpec,
    LocalFieldHamiltonian,
    LocalJumpCoefficients,
    SymmetricBilocalCoefficients,
    bilocal_adjoint_action,
    builtin,
    check_closure,
    check_closure_antisymmetric,
    check_closure_symmetric,
    check_hamiltonian_closure,
    local_adjoint_coefficients,
)
from .correlation_engine import (  # noqa: F401
    CorrelationState,
    Generator,
    ScenarioError,
    SpectrumResult,
    build_generator_field,
    build_generator_pure,
    build_generator_thermal,
    dissipative_gap,
    evolve,
    initial_state,
    leading_spectrum,
    make_layout,
    steady_state,
)
from .exact_oracle import (  # noqa: F401
    DensityMatrix,
    LindbladSpec,
    build_superoperator,
    dicke_ensemble,
    evolve_exact,
    expectation,
    infinite_temperature_state,
    lindbladian_gap,
)
from .analysis import (  # noqa: F401
    GapEntry,
    GapSeries,
    ScalingFit,
    compare_scaling_models,
    fit_gap_scaling,
    gap_scan,
    late_time_average,
    limit_cycle_amplitude,
    optimal_temperature,
    phase_diagram_scan,
    thermal_occupation,
    two_spin_reference,
)
