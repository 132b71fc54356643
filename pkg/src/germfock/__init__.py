"""Complex-germ semiclassical states in truncated bosonic Fock space."""
from .canonical import (
    AssembledVector,
    AssemblySpec,
    QuantizationError,
    assemble,
    assemble_evolved,
    quantization_defects,
    sector_component_circle,
)
from .dynamics import IntegrationError, Trajectory, evolve, transport_frame
from .fock import (
    FockBasis,
    FockState,
    TruncationSpec,
    apply_hamiltonian,
    apply_ladder,
    hamiltonian_matrix,
    inner_product,
    restrict,
    sector_to_state,
    state_to_sector,
)
from .gaussian import (
    CreationSymbol,
    GaussianData,
    GermLadderSpec,
    QuadratureError,
    apply_germ_ladder,
    build_gaussian,
    overlap_pair,
)
from .geometry import (
    GermFrame,
    GermReport,
    IsotropicManifold,
    Loop,
    build_M,
    build_M_grid,
    gap_bound,
    loop_action,
    quantization_defect,
    rank_update_det,
    validate_germ,
    validate_manifold,
)
from .hamiltonian import HamiltonianCoeffs
from .scenario import ConfigError, Scenario, load_scenario
from .verification import (
    ResidualReport,
    epsilon_scan,
    heisenberg_consistency,
    residual_norm,
    stationary_energy,
)

__version__ = "0.1.0"
