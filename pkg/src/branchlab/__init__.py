"""branchlab: wave-function branching simulator and credence engine."""

__version__ = "0.1.0"

from .qstate import (  # noqa: F401
    DensityOperator,
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
    basis_state,
    density_of,
    ket,
    partial_trace,
    product_state,
    reduced_density,
    tensor,
)
from .branching import (  # noqa: F401
    Branch,
    BranchSet,
    MeasurementBasis,
    Wiring,
    apply_wiring,
    branch_decompose,
    conditional_measure,
    measure,
    z_basis,
)
from .credence import (  # noqa: F401
    CredenceTable,
    General,
    HalfHalf,
    ObserverCopy,
    OneThirdTwoThirds,
    PageObserver,
    ProofReport,
    RationalWeights,
    born_credences,
    equal_amplitude_refine,
    esp_invariance_check,
    indifference_credences,
    page_aggregate,
    rationalize,
    refine_and_count,
    replay_proof,
    strong_esp,
    swap_check,
)
from .cosmo import (  # noqa: F401
    BranchHistory,
    ExponentialHistory,
    MeasureResult,
    TabulatedHistory,
    branch_measure,
    normalize_families,
)
from .epistemics import (  # noqa: F401
    Bet,
    BookReport,
    Payoff,
    bayes_update,
    confirm_sequence,
    dutch_book_check,
    expected_value,
)
from .scenarios import (  # noqa: F401
    Query,
    Scenario,
    WorldState,
    builtin,
    enumerate_copies,
    parse_scenario,
    run,
    scenario_to_dict,
    solve,
)
