"""Monte Carlo estimation of operator-chain traces by path sampling.

Operators expose cheap conditional transition laws instead of matrices;
states and density-like endpoints expose unconditional endpoint laws.
Certified sampling-cost bounds multiply along any composition, which turns
additive-accuracy trace estimation into a fixed, known number of cheap
path draws.
"""

from .errors import (
    DeadColumn,
    DeadRow,
    DimensionMismatch,
    HistoryCapExceeded,
    IndexMapInconsistent,
    InvalidParameter,
    InvalidWeights,
    IterationLimit,
    NegativeMassOverflow,
    NonUnitPhase,
    NormViolation,
    NotNormalized,
    OracleCapExceeded,
    PathmcError,
    SchemaError,
    ShapeMismatch,
    ZeroVector,
)
from .linalg import (
    ORACLE_CAP,
    NormPair,
    PositiveVectorPair,
    SparseEntries,
    block_decompose,
    conjugate_exponent,
    dense_exp,
    exact_oracle,
    entrywise_abs,
    generalized_singular_vectors,
    induced_norm,
)
from .sampling import (
    CumulativeTable,
    EstimateReport,
    RngStream,
    StreamingMoments,
    coin,
    sample_count,
    sample_discrete,
    sample_poisson,
    streaming_mean,
)
from .operators import (
    BlockDiagonal,
    DenseOptimal,
    ExpOp,
    HaarWavelet,
    PathOperator,
    PauliString,
    PhasedPermutation,
    ProductOp,
    QueryCounter,
    RowCol,
    ScaledOp,
    ShiftOracle,
    SumOp,
    SupportEntry,
    Transition,
    UniformDyad,
    adjoint,
    block_diagonal,
    controlled,
    diagonal_unitary,
    exp_op,
    fourier_transform,
    from_dense_optimal,
    from_rowcol,
    from_sparse,
    grover_reflection,
    haar_wavelet,
    identity_op,
    pauli_string,
    permutation,
    product_ops,
    scale,
    shift_oracle,
    sum_ops,
    tensor_embed,
    transpose,
    walsh_hadamard,
)
from .states import (
    BasisState,
    ChainEndpoint,
    DenseVector,
    DensityEndpoint,
    Dyad,
    LowRankEndpoint,
    PhaseState,
    ProductState,
    SampleableState,
    StateAsOperator,
    basis_state,
    dense_vector,
    density,
    dyad,
    low_rank,
    phase_state,
    product_state,
    projector_family,
    uniform_state,
)
from .engine import (
    AmplitudeReport,
    Circuit,
    DecoherenceDiagnostics,
    OptimalPathReference,
    PathLedger,
    StochasticReport,
    decoherence_matrix,
    draw_path,
    estimate_amplitude,
    estimate_expectation,
    estimate_trace,
    expectation_exact,
    expression_interference,
    interference_capacity,
    interference_exact,
    interference_state_exact,
    optimal_path_distribution,
    stochastic_mode_estimate,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeReport",
    "BasisState",
    "BlockDiagonal",
    "ChainEndpoint",
    "Circuit",
    "CumulativeTable",
    "DeadColumn",
    "DeadRow",
    "DecoherenceDiagnostics",
    "DenseOptimal",
    "DenseVector",
    "DensityEndpoint",
    "DimensionMismatch",
    "Dyad",
    "EstimateReport",
    "ExpOp",
    "HaarWavelet",
    "HistoryCapExceeded",
    "IndexMapInconsistent",
    "InvalidParameter",
    "InvalidWeights",
    "IterationLimit",
    "LowRankEndpoint",
    "NegativeMassOverflow",
    "NonUnitPhase",
    "NormPair",
    "NormViolation",
    "NotNormalized",
    "ORACLE_CAP",
    "OptimalPathReference",
    "OracleCapExceeded",
    "PathLedger",
    "PathOperator",
    "PathmcError",
    "PauliString",
    "PhaseState",
    "PhasedPermutation",
    "PositiveVectorPair",
    "ProductOp",
    "ProductState",
    "QueryCounter",
    "RngStream",
    "RowCol",
    "SampleableState",
    "ScaledOp",
    "SchemaError",
    "ShapeMismatch",
    "ShiftOracle",
    "SparseEntries",
    "StateAsOperator",
    "StochasticReport",
    "StreamingMoments",
    "SumOp",
    "SupportEntry",
    "Transition",
    "UniformDyad",
    "ZeroVector",
    "adjoint",
    "basis_state",
    "block_decompose",
    "block_diagonal",
    "coin",
    "conjugate_exponent",
    "controlled",
    "decoherence_matrix",
    "dense_exp",
    "dense_vector",
    "density",
    "diagonal_unitary",
    "draw_path",
    "dyad",
    "entrywise_abs",
    "estimate_amplitude",
    "estimate_expectation",
    "estimate_trace",
    "exact_oracle",
    "expectation_exact",
    "exp_op",
    "expression_interference",
    "fourier_transform",
    "from_dense_optimal",
    "from_rowcol",
    "from_sparse",
    "generalized_singular_vectors",
    "grover_reflection",
    "haar_wavelet",
    "identity_op",
    "induced_norm",
    "interference_capacity",
    "interference_exact",
    "interference_state_exact",
    "low_rank",
    "optimal_path_distribution",
    "pauli_string",
    "permutation",
    "phase_state",
    "product_ops",
    "product_state",
    "projector_family",
    "sample_count",
    "sample_discrete",
    "sample_poisson",
    "scale",
    "shift_oracle",
    "stochastic_mode_estimate",
    "streaming_mean",
    "sum_ops",
    "tensor_embed",
    "transpose",
    "uniform_state",
    "walsh_hadamard",
]
