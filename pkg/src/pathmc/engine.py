"""Estimators and exact references for operator-chain traces.

The central quantity is ``Tr{A1 ... AS sigma}`` for a chain of path
operators closed by a chain endpoint. A path is drawn either forward (head
index from the endpoint's column law, then each factor's forward law) or
backward (tail index, then backward laws in reverse), the direction chosen
by a coin with probability 1/p for forward. The path's two ratio products
combine into a single value whose mean over paths is the trace and whose
magnitude never exceeds the product of the certified bounds, which fixes
the number of samples up front.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DeadColumn,
    DeadRow,
    DimensionMismatch,
    HistoryCapExceeded,
    InvalidParameter,
    NegativeMassOverflow,
    OracleCapExceeded,
)
from .linalg import (
    ORACLE_CAP,
    NormPair,
    entrywise_abs,
    exact_oracle,
    induced_norm,
)
from .operators import PathOperator, ProductOp, from_rowcol, identity_op
from .sampling import EstimateReport, RngStream, StreamingMoments, sample_count
from .states import ChainEndpoint, DenseVector, Dyad, SampleableState


@dataclass
class Circuit:
    """An initial endpoint, a tower of square operators applied in order,
    and a measurement operator, all on one dimension and exponent pair."""

    initial: ChainEndpoint
    unitaries: list
    measurement: PathOperator
    pair: NormPair = NormPair()

    def __post_init__(self):
        dim = self.initial.rows
        if self.initial.cols != dim:
            raise DimensionMismatch("the initial endpoint must be square")
        for t, u in enumerate(self.unitaries):
            if (u.rows, u.cols) != (dim, dim):
                raise DimensionMismatch(
                    f"operator {t} is {u.rows}x{u.cols}, circuit dimension is {dim}"
                )
        m = self.measurement
        if (m.rows, m.cols) != (dim, dim):
            raise DimensionMismatch(
                f"measurement is {m.rows}x{m.cols}, circuit dimension is {dim}"
            )
        pairs = {self.initial.pair, self.pair, m.pair} | {u.pair for u in self.unitaries}
        if len(pairs) != 1:
            raise InvalidParameter(f"circuit components disagree on the exponent pair: {pairs}")

    @property
    def dim(self) -> int:
        return self.initial.rows


class PathLedger(NamedTuple):
    """One sampled path: direction, endpoints, and both ratio products."""

    direction: str
    head: int
    tail: int
    ratio_p: complex
    ratio_q: complex

    def value(self, pair: NormPair) -> complex:
        """The estimator value of this path under the given pair."""
        if pair.p == 1.0:
            return self.ratio_p
        if pair.q == 1.0:
            return self.ratio_q
        if self.ratio_p == 0 or self.ratio_q == 0:
            return 0.0 + 0j
        return 1.0 / (pair.inv_p / self.ratio_p + pair.inv_q / self.ratio_q)


def draw_path(sigma: ChainEndpoint, op: PathOperator, pair: NormPair,
              rng) -> PathLedger:
    """Sample one path of ``Tr{A sigma}`` and return its ledger.

    Paths that run into a row or column with no weight are returned with
    zero ratios; they carry no weight and the estimator scores them as
    exact zeros.
    """
    if rng.random() < pair.inv_p:
        head, tag = sigma.sample_head(rng)
        try:
            t = op.sample_forward(head, rng)
        except (DeadRow, DeadColumn):
            return PathLedger("forward", head, -1, 0j, 0j)
        sp, sq = sigma.ratios(t.index, head, tag)
        return PathLedger("forward", head, t.index,
                          t.ratio_p * sp, t.ratio_q * sq)
    tail, tag = sigma.sample_tail(rng)
    try:
        t = op.sample_backward(tail, rng)
    except (DeadRow, DeadColumn):
        return PathLedger("backward", -1, tail, 0j, 0j)
    sp, sq = sigma.ratios(tail, t.index, tag)
    return PathLedger("backward", t.index, tail,
                      t.ratio_p * sp, t.ratio_q * sq)


def _check_trace_shapes(sigma: ChainEndpoint, op: PathOperator) -> None:
    if sigma.cols != op.rows or sigma.rows != op.cols:
        raise DimensionMismatch(
            f"endpoint {sigma.rows}x{sigma.cols} does not close an "
            f"{op.rows}x{op.cols} operator chain"
        )
    if sigma.pair != op.pair:
        raise InvalidParameter("endpoint and operator disagree on the exponent pair")


def _estimate(sigma: ChainEndpoint, op: PathOperator, b: float,
              epsilon: float, delta: float, seed: int, workers: int,
              method: str) -> EstimateReport:
    if workers < 1:
        raise InvalidParameter(f"workers must be >= 1, got {workers}")
    _check_trace_shapes(sigma, op)
    pair = sigma.pair
    k = sample_count(epsilon, delta, b)
    started = time.perf_counter()
    base, extra = divmod(k, workers)
    merged = StreamingMoments()
    for w in range(workers):
        count = base + (1 if w < extra else 0)
        if count == 0:
            continue
        rng = RngStream(seed, w)
        chunk = StreamingMoments()
        for _ in range(count):
            chunk.add(draw_path(sigma, op, pair, rng).value(pair))
        merged.merge(chunk)
    return EstimateReport(
        estimate=merged.mean,
        k=k,
        empirical_std=merged.std,
        b=b,
        epsilon=epsilon,
        delta=delta,
        seed=seed,
        elapsed_s=time.perf_counter() - started,
        workers=workers,
        method=method,
    )


def estimate_trace(sigma: ChainEndpoint, op: PathOperator, epsilon: float,
                   delta: float, seed: int = 0, workers: int = 1) -> EstimateReport:
    """Estimate ``Tr{A sigma}`` to additive accuracy epsilon with failure
    probability delta. The sample count is fixed up front from the two
    certified bounds; the empirical spread is reported but never used to
    stop early."""
    return _estimate(sigma, op, sigma.bound * op.bound, epsilon, delta,
                     seed, workers, "markov")


def _conjugated_chain(circuit: Circuit) -> list:
    ups = [u.adjoint() for u in circuit.unitaries]
    downs = list(reversed(circuit.unitaries))
    return ups + [circuit.measurement] + downs


def estimate_expectation(circuit: Circuit, epsilon: float, delta: float,
                         seed: int = 0, workers: int = 1) -> EstimateReport:
    """Estimate ``Tr{U1' ... UT' M UT ... U1 sigma}`` (primes are adjoints).

    The chain is assembled with the product combinator and traced against
    the circuit's initial endpoint; the reported bound is exactly
    ``b_sigma * b_M * prod(b_t ** 2)``.
    """
    op = ProductOp(_conjugated_chain(circuit))
    b = circuit.initial.bound * circuit.measurement.bound
    for u in circuit.unitaries:
        b *= u.bound * u.bound
    report = _estimate(circuit.initial, op, b, epsilon, delta, seed, workers,
                       "markov")
    return report


@dataclass
class AmplitudeReport:
    """An amplitude estimate plus the derived squared magnitude.

    If the amplitude is within epsilon of the truth, the squared value is
    within ``2 |a| epsilon + epsilon**2``; that bound is reported alongside.
    """

    report: EstimateReport
    probability: float
    probability_error: float

    @property
    def amplitude(self) -> complex:
        return self.report.estimate


def estimate_amplitude(initial: SampleableState, unitaries: Sequence[PathOperator],
                       final: SampleableState, epsilon: float, delta: float,
                       seed: int = 0, workers: int = 1,
                       pair: NormPair = NormPair()) -> AmplitudeReport:
    """Estimate ``<final| UT ... U1 |initial>`` through a single dyad trace."""
    sigma = Dyad(ket=initial, bra=final, pair=pair)
    factors = list(reversed(list(unitaries)))
    op = ProductOp(factors) if factors else identity_op(sigma.rows, pair)
    b = sigma.bound
    for f in factors:
        b *= f.bound
    report = _estimate(sigma, op, b, epsilon, delta, seed, workers, "amplitude")
    mag = abs(report.estimate)
    return AmplitudeReport(
        report=report,
        probability=mag * mag,
        probability_error=2.0 * mag * epsilon + epsilon * epsilon,
    )


# ---------------------------------------------------------------------------
# exact references


def _dense_of(x) -> np.ndarray:
    if isinstance(x, (PathOperator, ChainEndpoint)):
        return x.dense()
    return np.asarray(x, dtype=complex)


def expression_interference(sigma, ops) -> float:
    """Interference of a bare chain: ``Tr{|A1| ... |AS| |sigma|}``.

    This prices the chain exactly as written, one factor per operator; use
    :func:`interference_exact` for the conjugated chain of a circuit.
    """
    abs_sigma = entrywise_abs(_dense_of(sigma))
    abs_ops = [entrywise_abs(_dense_of(a)) for a in ops]
    return float(exact_oracle(abs_sigma, abs_ops).real)


def expectation_exact(circuit: Circuit) -> complex:
    """Dense reference value of the circuit's conjugated-chain trace."""
    units = [u.dense() for u in circuit.unitaries]
    factors = [u.conj().T for u in units]
    factors.append(circuit.measurement.dense())
    factors.extend(reversed(units))
    return exact_oracle(circuit.initial.dense(), factors)


def interference_exact(circuit: Circuit) -> float:
    """Interference of a circuit's conjugated chain.

    Equals ``Tr{|U1|^T ... |UT|^T |M| |UT| ... |U1| |sigma|}`` because the
    entrywise magnitudes of an adjoint are the transposed magnitudes.
    """
    abs_units = [entrywise_abs(u.dense()) for u in circuit.unitaries]
    factors = [a.T for a in abs_units]
    factors.append(entrywise_abs(circuit.measurement.dense()))
    factors.extend(reversed(abs_units))
    sigma = entrywise_abs(circuit.initial.dense())
    return float(exact_oracle(sigma, factors).real)


def interference_state_exact(unitaries, initial) -> float:
    """State interference after a tower of operators: the circuit
    interference with the measurement replaced by the all-ones-diagonal,
    i.e. ``Tr{C |sigma| C^T}`` with ``C = |UT| ... |U1|``."""
    mats = [entrywise_abs(_dense_of(u)) for u in unitaries]
    sigma = entrywise_abs(_dense_of(initial))
    dim = sigma.shape[0]
    chain = np.eye(dim)
    for m in mats:
        chain = m @ chain
    return float(np.trace(chain @ sigma @ chain.T).real)


_CLOSED_FORMS = {
    "permutation": lambda s: 1.0,
    "diagonal": lambda s: 1.0,
    "pauli": lambda s: 1.0,
    "oracle": lambda s: 1.0,
    "uniform_dyad": lambda s: 1.0,
    "projector_family": lambda s: 1.0,
    "haar": lambda s: math.sqrt(s[1] + 1),
    "fourier": lambda s: 2.0 ** (s[1] / 2.0),
    "hadamard": lambda s: 2.0 ** (s[1] / 2.0),
    "grover": lambda s: 3.0 - 4.0 / (1 << s[1]),
}


def interference_capacity(target, pair: NormPair = NormPair()) -> float:
    """The largest interference a single insertion of the operator can
    contribute: the induced q -> q norm of its entrywise magnitudes.

    Operators that declare special structure use exact closed forms (for
    the balanced pair); everything else is priced densely, subject to the
    dense cap.
    """
    if isinstance(target, (PathOperator, ChainEndpoint)):
        structure = getattr(target, "structure", None)
        if structure and target.pair.q == 2.0:
            form = _CLOSED_FORMS.get(structure[0])
            if form is not None:
                return form(structure)
        if max(target.rows, target.cols) > ORACLE_CAP:
            raise OracleCapExceeded(
                f"no closed form declared and {target.rows}x{target.cols} "
                f"exceeds the dense cap"
            )
        return induced_norm(entrywise_abs(target.dense()), target.pair.q)
    return induced_norm(entrywise_abs(np.asarray(target, dtype=complex)), pair.q)


@dataclass
class DecoherenceDiagnostics:
    """Cross-checks attached to a history matrix."""

    path_sum: complex
    abs_sum: float
    expectation: complex
    interference: float
    max_offdiagonal: float


def decoherence_matrix(circuit: Circuit, cap: int = 4096):
    """The full history matrix ``D[j, k]`` of a circuit.

    Histories are tuples (j0, ..., jT) of basis indices between the
    operators; ``D[j, k] = M[kT, jT] * amp(j) * conj(amp(k)) * sigma[j0, k0]``
    with ``amp(j)`` the product of the operator matrix elements along j.
    Row/column order is lexicographic in the history tuple. Raises
    :class:`HistoryCapExceeded` when there are more than ``cap`` histories.
    """
    dim = circuit.dim
    steps = len(circuit.unitaries)
    count = dim ** (steps + 1)
    if count > cap:
        raise HistoryCapExceeded(f"{count} histories exceed the cap of {cap}")
    units = [u.dense() for u in circuit.unitaries]
    sigma = circuit.initial.dense()
    meas = circuit.measurement.dense()

    histories = list(itertools.product(range(dim), repeat=steps + 1))
    amps = np.ones(count, dtype=complex)
    for h, hist in enumerate(histories):
        a = 1.0 + 0j
        for t, u in enumerate(units):
            a *= u[hist[t + 1], hist[t]]
        amps[h] = a
    first = np.array([h[0] for h in histories])
    last = np.array([h[-1] for h in histories])
    dmat = (
        amps[:, None]
        * amps.conj()[None, :]
        * sigma[first[:, None], first[None, :]]
        * meas[last[None, :], last[:, None]]
    )
    expectation = exact_oracle(
        sigma,
        [u.conj().T for u in units] + [meas] + [u for u in reversed(units)],
    )
    off = dmat - np.diag(np.diag(dmat))
    diagnostics = DecoherenceDiagnostics(
        path_sum=complex(dmat.sum()),
        abs_sum=float(np.abs(dmat).sum()),
        expectation=expectation,
        interference=interference_exact(circuit),
        max_offdiagonal=float(np.max(np.abs(off))) if count > 1 else 0.0,
    )
    return dmat, diagnostics


# ---------------------------------------------------------------------------
# stochastic mode


@dataclass
class StochasticReport:
    """Estimate of a final-function average over a chain of quasi-stochastic
    maps, with the per-operator negativity prices."""

    report: EstimateReport
    op_bounds: list = field(default_factory=list)
    mana: list = field(default_factory=list)

    @property
    def estimate(self) -> complex:
        return self.report.estimate


def stochastic_mode_estimate(initial, ops, final, epsilon: float, delta: float,
                             seed: int = 0, workers: int = 1,
                             b_cap: float = 1e6) -> StochasticReport:
    """Estimate ``<final, A_S ... A_1 initial>`` with the (inf, 1) pair.

    Only the backward direction is ever sampled: the tail is drawn from
    ``|initial|`` and each operator steps column-proportionally, which for
    column-stochastic matrices is exactly the forward-in-time Markov walk.
    Each operator's bound is its largest absolute column sum; its logarithm
    (the negativity price, zero for genuinely stochastic maps) is reported
    per operator. The total bound ``max|final| * prod(bounds) * sum|initial|``
    must stay under ``b_cap``.
    """
    pair = NormPair(math.inf, 1.0)
    mats = [np.asarray(a, dtype=complex) for a in ops]
    dims = {m.shape for m in mats}
    if len(dims) > 1 or any(m.shape[0] != m.shape[1] for m in mats):
        raise DimensionMismatch(f"chain operators must share one square shape, got {dims}")
    init_state = DenseVector(initial)
    fin = np.asarray(final, dtype=complex).ravel()
    sigma = Dyad(ket=init_state, bra=DenseVector(fin.conj()), pair=pair)
    factors = [from_rowcol(m, pair) for m in mats]
    op = ProductOp(list(reversed(factors))) if factors else identity_op(sigma.rows, pair)
    b = sigma.bound
    for f in factors:
        b *= f.bound
    if b > b_cap:
        raise NegativeMassOverflow(
            f"sampling cost {b} exceeds the cap {b_cap}; the chain is too negative"
        )
    report = _estimate(sigma, op, b, epsilon, delta, seed, workers, "stochastic")
    return StochasticReport(
        report=report,
        op_bounds=[f.bound for f in factors],
        mana=[math.log(f.bound) for f in factors],
    )


# ---------------------------------------------------------------------------
# small-dimension reference for the best possible path distribution


@dataclass
class OptimalPathReference:
    """Exhaustive path table: values, the variance-optimal one-chain
    distribution proportional to |value|, and its cost, which equals the
    expression interference."""

    paths: list
    values: list
    probabilities: list
    best_bound: float


def optimal_path_distribution(sigma, ops, cap: int = 4096) -> OptimalPathReference:
    """Enumerate every path of ``Tr{A1 ... AS sigma}`` at small dimensions.

    The distribution proportional to |V(path)| is the best any single-chain
    sampler can do; its bound ``sum |V|`` is the expression interference and
    is reported for comparison against certified bounds.
    """
    sig = _dense_of(sigma)
    mats = [_dense_of(a) for a in ops]
    dims = [m.shape[0] for m in mats] + [sig.shape[0]]
    total = math.prod(dims)
    if total > cap:
        raise HistoryCapExceeded(f"{total} paths exceed the cap of {cap}")
    paths = []
    values = []
    for path in itertools.product(*(range(d) for d in dims)):
        v = sig[path[-1], path[0]]
        for t, m in enumerate(mats):
            v *= m[path[t], path[t + 1]]
        paths.append(path)
        values.append(complex(v))
    mass = sum(abs(v) for v in values)
    if mass > 0.0:
        probabilities = [abs(v) / mass for v in values]
    else:
        probabilities = [0.0] * len(values)
    return OptimalPathReference(paths, values, probabilities, mass)
