"""Operators that can be sampled along transition paths.

A :class:`PathOperator` represents a matrix A together with a decomposition
``A[m, n] = sum_k alpha[m, n, k]`` and a pair of transition laws: a forward
law P(n, k | m) over (column, branch) given a row, and a backward law
Q(m, k | n) over (row, branch) given a column. Each sampled transition
reports the two importance ratios ``alpha / P`` and ``alpha / Q``; the
certified ``bound`` promises ``|alpha| <= bound * P**(1/p) * Q**(1/q)``
on the whole support, which is what the estimators' sample-count rule
relies on.

Every operator also supports full-support enumeration through
:meth:`PathOperator.entries`, which is how the test suite audits the
decomposition, the transition laws, and the bound at small dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, NamedTuple

import numpy as np

from .errors import (
    DeadColumn,
    DeadRow,
    IndexMapInconsistent,
    InvalidParameter,
    InvalidWeights,
    NonUnitPhase,
    ShapeMismatch,
)
from .linalg import (
    NormPair,
    SparseEntries,
    as_complex_matrix,
    generalized_singular_vectors,
)
from .sampling import CumulativeTable, sample_poisson

_PHASE_TOL = 1e-12


class Transition(NamedTuple):
    """One sampled step. ``ratio_p`` is alpha/P, ``ratio_q`` is alpha/Q.

    Both ratios are finite, and they vanish together (exactly when the
    sampled branch carries no weight).
    """

    index: int
    tag: Any
    ratio_p: complex
    ratio_q: complex


class SupportEntry(NamedTuple):
    """One (row, col, branch) element of the support, with its weight and
    both transition probabilities."""

    row: int
    col: int
    tag: Any
    alpha: complex
    prob_p: float
    prob_q: float


class PathOperator:
    """Base class: a matrix with sampleable forward/backward transitions."""

    rows: int
    cols: int
    bound: float
    pair: NormPair
    #: Optional declaration of special structure, used for closed-form
    #: interference capacities (e.g. ("haar", n)).
    structure: tuple | None = None

    def sample_forward(self, m: int, rng) -> Transition:
        raise NotImplementedError

    def sample_backward(self, n: int, rng) -> Transition:
        raise NotImplementedError

    def entries(self) -> Iterator[SupportEntry]:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        """Assemble the represented matrix by summing the support."""
        out = np.zeros((self.rows, self.cols), dtype=complex)
        for e in self.entries():
            out[e.row, e.col] += e.alpha
        return out

    def adjoint(self) -> "PathOperator":
        """Conjugate transpose. The generic wrapper swaps the two transition
        laws, which preserves the certified bound only for the balanced
        pair; structured operators override this with native adjoints valid
        for any pair."""
        return AdjointOp(self)

    def transpose(self) -> "PathOperator":
        return TransposeOp(self)

    def _require_square(self, what: str) -> None:
        if self.rows != self.cols:
            raise ShapeMismatch(f"{what} needs a square operator, got {self.rows}x{self.cols}")


def _require_same_pair(ops) -> NormPair:
    pairs = {op.pair for op in ops}
    if len(pairs) != 1:
        raise InvalidParameter(f"operands disagree on the exponent pair: {pairs}")
    return next(iter(pairs))


# ---------------------------------------------------------------------------
# dense constructions


class _TableOp(PathOperator):
    """Shared machinery for operators stored as explicit per-row/per-column
    transition tables with singleton branches."""

    def __init__(self):
        self._row_tables: dict = {}
        self._col_tables: dict = {}

    # subclasses provide:
    #   _row_support(m)  -> (cols, alphas, probs_p) or None for a dead row
    #   _col_support(n)  -> (rows, alphas, probs_q) or None
    #   _ratio_pair(m, n, alpha) -> (ratio_p, ratio_q)

    def sample_forward(self, m: int, rng) -> Transition:
        if not 0 <= m < self.rows:
            raise InvalidParameter(f"row {m} outside 0..{self.rows - 1}")
        hit = self._row_tables.get(m)
        if hit is None:
            support = self._row_support(m)
            if support is None:
                self._row_tables[m] = False
                raise DeadRow(f"row {m} carries no weight")
            cols, alphas, probs = support
            table = CumulativeTable(probs)
            ratios = [self._ratio_pair(m, n, a) for n, a in zip(cols, alphas)]
            hit = (table, cols, ratios)
            self._row_tables[m] = hit
        elif hit is False:
            raise DeadRow(f"row {m} carries no weight")
        table, cols, ratios = hit
        j = table.draw(rng)
        rp, rq = ratios[j]
        return Transition(cols[j], None, rp, rq)

    def sample_backward(self, n: int, rng) -> Transition:
        if not 0 <= n < self.cols:
            raise InvalidParameter(f"column {n} outside 0..{self.cols - 1}")
        hit = self._col_tables.get(n)
        if hit is None:
            support = self._col_support(n)
            if support is None:
                self._col_tables[n] = False
                raise DeadColumn(f"column {n} carries no weight")
            rows, alphas, probs = support
            table = CumulativeTable(probs)
            ratios = [self._ratio_pair(m, n, a) for m, a in zip(rows, alphas)]
            hit = (table, rows, ratios)
            self._col_tables[n] = hit
        elif hit is False:
            raise DeadColumn(f"column {n} carries no weight")
        table, rows, ratios = hit
        j = table.draw(rng)
        rp, rq = ratios[j]
        return Transition(rows[j], None, rp, rq)

    def entries(self) -> Iterator[SupportEntry]:
        for m in range(self.rows):
            support = self._row_support(m)
            if support is None:
                continue
            cols, alphas, probs_p = support
            for n, a, pp in zip(cols, alphas, probs_p):
                yield SupportEntry(m, n, None, a, pp, self._prob_q(m, n))

    def _prob_q(self, m: int, n: int) -> float:
        raise NotImplementedError


class DenseOptimal(_TableOp):
    """Transition laws built from the generalized singular vectors of |A|.

    Forward probabilities are ``|A[m, n]| v[n] / (|A| v)[m]`` and backward
    ones ``|A[m, n]| u[m] / (|A|^T u)[n]``; at the fixed point the certified
    bound equals the induced q -> q norm of |A|, which no decomposition with
    singleton branches can beat.
    """

    def __init__(self, matrix, pair: NormPair = NormPair()):
        super().__init__()
        if not (1.0 < pair.p < math.inf):
            raise InvalidParameter(
                f"optimal dense transitions need p in (1, inf), got {pair.p}"
            )
        a = as_complex_matrix(matrix)
        self._a = a
        self._abs = np.abs(a)
        self.rows, self.cols = a.shape
        self.pair = pair
        vectors = generalized_singular_vectors(self._abs, pair)
        self._u = vectors.u
        self._v = vectors.v
        self._row_w = self._abs @ self._v
        self._col_w = self._abs.T @ self._u
        # The certified bound is the exact supremum of the per-entry cost
        # ratio, which any valid decomposition dominates the induced norm
        # with; at the fixed point it collapses to the norm estimate, so
        # taking the supremum only absorbs the iteration residual.
        ms, ns = np.nonzero(self._abs)
        if ms.size:
            ratios = (self._row_w[ms] / self._v[ns]) ** pair.inv_p * (
                self._col_w[ns] / self._u[ms]
            ) ** pair.inv_q
            self.bound = float(ratios.max())
        else:
            self.bound = 0.0

    def _row_support(self, m):
        cols = np.flatnonzero(self._abs[m])
        if cols.size == 0:
            return None
        alphas = [complex(self._a[m, n]) for n in cols]
        w = self._abs[m, cols] * self._v[cols] / self._row_w[m]
        return [int(n) for n in cols], alphas, [float(x) for x in w]

    def _col_support(self, n):
        rows = np.flatnonzero(self._abs[:, n])
        if rows.size == 0:
            return None
        alphas = [complex(self._a[m, n]) for m in rows]
        w = self._abs[rows, n] * self._u[rows] / self._col_w[n]
        return [int(m) for m in rows], alphas, [float(x) for x in w]

    def _ratio_pair(self, m, n, alpha):
        phase = alpha / abs(alpha)
        return (
            phase * float(self._row_w[m] / self._v[n]),
            phase * float(self._col_w[n] / self._u[m]),
        )

    def _prob_q(self, m, n):
        return float(self._abs[m, n] * self._u[m] / self._col_w[n])


class RowCol(_TableOp):
    """Transition laws proportional to |A| row- and column-wise.

    The certified bound is ``r**(1/p) * c**(1/q)`` where r and c are the
    largest absolute row and column sums. Rows or columns with no weight are
    rejected at construction.
    """

    def __init__(self, matrix, pair: NormPair = NormPair()):
        super().__init__()
        self.pair = pair
        if isinstance(matrix, SparseEntries):
            self.rows, self.cols = matrix.rows, matrix.cols
            items = [(m, n, v) for (m, n, v) in matrix.triplets if v != 0]
        else:
            a = as_complex_matrix(matrix)
            self.rows, self.cols = a.shape
            ms, ns = np.nonzero(a)
            items = [(int(m), int(n), complex(a[m, n])) for m, n in zip(ms, ns)]
        self._by_row = [[] for _ in range(self.rows)]
        self._by_col = [[] for _ in range(self.cols)]
        row_sum = [0.0] * self.rows
        col_sum = [0.0] * self.cols
        for m, n, v in items:
            self._by_row[m].append((n, v))
            self._by_col[n].append((m, v))
            row_sum[m] += abs(v)
            col_sum[n] += abs(v)
        for m, s in enumerate(row_sum):
            if s == 0.0:
                raise DeadRow(f"row {m} has no weight; row/column transitions need full support")
        for n, s in enumerate(col_sum):
            if s == 0.0:
                raise DeadColumn(f"column {n} has no weight; row/column transitions need full support")
        self._row_sum = row_sum
        self._col_sum = col_sum
        r = max(row_sum)
        c = max(col_sum)
        self.bound = r ** pair.inv_p * c ** pair.inv_q

    def _row_support(self, m):
        cols = [n for n, _ in self._by_row[m]]
        alphas = [v for _, v in self._by_row[m]]
        s = self._row_sum[m]
        return cols, alphas, [abs(v) / s for v in alphas]

    def _col_support(self, n):
        rows = [m for m, _ in self._by_col[n]]
        alphas = [v for _, v in self._by_col[n]]
        s = self._col_sum[n]
        return rows, alphas, [abs(v) / s for v in alphas]

    def _ratio_pair(self, m, n, alpha):
        phase = alpha / abs(alpha)
        return phase * self._row_sum[m], phase * self._col_sum[n]

    def _prob_q(self, m, n):
        for r, v in self._by_col[n]:
            if r == m:
                return abs(v) / self._col_sum[n]
        return 0.0


def from_dense_optimal(matrix, pair: NormPair = NormPair()) -> DenseOptimal:
    """Optimal singleton-branch transitions for a dense matrix."""
    return DenseOptimal(matrix, pair)


def from_rowcol(matrix, pair: NormPair = NormPair()) -> RowCol:
    """Row/column-sum transitions for a dense matrix or sparse triplets."""
    return RowCol(matrix, pair)


def from_sparse(entries: SparseEntries, pair: NormPair = NormPair()) -> RowCol:
    """Row/column-sum transitions taken directly from sparse triplets."""
    if not isinstance(entries, SparseEntries):
        raise InvalidParameter("from_sparse expects SparseEntries")
    return RowCol(entries, pair)


# ---------------------------------------------------------------------------
# structured unitaries


class PhasedPermutation(PathOperator):
    """A permutation matrix with unit-modulus phases: row m carries its
    whole weight at column perm[m]."""

    def __init__(self, perm, phases=None, pair: NormPair = NormPair(),
                 structure: tuple = ("permutation",)):
        perm = [int(x) for x in perm]
        dim = len(perm)
        if dim == 0:
            raise InvalidParameter("empty permutation")
        if sorted(perm) != list(range(dim)):
            raise InvalidParameter("perm is not a bijection on 0..dim-1")
        if phases is None:
            phases = [1.0 + 0.0j] * dim
        phases = [complex(x) for x in phases]
        if len(phases) != dim:
            raise InvalidParameter("need one phase per index")
        for ph in phases:
            if abs(abs(ph) - 1.0) > _PHASE_TOL:
                raise NonUnitPhase(f"phase {ph} is off the unit circle")
        inv = [0] * dim
        for m, n in enumerate(perm):
            inv[n] = m
        self._perm = perm
        self._inv = inv
        self._phases = phases
        self.rows = self.cols = dim
        self.pair = pair
        self.bound = 1.0
        self.structure = structure

    def sample_forward(self, m, rng):
        ph = self._phases[m]
        return Transition(self._perm[m], None, ph, ph)

    def sample_backward(self, n, rng):
        m = self._inv[n]
        ph = self._phases[m]
        return Transition(m, None, ph, ph)

    def entries(self):
        for m in range(self.rows):
            yield SupportEntry(m, self._perm[m], None, self._phases[m], 1.0, 1.0)

    def adjoint(self):
        return PhasedPermutation(
            self._inv,
            [self._phases[self._inv[n]].conjugate() for n in range(self.rows)],
            self.pair,
            self.structure,
        )

    def transpose(self):
        return PhasedPermutation(
            self._inv,
            [self._phases[self._inv[n]] for n in range(self.rows)],
            self.pair,
            self.structure,
        )


def identity_op(dim: int, pair: NormPair = NormPair()) -> PhasedPermutation:
    return PhasedPermutation(range(dim), pair=pair)


def permutation(perm, phases=None, pair: NormPair = NormPair()) -> PhasedPermutation:
    return PhasedPermutation(perm, phases, pair)


def diagonal_unitary(values, dim: int | None = None,
                     pair: NormPair = NormPair()) -> PhasedPermutation:
    """Diagonal matrix of unit-modulus values, given as a sequence or as a
    function of the index (then ``dim`` is required)."""
    if callable(values):
        if dim is None:
            raise InvalidParameter("a value function needs an explicit dim")
        values = [values(m) for m in range(dim)]
    else:
        values = list(values)
        if dim is not None and dim != len(values):
            raise InvalidParameter("dim disagrees with the number of values")
    return PhasedPermutation(range(len(values)), values, pair, structure=("diagonal",))


_PAULI_LETTERS = frozenset("IXYZ")


class PauliString(PathOperator):
    """Tensor product of single-qubit Pauli matrices, e.g. "XIZ"."""

    def __init__(self, letters: str, pair: NormPair = NormPair()):
        if not letters or set(letters) - _PAULI_LETTERS:
            raise InvalidParameter(f"Pauli string must be nonempty over IXYZ, got {letters!r}")
        self._letters = letters
        n = len(letters)
        self._n = n
        mask = 0
        for j, c in enumerate(letters):
            if c in "XY":
                mask |= 1 << (n - 1 - j)
        self._mask = mask
        self.rows = self.cols = 1 << n
        self.pair = pair
        self.bound = 1.0
        self.structure = ("pauli",)

    def _value(self, m: int) -> complex:
        """The single nonzero entry of row m, at column m ^ mask."""
        val = 1.0 + 0.0j
        n = self._n
        for j, c in enumerate(self._letters):
            bit = (m >> (n - 1 - j)) & 1
            if c == "Z":
                if bit:
                    val = -val
            elif c == "Y":
                val *= 1j if bit else -1j
        return val

    def sample_forward(self, m, rng):
        v = self._value(m)
        return Transition(m ^ self._mask, None, v, v)

    def sample_backward(self, n, rng):
        m = n ^ self._mask
        v = self._value(m)
        return Transition(m, None, v, v)

    def entries(self):
        for m in range(self.rows):
            yield SupportEntry(m, m ^ self._mask, None, self._value(m), 1.0, 1.0)

    def adjoint(self):
        return self

    def transpose(self):
        flips = self._letters.count("Y")
        return self if flips % 2 == 0 else ScaledOp(-1.0, self)


def pauli_string(letters: str, pair: NormPair = NormPair()) -> PauliString:
    return PauliString(letters, pair)


class UniformDyad(PathOperator):
    """The rank-one matrix with every entry 1/dim (a uniform projector).

    Both transition laws are uniform and every ratio is exactly one, for any
    exponent pair, so the certified bound is 1.
    """

    def __init__(self, dim: int, pair: NormPair = NormPair()):
        if dim <= 0:
            raise InvalidParameter("dimension must be positive")
        self.rows = self.cols = dim
        self.pair = pair
        self.bound = 1.0
        self.structure = ("uniform_dyad", dim)

    def sample_forward(self, m, rng):
        return Transition(int(rng.random() * self.rows), None, 1.0 + 0j, 1.0 + 0j)

    def sample_backward(self, n, rng):
        return Transition(int(rng.random() * self.rows), None, 1.0 + 0j, 1.0 + 0j)

    def entries(self):
        inv = 1.0 / self.rows
        for m in range(self.rows):
            for n in range(self.cols):
                yield SupportEntry(m, n, None, complex(inv), inv, inv)

    def adjoint(self):
        return self

    def transpose(self):
        return self


def grover_reflection(n_qubits: int, pair: NormPair = NormPair()) -> PathOperator:
    """The reflection 1 - 2|u><u| about the uniform state on n qubits,
    expressed as a two-term mixture with certified bound 3."""
    dim = 1 << n_qubits
    op = sum_ops([(1.0, identity_op(dim, pair)), (-2.0, UniformDyad(dim, pair))])
    op.structure = ("grover", n_qubits)
    return op


class HaarWavelet(PathOperator):
    """The discrete Haar wavelet transform on n bits.

    Row 0 is the uniform average; row x with leading set bit at position s
    (counted from the most significant bit) carries ``+-2**-((s+1)/2)`` on
    the 2**(s+1) columns whose trailing bits agree with x. Every column has
    exactly n+1 nonzero entries, so backward transitions are uniform over
    n+1 candidates and the certified bound is sqrt(n+1).
    """

    def __init__(self, n_bits: int, pair: NormPair = NormPair()):
        if n_bits <= 0:
            raise InvalidParameter("need at least one bit")
        if pair.p != 2.0:
            raise InvalidParameter("wavelet transitions are certified for the balanced pair only")
        self._n = n_bits
        self.rows = self.cols = 1 << n_bits
        self.pair = pair
        self.bound = math.sqrt(n_bits + 1)
        self.structure = ("haar", n_bits)

    def _leading(self, x: int) -> int:
        """Position of the leading set bit, counted from the top (x > 0)."""
        return self._n - x.bit_length()

    def entry(self, x: int, y: int) -> float:
        n = self._n
        if x == 0:
            return 2.0 ** (-n / 2.0)
        s = self._leading(x)
        low = n - 1 - s
        if (y ^ x) & ((1 << low) - 1):
            return 0.0
        sign = -1.0 if (y >> low) & 1 else 1.0
        return sign * 2.0 ** (-(s + 1) / 2.0)

    def sample_forward(self, x, rng):
        n = self._n
        if x == 0:
            y = int(rng.random() * self.rows)
            rp = 2.0 ** (n / 2.0)
            rq = (n + 1) * 2.0 ** (-n / 2.0)
            return Transition(y, None, rp, rq)
        s = self._leading(x)
        low = n - 1 - s
        free = s + 1
        r = int(rng.random() * (1 << free))
        y = (r << low) | (x & ((1 << low) - 1))
        sign = -1.0 if (y >> low) & 1 else 1.0
        rp = sign * 2.0 ** (free / 2.0)
        rq = sign * (n + 1) * 2.0 ** (-free / 2.0)
        return Transition(y, None, rp, rq)

    def sample_backward(self, y, rng):
        n = self._n
        c = int(rng.random() * (n + 1))
        if c == 0:
            a = 2.0 ** (-n / 2.0)
            return Transition(0, None, a * self.rows, (n + 1) * a)
        s = c - 1
        low = n - 1 - s
        x = (1 << low) | (y & ((1 << low) - 1))
        sign = -1.0 if (y >> low) & 1 else 1.0
        a = sign * 2.0 ** (-(s + 1) / 2.0)
        return Transition(x, None, a * (1 << (s + 1)), (n + 1) * a)

    def entries(self):
        n = self._n
        inv_q = 1.0 / (n + 1)
        for y in range(self.cols):
            yield SupportEntry(0, y, None, complex(2.0 ** (-n / 2.0)), 2.0 ** (-n), inv_q)
        for x in range(1, self.rows):
            s = self._leading(x)
            low = n - 1 - s
            prob_p = 2.0 ** (-(s + 1))
            tail = x & ((1 << low) - 1)
            for r in range(1 << (s + 1)):
                y = (r << low) | tail
                a = self.entry(x, y)
                yield SupportEntry(x, y, None, complex(a), prob_p, inv_q)


def haar_wavelet(n_bits: int, pair: NormPair = NormPair()) -> HaarWavelet:
    return HaarWavelet(n_bits, pair)


@dataclass
class QueryCounter:
    """Mutable counter threaded through oracle operators."""

    count: int = 0


class ShiftOracle(PathOperator):
    """The permutation (x, y) -> (x, y + g(x) mod y_size) on a split index.

    The global index is ``x * y_size + y``. Every transition evaluates g
    exactly once and increments the shared query counter.
    """

    def __init__(self, g, x_size: int, y_size: int, pair: NormPair = NormPair(),
                 counter: QueryCounter | None = None, negate: bool = False):
        if x_size <= 0 or y_size <= 0:
            raise InvalidParameter("oracle needs positive register sizes")
        if callable(g):
            self._g = g
        else:
            table = [int(v) for v in g]
            if len(table) != x_size:
                raise InvalidParameter(
                    f"oracle table has {len(table)} entries for x_size={x_size}"
                )
            self._g = table.__getitem__
        self._x_size = x_size
        self._y_size = y_size
        self._sign = -1 if negate else 1
        self.rows = self.cols = x_size * y_size
        self.pair = pair
        self.bound = 1.0
        self.structure = ("oracle",)
        self.query_counter = counter if counter is not None else QueryCounter()

    def _eval(self, x: int) -> int:
        self.query_counter.count += 1
        return self._sign * int(self._g(x))

    def sample_forward(self, m, rng):
        x, y = divmod(m, self._y_size)
        n = x * self._y_size + (y + self._eval(x)) % self._y_size
        return Transition(n, None, 1.0 + 0j, 1.0 + 0j)

    def sample_backward(self, n, rng):
        x, y_out = divmod(n, self._y_size)
        m = x * self._y_size + (y_out - self._eval(x)) % self._y_size
        return Transition(m, None, 1.0 + 0j, 1.0 + 0j)

    def entries(self):
        for x in range(self._x_size):
            shift = self._eval(x)
            for y in range(self._y_size):
                m = x * self._y_size + y
                n = x * self._y_size + (y + shift) % self._y_size
                yield SupportEntry(m, n, None, 1.0 + 0j, 1.0, 1.0)

    def adjoint(self):
        return ShiftOracle(self._g, self._x_size, self._y_size, self.pair,
                           counter=self.query_counter, negate=self._sign > 0)

    def transpose(self):
        return self.adjoint()


def shift_oracle(g, x_size: int, y_size: int, pair: NormPair = NormPair(),
                 counter: QueryCounter | None = None) -> ShiftOracle:
    return ShiftOracle(g, x_size, y_size, pair, counter)


def fourier_transform(n_qubits: int, pair: NormPair = NormPair()) -> RowCol:
    """The discrete Fourier matrix F[j, k] = exp(2 pi i j k / N) / sqrt(N)
    with row/column transitions (uniform magnitudes make them optimal)."""
    dim = 1 << n_qubits
    j, k = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    mat = np.exp(2j * np.pi * j * k / dim) / math.sqrt(dim)
    op = RowCol(mat, pair)
    op.structure = ("fourier", n_qubits)
    return op


def walsh_hadamard(n_qubits: int, pair: NormPair = NormPair()) -> RowCol:
    """The n-qubit Hadamard transform with row/column transitions."""
    dim = 1 << n_qubits
    signs = (-1.0) ** np.array(
        [[bin(a & b).count("1") for b in range(dim)] for a in range(dim)]
    )
    op = RowCol(signs / math.sqrt(dim), pair)
    op.structure = ("hadamard", n_qubits)
    return op


# ---------------------------------------------------------------------------
# combinators


class ScaledOp(PathOperator):
    """s * A: ratios and weights scale by s, the bound by |s|."""

    def __init__(self, s, inner: PathOperator):
        self._s = complex(s)
        self._inner = inner
        self.rows, self.cols = inner.rows, inner.cols
        self.pair = inner.pair
        self.bound = abs(self._s) * inner.bound

    def sample_forward(self, m, rng):
        t = self._inner.sample_forward(m, rng)
        return Transition(t.index, t.tag, self._s * t.ratio_p, self._s * t.ratio_q)

    def sample_backward(self, n, rng):
        t = self._inner.sample_backward(n, rng)
        return Transition(t.index, t.tag, self._s * t.ratio_p, self._s * t.ratio_q)

    def entries(self):
        for e in self._inner.entries():
            yield SupportEntry(e.row, e.col, e.tag, self._s * e.alpha, e.prob_p, e.prob_q)

    def adjoint(self):
        return ScaledOp(self._s.conjugate(), self._inner.adjoint())

    def transpose(self):
        return ScaledOp(self._s, self._inner.transpose())


def scale(s, op: PathOperator) -> ScaledOp:
    return ScaledOp(s, op)


class AdjointOp(PathOperator):
    """Generic conjugate transpose by swapping the two transition laws.

    Swapping P and Q preserves the certified bound only when both exponents
    are 2 (the cost weights the laws symmetrically there); any other pair is
    rejected, and structured operators provide native adjoints instead.
    """

    def __init__(self, inner: PathOperator):
        if inner.pair.p != 2.0 or inner.pair.q != 2.0:
            raise InvalidParameter(
                "the generic adjoint certifies its bound only for the (2, 2) pair"
            )
        self._inner = inner
        self.rows, self.cols = inner.cols, inner.rows
        self.pair = inner.pair
        self.bound = inner.bound
        self.structure = inner.structure

    def sample_forward(self, m, rng):
        t = self._inner.sample_backward(m, rng)
        return Transition(t.index, t.tag,
                          t.ratio_q.conjugate(), t.ratio_p.conjugate())

    def sample_backward(self, n, rng):
        t = self._inner.sample_forward(n, rng)
        return Transition(t.index, t.tag,
                          t.ratio_q.conjugate(), t.ratio_p.conjugate())

    def entries(self):
        for e in self._inner.entries():
            yield SupportEntry(e.col, e.row, e.tag, e.alpha.conjugate(),
                               e.prob_q, e.prob_p)

    def adjoint(self):
        return self._inner

    def transpose(self):
        return _conjugate_entries(self._inner)


class TransposeOp(PathOperator):
    """Generic transpose; same (2, 2) restriction as the generic adjoint."""

    def __init__(self, inner: PathOperator):
        if inner.pair.p != 2.0 or inner.pair.q != 2.0:
            raise InvalidParameter(
                "the generic transpose certifies its bound only for the (2, 2) pair"
            )
        self._inner = inner
        self.rows, self.cols = inner.cols, inner.rows
        self.pair = inner.pair
        self.bound = inner.bound
        self.structure = inner.structure

    def sample_forward(self, m, rng):
        t = self._inner.sample_backward(m, rng)
        return Transition(t.index, t.tag, t.ratio_q, t.ratio_p)

    def sample_backward(self, n, rng):
        t = self._inner.sample_forward(n, rng)
        return Transition(t.index, t.tag, t.ratio_q, t.ratio_p)

    def entries(self):
        for e in self._inner.entries():
            yield SupportEntry(e.col, e.row, e.tag, e.alpha, e.prob_q, e.prob_p)

    def transpose(self):
        return self._inner


def _conjugate_entries(inner: PathOperator) -> PathOperator:
    """Entrywise conjugate as adjoint-of-transpose."""
    return AdjointOp(TransposeOp(inner))


def adjoint(op: PathOperator) -> PathOperator:
    return op.adjoint()


def transpose(op: PathOperator) -> PathOperator:
    return op.transpose()


class SumOp(PathOperator):
    """A weighted mixture ``sum_l s_l A_l`` over same-shape operators.

    The branch tag is extended with the term index. Default mixture weights
    are proportional to ``|s_l| * b_l``, which makes the certified bound the
    plain sum of those loads; explicit weights must cover every term that
    carries weight.
    """

    def __init__(self, terms, weights=None):
        if not terms:
            raise InvalidParameter("sum of zero terms")
        self._terms = [(complex(s), op) for s, op in terms]
        ops = [op for _, op in self._terms]
        self.pair = _require_same_pair(ops)
        shapes = {(op.rows, op.cols) for op in ops}
        if len(shapes) != 1:
            raise ShapeMismatch(f"sum terms disagree on shape: {shapes}")
        self.rows, self.cols = shapes.pop()
        loads = [abs(s) * op.bound for s, op in self._terms]
        self._explicit_weights = None if weights is None else [float(w) for w in weights]
        if weights is None:
            total = sum(loads)
            if total == 0.0:
                self._weights = [0.0] * len(loads)
                self.bound = 0.0
            else:
                self._weights = [load / total for load in loads]
                self.bound = total
        else:
            w = self._explicit_weights
            if len(w) != len(loads):
                raise InvalidWeights("need one weight per term")
            for x in w:
                if not (x >= 0.0) or math.isinf(x):
                    raise InvalidWeights(f"weights must be finite and nonnegative, got {x}")
            if abs(sum(w) - 1.0) > 1e-9:
                raise InvalidWeights(f"weights sum to {sum(w)}, not 1")
            for x, load in zip(w, loads):
                if x == 0.0 and load > 0.0:
                    raise InvalidWeights("a term with weight cannot get zero mixture mass")
            self._weights = w
            self.bound = max(
                (load / x for x, load in zip(w, loads) if x > 0.0), default=0.0
            )
        kept = [l for l, x in enumerate(self._weights) if x > 0.0]
        if kept:
            self._table = CumulativeTable([self._weights[l] for l in kept])
            self._kept = [
                (l, self._terms[l][0] / self._weights[l], self._terms[l][1]) for l in kept
            ]
        else:
            self._table = None
            self._kept = []

    def _draw_term(self, rng):
        if self._table is None:
            raise DeadRow("mixture with no weight anywhere")
        return self._kept[self._table.draw(rng)]

    def sample_forward(self, m, rng):
        l, fac, op = self._draw_term(rng)
        t = op.sample_forward(m, rng)
        return Transition(t.index, (l, t.tag), fac * t.ratio_p, fac * t.ratio_q)

    def sample_backward(self, n, rng):
        l, fac, op = self._draw_term(rng)
        t = op.sample_backward(n, rng)
        return Transition(t.index, (l, t.tag), fac * t.ratio_p, fac * t.ratio_q)

    def entries(self):
        for l, (s, op) in enumerate(self._terms):
            w = self._weights[l]
            if w == 0.0 or s == 0:
                continue
            for e in op.entries():
                yield SupportEntry(e.row, e.col, (l, e.tag), s * e.alpha,
                                   w * e.prob_p, w * e.prob_q)

    def adjoint(self):
        return SumOp([(s.conjugate(), op.adjoint()) for s, op in self._terms],
                     self._explicit_weights)

    def transpose(self):
        return SumOp([(s, op.transpose()) for s, op in self._terms],
                     self._explicit_weights)


def sum_ops(terms, weights=None) -> SumOp:
    return SumOp(terms, weights)


def _group_by_row(op: PathOperator) -> dict:
    grouped: dict = {}
    for e in op.entries():
        grouped.setdefault(e.row, []).append(e)
    return grouped


def _chain_entries(row_maps):
    """Enumerate full chains through a list of row-grouped supports.

    Yields (start_row, end_col, tag_pairs, alpha, prob_p, prob_q) where
    alpha and the probabilities are products along the chain and tag_pairs
    mirrors the tags produced by chained sampling.
    """

    def walk(j, row):
        if j == len(row_maps):
            yield row, (), 1.0 + 0j, 1.0, 1.0
            return
        for e in row_maps[j].get(row, ()):
            for col, tags, a, pp, qq in walk(j + 1, e.col):
                yield (col, ((e.col, e.tag),) + tags,
                       e.alpha * a, e.prob_p * pp, e.prob_q * qq)

    starts = sorted(row_maps[0]) if row_maps else []
    for row in starts:
        for col, tags, a, pp, qq in walk(0, row):
            yield row, col, tags, a, pp, qq


class ProductOp(PathOperator):
    """The matrix product of a chain of factors, left to right.

    Forward sampling walks the factors in order, backward sampling in
    reverse; ratios multiply and the branch tag records each intermediate
    index alongside the factor's own tag. The certified bound is the product
    of the factor bounds.
    """

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise InvalidParameter("product of zero factors")
        self.pair = _require_same_pair(factors)
        for left, right in zip(factors, factors[1:]):
            if left.cols != right.rows:
                raise ShapeMismatch(
                    f"factors do not chain: {left.rows}x{left.cols} then "
                    f"{right.rows}x{right.cols}"
                )
        self.factors = factors
        self.rows = factors[0].rows
        self.cols = factors[-1].cols
        self.bound = math.prod(f.bound for f in factors)

    def sample_forward(self, m, rng):
        cur = m
        rp = 1.0 + 0j
        rq = 1.0 + 0j
        pairs = []
        for f in self.factors:
            t = f.sample_forward(cur, rng)
            rp *= t.ratio_p
            rq *= t.ratio_q
            cur = t.index
            pairs.append((cur, t.tag))
        return Transition(cur, tuple(pairs), rp, rq)

    def sample_backward(self, n, rng):
        cur = n
        rp = 1.0 + 0j
        rq = 1.0 + 0j
        pairs = []
        for f in reversed(self.factors):
            t = f.sample_backward(cur, rng)
            rp *= t.ratio_p
            rq *= t.ratio_q
            pairs.append((cur, t.tag))
            cur = t.index
        pairs.reverse()
        return Transition(cur, tuple(pairs), rp, rq)

    def entries(self):
        row_maps = [_group_by_row(f) for f in self.factors]
        for row, col, tags, a, pp, qq in _chain_entries(row_maps):
            yield SupportEntry(row, col, tags, a, pp, qq)

    def adjoint(self):
        return ProductOp([f.adjoint() for f in reversed(self.factors)])

    def transpose(self):
        return ProductOp([f.transpose() for f in reversed(self.factors)])


def product_ops(factors) -> ProductOp:
    return ProductOp(factors)


class ExpOp(PathOperator):
    """The matrix exponential of a square operator.

    The series length is drawn from a Poisson distribution with mean equal
    to the inner bound (by sequential conditional coins, so no truncation is
    applied anywhere in sampling); a draw of l chains l inner transitions.
    The certified bound is exp(inner bound). Support enumeration, used only
    by small-dimension audits, cuts the series where the remaining weight
    drops below 1e-18.
    """

    def __init__(self, inner: PathOperator):
        if inner.rows != inner.cols:
            raise ShapeMismatch(f"exponential needs a square operator, got {inner.rows}x{inner.cols}")
        self._inner = inner
        self._rate = inner.bound
        self.rows = self.cols = inner.rows
        self.pair = inner.pair
        self.bound = math.exp(inner.bound)

    def sample_forward(self, m, rng):
        length = sample_poisson(self._rate, rng)
        fac = math.exp(self._rate) / self._rate ** length
        cur = m
        rp = complex(fac)
        rq = complex(fac)
        pairs = []
        for _ in range(length):
            t = self._inner.sample_forward(cur, rng)
            rp *= t.ratio_p
            rq *= t.ratio_q
            cur = t.index
            pairs.append((cur, t.tag))
        return Transition(cur, (length, tuple(pairs)), rp, rq)

    def sample_backward(self, n, rng):
        length = sample_poisson(self._rate, rng)
        fac = math.exp(self._rate) / self._rate ** length
        cur = n
        rp = complex(fac)
        rq = complex(fac)
        pairs = []
        for _ in range(length):
            t = self._inner.sample_backward(cur, rng)
            rp *= t.ratio_p
            rq *= t.ratio_q
            pairs.append((cur, t.tag))
            cur = t.index
        pairs.reverse()
        return Transition(cur, (length, tuple(pairs)), rp, rq)

    def entries(self):
        rate = self._rate
        level_weight = math.exp(-rate)          # Poisson mass at l = 0
        for m in range(self.rows):
            yield SupportEntry(m, m, (0, ()), 1.0 + 0j, level_weight, level_weight)
        row_map = _group_by_row(self._inner)
        length = 0
        series = 1.0                            # rate**l / l!
        while True:
            length += 1
            series *= rate / length
            if series == 0.0 or (length > rate and series < 1e-18):
                break
            level_weight = series * math.exp(-rate)
            inv_factorial = 1.0 / math.factorial(length)
            for row, col, tags, a, pp, qq in _chain_entries([row_map] * length):
                yield SupportEntry(row, col, (length, tags), a * inv_factorial,
                                   level_weight * pp, level_weight * qq)

    def adjoint(self):
        return ExpOp(self._inner.adjoint())

    def transpose(self):
        return ExpOp(self._inner.transpose())


def exp_op(inner: PathOperator) -> ExpOp:
    return ExpOp(inner)


class BlockDiagonal(PathOperator):
    """A direct sum of blocks with user-controlled index placement.

    ``row_map`` assigns every global row a (block, local row) pair and must
    hit each block's local rows exactly once; ``col_map`` likewise. Both
    default to contiguous layout. Transitions never leave the block of the
    incoming index, so the certified bound is the largest block bound.
    """

    def __init__(self, blocks, row_map=None, col_map=None):
        blocks = list(blocks)
        if not blocks:
            raise InvalidParameter("need at least one block")
        self.pair = _require_same_pair(blocks)
        self.blocks = blocks
        self._row_map, self._row_unmap = self._layout(
            [b.rows for b in blocks], row_map, "row")
        self._col_map, self._col_unmap = self._layout(
            [b.cols for b in blocks], col_map, "col")
        self.rows = len(self._row_map)
        self.cols = len(self._col_map)
        self.bound = max(b.bound for b in blocks)

    @staticmethod
    def _layout(sizes, mapping, what):
        total = sum(sizes)
        if mapping is None:
            mapping = []
            for r, size in enumerate(sizes):
                mapping.extend((r, i) for i in range(size))
        else:
            mapping = [(int(r), int(i)) for r, i in mapping]
        if len(mapping) != total:
            raise IndexMapInconsistent(
                f"{what} map covers {len(mapping)} indices, blocks need {total}"
            )
        unmap = [[None] * size for size in sizes]
        for g, (r, i) in enumerate(mapping):
            if not (0 <= r < len(sizes)) or not (0 <= i < sizes[r]):
                raise IndexMapInconsistent(f"{what} map points outside the blocks: ({r}, {i})")
            if unmap[r][i] is not None:
                raise IndexMapInconsistent(f"{what} map hits block {r} index {i} twice")
            unmap[r][i] = g
        return mapping, unmap

    def sample_forward(self, m, rng):
        r, i = self._row_map[m]
        t = self.blocks[r].sample_forward(i, rng)
        return Transition(self._col_unmap[r][t.index], t.tag, t.ratio_p, t.ratio_q)

    def sample_backward(self, n, rng):
        r, j = self._col_map[n]
        t = self.blocks[r].sample_backward(j, rng)
        return Transition(self._row_unmap[r][t.index], t.tag, t.ratio_p, t.ratio_q)

    def entries(self):
        for r, block in enumerate(self.blocks):
            row_unmap = self._row_unmap[r]
            col_unmap = self._col_unmap[r]
            for e in block.entries():
                yield SupportEntry(row_unmap[e.row], col_unmap[e.col], e.tag,
                                   e.alpha, e.prob_p, e.prob_q)

    def adjoint(self):
        return BlockDiagonal([b.adjoint() for b in self.blocks],
                             self._col_map, self._row_map)

    def transpose(self):
        return BlockDiagonal([b.transpose() for b in self.blocks],
                             self._col_map, self._row_map)


def block_diagonal(blocks, row_map=None, col_map=None) -> BlockDiagonal:
    return BlockDiagonal(blocks, row_map, col_map)


def controlled(family, count: int | None = None) -> BlockDiagonal:
    """``sum_r |r><r| (x) A_r`` for a family of same-size square blocks.

    ``family`` is either a list of operators or a function of the control
    value (then ``count`` is required). The global index is r * N + i.
    """
    if callable(family):
        if count is None:
            raise InvalidParameter("a family function needs an explicit count")
        blocks = [family(r) for r in range(count)]
    else:
        blocks = list(family)
    if not blocks:
        raise InvalidParameter("empty control family")
    dims = {(b.rows, b.cols) for b in blocks}
    if len(dims) != 1 or blocks[0].rows != blocks[0].cols:
        raise ShapeMismatch(f"control family must share one square shape, got {dims}")
    return BlockDiagonal(blocks)


class TensorEmbed(PathOperator):
    """``I(dim_left) (x) A (x) I(dim_right)``: the operator acts on the
    middle slot of a split index and spectates on the outer ones."""

    def __init__(self, inner: PathOperator, dim_left: int, dim_right: int):
        if dim_left <= 0 or dim_right <= 0:
            raise InvalidParameter("embedding dimensions must be positive")
        self._inner = inner
        self._left = dim_left
        self._right = dim_right
        self.rows = dim_left * inner.rows * dim_right
        self.cols = dim_left * inner.cols * dim_right
        self.pair = inner.pair
        self.bound = inner.bound

    def sample_forward(self, m, rng):
        rest, i2 = divmod(m, self._right)
        i1, a = divmod(rest, self._inner.rows)
        t = self._inner.sample_forward(a, rng)
        n = (i1 * self._inner.cols + t.index) * self._right + i2
        return Transition(n, t.tag, t.ratio_p, t.ratio_q)

    def sample_backward(self, n, rng):
        rest, i2 = divmod(n, self._right)
        i1, a = divmod(rest, self._inner.cols)
        t = self._inner.sample_backward(a, rng)
        m = (i1 * self._inner.rows + t.index) * self._right + i2
        return Transition(m, t.tag, t.ratio_p, t.ratio_q)

    def entries(self):
        for i1 in range(self._left):
            for e in self._inner.entries():
                for i2 in range(self._right):
                    yield SupportEntry(
                        (i1 * self._inner.rows + e.row) * self._right + i2,
                        (i1 * self._inner.cols + e.col) * self._right + i2,
                        e.tag, e.alpha, e.prob_p, e.prob_q,
                    )

    def adjoint(self):
        return TensorEmbed(self._inner.adjoint(), self._left, self._right)

    def transpose(self):
        return TensorEmbed(self._inner.transpose(), self._left, self._right)


def tensor_embed(inner: PathOperator, dim_left: int, dim_right: int) -> TensorEmbed:
    return TensorEmbed(inner, dim_left, dim_right)
