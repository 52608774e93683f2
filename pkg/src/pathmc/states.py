"""States: amplitude-accessible vectors and sampleable chain endpoints.

A :class:`SampleableState` is a vector whose amplitudes can be read off and
whose index can be drawn from the ``|psi_i|**p`` law for any exponent. A
:class:`ChainEndpoint` is a matrix sigma that closes a trace
``Tr{A1 ... AS sigma}``: its column index is the head of the chain (where
forward walks start) and its row index the tail (where backward walks
start), and it can sample either endpoint unconditionally. Endpoints expose
the same ratio/enumeration contract as operators, so the adapter
:class:`StateAsOperator` makes any endpoint usable wherever a
:class:`PathOperator` is expected, with the same certified bound.
"""

from __future__ import annotations

import cmath
import math
from typing import Iterator

import numpy as np

from .errors import (
    InvalidParameter,
    NormViolation,
    NotNormalized,
    ZeroVector,
)
from .linalg import NormPair, as_complex_matrix
from .operators import (
    BlockDiagonal,
    PathOperator,
    SupportEntry,
    Transition,
)
from .sampling import CumulativeTable

_NORM_TOL = 1e-9


def _law(weights: np.ndarray, p: float):
    """|amplitude|**p law as (indices, probabilities); p = inf means the
    uniform law on the set of maximal entries."""
    mags = np.abs(weights)
    if p == math.inf:
        top = float(mags.max()) if mags.size else 0.0
        if top == 0.0:
            return [], []
        idx = np.flatnonzero(mags >= top * (1.0 - 1e-15))
        share = 1.0 / idx.size
        return [int(i) for i in idx], [share] * idx.size
    raised = mags ** p
    total = float(raised.sum())
    if total == 0.0:
        return [], []
    idx = np.flatnonzero(raised)
    return [int(i) for i in idx], [float(raised[i] / total) for i in idx]


class SampleableState:
    """Base class for vectors with amplitude access and power-law sampling."""

    dim: int

    def amplitude(self, i: int) -> complex:
        raise NotImplementedError

    def pnorm(self, p: float) -> float:
        """The vector p-norm, 1 <= p <= inf."""
        raise NotImplementedError

    def law_prob(self, i: int, p: float) -> float:
        """Probability of index i under the |amplitude|**p law."""
        raise NotImplementedError

    def sample_index(self, p: float, rng) -> int:
        raise NotImplementedError

    def support(self):
        """Indices with nonzero amplitude."""
        return [i for i in range(self.dim) if self.amplitude(i) != 0]

    def vector(self) -> np.ndarray:
        return np.array([self.amplitude(i) for i in range(self.dim)], dtype=complex)


class BasisState(SampleableState):
    """The computational basis vector |index> in the given dimension."""

    def __init__(self, index: int, dim: int):
        if not 0 <= index < dim:
            raise InvalidParameter(f"basis index {index} outside dimension {dim}")
        self.index = index
        self.dim = dim

    def amplitude(self, i):
        return 1.0 + 0j if i == self.index else 0.0 + 0j

    def pnorm(self, p):
        return 1.0

    def law_prob(self, i, p):
        return 1.0 if i == self.index else 0.0

    def sample_index(self, p, rng):
        return self.index

    def support(self):
        return [self.index]


class ProductState(SampleableState):
    """A tensor product of per-subsystem vectors, each unit in the 2-norm.

    The first factor is the most significant digit of the global index,
    matching the layout used by the tensor-embedding operator.
    """

    def __init__(self, factors):
        self._factors = [np.asarray(f, dtype=complex).ravel() for f in factors]
        if not self._factors:
            raise InvalidParameter("product state needs at least one factor")
        for k, f in enumerate(self._factors):
            if abs(float(np.sum(np.abs(f) ** 2)) - 1.0) > _NORM_TOL:
                raise NotNormalized(f"factor {k} is not unit in the 2-norm")
        self.dims = [f.size for f in self._factors]
        self.dim = math.prod(self.dims)
        self._tables: dict = {}

    def _digits(self, i: int):
        out = []
        for d in reversed(self.dims):
            i, r = divmod(i, d)
            out.append(r)
        return list(reversed(out))

    def amplitude(self, i):
        val = 1.0 + 0j
        for f, d in zip(self._factors, self._digits(i)):
            val *= f[d]
        return val

    def pnorm(self, p):
        out = 1.0
        for f in self._factors:
            mags = np.abs(f)
            if p == math.inf:
                out *= float(mags.max())
            else:
                out *= float(np.sum(mags ** p) ** (1.0 / p))
        return out

    def law_prob(self, i, p):
        prob = 1.0
        for f, d in zip(self._factors, self._digits(i)):
            idx, probs = _law(f, p)
            try:
                prob *= probs[idx.index(d)]
            except ValueError:
                return 0.0
        return prob

    def _factor_tables(self, p):
        hit = self._tables.get(p)
        if hit is None:
            hit = []
            for f in self._factors:
                idx, probs = _law(f, p)
                if not idx:
                    raise ZeroVector("a product factor has no weight")
                hit.append((idx, CumulativeTable(probs)))
            self._tables[p] = hit
        return hit

    def sample_index(self, p, rng):
        out = 0
        for (idx, table), d in zip(self._factor_tables(p), self.dims):
            out = out * d + idx[table.draw(rng)]
        return out


class PhaseState(SampleableState):
    """Uniform-magnitude state ``exp(i theta(x)) / sqrt(dim)``.

    Every power law is the uniform distribution, which is what makes these
    states cheap to sample regardless of the phase profile.
    """

    def __init__(self, thetas, dim: int | None = None):
        if callable(thetas):
            if dim is None:
                raise InvalidParameter("a phase function needs an explicit dim")
            self._theta = [float(thetas(x)) for x in range(dim)]
        else:
            self._theta = [float(t) for t in thetas]
            if dim is not None and dim != len(self._theta):
                raise InvalidParameter("dim disagrees with the number of phases")
        self.dim = len(self._theta)
        if self.dim == 0:
            raise InvalidParameter("empty phase state")
        self._scale = 1.0 / math.sqrt(self.dim)

    def amplitude(self, i):
        return cmath.exp(1j * self._theta[i]) * self._scale

    def pnorm(self, p):
        if p == math.inf:
            return self._scale
        return self.dim ** (1.0 / p) * self._scale

    def law_prob(self, i, p):
        return 1.0 / self.dim if 0 <= i < self.dim else 0.0

    def sample_index(self, p, rng):
        return int(rng.random() * self.dim)

    def support(self):
        return list(range(self.dim))


def uniform_state(dim: int) -> PhaseState:
    """The uniform superposition with all-zero phases."""
    return PhaseState([0.0] * dim)


def basis_state(index: int, dim: int) -> BasisState:
    return BasisState(index, dim)


def product_state(factors) -> ProductState:
    return ProductState(factors)


def phase_state(thetas, dim: int | None = None) -> PhaseState:
    return PhaseState(thetas, dim)


class DenseVector(SampleableState):
    """An explicit amplitude vector with no normalisation requirement."""

    def __init__(self, amplitudes):
        vec = np.asarray(amplitudes, dtype=complex).ravel()
        if vec.size == 0:
            raise InvalidParameter("empty vector")
        if not np.all(np.isfinite(vec.view(float))):
            raise InvalidParameter("vector contains non-finite entries")
        self._vec = vec
        self.dim = vec.size
        self._laws: dict = {}

    def amplitude(self, i):
        return complex(self._vec[i])

    def pnorm(self, p):
        mags = np.abs(self._vec)
        if p == math.inf:
            return float(mags.max())
        return float(np.sum(mags ** p) ** (1.0 / p))

    def _lawfor(self, p):
        hit = self._laws.get(p)
        if hit is None:
            idx, probs = _law(self._vec, p)
            if not idx:
                raise ZeroVector("the vector has no weight")
            lookup = {i: pr for i, pr in zip(idx, probs)}
            hit = (idx, CumulativeTable(probs), lookup)
            self._laws[p] = hit
        return hit

    def law_prob(self, i, p):
        _, _, lookup = self._lawfor(p)
        return lookup.get(i, 0.0)

    def sample_index(self, p, rng):
        idx, table, _ = self._lawfor(p)
        return idx[table.draw(rng)]

    def support(self):
        return [int(i) for i in np.flatnonzero(self._vec)]

    def vector(self):
        return self._vec.copy()


def dense_vector(amplitudes) -> DenseVector:
    return DenseVector(amplitudes)


# ---------------------------------------------------------------------------
# chain endpoints


class ChainEndpoint:
    """A matrix sigma with unconditional endpoint sampling.

    ``sample_head`` draws sigma's column index (where forward chain walks
    begin), ``sample_tail`` its row index (where backward walks begin), and
    ``ratios(row, col, tag)`` reports alpha/P and alpha/Q for the branch.
    """

    rows: int
    cols: int
    bound: float
    pair: NormPair

    def sample_head(self, rng):
        raise NotImplementedError

    def sample_tail(self, rng):
        raise NotImplementedError

    def ratios(self, row: int, col: int, tag) -> tuple:
        raise NotImplementedError

    def entries(self) -> Iterator[SupportEntry]:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=complex)
        for e in self.entries():
            out[e.row, e.col] += e.alpha
        return out

    def as_operator(self) -> "StateAsOperator":
        return StateAsOperator(self)


class Dyad(ChainEndpoint):
    """The rank-one endpoint |ket><bra|.

    Head draws follow the bra's ``p``-power law, tail draws the ket's
    ``q``-power law, and the certified bound is
    ``bra.pnorm(p) * ket.pnorm(q)``.
    """

    def __init__(self, ket: SampleableState, bra: SampleableState,
                 pair: NormPair = NormPair()):
        self.ket = ket
        self.bra = bra
        self.pair = pair
        self.rows = ket.dim
        self.cols = bra.dim
        bra_norm = bra.pnorm(pair.p)
        ket_norm = ket.pnorm(pair.q)
        if bra_norm == 0.0 or ket_norm == 0.0:
            raise ZeroVector("a dyad needs nonzero vectors on both sides")
        self.bound = bra_norm * ket_norm

    def sample_head(self, rng):
        return self.bra.sample_index(self.pair.p, rng), None

    def sample_tail(self, rng):
        return self.ket.sample_index(self.pair.q, rng), None

    def ratios(self, row, col, tag):
        alpha = self.ket.amplitude(row) * self.bra.amplitude(col).conjugate()
        if alpha == 0:
            return 0.0 + 0j, 0.0 + 0j
        pp = self.bra.law_prob(col, self.pair.p)
        qq = self.ket.law_prob(row, self.pair.q)
        rp = alpha / pp if pp > 0.0 else 0.0 + 0j
        rq = alpha / qq if qq > 0.0 else 0.0 + 0j
        return rp, rq

    def entries(self):
        p, q = self.pair.p, self.pair.q
        for row in self.ket.support():
            krow = self.ket.amplitude(row)
            qq = self.ket.law_prob(row, q)
            for col in self.bra.support():
                alpha = krow * self.bra.amplitude(col).conjugate()
                yield SupportEntry(row, col, None, alpha,
                                   self.bra.law_prob(col, p), qq)

    def adjoint(self):
        return Dyad(self.bra, self.ket, self.pair)


def dyad(ket: SampleableState, bra: SampleableState,
         pair: NormPair = NormPair()) -> Dyad:
    return Dyad(ket, bra, pair)


class DensityEndpoint(ChainEndpoint):
    """A density matrix sampled through its diagonal.

    Both endpoint laws equal the diagonal and the certified bound is one;
    this relies on the balanced pair and on positivity, whose entrywise
    consequence ``|rho[m, n]| <= sqrt(rho[m, m] rho[n, n])`` is checked on
    every branch actually touched.
    """

    def __init__(self, rho, pair: NormPair = NormPair()):
        if pair.p != 2.0:
            raise InvalidParameter("density endpoints are certified for the balanced pair only")
        mat = as_complex_matrix(rho)
        if mat.shape[0] != mat.shape[1]:
            raise InvalidParameter(f"density matrix must be square, got {mat.shape}")
        if float(np.max(np.abs(mat - mat.conj().T))) > _NORM_TOL:
            raise InvalidParameter("density matrix is not hermitian")
        diag = np.real(np.diag(mat)).copy()
        if float(np.min(diag)) < -_NORM_TOL:
            raise InvalidParameter("density matrix has a negative diagonal entry")
        diag[diag < 0.0] = 0.0
        if abs(float(diag.sum()) - 1.0) > _NORM_TOL:
            raise NotNormalized(f"density trace is {float(diag.sum())}, not 1")
        self._rho = mat
        self._diag = diag
        self.rows = self.cols = mat.shape[0]
        self.pair = pair
        self.bound = 1.0
        self._table = CumulativeTable(diag.tolist())

    def sample_head(self, rng):
        return self._table.draw(rng), None

    def sample_tail(self, rng):
        return self._table.draw(rng), None

    def _check(self, row, col, alpha):
        cap = math.sqrt(self._diag[row] * self._diag[col])
        if abs(alpha) > cap * (1.0 + _NORM_TOL) + 1e-300:
            raise NormViolation(
                f"entry ({row}, {col}) breaks the positivity bound: |{alpha}| > {cap}"
            )

    def ratios(self, row, col, tag):
        alpha = complex(self._rho[row, col])
        if alpha == 0:
            return 0.0 + 0j, 0.0 + 0j
        self._check(row, col, alpha)
        return alpha / self._diag[col], alpha / self._diag[row]

    def entries(self):
        ms, ns = np.nonzero(self._rho)
        for m, n in zip(ms, ns):
            alpha = complex(self._rho[m, n])
            self._check(int(m), int(n), alpha)
            yield SupportEntry(int(m), int(n), None, alpha,
                               float(self._diag[n]), float(self._diag[m]))

    def adjoint(self):
        return self


def density(rho, pair: NormPair = NormPair()) -> DensityEndpoint:
    return DensityEndpoint(rho, pair)


class LowRankEndpoint(ChainEndpoint):
    """``sigma = sum_i s_i v_i u_i^T`` with unit factors (no conjugation).

    Each ``u_i`` must be unit in the p-norm and each ``v_i`` unit in the
    q-norm; endpoints are drawn from the ``|s|``-mixture of the factors'
    power laws and the certified bound is ``sum_i |s_i|``.
    """

    def __init__(self, terms, pair: NormPair = NormPair()):
        if not terms:
            raise InvalidParameter("low-rank endpoint needs at least one term")
        self.pair = pair
        self._terms = []
        for i, (s, u, v) in enumerate(terms):
            u = np.asarray(u, dtype=complex).ravel()
            v = np.asarray(v, dtype=complex).ravel()
            nu = float(np.sum(np.abs(u) ** pair.p) ** (1.0 / pair.p)) if pair.p != math.inf else float(np.max(np.abs(u)))
            nv = float(np.sum(np.abs(v) ** pair.q) ** (1.0 / pair.q)) if pair.q != math.inf else float(np.max(np.abs(v)))
            if abs(nu - 1.0) > _NORM_TOL:
                raise NotNormalized(f"term {i}: u is not unit in the p-norm ({nu})")
            if abs(nv - 1.0) > _NORM_TOL:
                raise NotNormalized(f"term {i}: v is not unit in the q-norm ({nv})")
            self._terms.append((complex(s), u, v))
        rows = {v.size for _, _, v in self._terms}
        cols = {u.size for _, u, _ in self._terms}
        if len(rows) != 1 or len(cols) != 1:
            raise InvalidParameter("low-rank terms disagree on dimensions")
        self.rows = rows.pop()
        self.cols = cols.pop()
        weights = [abs(s) for s, _, _ in self._terms]
        total = sum(weights)
        if total == 0.0:
            raise ZeroVector("all low-rank weights vanish")
        self.bound = total
        self._mix = CumulativeTable(weights)
        self._share = [w / total for w in weights]
        p, q = pair.p, pair.q
        self._head_laws = [_law(u, p) for _, u, _ in self._terms]
        self._tail_laws = [_law(v, q) for _, _, v in self._terms]
        self._head_tables = [CumulativeTable(pr) for _, pr in self._head_laws]
        self._tail_tables = [CumulativeTable(pr) for _, pr in self._tail_laws]

    def head_prob(self, col: int) -> float:
        out = 0.0
        for share, (idx, probs) in zip(self._share, self._head_laws):
            try:
                out += share * probs[idx.index(col)]
            except ValueError:
                pass
        return out

    def tail_prob(self, row: int) -> float:
        out = 0.0
        for share, (idx, probs) in zip(self._share, self._tail_laws):
            try:
                out += share * probs[idx.index(row)]
            except ValueError:
                pass
        return out

    def _alpha(self, row, col):
        return sum(s * v[row] * u[col] for s, u, v in self._terms)

    def sample_head(self, rng):
        i = self._mix.draw(rng)
        idx, _ = self._head_laws[i]
        return idx[self._head_tables[i].draw(rng)], None

    def sample_tail(self, rng):
        i = self._mix.draw(rng)
        idx, _ = self._tail_laws[i]
        return idx[self._tail_tables[i].draw(rng)], None

    def ratios(self, row, col, tag):
        alpha = self._alpha(row, col)
        if alpha == 0:
            return 0.0 + 0j, 0.0 + 0j
        pp = self.head_prob(col)
        qq = self.tail_prob(row)
        rp = alpha / pp if pp > 0.0 else 0.0 + 0j
        rq = alpha / qq if qq > 0.0 else 0.0 + 0j
        return rp, rq

    def entries(self):
        rows = sorted({i for _, _, v in self._terms for i in np.flatnonzero(v)})
        cols = sorted({i for _, u, _ in self._terms for i in np.flatnonzero(u)})
        for m in rows:
            for n in cols:
                alpha = self._alpha(int(m), int(n))
                if alpha == 0:
                    continue
                yield SupportEntry(int(m), int(n), None, complex(alpha),
                                   self.head_prob(int(n)), self.tail_prob(int(m)))


def low_rank(terms, pair: NormPair = NormPair()) -> LowRankEndpoint:
    return LowRankEndpoint(terms, pair)


class StateAsOperator(PathOperator):
    """Adapter: a chain endpoint used in operator position.

    Forward transitions ignore the incoming row and draw the endpoint's
    column law; backward transitions draw the row law. The certified bound
    is the endpoint's own bound.
    """

    def __init__(self, state: ChainEndpoint):
        self._state = state
        self.rows = state.rows
        self.cols = state.cols
        self.pair = state.pair
        self.bound = state.bound

    def sample_forward(self, m, rng):
        col, tag = self._state.sample_head(rng)
        rp, rq = self._state.ratios(m, col, tag)
        return Transition(col, tag, rp, rq)

    def sample_backward(self, n, rng):
        row, tag = self._state.sample_tail(rng)
        rp, rq = self._state.ratios(row, n, tag)
        return Transition(row, tag, rp, rq)

    def entries(self):
        return self._state.entries()

    def adjoint(self):
        inner = getattr(self._state, "adjoint", None)
        if inner is not None:
            return StateAsOperator(inner())
        return super().adjoint()


def projector_family(table, x_size: int, y_size: int,
                     pair: NormPair = NormPair()) -> BlockDiagonal:
    """``sum_x |x><x| (x) |f(x)><f(x)|`` with Fourier-rotated marks.

    Each block projects onto the Fourier phase state whose frequency is the
    table value at x, so every block is a rank-one projector with bound 1
    and the whole family keeps bound 1.
    """
    marks = [int(v) for v in table]
    if len(marks) != x_size:
        raise InvalidParameter(f"table has {len(marks)} entries for x_size={x_size}")
    blocks = []
    for g in marks:
        thetas = [-2.0 * math.pi * g * k / y_size for k in range(y_size)]
        phi = PhaseState(thetas)
        blocks.append(StateAsOperator(Dyad(phi, phi, pair)))
    family = BlockDiagonal(blocks)
    family.structure = ("projector_family", x_size, y_size)
    return family
