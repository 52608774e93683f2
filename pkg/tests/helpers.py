"""Audit helpers shared across the test modules.

The central routine enumerates an operator's full support and checks, in
one sweep, everything the sampling contract promises: the support sums to
the represented matrix, each transition law is a probability distribution
over the branches of its row or column, the cost certificate holds on
every branch, the stated bound dominates the induced norm of the absolute
matrix, and actual sampling agrees with the enumerated laws both in
frequency and, exactly, in the reported importance ratios.
"""

import math
from collections import Counter, defaultdict

import numpy as np

from pathmc import RngStream
from pathmc.errors import DeadColumn, DeadRow
from pathmc.linalg import entrywise_abs, induced_norm

SUM_TOL = 1e-12
COST_TOL = 1e-9
NORM_SLACK = 1e-6
RATIO_RTOL = 1e-9


def dense_from_entries(entries, rows, cols):
    out = np.zeros((rows, cols), dtype=complex)
    for e in entries:
        out[e.row, e.col] += e.alpha
    return out


def _assert_close(actual, expected, rtol=RATIO_RTOL, context=""):
    scale = max(1.0, abs(expected))
    assert abs(actual - expected) <= rtol * scale, (
        f"{context}: got {actual!r}, expected {expected!r}"
    )


def _check_frequencies(counts, probs, draws, context):
    for key, prob in probs.items():
        got = counts.get(key, 0) / draws
        slack = 5.0 * math.sqrt(prob * (1.0 - prob) / draws) + 3.0 / draws
        assert abs(got - prob) <= slack, (
            f"{context}: branch {key} frequency {got} vs probability {prob}"
        )
    stray = set(counts) - set(probs)
    assert not stray, f"{context}: sampled branches outside the law: {stray}"


def assert_operator_certificate(op, dense_ref=None, draws=3000, seed=0,
                                full_law=True, sample_rows=None):
    """Audit a path operator against its own support enumeration.

    ``dense_ref`` is an independently computed matrix to compare against;
    ``full_law`` asserts the transition laws put all their mass on
    enumerated branches (leave False for mixtures that deliberately waste
    mass on zero-weight branches). ``sample_rows`` caps how many rows and
    columns get the sampling comparison.
    """
    entries = list(op.entries())
    keyed = {}
    for e in entries:
        key = (e.row, e.col, e.tag)
        assert key not in keyed, f"duplicate support branch {key}"
        keyed[key] = e

    dense = dense_from_entries(entries, op.rows, op.cols)
    if dense_ref is not None:
        ref = np.asarray(dense_ref, dtype=complex)
        scale = max(1.0, float(np.max(np.abs(ref))) if ref.size else 1.0)
        gap = float(np.max(np.abs(dense - ref))) if ref.size else 0.0
        assert gap <= SUM_TOL * scale, f"support does not sum to the matrix (gap {gap})"

    inv_p, inv_q = op.pair.inv_p, op.pair.inv_q
    row_mass = defaultdict(float)
    col_mass = defaultdict(float)
    for e in entries:
        row_mass[e.row] += e.prob_p
        col_mass[e.col] += e.prob_q
        if e.alpha == 0:
            continue
        assert e.prob_p > 0.0 or inv_p == 0.0, f"unreachable forward branch {e}"
        assert e.prob_q > 0.0 or inv_q == 0.0, f"unreachable backward branch {e}"
        denom = (e.prob_p ** inv_p) * (e.prob_q ** inv_q)
        assert abs(e.alpha) <= op.bound * denom * (1.0 + COST_TOL) + 1e-15, (
            f"cost certificate fails on {e}: |alpha|={abs(e.alpha)}, "
            f"b*P^(1/p)*Q^(1/q)={op.bound * denom}"
        )
    if full_law:
        for m, mass in row_mass.items():
            assert abs(mass - 1.0) <= max(op.rows, 4) * SUM_TOL, (
                f"forward law of row {m} sums to {mass}"
            )
        for n, mass in col_mass.items():
            assert abs(mass - 1.0) <= max(op.cols, 4) * SUM_TOL, (
                f"backward law of column {n} sums to {mass}"
            )

    norm = induced_norm(entrywise_abs(dense), op.pair.q)
    assert op.bound >= norm - NORM_SLACK, (
        f"bound {op.bound} is below the induced norm {norm}"
    )

    if draws:
        _check_sampling(op, keyed, draws, seed, sample_rows)
    return dense


def _check_sampling(op, keyed, draws, seed, sample_rows):
    rng = RngStream(seed, 9001)
    by_row = defaultdict(dict)
    by_col = defaultdict(dict)
    for (row, col, tag), e in keyed.items():
        by_row[row][(col, tag)] = e
        by_col[col][(row, tag)] = e

    rows = range(op.rows) if sample_rows is None else list(sample_rows)
    for m in rows:
        branches = by_row.get(m, {})
        counts = Counter()
        try:
            for _ in range(draws):
                t = op.sample_forward(m, rng)
                key = (t.index, t.tag)
                e = branches.get(key)
                if e is None:
                    assert t.ratio_p == 0 and t.ratio_q == 0, (
                        f"row {m}: sampled unenumerated branch {key} with "
                        f"nonzero ratios"
                    )
                    continue
                counts[key] += 1
                if e.prob_p > 0.0:
                    _assert_close(t.ratio_p, e.alpha / e.prob_p,
                                  context=f"forward ratio_p at {key}")
                if e.prob_q > 0.0:
                    _assert_close(t.ratio_q, e.alpha / e.prob_q,
                                  context=f"forward ratio_q at {key}")
        except (DeadRow, DeadColumn):
            assert not branches, f"row {m} raised dead but has support"
            continue
        probs = {k: e.prob_p for k, e in branches.items()}
        if probs:
            _check_frequencies(counts, probs, draws, f"row {m}")

    cols = range(op.cols) if sample_rows is None else list(sample_rows)
    for n in cols:
        branches = by_col.get(n, {})
        counts = Counter()
        try:
            for _ in range(draws):
                t = op.sample_backward(n, rng)
                key = (t.index, t.tag)
                e = branches.get(key)
                if e is None:
                    assert t.ratio_p == 0 and t.ratio_q == 0, (
                        f"column {n}: sampled unenumerated branch {key} with "
                        f"nonzero ratios"
                    )
                    continue
                counts[key] += 1
                if e.prob_p > 0.0:
                    _assert_close(t.ratio_p, e.alpha / e.prob_p,
                                  context=f"backward ratio_p at {key}")
                if e.prob_q > 0.0:
                    _assert_close(t.ratio_q, e.alpha / e.prob_q,
                                  context=f"backward ratio_q at {key}")
        except (DeadRow, DeadColumn):
            assert not branches, f"column {n} raised dead but has support"
            continue
        probs = {k: e.prob_q for k, e in branches.items()}
        if probs:
            _check_frequencies(counts, probs, draws, f"column {n}")


def assert_endpoint_certificate(sigma, dense_ref=None, draws=3000, seed=0):
    """Audit a chain endpoint: support, endpoint laws, cost, ratios."""
    entries = list(sigma.entries())
    keyed = {}
    for e in entries:
        key = (e.row, e.col, e.tag)
        assert key not in keyed, f"duplicate endpoint branch {key}"
        keyed[key] = e

    dense = dense_from_entries(entries, sigma.rows, sigma.cols)
    if dense_ref is not None:
        ref = np.asarray(dense_ref, dtype=complex)
        gap = float(np.max(np.abs(dense - ref)))
        assert gap <= SUM_TOL * max(1.0, float(np.max(np.abs(ref)))), (
            f"endpoint support does not sum to the matrix (gap {gap})"
        )

    inv_p, inv_q = sigma.pair.inv_p, sigma.pair.inv_q
    head_prob = {}
    tail_prob = {}
    for e in entries:
        if e.col in head_prob:
            assert abs(head_prob[e.col] - e.prob_p) <= SUM_TOL, (
                f"column {e.col} reports inconsistent head probabilities"
            )
        else:
            head_prob[e.col] = e.prob_p
        if e.row in tail_prob:
            assert abs(tail_prob[e.row] - e.prob_q) <= SUM_TOL, (
                f"row {e.row} reports inconsistent tail probabilities"
            )
        else:
            tail_prob[e.row] = e.prob_q
        if e.alpha == 0:
            continue
        assert e.prob_p > 0.0 or inv_p == 0.0, f"unreachable head branch {e}"
        assert e.prob_q > 0.0 or inv_q == 0.0, f"unreachable tail branch {e}"
        denom = (e.prob_p ** inv_p) * (e.prob_q ** inv_q)
        assert abs(e.alpha) <= sigma.bound * denom * (1.0 + COST_TOL) + 1e-15, (
            f"endpoint cost certificate fails on {e}"
        )
    assert abs(sum(head_prob.values()) - 1.0) <= max(sigma.cols, 4) * SUM_TOL
    assert abs(sum(tail_prob.values()) - 1.0) <= max(sigma.rows, 4) * SUM_TOL

    norm = induced_norm(entrywise_abs(dense), sigma.pair.q)
    assert sigma.bound >= norm - NORM_SLACK, (
        f"endpoint bound {sigma.bound} is below the induced norm {norm}"
    )

    if draws:
        rng = RngStream(seed, 417)
        heads = Counter()
        tails = Counter()
        for _ in range(draws):
            col, tag = sigma.sample_head(rng)
            heads[col] += 1
            row, tag2 = sigma.sample_tail(rng)
            tails[row] += 1
            rp, rq = sigma.ratios(row, col, tag)
            e = keyed.get((row, col, tag))
            if e is None or e.alpha == 0:
                continue
            if e.prob_p > 0.0:
                _assert_close(rp, e.alpha / e.prob_p,
                              context=f"head ratio at ({row}, {col})")
            if e.prob_q > 0.0:
                _assert_close(rq, e.alpha / e.prob_q,
                              context=f"tail ratio at ({row}, {col})")
        _check_frequencies(heads, {c: p for c, p in head_prob.items() if p > 0},
                           draws, "head law")
        _check_frequencies(tails, {r: p for r, p in tail_prob.items() if p > 0},
                           draws, "tail law")
    return dense
