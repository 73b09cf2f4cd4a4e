"""Tests for the projector-sandwich smoothing construction."""

import itertools
import math

import numpy as np
import pytest

from cqlab.linalg import trace_distance
from cqlab.smoothing import (
    smoothed_states,
    triple_layers,
    verify_smoothing_bounds,
)
from cqlab.typicality import ClassicalDistribution, CqEnsemble, is_typical

KET0 = np.array([[1.0, 0.0], [0.0, 0.0]])
KET1 = np.array([[0.0, 0.0], [0.0, 1.0]])
PLUS = np.array([[0.5, 0.5], [0.5, 0.5]])
MINUS = np.array([[0.5, -0.5], [-0.5, 0.5]])


def triple_system(p_x, z_rows, p_y, state_fn):
    """Assemble the (x, z, y)-keyed ensemble with joint p(x)p(z|x)p(y)."""
    symbols, probs, states = [], [], {}
    for x, px in p_x.items():
        for z, pz in z_rows[x].items():
            for y, py in p_y.items():
                symbols.append((x, z, y))
                probs.append(px * pz * py)
                states[(x, z, y)] = state_fn(x, z, y)
    dist = ClassicalDistribution(tuple(symbols), tuple(probs))
    return CqEnsemble(dist, states)


def diag_state(*entries):
    return np.diag(np.array(entries, dtype=float))


def classical_truncation_oracle(system, n, delta):
    """Diagonal-case reference: count-window truncation of output strings.

    Valid only when every state is diagonal with distinct entries (and so
    are all the layer averages); selection windows then act directly on the
    computational-basis letters.
    """
    layers = triple_layers(system)
    d = system.dim
    q_bar = np.real(np.diag(layers.rho_bar))
    q_x = {x: np.real(np.diag(layers.x_ens.state(x))) for x in layers.p_x.support}
    q_xz = {s: np.real(np.diag(layers.pair_ens.state(s))) for s in layers.p_xz.support}
    for vec in [q_bar, *q_x.values(), *q_xz.values()]:
        gaps = np.abs(np.subtract.outer(vec, vec))
        assert np.all(gaps[~np.eye(len(vec), dtype=bool)] > 1e-6), "oracle needs distinct entries"

    def window_ok(counts, m, q, slack):
        # exact-boundary counts are inside the closed window; grant 1e-9 grace
        for b, p in enumerate(q):
            c = counts.get(b, 0)
            if p <= 0:
                if c:
                    return False
            elif abs(c / m - p) > slack * p + 1e-9:
                return False
        return True

    def smooth_one(zipped):
        xs = tuple(s[0] for s in zipped)
        diag = np.ones(1)
        for sym in zipped:
            diag = np.kron(diag, np.real(np.diag(system.state(sym))))
        kept = np.zeros(d**n)
        for i, letters in enumerate(itertools.product(range(d), repeat=n)):
            counts = {}
            for b in letters:
                counts[b] = counts.get(b, 0) + 1
            ok = window_ok(counts, n, q_bar, 2 * delta)
            for x in set(xs):
                pos = [j for j, v in enumerate(xs) if v == x]
                sub = {}
                for j in pos:
                    sub[letters[j]] = sub.get(letters[j], 0) + 1
                ok = ok and window_ok(sub, len(pos), q_x[x], 6 * delta)
            for pair in {(s[0], s[1]) for s in zipped}:
                pos = [j for j, s in enumerate(zipped) if (s[0], s[1]) == pair]
                sub = {}
                for j in pos:
                    sub[letters[j]] = sub.get(letters[j], 0) + 1
                ok = ok and window_ok(sub, len(pos), q_xz[pair], 6 * delta)
            kept[i] = 1.0 if ok else 0.0
        total = float(np.sum(kept * diag))
        if total <= 1e-14:
            return np.eye(d**n) / d**n
        return np.diag(kept * diag / total)

    return smooth_one


def pure_system():
    # two support symbols so that n = 4 admits typical sequences
    return triple_system(
        {0: 0.5, 1: 0.5},
        {0: {0: 1.0}, 1: {1: 1.0}},
        {0: 1.0},
        lambda x, z, y: PLUS,
    )


def diagonal_system():
    entries = {
        (0, 0): (0.86, 0.14),
        (0, 1): (0.32, 0.68),
        (1, 0): (0.57, 0.43),
        (1, 1): (0.23, 0.77),
    }
    return triple_system(
        {0: 0.5, 1: 0.5},
        {0: {0: 1.0}, 1: {1: 1.0}},
        {0: 0.5, 1: 0.5},
        lambda x, z, y: diag_state(*entries[(x, y)]),
    )


def bb84_system():
    states = {(0, 0): KET0, (1, 0): PLUS, (0, 1): KET1, (1, 1): MINUS}
    return triple_system(
        {0: 2.0 / 3.0, 1: 1.0 / 3.0},
        {0: {0: 1.0}, 1: {1: 1.0}},
        {0: 0.5, 1: 0.5},
        lambda x, z, y: states[(x, y)],
    )


def layered_system():
    # z genuinely random given x = 0, so the x-layer and pair-layer differ
    entries = {
        (0, 0, 0): (0.9, 0.1),
        (0, 0, 1): (0.8, 0.2),
        (0, 1, 0): (0.3, 0.7),
        (0, 1, 1): (0.2, 0.8),
        (1, 0, 0): (0.6, 0.4),
        (1, 0, 1): (0.55, 0.45),
    }
    return triple_system(
        {0: 2.0 / 3.0, 1: 1.0 / 3.0},
        {0: {0: 0.5, 1: 0.5}, 1: {0: 1.0}},
        {0: 0.5, 1: 0.5},
        lambda x, z, y: diag_state(*entries[(x, z, y)]),
    )


def test_identical_pure_states_smoothing_is_identity():
    system = pure_system()
    se = smoothed_states(system, 4, 0.3)
    saw_typical = saw_atypical = False
    for r in se.records:
        if r.typical:
            saw_typical = True
            rho = system.sequence_state(r.zipped)
            assert trace_distance(r.state, rho) < 1e-12
            assert abs(r.denominator - 1.0) < 1e-12
            assert max(r.overlap_failures) < 1e-12
        else:
            saw_atypical = True
    assert saw_typical and saw_atypical


def test_atypical_branch_is_exactly_maximally_mixed():
    se = smoothed_states(pure_system(), 4, 0.3)
    mixed = np.eye(16) / 16.0
    flagged = [r for r in se.records if not r.typical]
    assert flagged
    for r in flagged:
        assert np.array_equal(r.state, mixed)


def test_diagonal_matches_classical_truncation_oracle():
    system = diagonal_system()
    n, delta = 4, 0.25
    se = smoothed_states(system, n, delta)
    oracle = classical_truncation_oracle(system, n, delta)
    checked = 0
    for r in se.records:
        if r.typical and not r.zero_denominator:
            expected = oracle(r.zipped)
            assert np.max(np.abs(r.state - expected)) < 1e-9
            checked += 1
    assert checked > 0


def test_layered_sandwich_matches_oracle():
    system = layered_system()
    n, delta = 6, 0.35
    support = system.dist.support
    typical_pick = tuple(zip(*support))
    atypical_pick = tuple(zip(*[support[0]] * n))
    se = smoothed_states(system, n, delta, triples=[typical_pick, atypical_pick])
    rec = se.record_for(*typical_pick)
    assert rec.typical and not rec.zero_denominator
    oracle = classical_truncation_oracle(system, n, delta)
    assert np.max(np.abs(rec.state - oracle(rec.zipped))) < 1e-9
    other = se.record_for(*atypical_pick)
    assert not other.typical
    assert np.array_equal(other.state, np.eye(64) / 64.0)


def test_marginal_consistency():
    system = diagonal_system()
    se = smoothed_states(system, 4, 0.25)
    pair_sums, x_sums = {}, {}
    avg = np.zeros((16, 16), dtype=np.complex128)
    for r in se.records:
        if r.probability == 0:
            continue
        pair_sums.setdefault(tuple(zip(r.xs, r.zs)), []).append((r.probability, r.state))
        x_sums.setdefault(r.xs, []).append((r.probability, r.state))
        avg += r.probability * r.state
    for key, terms in pair_sums.items():
        w = math.prod(se.layers.p_xz.prob(p) for p in key)
        manual = sum(p * s for p, s in terms) / w
        assert np.max(np.abs(manual - se.pair_marginals[key])) < 1e-10
    for xs, terms in x_sums.items():
        w = math.prod(se.layers.p_x.prob(x) for x in xs)
        manual = sum(p * s for p, s in terms) / w
        assert np.max(np.abs(manual - se.x_marginals[xs])) < 1e-10
    assert np.max(np.abs(avg - se.average)) < 1e-10
    recon = np.zeros_like(avg)
    for xs, mat in se.x_marginals.items():
        recon += math.prod(se.layers.p_x.prob(x) for x in xs) * mat
    assert np.max(np.abs(recon - se.average)) < 1e-10
    assert abs(sum(r.probability for r in se.records) - 1.0) < 1e-9


def test_states_are_density_operators():
    se = smoothed_states(diagonal_system(), 4, 0.25)
    for r in se.records:
        assert abs(np.trace(r.state).real - 1.0) < 1e-10
        assert np.max(np.abs(r.state - r.state.conj().T)) < 1e-12
        assert np.min(np.linalg.eigvalsh(r.state)) > -1e-12


def test_bb84_denominators_meet_chain_prediction():
    se = smoothed_states(bb84_system(), 6, 0.2)
    eps = se.measured_epsilon
    floor = 1.0 - 5.0 * math.sqrt(eps)
    typical = [r for r in se.records if r.typical]
    assert typical
    for r in typical:
        assert r.denominator >= floor - 1e-12


def test_verify_bounds_guaranteed_rows():
    system = diagonal_system()
    se = smoothed_states(system, 4, 0.25)
    report = verify_smoothing_bounds(se)
    assert report["regime"] == "measured"
    checks = report["checks"]
    assert checks["denominator"].passed
    assert checks["l1-triple"].passed
    assert checks["l1-global"].passed
    if report["epsilon"] < 1.0 / 64.0:
        assert checks["linf-pair"].passed
        assert checks["linf-x"].passed
        assert checks["linf-average"].passed
    # weighted typical plus atypical pieces must reproduce the global row
    manual = 0.0
    for r in se.records:
        if r.probability > 0:
            manual += r.probability * trace_distance(r.state, system.sequence_state(r.zipped))
    assert abs(manual - checks["l1-global"].value) < 1e-12


def test_verify_bounds_random_qubit_states():
    rng = np.random.default_rng(7)

    def random_state(x, z, y):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = a @ a.conj().T
        return rho / np.trace(rho).real

    system = triple_system(
        {0: 0.5, 1: 0.5},
        {0: {0: 1.0}, 1: {1: 1.0}},
        {0: 0.5, 1: 0.5},
        random_state,
    )
    se = smoothed_states(system, 4, 0.3)
    assert any(r.typical for r in se.records)
    report = verify_smoothing_bounds(se)
    checks = report["checks"]
    assert checks["denominator"].passed
    assert checks["l1-triple"].passed
    assert checks["l1-global"].passed
    assert checks["linf-average"].value > 0


def test_theoretical_regime_switch():
    se = smoothed_states(pure_system(), 4, 0.3)
    report = verify_smoothing_bounds(se, epsilon=0.01)
    # desk-scale n sits far below the joint threshold
    assert report["regime"] == "measured"
    assert report["threshold_n"] > 4
    assert report["epsilon"] == se.measured_epsilon


def test_zero_denominator_flagged_and_mixed():
    dist = ClassicalDistribution((("a", "b", "c"),), (1.0,))
    system = CqEnsemble(dist, {("a", "b", "c"): diag_state(0.85, 0.15)})
    se = smoothed_states(system, 2, 0.1)
    (record,) = [r for r in se.records if r.typical]
    assert record.zero_denominator
    assert record.denominator <= 1e-14
    assert np.array_equal(record.state, np.eye(4) / 4.0)
    report = verify_smoothing_bounds(se)
    assert report["checks"]["l1-triple"].passed


def test_caller_supplied_triples():
    system = diagonal_system()
    picks = [
        ((0, 0, 1, 1), (0, 0, 1, 1), (0, 1, 0, 1)),
        ((0, 0, 0, 0), (0, 0, 0, 0), (0, 0, 0, 0)),
    ]
    se = smoothed_states(system, 4, 0.25, triples=picks)
    assert not se.complete
    assert len(se.records) == 2
    assert se.pair_marginals is None and se.average is None
    full = smoothed_states(system, 4, 0.25)
    for xs, zs, ys in picks:
        a = se.record_for(xs, zs, ys)
        b = full.record_for(xs, zs, ys)
        assert a.typical == b.typical
        assert np.max(np.abs(a.state - b.state)) < 1e-12
    report = verify_smoothing_bounds(se)
    assert report["checks"]["linf-pair"].informative
    assert report["checks"]["l1-global"].informative


def test_typicality_flags_match_reference():
    system = diagonal_system()
    se = smoothed_states(system, 4, 0.25)
    assert any(r.typical for r in se.records)
    for r in se.records:
        assert r.typical == is_typical(system.dist, r.zipped, 0.25)


def test_input_validation():
    flat = ClassicalDistribution(("a", "b"), (0.5, 0.5))
    with pytest.raises(ValueError, match="triples"):
        smoothed_states(CqEnsemble(flat, {"a": KET0, "b": KET1}), 2, 0.2)

    # y marginal correlated with x
    symbols = ((0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1))
    probs = (0.4, 0.1, 0.1, 0.4)
    states = {s: KET0 for s in symbols}
    with pytest.raises(ValueError, match="factor"):
        smoothed_states(CqEnsemble(ClassicalDistribution(symbols, probs), states), 2, 0.2)

    system = diagonal_system()
    with pytest.raises(ValueError, match="cap"):
        smoothed_states(system, 4, 0.25, max_triples=100)
    with pytest.raises(ValueError, match="delta"):
        smoothed_states(system, 2, 0.0)
    with pytest.raises(ValueError, match="length"):
        smoothed_states(system, 2, 0.2, triples=[((0,), (0,), (0,))])
    with pytest.raises(ValueError, match="unknown symbol"):
        smoothed_states(system, 2, 0.2, triples=[((0, 9), (0, 0), (0, 0))])
    with pytest.raises(KeyError):
        smoothed_states(system, 2, 0.2, triples=[((0, 0), (0, 0), (0, 0))]).record_for(
            (1, 1), (0, 0), (0, 0)
        )
