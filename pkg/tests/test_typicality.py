"""Typicality tests.

Oracles here are independent enumerations written from the definitions (an
empirical-frequency window per symbol, zero-probability symbols excluded),
plus a handful of hand-derived values frozen before implementation.
"""

import itertools
import math

import numpy as np
import pytest

from cqlab.linalg import DimensionCapError, hermitian_eig, tensor_product
from cqlab.typicality import (
    ClassicalDistribution,
    CqEnsemble,
    TypicalityParams,
    cond_typical_projector,
    eigen_probs_along,
    is_typical,
    typical_mass,
    typical_projector,
    typical_set,
    typicality_threshold_n,
    verify_averaged_state_overlaps,
    verify_typicality_bounds,
)

KET0 = np.array([1.0, 0.0], dtype=complex)
KETP = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)


def proj(v):
    return np.outer(v, np.conj(v))


def oracle_typical(probs, seq, delta):
    """Definition transcribed directly: frequency window per symbol index."""
    n = len(seq)
    for sym, p in enumerate(probs):
        cnt = sum(1 for s in seq if s == sym)
        if p == 0:
            if cnt:
                return False
        elif abs(cnt / n - p) > delta * p + 1e-12:
            return False
    return True


def test_typical_set_uniform_binary_n2():
    d = ClassicalDistribution((0, 1), (0.5, 0.5))
    assert sorted(typical_set(d, 2, 0.5)) == [(0, 1), (1, 0)]


def test_typical_set_biased_n4():
    # p = (0.75, 0.25), delta = 0.3: windows force exactly three 'a' and one
    # 'b', so the typical set is the four arrangements of aaab.
    d = ClassicalDistribution(("a", "b"), (0.75, 0.25))
    got = typical_set(d, 4, 0.3)
    assert len(got) == 4
    assert all(seq.count("a") == 3 for seq in got)


def test_typical_boundary_kept():
    # uniform binary, n = 3, delta = 1/3: |1/3 - 1/2| = delta/2 exactly
    d = ClassicalDistribution((0, 1), (0.5, 0.5))
    assert is_typical(d, (0, 0, 1), 1.0 / 3.0)
    assert not is_typical(d, (0, 0, 0), 1.0 / 3.0)


def test_point_mass_all_checks_trivial():
    d = ClassicalDistribution(("z", "w"), (1.0, 0.0))
    assert typical_set(d, 5, 0.4) == [("z",) * 5]
    assert typical_mass(d, 5, 0.4) == 1.0
    assert not is_typical(d, ("z", "w", "z"), 0.4)


def test_is_typical_matches_oracle_bulk():
    rng = np.random.default_rng(21)
    for _ in range(40):
        k = int(rng.integers(2, 4))
        raw = rng.random(k)
        probs = raw / raw.sum()
        d = ClassicalDistribution(tuple(range(k)), tuple(probs))
        n = int(rng.integers(3, 9))
        delta = float(rng.uniform(0.1, 0.9))
        for _ in range(20):
            seq = tuple(rng.integers(0, k, size=n).tolist())
            assert is_typical(d, seq, delta) == oracle_typical(probs, seq, delta)


def test_is_typical_long_sequence_no_enumeration():
    d = ClassicalDistribution((0, 1), (0.5, 0.5))
    seq = tuple([0, 1] * 25)
    assert is_typical(d, seq, 0.1)
    with pytest.raises(ValueError):
        typical_set(d, 50, 0.1, cap=2**10)


def test_threshold_worked_values():
    # sequence form: p_min 1/2, delta 1/4, |X| = 2, eps = 0.1:
    # ceil(2 * 2 * 16 * log2(20)) = 277
    p = TypicalityParams(0.25, 0.1, (2,))
    assert typicality_threshold_n(p, "sequence", p_min=0.5) == 277
    # joint form with q_min = 1/2 and context |B||X| = 4, eps = 0.1:
    # ceil(4 * 16 * 2 * 2 * log2(40)) = 1363
    pj = TypicalityParams(0.25, 0.1, (2, 2))
    assert typicality_threshold_n(pj, "joint", p_min=0.5, q_min=0.5) == 1363
    # state form mirrors the sequence form with q_min
    assert typicality_threshold_n(p, "state", q_min=0.5) == 277


def test_c_correction_value():
    p = TypicalityParams(0.25, 0.1, (2,))
    assert abs(p.c() - (0.25 * 1.0 - 0.25 * math.log2(0.25))) < 1e-12
    # scaled variants may push the window parameter past 1
    assert p.c(6.0) == pytest.approx(1.5 * 1.0 - 1.5 * math.log2(1.5))


def test_typical_projector_maximally_mixed():
    rho = 0.5 * np.eye(2)
    for delta in (0.2, 0.5, 0.9):
        p = typical_projector(rho, 2, delta)
        assert p.rank == 2
        assert np.allclose(p.dense(), np.diag([0.0, 1.0, 1.0, 0.0]), atol=1e-12)
    p3 = typical_projector(rho, 3, 0.2)
    assert p3.rank == 0
    assert p3.meta["degenerate"]


def test_typical_projector_pure_state():
    p = typical_projector(proj(KETP), 3, 0.3)
    assert p.rank == 1
    expected = tensor_product([proj(KETP)] * 3)
    assert np.allclose(p.dense(), expected, atol=1e-12)


def test_typical_projector_matches_enumeration_oracle():
    rng = np.random.default_rng(33)
    for _ in range(10):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        n = int(rng.integers(2, 6))
        delta = float(rng.uniform(0.15, 0.8))
        p = typical_projector(rho, n, delta)
        w, v = np.linalg.eigh(rho)
        w = w[::-1]
        kept = {
            t
            for t in itertools.product(range(2), repeat=n)
            if oracle_typical(w, t, delta)
        }
        assert set(p.indices) == kept
        # eigenvalue sandwich holds on the support for every tested case
        h = -sum(x * math.log2(x) for x in w if x > 1e-14)
        c = delta * 1.0 - delta * math.log2(delta)
        for t in p.indices:
            mass = float(np.prod([w[i] for i in t]))
            assert 2.0 ** (-n * (h + c)) * (1 - 1e-9) <= mass
            assert mass <= 2.0 ** (-n * (h - c)) * (1 + 1e-9)
        assert p.rank <= 2.0 ** (n * (h + c)) * (1 + 1e-9)


def test_typical_projector_monotone_in_delta():
    rng = np.random.default_rng(41)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    p_small = typical_projector(rho, 3, 0.2)
    p_big = typical_projector(rho, 3, 0.6)
    assert set(p_small.indices) <= set(p_big.indices)


def test_typical_projector_commutes_with_power():
    rng = np.random.default_rng(55)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    p = typical_projector(rho, 4, 0.4)
    power = tensor_product([rho] * 4)
    d = p.dense()
    assert np.max(np.abs(d @ power - power @ d)) < 1e-10


def test_typical_projector_respects_cap():
    with pytest.raises(DimensionCapError):
        typical_projector(0.5 * np.eye(2), 13, 0.3)


def bb84_ensemble():
    dist = ClassicalDistribution((0, 1), (0.5, 0.5))
    return CqEnsemble(dist, {0: proj(KET0), 1: proj(KETP)})


def test_cond_typical_projector_pure_states():
    ens = bb84_ensemble()
    seq = (0, 1, 1, 0)
    p = cond_typical_projector(ens, seq, 0.3)
    assert p.rank == 1
    expected = tensor_product([ens.state(s) for s in seq])
    assert np.allclose(p.dense(), expected, atol=1e-12)


def test_cond_typical_projector_grouping_matches_direct_product():
    # For a sorted sequence the conditional projector is literally the tensor
    # product of per-symbol typical projectors; check against that directly.
    rng = np.random.default_rng(8)
    states = {}
    for s in (0, 1):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        m = a @ a.conj().T
        states[s] = m / np.trace(m).real
    ens = CqEnsemble(ClassicalDistribution((0, 1), (0.5, 0.5)), states)
    seq = (0, 0, 1, 1)
    delta = 0.5
    p = cond_typical_projector(ens, seq, delta)
    block0 = typical_projector(states[0], 2, delta).dense()
    block1 = typical_projector(states[1], 2, delta).dense()
    assert np.allclose(p.dense(), np.kron(block0, block1), atol=1e-11)


def test_cond_typical_projector_permutation_covariant():
    rng = np.random.default_rng(9)
    states = {}
    for s in (0, 1):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        m = a @ a.conj().T
        states[s] = m / np.trace(m).real
    ens = CqEnsemble(ClassicalDistribution((0, 1), (0.5, 0.5)), states)
    seq = (0, 1, 0, 1)
    perm = [2, 0, 3, 1]  # position j of the permuted sequence reads seq[perm[j]]
    permuted = tuple(seq[j] for j in perm)
    p1 = cond_typical_projector(ens, seq, 0.6)
    p2 = cond_typical_projector(ens, permuted, 0.6)
    # permuting the inputs permutes the kept multi-indices the same way
    expect = {tuple(t[j] for j in perm) for t in p1.indices}
    assert set(p2.indices) == expect


def test_cond_typical_projector_commutes_with_sequence_state():
    ens = bb84_ensemble()
    seq = (0, 1, 0)
    p = cond_typical_projector(ens, seq, 0.4)
    rho = ens.sequence_state(seq)
    d = p.dense()
    assert np.max(np.abs(d @ rho - rho @ d)) < 1e-10


def test_verify_sequence_report():
    d = ClassicalDistribution((0, 1), (0.5, 0.5))
    params = TypicalityParams(0.8, 0.25, (2,))
    checks = verify_typicality_bounds(d, 10, params)
    # delta = 0.8 keeps all counts 1..9; only the two constant words fall out
    assert checks["mass"].value == pytest.approx(1.0 - 2.0 / 1024.0)
    assert checks["mass"].passed
    assert checks["sandwich"].passed
    assert checks["cardinality"].passed


def test_verify_state_report():
    avg = 0.5 * proj(KET0) + 0.5 * proj(KETP)
    params = TypicalityParams(0.8, 0.3, (2,))
    checks = verify_typicality_bounds(avg, 8, params)
    assert checks["sandwich"].passed
    assert checks["rank"].passed
    assert checks["commutes"].passed
    assert checks["mass"].value == pytest.approx(
        typical_projector(avg, 8, 0.8).index_mass(
            [np.asarray(typical_projector(avg, 1, 0.8).meta["eigen_probs"])] * 8
        )
    )


def test_verify_conditional_report_pure():
    ens = bb84_ensemble()
    seq = (0, 1, 0, 1)
    params = TypicalityParams(0.5, 0.2, (2, 2))
    checks = verify_typicality_bounds(ens, seq, params)
    # pure branch states make the conditional mass exactly 1
    assert checks["mass"].value == pytest.approx(1.0)
    assert checks["mass"].passed
    assert checks["sandwich"].passed
    assert checks["rank"].passed


def test_averaged_state_overlap_report():
    # two-sender product ensemble with BB84 states indexed by (x, y)
    px = ClassicalDistribution((0, 1), (2.0 / 3.0, 1.0 / 3.0))
    py = ClassicalDistribution((0, 1), (0.5, 0.5))
    states = {
        (0, 0): proj(KET0),
        (0, 1): proj(KETP),
        (1, 0): proj(np.array([0.0, 1.0], dtype=complex)),
        (1, 1): proj(np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)),
    }
    pair = CqEnsemble(px.product(py), states)
    x_states = {
        x: 0.5 * states[(x, 0)] + 0.5 * states[(x, 1)] for x in (0, 1)
    }
    x_ens = CqEnsemble(px, x_states)
    params = TypicalityParams(0.25, 0.3, (2, 4))
    xn = (0, 0, 1, 0, 1, 0)
    yn = (0, 1, 0, 1, 1, 0)
    checks = verify_averaged_state_overlaps(pair, x_ens, xn, yn, params)
    assert 0.0 <= checks["average_overlap"].value <= 1.0 + 1e-12
    assert 0.0 <= checks["conditional_overlap"].value <= 1.0 + 1e-12


def test_eigen_probs_along():
    ens = bb84_ensemble()
    probs = eigen_probs_along(ens, (0, 1))
    assert np.allclose(probs[0], [1.0, 0.0])
    assert np.allclose(probs[1], [1.0, 0.0])


def test_distribution_validation():
    with pytest.raises(ValueError):
        ClassicalDistribution((0, 1), (0.6, 0.6))
    with pytest.raises(ValueError):
        ClassicalDistribution((0, 0), (0.5, 0.5))
    with pytest.raises(ValueError):
        ClassicalDistribution((0, 1), (1.2, -0.2))
