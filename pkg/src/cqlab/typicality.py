"""Frequency-typical sets and typical projectors.

A length-n sequence is typical for a distribution p, with relative slack
delta, when every symbol's empirical frequency N(x)/n sits within delta*p(x)
of p(x); symbols of probability zero must not occur at all.  The quantum
analogue keeps the tensor-power eigenbasis multi-indices whose eigenvalue
labels form a typical sequence for the eigenvalue distribution.

All entropies and exponents are base 2 throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as cartesian
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .linalg import (
    DIM_CAP,
    Projector,
    as_matrix,
    check_dim_cap,
    hermitian_eig,
    tensor_product,
)

#: Eigenvalues closer than this are snapped to a common value before the
#: frequency test, so exact degeneracies survive floating-point noise.
EIGENVALUE_MERGE_TOL = 1e-12

#: Eigenvalues at or below this count as zero-probability labels.
ZERO_EIGENVALUE_TOL = 1e-12

#: Slack applied to the frequency window so knife-edge cases (exact boundary
#: frequencies) land inside rather than outside.
WINDOW_SLACK = 1e-12

#: Default ceiling on brute-force sequence enumeration.
SEQUENCE_CAP = 2**20

Symbol = Hashable


def entropy_bits(probs: Iterable[float]) -> float:
    """Shannon entropy in bits, ignoring entries <= 1e-14."""
    h = 0.0
    for p in probs:
        if p > 1e-14:
            h -= p * math.log2(p)
    return h


@dataclass(frozen=True)
class ClassicalDistribution:
    """Finite distribution over hashable symbols (order is part of identity)."""

    symbols: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.symbols) != len(self.probs):
            raise ValueError("symbols and probabilities differ in length")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in distribution")
        p = np.asarray(self.probs, dtype=float)
        if p.size == 0:
            raise ValueError("empty distribution")
        if np.any(p < -1e-12):
            raise ValueError("negative probability")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()}, expected 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "ClassicalDistribution":
        items = list(mapping.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))

    def prob(self, symbol) -> float:
        try:
            return self.probs[self.symbols.index(symbol)]
        except ValueError:
            raise KeyError(f"unknown symbol {symbol!r}") from None

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def support(self) -> tuple:
        return tuple(s for s, p in zip(self.symbols, self.probs) if p > 0)

    @property
    def p_min(self) -> float:
        pos = [p for p in self.probs if p > 0]
        return min(pos)

    def entropy(self) -> float:
        return entropy_bits(self.probs)

    def product(self, other: "ClassicalDistribution") -> "ClassicalDistribution":
        """Independent joint distribution over symbol pairs."""
        syms, probs = [], []
        for a, pa in zip(self.symbols, self.probs):
            for b, pb in zip(other.symbols, other.probs):
                syms.append((a, b))
                probs.append(pa * pb)
        return ClassicalDistribution(tuple(syms), tuple(probs))

    def sample_sequence(self, n: int, rng: np.random.Generator) -> tuple:
        idx = rng.choice(len(self.symbols), size=n, p=np.asarray(self.probs))
        return tuple(self.symbols[i] for i in idx)


def sequence_counts(seq: Sequence) -> dict:
    counts: dict = {}
    for s in seq:
        counts[s] = counts.get(s, 0) + 1
    return counts


def is_typical(dist: ClassicalDistribution, seq: Sequence, delta: float) -> bool:
    """Membership in the relative-delta frequency-typical set.

    Works for any positive ``delta``; never enumerates anything.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = len(seq)
    if n == 0:
        raise ValueError("empty sequence")
    counts = sequence_counts(seq)
    known = set(dist.symbols)
    for s in counts:
        if s not in known:
            raise ValueError(f"sequence contains unknown symbol {s!r}")
    for s, p in zip(dist.symbols, dist.probs):
        cnt = counts.get(s, 0)
        if p <= 0:
            if cnt:
                return False
            continue
        if abs(cnt / n - p) > delta * p + WINDOW_SLACK:
            return False
    return True


def typical_set(
    dist: ClassicalDistribution, n: int, delta: float, cap: int = SEQUENCE_CAP
) -> list[tuple]:
    """All typical sequences of length n, by full enumeration over the support."""
    support = dist.support
    total = len(support) ** n
    if total > cap:
        raise ValueError(
            f"enumerating {total} sequences exceeds the cap {cap}; "
            f"use is_typical for membership queries instead"
        )
    return [
        seq
        for seq in cartesian(support, repeat=n)
        if is_typical(dist, seq, delta)
    ]


def typical_mass(dist: ClassicalDistribution, n: int, delta: float, cap: int = SEQUENCE_CAP) -> float:
    mass = 0.0
    for seq in typical_set(dist, n, delta, cap):
        w = 1.0
        for s in seq:
            w *= dist.prob(s)
        mass += w
    return mass


@dataclass(frozen=True)
class TypicalityParams:
    """Slack parameters shared by the finite-size guarantees.

    ``context_dims`` are the alphabet/space sizes whose product enters the
    exponent correction c(delta) = delta*log2(prod dims) - delta*log2(delta).
    The base ``delta`` must lie in (0, 1); scaled variants used by layered
    constructions (2*delta, 6*delta) may exceed 1 and are handled by the
    frequency window directly.
    """

    delta: float
    epsilon: float
    context_dims: tuple

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if any(int(d) < 1 for d in self.context_dims):
            raise ValueError("context dimensions must be positive")
        object.__setattr__(self, "context_dims", tuple(int(d) for d in self.context_dims))

    @property
    def log_context(self) -> float:
        return math.log2(float(np.prod(self.context_dims)))

    def c(self, scale: float = 1.0) -> float:
        """Exponent correction at ``scale * delta``."""
        d = scale * self.delta
        return d * self.log_context - d * math.log2(d)


def typicality_threshold_n(
    params: TypicalityParams,
    form: str,
    *,
    p_min: float | None = None,
    q_min: float | None = None,
) -> int:
    """Smallest block length for which the one-shot guarantees are promised.

    ``form`` selects the prefactor: "sequence" needs 2/p_min, "state" needs
    2/q_min, and "joint" (conditional projectors, averaged-state overlaps,
    smoothing) needs 4/(p_min*q_min).  The log argument is always
    prod(context_dims)/epsilon.
    """
    log_term = math.log2(float(np.prod(params.context_dims)) / params.epsilon)
    inv_d2 = params.delta**-2
    if form == "sequence":
        if p_min is None:
            raise ValueError("sequence form needs p_min")
        value = 2.0 * inv_d2 * log_term / p_min
    elif form == "state":
        if q_min is None:
            raise ValueError("state form needs q_min")
        value = 2.0 * inv_d2 * log_term / q_min
    elif form == "joint":
        if p_min is None or q_min is None:
            raise ValueError("joint form needs p_min and q_min")
        value = 4.0 * inv_d2 * log_term / (p_min * q_min)
    else:
        raise ValueError(f"unknown threshold form {form!r}")
    return int(math.ceil(value - 1e-9))


def _snap_eigenvalues(w: np.ndarray) -> tuple[np.ndarray, bool]:
    """Replace eigenvalues equal within the merge tolerance by a shared value.

    Keeps one probability label per eigenvector; only the numerical values
    are unified so the frequency window treats exact degeneracies uniformly.
    Returns the snapped values and a degeneracy flag.
    """
    snapped = w.astype(float).copy()
    degenerate = False
    i = 0
    while i < len(snapped):
        j = i + 1
        while j < len(snapped) and abs(snapped[i] - snapped[j]) <= EIGENVALUE_MERGE_TOL:
            j += 1
        if j - i > 1:
            degenerate = True
            snapped[i:j] = float(np.mean(snapped[i:j]))
        i = j
    snapped[snapped <= ZERO_EIGENVALUE_TOL] = 0.0
    return snapped, degenerate


def _typical_count_windows(q: np.ndarray, n: int, delta: float) -> list[tuple[int, int]]:
    """Per-label inclusive count windows implied by the frequency condition."""
    windows = []
    for p in q:
        if p <= 0:
            windows.append((0, 0))
            continue
        lo = math.ceil(n * (p - delta * p) - n * WINDOW_SLACK)
        hi = math.floor(n * (p + delta * p) + n * WINDOW_SLACK)
        windows.append((max(0, lo), min(n, hi)))
    return windows


def _typical_index_tuples(q: np.ndarray, n: int, delta: float) -> list[tuple[int, ...]]:
    d = len(q)
    windows = _typical_count_windows(q, n, delta)
    kept = []
    for t in cartesian(range(d), repeat=n):
        counts = [0] * d
        for i in t:
            counts[i] += 1
        if all(lo <= c <= hi for c, (lo, hi) in zip(counts, windows)):
            kept.append(t)
    return kept


def typical_projector(
    rho,
    n: int,
    delta: float,
    cap: int | None = None,
) -> Projector:
    """Typical projector of the n-th tensor power of ``rho``.

    Structured result: diagonal in the tensor-power eigenbasis of ``rho``
    (deterministic descending eigenbasis), keeping the multi-indices whose
    eigenvalue labels are frequency-typical for the eigenvalue distribution.
    The metadata records the snapped eigenvalue labels and whether any exact
    degeneracy was merged.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = as_matrix(rho)
    d = a.shape[0]
    check_dim_cap(d**n, cap)
    w, v = hermitian_eig(a)
    q, degenerate = _snap_eigenvalues(w)
    kept = _typical_index_tuples(q, n, delta)
    return Projector.from_product_basis(
        [v] * n,
        kept,
        meta={
            "delta": delta,
            "eigen_probs": tuple(float(x) for x in q),
            "degenerate": degenerate,
            "entropy": entropy_bits(q),
        },
    )


@dataclass(frozen=True)
class CqEnsemble:
    """Finite family of density operators indexed by classical symbols."""

    dist: ClassicalDistribution
    states: Mapping

    def __post_init__(self):
        dims = set()
        for s in self.dist.support:
            if s not in self.states:
                raise ValueError(f"missing state for symbol {s!r}")
            dims.add(as_matrix(self.states[s]).shape[0])
        if len(dims) != 1:
            raise ValueError("ensemble states have inconsistent dimensions")

    @property
    def dim(self) -> int:
        return as_matrix(self.states[self.dist.support[0]]).shape[0]

    def state(self, symbol) -> np.ndarray:
        return as_matrix(self.states[symbol])

    def average_state(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for s in self.dist.support:
            out += self.dist.prob(s) * self.state(s)
        return out

    def conditional_entropy(self) -> float:
        """Average output entropy sum_x p(x) H(rho_x), in bits."""
        total = 0.0
        for s in self.dist.support:
            w = np.linalg.eigvalsh(self.state(s))
            total += self.dist.prob(s) * entropy_bits(w)
        return total

    def sequence_state(self, seq: Sequence, cap: int | None = None) -> np.ndarray:
        return tensor_product([self.state(s) for s in seq], cap=cap)

    def q_min(self) -> float:
        """Smallest positive eigenvalue across the ensemble states."""
        vals = []
        for s in self.dist.support:
            w = np.linalg.eigvalsh(self.state(s))
            vals.extend(x for x in w if x > ZERO_EIGENVALUE_TOL)
        return float(min(vals))


def cond_typical_projector(
    ensemble: CqEnsemble,
    seq: Sequence,
    delta: float,
    cap: int | None = None,
) -> Projector:
    """Conditional typical projector for the product state along ``seq``.

    Positions are grouped by symbol; each group contributes the typical
    projector of the corresponding tensor-power state at slack ``delta``,
    and the factors are placed back at the group's original positions.  The
    result commutes with the product state by construction.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = len(seq)
    if n == 0:
        raise ValueError("empty sequence")
    d = ensemble.dim
    check_dim_cap(d**n, cap)

    positions: dict = {}
    for j, s in enumerate(seq):
        positions.setdefault(s, []).append(j)

    factors: list = [None] * n
    group_keeps: list[tuple[list[int], list[tuple[int, ...]]]] = []
    degenerate = False
    for s, pos in positions.items():
        w, v = hermitian_eig(ensemble.state(s))
        q, deg = _snap_eigenvalues(w)
        degenerate = degenerate or deg
        for j in pos:
            factors[j] = v
        group_keeps.append((pos, _typical_index_tuples(q, len(pos), delta)))

    kept: list[tuple[int, ...]] = []
    for combo in cartesian(*(keeps for _, keeps in group_keeps)):
        full = [0] * n
        for (pos, _), sub in zip(group_keeps, combo):
            for j, i in zip(pos, sub):
                full[j] = i
        kept.append(tuple(full))

    return Projector.from_product_basis(
        factors,
        kept,
        meta={"delta": delta, "degenerate": degenerate, "symbols": tuple(seq)},
    )


def eigen_probs_along(ensemble: CqEnsemble, seq: Sequence) -> list[np.ndarray]:
    """Per-position snapped eigenvalue vectors of the states along ``seq``."""
    cache: dict = {}
    out = []
    for s in seq:
        if s not in cache:
            w, _ = hermitian_eig(ensemble.state(s))
            cache[s] = _snap_eigenvalues(w)[0]
        out.append(cache[s])
    return out


# ---------------------------------------------------------------------------
# report-style verification


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    informative: bool = False
    note: str = ""


def _sandwich_check(
    name: str, masses: Iterable[float], n: int, entropy: float, c: float
) -> Check:
    lo = 2.0 ** (-n * (entropy + c))
    hi = 2.0 ** (-n * (entropy - c))
    worst_lo, worst_hi, ok = math.inf, -math.inf, True
    count = 0
    for m in masses:
        count += 1
        worst_lo = min(worst_lo, m)
        worst_hi = max(worst_hi, m)
        if not (lo * (1 - 1e-9) <= m <= hi * (1 + 1e-9)):
            ok = False
    if count == 0:
        return Check(name, 0.0, 0.0, True, informative=True, note="empty support")
    return Check(
        name,
        worst_lo,
        lo,
        ok,
        note=f"probabilities in [{worst_lo:.3e}, {worst_hi:.3e}], "
        f"sandwich [{lo:.3e}, {hi:.3e}]",
    )


def verify_sequence_typicality(
    dist: ClassicalDistribution, n: int, params: TypicalityParams, cap: int = SEQUENCE_CAP
) -> dict:
    """Mass, per-sequence sandwich, and cardinality checks by enumeration."""
    seqs = typical_set(dist, n, params.delta, cap)
    h = dist.entropy()
    c = params.c()
    masses = []
    total = 0.0
    for seq in seqs:
        w = 1.0
        for s in seq:
            w *= dist.prob(s)
        masses.append(w)
        total += w
    threshold = typicality_threshold_n(params, "sequence", p_min=dist.p_min)
    checks = {
        "mass": Check(
            "mass",
            total,
            1.0 - params.epsilon,
            total >= 1.0 - params.epsilon - 1e-12,
            informative=n < threshold,
            note=f"threshold n >= {threshold}",
        ),
        "sandwich": _sandwich_check("sandwich", masses, n, h, c),
        "cardinality": Check(
            "cardinality",
            float(len(seqs)),
            2.0 ** (n * (h + c)),
            len(seqs) <= 2.0 ** (n * (h + c)) * (1 + 1e-9),
        ),
    }
    return checks


def verify_state_typicality(rho, n: int, params: TypicalityParams, cap: int | None = None) -> dict:
    """Trace mass, support sandwich, and rank bound for a typical projector."""
    proj = typical_projector(rho, n, params.delta, cap)
    q = np.asarray(proj.meta["eigen_probs"])
    h = float(proj.meta["entropy"])
    c = params.c()
    masses = []
    total = 0.0
    for t in proj.indices:
        w = 1.0
        for i in t:
            w *= float(q[i])
        masses.append(w)
        total += w
    q_min = float(min(x for x in q if x > 0))
    threshold = typicality_threshold_n(params, "state", q_min=q_min)
    commutes = True
    if proj.dim <= 256:
        dense = proj.dense()
        power = tensor_product([as_matrix(rho)] * n)
        comm = dense @ power - power @ dense
        commutes = float(np.max(np.abs(comm))) <= 1e-9
    checks = {
        "mass": Check(
            "mass",
            total,
            1.0 - params.epsilon,
            total >= 1.0 - params.epsilon - 1e-12,
            informative=n < threshold,
            note=f"threshold n >= {threshold}",
        ),
        "sandwich": _sandwich_check("sandwich", masses, n, h, c),
        "rank": Check(
            "rank",
            float(proj.rank),
            2.0 ** (n * (h + c)),
            proj.rank <= 2.0 ** (n * (h + c)) * (1 + 1e-9),
        ),
        "commutes": Check("commutes", 0.0, 0.0, commutes, note="skipped above dim 256" if proj.dim > 256 else ""),
    }
    return checks


def verify_conditional_typicality(
    ensemble: CqEnsemble, seq: Sequence, params: TypicalityParams, cap: int | None = None
) -> dict:
    """Conditional-projector checks for one input sequence.

    The mass and sandwich statements are promised only for typical input
    sequences; for atypical input the report flags every check informative.
    """
    n = len(seq)
    proj = cond_typical_projector(ensemble, seq, params.delta, cap)
    probs = eigen_probs_along(ensemble, seq)
    mass = proj.index_mass(probs)
    h_cond = ensemble.conditional_entropy()
    c = params.c()
    masses = []
    for t in proj.indices:
        w = 1.0
        for vec, i in zip(probs, t):
            w *= float(vec[i])
        masses.append(w)
    seq_typical = is_typical(ensemble.dist, seq, params.delta)
    threshold = typicality_threshold_n(
        params, "joint", p_min=ensemble.dist.p_min, q_min=ensemble.q_min()
    )
    checks = {
        "mass": Check(
            "mass",
            mass,
            1.0 - params.epsilon,
            mass >= 1.0 - params.epsilon - 1e-12,
            informative=(n < threshold) or not seq_typical,
            note=f"threshold n >= {threshold}; input typical: {seq_typical}",
        ),
        "sandwich": _sandwich_check("sandwich", masses, n, h_cond, c),
        "rank": Check(
            "rank",
            float(proj.rank),
            2.0 ** (n * (h_cond + c)),
            proj.rank <= 2.0 ** (n * (h_cond + c)) * (1 + 1e-9),
            informative=not seq_typical,
        ),
    }
    if not seq_typical:
        checks["sandwich"].informative = True
    return checks


def verify_averaged_state_overlaps(
    pair_ensemble: CqEnsemble,
    x_ensemble: CqEnsemble,
    xn: Sequence,
    yn: Sequence,
    params: TypicalityParams,
    cap: int | None = None,
) -> dict:
    """Overlap of a pair-sequence state with the averaged-state projectors.

    Reports Tr[rho_{xn,yn} P] for the typical projector of the full average
    at slack 2*delta and for the conditional projector of the first-marginal
    ensemble at slack 6*delta.  The promises require the pair sequence to be
    jointly typical.
    """
    pairs = list(zip(xn, yn))
    rho_pair = pair_ensemble.sequence_state(pairs, cap)
    n = len(pairs)
    avg = pair_ensemble.average_state()
    proj_avg = typical_projector(avg, n, 2.0 * params.delta, cap)
    proj_cond = cond_typical_projector(x_ensemble, xn, 6.0 * params.delta, cap)
    t_avg = proj_avg.trace_with(rho_pair)
    t_cond = proj_cond.trace_with(rho_pair)
    jointly_typical = is_typical(pair_ensemble.dist, pairs, params.delta)
    threshold = typicality_threshold_n(
        params, "joint", p_min=pair_ensemble.dist.p_min, q_min=pair_ensemble.q_min()
    )
    info = (n < threshold) or not jointly_typical
    note = f"threshold n >= {threshold}; pair typical: {jointly_typical}"
    return {
        "average_overlap": Check(
            "average_overlap", t_avg, 1.0 - params.epsilon,
            t_avg >= 1.0 - params.epsilon - 1e-12, informative=info, note=note,
        ),
        "conditional_overlap": Check(
            "conditional_overlap", t_cond, 1.0 - params.epsilon,
            t_cond >= 1.0 - params.epsilon - 1e-12, informative=info, note=note,
        ),
    }


def verify_typicality_bounds(subject, n_or_seq, params: TypicalityParams, **kwargs) -> dict:
    """Dispatch to the matching report builder.

    * ClassicalDistribution + block length: sequence-typicality checks.
    * density matrix + block length: typical-projector checks.
    * CqEnsemble + input sequence: conditional-projector checks.
    """
    if isinstance(subject, ClassicalDistribution):
        return verify_sequence_typicality(subject, int(n_or_seq), params, **kwargs)
    if isinstance(subject, CqEnsemble):
        return verify_conditional_typicality(subject, n_or_seq, params, **kwargs)
    return verify_state_typicality(subject, int(n_or_seq), params, **kwargs)
