"""Random codebooks and exact simulation of projection-chain decoders.

Encoders draw i.i.d. codewords from the channel input laws with one RNG
stream per message, so enlarging a codebook never disturbs the codewords
already drawn.  Decoders walk an ordered candidate list, conjugating the
received state by each candidate projector (or its complement) and reading
the surviving trace as an exact probability; every run reports the matching
closed-form bound next to the simulated value.  A square-root-measurement
decoder of the same interface is included for comparison.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .channels import CcqMac, CoupledMac, CqChannel
from .geometry import (
    SeqStep,
    intersection_projector,
    seq_success_lower_bound,
    sequential_collapse,
)
from .linalg import Projector, as_matrix, check_dim_cap, hermitian_eig, psd_leq, require_hermitian
from .smoothing import SmoothedEnsemble
from .typicality import (
    ClassicalDistribution,
    cond_typical_projector,
    is_typical,
    typical_projector,
)

# Total symbols a codebook may store across all senders.
CODEBOOK_CAP = 2**20
# Smallest overlap threshold accepted when a measured tau collapses.
TAU_FLOOR = 1e-9
# Slack granted when comparing exact probabilities against their bounds.
BOUND_TOL = 1e-9

_PROB_TOL = 1e-9


def _clip01(value: float, what: str = "probability") -> float:
    v = float(np.real(value))
    if v < -_PROB_TOL or v > 1.0 + _PROB_TOL:
        raise RuntimeError(f"{what} {v} escapes [0, 1]")
    return min(1.0, max(0.0, v))


def _seed_key(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    try:
        key = tuple(int(s) for s in seed)
    except TypeError:
        raise ValueError("seed must be an integer or a sequence of integers") from None
    if not key:
        raise ValueError("seed sequence must be non-empty")
    return key


def _message_count(rate: float, n: int) -> int:
    if not math.isfinite(rate) or rate < 0:
        raise ValueError("rates must be finite and nonnegative")
    if n * rate > 62:
        raise ValueError(
            "rates too large: codebook would store more than 2^62 codewords"
        )
    # ceil of 2^{nR}, snapping float dust just above an integer back down
    return max(1, math.ceil(2.0 ** (n * rate) - 1e-9))


@dataclass(frozen=True)
class Codebook:
    """Per-sender codeword tables drawn for one seed.

    ``codewords`` holds one mapping per sender.  Keys are 1-based message
    indices, except for a coupled second sender whose entries are keyed by
    the (m1, m2) pair they were drawn for.
    """

    channel: object
    n: int
    rates: tuple[float, ...]
    codewords: tuple[Mapping, ...]
    counts: tuple[int, ...]
    seed: tuple[int, ...]

    @property
    def senders(self) -> int:
        return len(self.codewords)

    def messages(self) -> list:
        """All message indices or tuples, in lexicographic order."""
        ranges = [range(1, c + 1) for c in self.counts]
        if self.senders == 1:
            return list(ranges[0])
        return list(itertools.product(*ranges))

    def sequences(self, message) -> tuple:
        """Per-sender codeword sequences backing ``message``.

        A length-2 message on a three-sender codebook returns only the
        first two sequences; the third sender's codeword needs m3.
        """
        if self.senders == 1:
            return (self.codewords[0][message],)
        if self.senders == 2:
            m1, m2 = message
            return (self.codewords[0][m1], self.codewords[1][m2])
        m1, m2 = message[0], message[1]
        first = (self.codewords[0][m1], self.codewords[1][(m1, m2)])
        if len(message) == 2:
            return first
        return first + (self.codewords[2][message[2]],)


def _iid_sequence(dist: ClassicalDistribution, n: int, rng: np.random.Generator) -> tuple:
    return dist.sample_sequence(n, rng)


def _conditional_sequence(rows: Mapping, xs: Sequence, rng: np.random.Generator) -> tuple:
    return tuple(rows[x].sample_sequence(1, rng)[0] for x in xs)


def sample_codebook(channel, rates, n: int, seed) -> Codebook:
    """Draw a random codebook for ``channel`` at the given rates.

    Message m of sender s is drawn from its own generator keyed by
    (seed, s, m), message-index ascending, so prefixes of the codebook are
    stable under a rate increase.  A coupled second sender keys its
    generator by (seed, 1, m1, m2) and draws z positionwise from p(z|x)
    along the first sender's codeword for m1.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    key = _seed_key(seed)
    if isinstance(rates, (int, float)):
        rates = (float(rates),)
    rates = tuple(float(r) for r in rates)

    if isinstance(channel, CqChannel):
        dists: tuple = (channel.prior,)
    elif isinstance(channel, CcqMac):
        dists = (channel.x_prior, channel.y_prior)
    elif isinstance(channel, CoupledMac):
        dists = (channel.x_prior, None, channel.y_prior)
    else:
        raise TypeError(f"unsupported channel type {type(channel).__name__}")
    if len(rates) != len(dists):
        raise ValueError(f"channel takes {len(dists)} rates, got {len(rates)}")

    counts = tuple(_message_count(r, n) for r in rates)
    storage = sum(c * n for c in counts)
    if len(dists) == 3:
        # the coupled sender stores one codeword per (m1, m2) pair
        storage += (counts[0] * counts[1] - counts[1]) * n
    if storage > CODEBOOK_CAP:
        raise ValueError(
            f"rates too large: codebook would store {storage} symbols, cap is {CODEBOOK_CAP}"
        )

    books: list[dict] = []
    for s, dist in enumerate(dists):
        book: dict = {}
        if dist is not None:
            for m in range(1, counts[s] + 1):
                rng = np.random.default_rng((*key, s, m))
                book[m] = _iid_sequence(dist, n, rng)
        else:
            for m1 in range(1, counts[0] + 1):
                xs = books[0][m1]
                for m2 in range(1, counts[1] + 1):
                    rng = np.random.default_rng((*key, s, m1, m2))
                    book[(m1, m2)] = _conditional_sequence(channel.z_given_x, xs, rng)
        books.append(book)

    return Codebook(
        channel=channel,
        n=n,
        rates=rates,
        codewords=tuple(books),
        counts=counts,
        seed=key,
    )


@dataclass(frozen=True)
class MessageOutcome:
    """Exact result for one sent message next to its closed-form bound."""

    message: object
    error: float
    success: float
    bound: float
    bound_satisfied: bool


@dataclass(frozen=True)
class DecodeReport:
    """Per-message decode results for one codebook.

    ``bound_kind`` states how each outcome's bound constrains the exact
    value: a "success-floor" lower-bounds the chain success probability,
    an "error-ceiling" upper-bounds the error probability.
    """

    variant: str
    bound_kind: str
    outcomes: tuple[MessageOutcome, ...]
    average_error: float
    elapsed_seconds: float
    details: Mapping = field(default_factory=dict)

    @property
    def errors(self) -> dict:
        return {o.message: o.error for o in self.outcomes}

    @property
    def bounds(self) -> dict:
        return {o.message: o.bound for o in self.outcomes}

    @property
    def all_bounds_satisfied(self) -> bool:
        return all(o.bound_satisfied for o in self.outcomes)


def _resolve_order(messages: list, order) -> list:
    if order is None:
        return list(messages)
    given = list(order)
    if len(given) != len(messages) or set(given) != set(messages):
        raise ValueError("order must be a permutation of the message space")
    return given


@dataclass(frozen=True)
class _Entry:
    message: object
    projector: Projector
    state: np.ndarray


def _stop_distribution(state: np.ndarray, entries: Sequence[_Entry], gate: Projector | None) -> list[float]:
    """Probability of the chain halting at each candidate, in order."""
    current = as_matrix(state).astype(np.complex128)
    if gate is not None:
        g = gate.dense()
        current = g @ current @ g
    stops: list[float] = []
    for ent in entries:
        p = ent.projector.dense()
        stops.append(float(np.real(np.trace(p @ current @ p))))
        comp = np.eye(current.shape[0]) - p
        current = comp @ current @ comp
    return stops


def _run_sequential(
    entries: list[_Entry],
    variant: str,
    *,
    gate: Projector | None = None,
    group_of: Callable | None = None,
    details: dict | None = None,
    started: float,
) -> DecodeReport:
    """Chain every sent message through the ordered candidate list.

    Message k's chain takes the failure branch of every earlier candidate
    and the success branch of its own projector (after the gate, when one
    is present).  With ``group_of`` set, the reported error counts a halt
    at any candidate of the sent message's group as a success, and the
    exact own-chain errors move to details["joint_errors"].
    """
    details = dict(details or {})
    outcomes = []
    joint_errors: dict = {}
    for k, ent in enumerate(entries):
        steps: list = [] if gate is None else [SeqStep(gate, "success")]
        steps += [SeqStep(entries[i].projector, "failure") for i in range(k)]
        steps.append(SeqStep(ent.projector, "success"))
        chain = sequential_collapse(ent.state, steps)
        success = _clip01(chain.success_probability, "chain success")

        if gate is None:
            base = ent.state
        else:
            g = gate.dense()
            base = g @ as_matrix(ent.state) @ g
        bound = seq_success_lower_bound(base, [entries[i].projector for i in range(k)], ent.projector)
        satisfied = success >= max(0.0, bound) - BOUND_TOL

        if group_of is None:
            error = 1.0 - success
        else:
            stops = _stop_distribution(ent.state, entries, gate)
            if abs(stops[k] - success) > 1e-8:
                raise RuntimeError("halt accounting disagrees with the collapsed chain")
            mine = group_of(ent.message)
            grouped = sum(s for e2, s in zip(entries, stops) if group_of(e2.message) == mine)
            error = 1.0 - _clip01(grouped, "grouped success")
            joint_errors[ent.message] = 1.0 - success

        outcomes.append(
            MessageOutcome(
                message=ent.message,
                error=_clip01(error, "error"),
                success=success,
                bound=bound,
                bound_satisfied=satisfied,
            )
        )

    if group_of is not None:
        details["joint_errors"] = joint_errors
    details["order"] = tuple(e.message for e in entries)
    average = float(np.mean([o.error for o in outcomes]))
    return DecodeReport(
        variant=variant,
        bound_kind="success-floor",
        outcomes=tuple(outcomes),
        average_error=average,
        elapsed_seconds=time.perf_counter() - started,
        details=details,
    )


def cq_sequential_decode(
    channel: CqChannel,
    codebook: Codebook,
    delta: float,
    order: Sequence | None = None,
    *,
    gated: bool = False,
    state_fn: Callable | None = None,
    cap: int | None = None,
) -> DecodeReport:
    """Single-sender decode by candidate-projector elimination.

    Candidate m carries the conditional typical projector of its codeword
    at slack ``delta``, or the zero projector when the codeword is not a
    typical input sequence.  ``gated=True`` prepends a success-pass through
    the typical projector of the averaged output at slack 2*delta; the
    reported bound then applies to the gated state.  ``state_fn(xs)`` may
    replace the product sequence states, e.g. with smoothed ones.
    """
    started = time.perf_counter()
    ens = channel.ensemble()
    n = codebook.n
    check_dim_cap(channel.dim**n, cap)
    messages = _resolve_order(codebook.messages(), order)

    gate = None
    if gated:
        gate = typical_projector(ens.average_state(), n, 2.0 * delta, cap=cap)

    proj_cache: dict = {}
    typical_flags: dict = {}
    entries = []
    for m in messages:
        (xs,) = codebook.sequences(m)
        typical = is_typical(channel.prior, xs, delta)
        typical_flags[m] = typical
        if xs not in proj_cache:
            if typical:
                proj_cache[xs] = cond_typical_projector(ens, xs, delta, cap=cap)
            else:
                proj_cache[xs] = Projector.zero(channel.dim**n)
        state = ens.sequence_state(xs, cap=cap) if state_fn is None else as_matrix(state_fn(xs))
        entries.append(_Entry(m, proj_cache[xs], state))

    variant = "cq-sequential-gated" if gated else "cq-sequential"
    details = {"delta": delta, "typical": typical_flags}
    return _run_sequential(entries, variant, gate=gate, details=details, started=started)


def _measured_tau(epsilons: list[float], warnings_out: list[str], stage: str) -> float:
    if not epsilons:
        return 1.0
    eps = _clip01(float(np.mean(epsilons)), "measured epsilon")
    tau = 1.0 - math.sqrt(eps)
    if tau < TAU_FLOOR:
        warnings_out.append(f"measured tau for {stage} fell to {tau:.3g}; clamped to {TAU_FLOOR}")
        return TAU_FLOOR
    return tau


def _resolve_taus(tau, epsilon) -> tuple[list[str], Callable]:
    """Warning sink plus a (stage, leakages) -> tau resolver."""
    if tau is not None and epsilon is not None:
        raise ValueError("pass either tau or epsilon, not both")
    notes: list[str] = []
    if tau is not None:
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        return notes, lambda stage, eps: tau
    if epsilon is not None:
        if not 0.0 < epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        fixed = max(TAU_FLOOR, 1.0 - math.sqrt(epsilon))
        return notes, lambda stage, eps: fixed
    return notes, lambda stage, eps: _measured_tau(eps, notes, stage)


def ccq_mac_sequential_decode(
    channel: CcqMac,
    codebook: Codebook,
    delta: float,
    order: Sequence | None = None,
    *,
    tau: float | None = None,
    epsilon: float | None = None,
    state_fn: Callable | None = None,
    cap: int | None = None,
) -> DecodeReport:
    """Two-sender joint decode through near-intersection projectors.

    For each typical codeword pair the candidate projector spans the part
    of the pair-conditional typical subspace (slack ``delta``) that lies
    almost inside the y-conditional one (slack 6*delta); atypical pairs get
    the zero projector.  The overlap threshold tau defaults to
    1 - sqrt(measured epsilon), the measured value being the mean leakage
    1 - Tr[rho_pair * Pi_y] over the codebook's typical pairs; passing
    ``epsilon`` switches to the closed-form tau, passing ``tau`` fixes it.
    """
    started = time.perf_counter()
    n = codebook.n
    check_dim_cap(channel.dim**n, cap)
    pair_dist = channel.x_prior.product(channel.y_prior)
    pair_ens = channel.pair_ensemble()
    y_ens = channel.y_ensemble()
    messages = _resolve_order(codebook.messages(), order)

    notes, tau_of = _resolve_taus(tau, epsilon)

    keyed: dict = {}
    states: dict = {}
    typical_flags: dict = {}
    leaks: list[float] = []
    y_cache: dict = {}
    pair_cache: dict = {}
    for msg in messages:
        xs, ys = codebook.sequences(msg)
        pair_seq = tuple(zip(xs, ys))
        state = pair_ens.sequence_state(pair_seq, cap=cap) if state_fn is None else as_matrix(state_fn(xs, ys))
        states[msg] = state
        typical = is_typical(pair_dist, pair_seq, delta)
        typical_flags[msg] = typical
        keyed[msg] = (xs, ys, pair_seq, typical)
        if typical:
            if ys not in y_cache:
                y_cache[ys] = cond_typical_projector(y_ens, ys, 6.0 * delta, cap=cap)
            leaks.append(1.0 - _clip01(y_cache[ys].trace_with(state), "pair overlap"))

    resolved_tau = tau_of("pair/y intersection", leaks)

    tilde_cache: dict = {}
    entries = []
    for msg in messages:
        xs, ys, pair_seq, typical = keyed[msg]
        cache_key = (xs, ys)
        if cache_key not in tilde_cache:
            if not typical:
                tilde_cache[cache_key] = Projector.zero(channel.dim**n)
            else:
                if pair_seq not in pair_cache:
                    pair_cache[pair_seq] = cond_typical_projector(pair_ens, pair_seq, delta, cap=cap)
                pa, pb = pair_cache[pair_seq], y_cache[ys]
                if pa.rank == 0 or pb.rank == 0:
                    tilde_cache[cache_key] = Projector.zero(channel.dim**n)
                else:
                    tilde_cache[cache_key] = intersection_projector(pa, pb, resolved_tau)
        entries.append(_Entry(msg, tilde_cache[cache_key], states[msg]))

    details = {
        "delta": delta,
        "tau": resolved_tau,
        "measured_epsilon": float(np.mean(leaks)) if leaks else None,
        "typical": typical_flags,
        "warnings": tuple(notes),
    }
    return _run_sequential(entries, "ccq-mac-sequential", details=details, started=started)


def _triple_dist(channel: CoupledMac) -> ClassicalDistribution:
    pairs = channel.xz_dist()
    symbols = []
    probs = []
    for (x, z) in pairs.support:
        for y in channel.y_prior.support:
            symbols.append((x, z, y))
            probs.append(pairs.prob((x, z)) * channel.y_prior.prob(y))
    return ClassicalDistribution(tuple(symbols), tuple(probs))


def cmg_sequential_decode(
    channel: CoupledMac,
    codebook: Codebook,
    delta: float,
    region: int,
    *,
    order: Sequence | None = None,
    tau: float | None = None,
    epsilon: float | None = None,
    state_fn: Callable | None = None,
    cap: int | None = None,
) -> DecodeReport:
    """Three-sender decode recovering the first two messages.

    Region 1 decodes (m1, m2, m3) jointly: each typical codeword triple
    carries a projector built by two near-intersections, the zy-conditional
    typical subspace (slack delta) narrowed into the xy-conditional one
    (slack 6*delta) and then into the y-conditional one (slack 6*delta);
    the product bound tilde <= (tau1*tau2)^[-1] Py Pxy Pzy Pxy Py is
    verified for every constructed projector.  The reported per-message
    error counts recovery of (m1, m2); exact triple errors sit in
    details["joint_errors"].

    Region 2 decodes (m1, m2) only, projecting onto the z-conditional
    typical subspace at slack ``delta`` for typical (x, z) codeword pairs,
    with the third sender's codeword averaged out of the received state.
    A rate triple with R3 < I(Y:B|Z) belongs to region 1, so requesting
    region 2 there raises a warning.
    """
    started = time.perf_counter()
    if region not in (1, 2):
        raise ValueError("region must be 1 or 2")
    n = codebook.n
    check_dim_cap(channel.dim**n, cap)
    dim = channel.dim**n
    zy_ens = channel.zy_ensemble()

    if region == 2:
        return _cmg_region2(
            channel, codebook, delta, order, state_fn, cap, started, zy_ens, dim
        )

    xy_ens = channel.xy_ensemble()
    y_ens = channel.y_ensemble()
    trip_dist = _triple_dist(channel)
    messages = _resolve_order(codebook.messages(), order)

    notes, tau_of = _resolve_taus(tau, epsilon)

    keyed: dict = {}
    states: dict = {}
    typical_flags: dict = {}
    xy_leaks: list[float] = []
    y_leaks: list[float] = []
    xy_cache: dict = {}
    y_cache: dict = {}
    zy_cache: dict = {}
    for msg in messages:
        xs, zs, ys = codebook.sequences(msg)
        zy_seq = tuple(zip(zs, ys))
        state = zy_ens.sequence_state(zy_seq, cap=cap) if state_fn is None else as_matrix(state_fn(xs, zs, ys))
        states[msg] = state
        typical = is_typical(trip_dist, tuple(zip(xs, zs, ys)), delta)
        typical_flags[msg] = typical
        keyed[msg] = (xs, zs, ys, typical)
        if typical:
            xy_seq = tuple(zip(xs, ys))
            if xy_seq not in xy_cache:
                xy_cache[xy_seq] = cond_typical_projector(xy_ens, xy_seq, 6.0 * delta, cap=cap)
            if ys not in y_cache:
                y_cache[ys] = cond_typical_projector(y_ens, ys, 6.0 * delta, cap=cap)
            xy_leaks.append(1.0 - _clip01(xy_cache[xy_seq].trace_with(state), "xy overlap"))
            y_leaks.append(1.0 - _clip01(y_cache[ys].trace_with(state), "y overlap"))

    tau1 = tau_of("zy/xy intersection", xy_leaks)
    tau2 = tau_of("tilde/y intersection", y_leaks)

    tilde_cache: dict = {}
    chain_checks = 0
    entries = []
    for msg in messages:
        xs, zs, ys, typical = keyed[msg]
        cache_key = (xs, zs, ys)
        if cache_key not in tilde_cache:
            if not typical:
                tilde_cache[cache_key] = Projector.zero(dim)
            else:
                zy_seq = tuple(zip(zs, ys))
                xy_seq = tuple(zip(xs, ys))
                if zy_seq not in zy_cache:
                    zy_cache[zy_seq] = cond_typical_projector(zy_ens, zy_seq, delta, cap=cap)
                p_zy, p_xy, p_y = zy_cache[zy_seq], xy_cache[xy_seq], y_cache[ys]
                if p_zy.rank == 0 or p_xy.rank == 0:
                    tilde = Projector.zero(dim)
                else:
                    inner = intersection_projector(p_zy, p_xy, tau1)
                    if inner.rank == 0 or p_y.rank == 0:
                        tilde = Projector.zero(dim)
                    else:
                        tilde = intersection_projector(inner, p_y, tau2)
                if tilde.rank > 0:
                    yd, xyd = p_y.dense(), p_xy.dense()
                    envelope = yd @ xyd @ p_zy.dense() @ xyd @ yd / (tau1 * tau2)
                    if not psd_leq(tilde.dense(), envelope, tol=1e-8):
                        raise RuntimeError("tilde projector escapes its product envelope")
                    chain_checks += 1
                tilde_cache[cache_key] = tilde
        entries.append(_Entry(msg, tilde_cache[cache_key], states[msg]))

    details = {
        "delta": delta,
        "region": 1,
        "tau": (tau1, tau2),
        "measured_epsilon": (
            float(np.mean(xy_leaks)) if xy_leaks else None,
            float(np.mean(y_leaks)) if y_leaks else None,
        ),
        "chain_checks": chain_checks,
        "typical": typical_flags,
        "warnings": tuple(notes),
    }
    return _run_sequential(
        entries,
        "cmg-sequential-region1",
        group_of=lambda m: (m[0], m[1]),
        details=details,
        started=started,
    )


def _cmg_region2(channel, codebook, delta, order, state_fn, cap, started, zy_ens, dim) -> DecodeReport:
    r3 = codebook.rates[2]
    threshold = channel.labeled_state().mutual_information("Y:B|Z")
    if r3 < threshold - 1e-12:
        warnings.warn(
            f"region 2 requested with R3 = {r3:.6g} < I(Y:B|Z) = {threshold:.6g}; "
            "such rate triples belong to region 1",
            stacklevel=3,
        )

    z_ens = channel.z_ensemble()
    xz = channel.xz_dist()
    pairs = [
        (m1, m2)
        for m1 in range(1, codebook.counts[0] + 1)
        for m2 in range(1, codebook.counts[1] + 1)
    ]
    pairs = _resolve_order(pairs, order)
    m3_count = codebook.counts[2]

    proj_cache: dict = {}
    typical_flags: dict = {}
    entries = []
    for pair in pairs:
        xs, zs = codebook.sequences(pair)
        typical = is_typical(xz, tuple(zip(xs, zs)), delta)
        typical_flags[pair] = typical
        cache_key = (xs, zs)
        if cache_key not in proj_cache:
            if typical:
                proj_cache[cache_key] = cond_typical_projector(z_ens, zs, delta, cap=cap)
            else:
                proj_cache[cache_key] = Projector.zero(dim)
        acc = np.zeros((dim, dim), dtype=np.complex128)
        for m3 in range(1, m3_count + 1):
            ys = codebook.codewords[2][m3]
            if state_fn is None:
                acc += zy_ens.sequence_state(tuple(zip(zs, ys)), cap=cap)
            else:
                acc += as_matrix(state_fn(xs, zs, ys))
        entries.append(_Entry(pair, proj_cache[cache_key], acc / m3_count))

    details = {
        "delta": delta,
        "region": 2,
        "r3_threshold": threshold,
        "typical": typical_flags,
    }
    return _run_sequential(entries, "cmg-sequential-region2", details=details, started=started)


def cq_pgm_elements(channel: CqChannel, codebook: Codebook, delta: float, *, cap: int | None = None) -> dict:
    """Conditional typical projectors as measurement elements, zero when atypical."""
    ens = channel.ensemble()
    n = codebook.n
    out: dict = {}
    for m in codebook.messages():
        (xs,) = codebook.sequences(m)
        if is_typical(channel.prior, xs, delta):
            out[m] = cond_typical_projector(ens, xs, delta, cap=cap).dense()
        else:
            out[m] = np.zeros((channel.dim**n, channel.dim**n))
    return out


def mac_pgm_elements(channel: CcqMac, codebook: Codebook, delta: float, *, cap: int | None = None) -> dict:
    """Elements Pi_y Pi_xy Pi_y (slacks 6*delta and delta), zero when atypical."""
    pair_dist = channel.x_prior.product(channel.y_prior)
    pair_ens = channel.pair_ensemble()
    y_ens = channel.y_ensemble()
    n = codebook.n
    dim = channel.dim**n
    y_cache: dict = {}
    out: dict = {}
    for msg in codebook.messages():
        xs, ys = codebook.sequences(msg)
        pair_seq = tuple(zip(xs, ys))
        if not is_typical(pair_dist, pair_seq, delta):
            out[msg] = np.zeros((dim, dim))
            continue
        if ys not in y_cache:
            y_cache[ys] = cond_typical_projector(y_ens, ys, 6.0 * delta, cap=cap).dense()
        yd = y_cache[ys]
        pxy = cond_typical_projector(pair_ens, pair_seq, delta, cap=cap).dense()
        out[msg] = yd @ pxy @ yd
    return out


def cmg_pgm_elements(
    channel: CoupledMac, codebook: Codebook, delta: float, region: int, *, cap: int | None = None
) -> dict:
    """Region 1: Py Pxy Pzy Pxy Py per typical triple; region 2: Pi_z per typical pair."""
    if region not in (1, 2):
        raise ValueError("region must be 1 or 2")
    n = codebook.n
    dim = channel.dim**n
    out: dict = {}
    if region == 2:
        z_ens = channel.z_ensemble()
        xz = channel.xz_dist()
        for m1 in range(1, codebook.counts[0] + 1):
            for m2 in range(1, codebook.counts[1] + 1):
                xs, zs = codebook.sequences((m1, m2))
                if is_typical(xz, tuple(zip(xs, zs)), delta):
                    out[(m1, m2)] = cond_typical_projector(z_ens, zs, delta, cap=cap).dense()
                else:
                    out[(m1, m2)] = np.zeros((dim, dim))
        return out

    zy_ens = channel.zy_ensemble()
    xy_ens = channel.xy_ensemble()
    y_ens = channel.y_ensemble()
    trip_dist = _triple_dist(channel)
    y_cache: dict = {}
    xy_cache: dict = {}
    for msg in codebook.messages():
        xs, zs, ys = codebook.sequences(msg)
        if not is_typical(trip_dist, tuple(zip(xs, zs, ys)), delta):
            out[msg] = np.zeros((dim, dim))
            continue
        if ys not in y_cache:
            y_cache[ys] = cond_typical_projector(y_ens, ys, 6.0 * delta, cap=cap).dense()
        xy_seq = tuple(zip(xs, ys))
        if xy_seq not in xy_cache:
            xy_cache[xy_seq] = cond_typical_projector(xy_ens, xy_seq, 6.0 * delta, cap=cap).dense()
        pzy = cond_typical_projector(zy_ens, tuple(zip(zs, ys)), delta, cap=cap).dense()
        yd, xyd = y_cache[ys], xy_cache[xy_seq]
        out[msg] = yd @ xyd @ pzy @ xyd @ yd
    return out


def _pinv_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = hermitian_eig(m)
    top = float(np.max(w)) if w.size else 0.0
    cut = max(top * 1e-10, 1e-14)
    inv = np.where(w > cut, 1.0 / np.sqrt(np.where(w > cut, w, 1.0)), 0.0)
    return (v * inv) @ v.conj().T


def _message_state(channel, codebook: Codebook, message, state_fn: Callable | None, cap) -> np.ndarray:
    """Sequence state for a message; pair messages on a coupled channel average m3 out."""
    if isinstance(channel, CqChannel):
        (xs,) = codebook.sequences(message)
        return channel.ensemble().sequence_state(xs, cap=cap) if state_fn is None else as_matrix(state_fn(xs))
    if isinstance(channel, CcqMac):
        xs, ys = codebook.sequences(message)
        if state_fn is not None:
            return as_matrix(state_fn(xs, ys))
        return channel.pair_ensemble().sequence_state(tuple(zip(xs, ys)), cap=cap)
    xs, zs = codebook.sequences(message)[:2]
    zy_ens = channel.zy_ensemble()
    if len(message) == 3:
        ys = codebook.codewords[2][message[2]]
        if state_fn is not None:
            return as_matrix(state_fn(xs, zs, ys))
        return zy_ens.sequence_state(tuple(zip(zs, ys)), cap=cap)
    dim = channel.dim**codebook.n
    acc = np.zeros((dim, dim), dtype=np.complex128)
    for m3 in range(1, codebook.counts[2] + 1):
        ys = codebook.codewords[2][m3]
        if state_fn is not None:
            acc += as_matrix(state_fn(xs, zs, ys))
        else:
            acc += zy_ens.sequence_state(tuple(zip(zs, ys)), cap=cap)
    return acc / codebook.counts[2]


def pgm_decode(
    channel,
    codebook: Codebook,
    elements,
    *,
    state_fn: Callable | None = None,
    cap: int | None = None,
) -> DecodeReport:
    """Square-root measurement over per-message positive operators.

    ``elements`` is a mapping from message to a PSD operator, or a callable
    (message, sequences) -> operator evaluated over the codebook's message
    space.  Measurement operators are S^{-1/2} E_m S^{-1/2} with S the
    element sum inverted on its support; the reported bound is the
    two-plus-four-fold pairwise-overlap error ceiling, checked per message.
    """
    started = time.perf_counter()
    n = codebook.n
    check_dim_cap(channel.dim**n, cap)

    if isinstance(elements, Mapping):
        messages = list(elements.keys())
        ops = {m: elements[m] for m in messages}
    else:
        messages = codebook.messages()
        ops = {m: elements(m, codebook.sequences(m)) for m in messages}
    if not messages:
        raise ValueError("no messages to decode")

    dense_ops: dict = {}
    for m in messages:
        op = ops[m]
        mat = op.dense() if isinstance(op, Projector) else require_hermitian(as_matrix(op), what="element")
        low = float(np.min(np.linalg.eigvalsh(mat))) if mat.size else 0.0
        if low < -1e-9:
            raise ValueError(f"element for message {m!r} is not positive semidefinite (min eig {low:.3g})")
        dense_ops[m] = mat

    sigma = sum(dense_ops[m] for m in messages)
    root = _pinv_sqrt(sigma)
    support = root @ sigma @ root
    total = sum(root @ dense_ops[m] @ root for m in messages)
    if float(np.max(np.abs(total - support))) > 1e-8:
        raise RuntimeError("measurement operators fail to resolve the element support")

    outcomes = []
    for m in messages:
        rho = _message_state(channel, codebook, m, state_fn, cap)
        upsilon = root @ dense_ops[m] @ root
        success = _clip01(float(np.real(np.trace(upsilon @ rho))), "measurement success")
        own = float(np.real(np.trace(dense_ops[m] @ rho)))
        cross = sum(
            float(np.real(np.trace(dense_ops[i] @ rho))) for i in messages if i != m
        )
        bound = 2.0 * (1.0 - own) + 4.0 * cross
        error = 1.0 - success
        outcomes.append(
            MessageOutcome(
                message=m,
                error=error,
                success=success,
                bound=bound,
                bound_satisfied=error <= bound + BOUND_TOL,
            )
        )

    return DecodeReport(
        variant="pgm",
        bound_kind="error-ceiling",
        outcomes=tuple(outcomes),
        average_error=float(np.mean([o.error for o in outcomes])),
        elapsed_seconds=time.perf_counter() - started,
        details={"support_rank": int(round(float(np.real(np.trace(support)))))},
    )


def trajectory_estimate(rho, steps: Sequence, trials: int, seed) -> dict:
    """Monte Carlo estimate of the probability that every step passes.

    Recomputes the live-branch conditionals by direct conjugation (a failed
    step ends a trajectory, so only the all-pass prefix states are ever
    occupied) and samples the resulting cascade of Bernoulli outcomes.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    current = as_matrix(rho).astype(np.complex128)
    total = float(np.real(np.trace(current)))
    if abs(total - 1.0) > 1e-8:
        raise ValueError("trajectory sampling needs a unit-trace state")

    conditionals: list[float] = []
    for step in steps:
        if not isinstance(step, SeqStep):
            step = SeqStep(*step) if isinstance(step, tuple) else SeqStep(step)
        e = step.effective()
        nxt = e @ current @ e
        before = float(np.real(np.trace(current)))
        after = float(np.real(np.trace(nxt)))
        conditionals.append(0.0 if before <= 0.0 else min(1.0, max(0.0, after / before)))
        current = nxt

    rng = np.random.default_rng(_seed_key(seed))
    qs = np.asarray(conditionals)
    if qs.size:
        draws = rng.random((trials, qs.size))
        hits = np.all(draws < qs[None, :], axis=1)
        estimate = float(np.mean(hits))
    else:
        estimate = 1.0
    stderr = math.sqrt(max(0.0, estimate * (1.0 - estimate)) / trials)
    return {
        "estimate": estimate,
        "standard_error": stderr,
        "trials": trials,
        "conditionals": tuple(conditionals),
    }


def smoothed_state_lookup(smoothed: SmoothedEnsemble) -> Callable:
    """Adapter turning decoder sequence tuples into smoothed-record states.

    Calls with three sequences pass through; calls with fewer fill the
    missing trailing layers with that layer's singleton symbol, so a
    single-sender decode needs singleton middle and last layers and a
    two-sender decode maps its second sequence onto the middle layer.
    """
    zs = tuple(dict.fromkeys(z for (_, z) in smoothed.layers.p_xz.support))
    ys = smoothed.layers.p_y.support
    n = smoothed.n

    def fill(alphabet, what) -> tuple:
        if len(alphabet) != 1:
            raise ValueError(f"cannot fill the {what} layer: alphabet is not a singleton")
        return (alphabet[0],) * n

    def lookup(*seqs):
        if len(seqs) == 3:
            return smoothed.state_for(*seqs)
        if len(seqs) == 2:
            return smoothed.state_for(seqs[0], seqs[1], fill(ys, "last"))
        if len(seqs) == 1:
            return smoothed.state_for(seqs[0], fill(zs, "middle"), fill(ys, "last"))
        raise ValueError("expected one, two, or three sequences")

    return lookup


def monte_carlo_avg_error(
    channel,
    rates,
    n: int,
    trials: int,
    seed,
    variant: str = "seq",
    *,
    delta: float,
    region: int | None = None,
    order: Sequence | None = None,
    epsilon: float | None = None,
    tau: float | None = None,
    cap: int | None = None,
    keep_reports: bool = False,
) -> dict:
    """Average decode error over independently seeded codebooks.

    Trial t redraws the codebook with seed (seed..., t) and runs the
    decoder named by ``variant``: "seq" for the sequential chain,
    "seq-gated" for the single-sender gated chain, "pgm" for the
    square-root measurement over the standard projector elements.
    ``keep_reports`` retains the per-trial DecodeReport objects.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    key = _seed_key(seed)

    def run(book: Codebook) -> DecodeReport:
        if isinstance(channel, CqChannel):
            if variant == "seq":
                return cq_sequential_decode(channel, book, delta, order, cap=cap)
            if variant == "seq-gated":
                return cq_sequential_decode(channel, book, delta, order, gated=True, cap=cap)
            if variant == "pgm":
                return pgm_decode(channel, book, cq_pgm_elements(channel, book, delta, cap=cap), cap=cap)
        elif isinstance(channel, CcqMac):
            if variant == "seq":
                return ccq_mac_sequential_decode(
                    channel, book, delta, order, tau=tau, epsilon=epsilon, cap=cap
                )
            if variant == "pgm":
                return pgm_decode(channel, book, mac_pgm_elements(channel, book, delta, cap=cap), cap=cap)
        elif isinstance(channel, CoupledMac):
            if region not in (1, 2):
                raise ValueError("a coupled three-sender channel needs region 1 or 2")
            if variant == "seq":
                return cmg_sequential_decode(
                    channel, book, delta, region, order=order, tau=tau, epsilon=epsilon, cap=cap
                )
            if variant == "pgm":
                return pgm_decode(
                    channel, book, cmg_pgm_elements(channel, book, delta, region, cap=cap), cap=cap
                )
        else:
            raise TypeError(f"unsupported channel type {type(channel).__name__}")
        raise ValueError(f"decoder variant {variant!r} is not available for this channel")

    averages: list[float] = []
    bound_means: list[float] = []
    reports: list[DecodeReport] = []
    satisfied = True
    bound_kind = None
    resolved = None
    for t in range(trials):
        book = sample_codebook(channel, rates, n, (*key, t))
        report = run(book)
        averages.append(report.average_error)
        bound_means.append(float(np.mean([o.bound for o in report.outcomes])))
        satisfied = satisfied and report.all_bounds_satisfied
        bound_kind = report.bound_kind
        resolved = report.variant
        if keep_reports:
            reports.append(report)

    mean = float(np.mean(averages))
    stderr = float(np.std(averages, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    out = {
        "variant": resolved,
        "bound_kind": bound_kind,
        "n": n,
        "trials": trials,
        "seed": key,
        "mean_error": mean,
        "standard_error": stderr,
        "mean_bound": float(np.mean(bound_means)),
        "per_trial_errors": tuple(averages),
        "all_bounds_satisfied": satisfied,
    }
    if keep_reports:
        out["reports"] = tuple(reports)
    return out
