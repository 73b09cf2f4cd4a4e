"""Seeded invariant suites with per-instance slack reporting.

Each suite draws its instances from a fixed seed, checks one family of
operator or probability inequalities, and returns rows suitable for JSON
emission.  A row records the instance id, whether the inequality holds,
and the measured slack (negative slack means violated).  The suites call
the library through module attributes so a corrupted core is observable
from here.
"""

from __future__ import annotations

import math

import numpy as np

from . import channels as _channels
from . import decoders as _decoders
from . import geometry as _geometry
from . import linalg as _linalg
from . import smoothing as _smoothing
from . import typicality as _typicality

DEFAULT_SEED = 2024


def _random_projector(rng: np.random.Generator, dim: int, rank: int) -> np.ndarray:
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    q, _ = np.linalg.qr(g)
    return q @ q.conj().T


def _random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return m / float(np.real(np.trace(m)))


def _planes_with_angles(dim: int, angles: list[float], rng: np.random.Generator):
    """Projector pair whose two-subspace blocks realise the given angles."""
    need = 2 * len(angles)
    if dim < need:
        raise ValueError("dimension too small for the requested angles")
    g = rng.normal(size=(dim, need)) + 1j * rng.normal(size=(dim, need))
    q, _ = np.linalg.qr(g)
    a_lines, b_lines = [], []
    for i, theta in enumerate(angles):
        a = q[:, 2 * i]
        c = q[:, 2 * i + 1]
        a_lines.append(a)
        b_lines.append(math.cos(theta) * a + math.sin(theta) * c)
    pa = sum(np.outer(v, v.conj()) for v in a_lines)
    pb = sum(np.outer(v, v.conj()) for v in b_lines)
    return pa, pb, a_lines


def suite_lemma_key(seed: int = DEFAULT_SEED) -> list[dict]:
    """Vector defect under a projector chain never beats the overlap sum."""
    rng = np.random.default_rng((seed, 1))
    rows = []
    for i in range(1000):
        dim = int(rng.integers(2, 33))
        k = int(rng.integers(1, 6))
        v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        v /= np.linalg.norm(v)
        projs = [
            _random_projector(rng, dim, int(rng.integers(1, dim + 1))) for _ in range(k)
        ]
        res = _geometry.key_inequality_check(v, projs)
        rows.append(
            {
                "id": f"lemma-key-{i:04d}",
                "holds": bool(res["holds"]),
                "slack": res["rhs"] - res["lhs"],
            }
        )
    return rows


def suite_lemma_chain(seed: int = DEFAULT_SEED) -> list[dict]:
    """Exact chained success against the square-root floor."""
    rng = np.random.default_rng((seed, 2))
    rows = []
    for i in range(500):
        dim = int(rng.integers(2, 17))
        k = int(rng.integers(0, 5))
        rho = _random_density(rng, dim)
        hostile = [
            _linalg.Projector.from_matrix(
                _random_projector(rng, dim, int(rng.integers(1, dim + 1)))
            )
            for _ in range(k)
        ]
        target = _linalg.Projector.from_matrix(
            _random_projector(rng, dim, int(rng.integers(1, dim + 1)))
        )
        steps = [(p, "failure") for p in hostile] + [(target, "success")]
        success = _geometry.sequential_collapse(rho, steps).success_probability
        bound = _geometry.seq_success_lower_bound(rho, hostile, target)
        rows.append(
            {
                "id": f"lemma-chain-{i:04d}",
                "holds": bool(success >= bound - 1e-9),
                "slack": success - bound,
            }
        )
    return rows


def suite_blocks(seed: int = DEFAULT_SEED) -> list[dict]:
    """Two-subspace decomposition: block sizes and exact reconstruction."""
    rng = np.random.default_rng((seed, 3))
    rows = []
    for i in range(300):
        dim = int(rng.integers(3, 33))
        pa = _random_projector(rng, dim, int(rng.integers(1, dim)))
        pb = _random_projector(rng, dim, int(rng.integers(1, dim)))
        decomp = _geometry.jordan_decompose(pa, pb)
        dev_a = float(np.abs(decomp.reconstruct_first() - pa).max())
        dev_b = float(np.abs(decomp.reconstruct_second() - pb).max())
        sizes_ok = all(b.dim <= 2 for b in decomp.blocks)
        lines = decomp.first_subspace_lines()
        if lines:
            basis = np.column_stack(lines)
            gram_dev = float(np.abs(basis.conj().T @ basis - np.eye(len(lines))).max())
            span_dev = float(np.abs(basis @ basis.conj().T - pa).max())
        else:
            gram_dev = 0.0
            span_dev = float(np.abs(pa).max())
        dev = max(dev_a, dev_b, gram_dev, span_dev)
        rows.append(
            {
                "id": f"blocks-{i:04d}",
                "holds": bool(sizes_ok and dev <= 1e-8),
                "slack": 1e-8 - dev,
            }
        )
    return rows


def suite_intersection(seed: int = DEFAULT_SEED) -> list[dict]:
    """Two-projector intersection: operator sandwich and trace floor."""
    rng = np.random.default_rng((seed, 4))
    rows = []
    idx = 0
    for eps in (0.01, 0.04, 0.16):
        tau = 1.0 - math.sqrt(eps)
        for _ in range(20):
            tilt = math.acos(math.sqrt(1.0 - eps / 2.0))
            wide = math.acos(math.sqrt(float(rng.uniform(0.05, 0.5))))
            pa, pb, a_lines = _planes_with_angles(10, [0.0, tilt, wide], rng)
            weights = [1.0 - eps, eps / 2.0, eps / 2.0]
            rho = sum(w * np.outer(v, v.conj()) for w, v in zip(weights, a_lines))
            overlap_b = float(np.real(np.trace(rho @ pb)))
            r = _geometry.intersection_projector(pa, pb, tau).dense()
            sandwich = _linalg.psd_leq(r, pb @ pa @ pb / tau, tol=1e-8)
            kept = float(np.real(np.trace(rho @ r)))
            floor = 1.0 - 2.0 * math.sqrt(eps)
            rows.append(
                {
                    "id": f"intersection-{idx:03d}",
                    "holds": bool(sandwich and overlap_b >= 1 - eps - 1e-9 and kept >= floor - 1e-9),
                    "slack": kept - floor,
                    "note": f"eps={eps}",
                }
            )
            idx += 1
    return rows


def suite_gentle(seed: int = DEFAULT_SEED) -> list[dict]:
    """Collapse disturbance against twice the root of the lost mass."""
    rng = np.random.default_rng((seed, 5))
    rows = []
    for i in range(500):
        dim = int(rng.integers(2, 17))
        rho = _random_density(rng, dim)
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        h = g @ g.conj().T
        m = h / (float(np.linalg.eigvalsh(h).max()) + float(rng.uniform(0.0, 1.0)))
        res = _geometry.gentle_measurement_check(rho, m)
        rows.append(
            {
                "id": f"gentle-{i:04d}",
                "holds": bool(res["holds"]),
                "slack": res["bound"] - res["l1"],
            }
        )
    return rows


def _rows_from_checks(prefix: str, checks) -> list[dict]:
    # report-style checks mix bound directions; slack is the unsigned
    # distance to the bound, made negative when the check fails
    items = checks.items() if hasattr(checks, "items") else ((c.name, c) for c in checks)
    rows = []
    for name, c in items:
        holds = bool(c.passed or c.informative)
        gap = abs(c.value - c.bound)
        rows.append(
            {
                "id": f"{prefix}:{name}",
                "holds": holds,
                "slack": gap if holds else -gap,
                "note": c.note,
            }
        )
    return rows


def suite_typicality(seed: int = DEFAULT_SEED) -> list[dict]:
    """Mass, sandwich, and cardinality reports on fixed small ensembles."""
    rng = np.random.default_rng((seed, 6))
    rows = []
    params = _typicality.TypicalityParams(delta=0.3, epsilon=0.1, context_dims=(2, 2))
    for i in range(4):
        p = float(rng.uniform(0.2, 0.8))
        dist = _typicality.ClassicalDistribution((0, 1), (p, 1.0 - p))
        checks = _typicality.verify_typicality_bounds(dist, 8, params)
        rows.extend(_rows_from_checks(f"typicality-seq-{i}", checks))
    for i in range(4):
        rho = _random_density(rng, 2)
        checks = _typicality.verify_typicality_bounds(rho, 6, params)
        rows.extend(_rows_from_checks(f"typicality-state-{i}", checks))
    for i in range(2):
        dist = _typicality.ClassicalDistribution((0, 1), (0.5, 0.5))
        ens = _typicality.CqEnsemble(
            dist, {0: _random_density(rng, 2), 1: _random_density(rng, 2)}
        )
        seq = tuple(int(b) for b in rng.integers(0, 2, size=6))
        checks = _typicality.verify_typicality_bounds(ens, seq, params)
        rows.extend(_rows_from_checks(f"typicality-cond-{i}", checks))
    return rows


def suite_smoothing(seed: int = DEFAULT_SEED) -> list[dict]:
    """Sup-norm ceilings and trace-distance bounds of smoothed families."""
    rng = np.random.default_rng((seed, 7))
    rows = []
    for i in range(2):
        p = float(rng.uniform(0.3, 0.7))
        dist = _typicality.ClassicalDistribution(
            ((0, "z", "y"), (1, "z", "y")), (p, 1.0 - p)
        )
        system = _typicality.CqEnsemble(
            dist,
            {(0, "z", "y"): _random_density(rng, 2), (1, "z", "y"): _random_density(rng, 2)},
        )
        se = _smoothing.smoothed_states(system, 6, 0.3)
        report = _smoothing.verify_smoothing_bounds(se)
        rows.extend(_rows_from_checks(f"smoothing-{i}", report["checks"]))
    return rows


def suite_decoders(seed: int = DEFAULT_SEED) -> list[dict]:
    """Bound flags from small sequential and square-root decode runs."""
    rng = np.random.default_rng((seed, 8))
    rows = []

    def qubit(r):
        v = r.normal(size=2) + 1j * r.normal(size=2)
        v /= np.linalg.norm(v)
        return np.outer(v, v.conj())

    unif = _typicality.ClassicalDistribution((0, 1), (0.5, 0.5))
    for i in range(3):
        chan = _channels.CqChannel(unif, {0: qubit(rng), 1: qubit(rng)})
        for variant in ("seq", "seq-gated", "pgm"):
            res = _decoders.monte_carlo_avg_error(
                chan, 0.3, 4, 2, (seed, 8, i), variant, delta=0.9
            )
            rows.append(
                {
                    "id": f"decoders-cq-{i}-{variant}",
                    "holds": bool(res["all_bounds_satisfied"]),
                    "slack": 0.0 if res["all_bounds_satisfied"] else -1.0,
                    "note": f"mean_error={res['mean_error']:.6f}",
                }
            )
    for i in range(2):
        mac = _channels.CcqMac(
            unif, unif, {(x, y): qubit(rng) for x in (0, 1) for y in (0, 1)}
        )
        res = _decoders.monte_carlo_avg_error(
            mac, (0.25, 0.25), 4, 2, (seed, 9, i), "seq", delta=0.25
        )
        rows.append(
            {
                "id": f"decoders-mac-{i}",
                "holds": bool(res["all_bounds_satisfied"]),
                "slack": 0.0 if res["all_bounds_satisfied"] else -1.0,
                "note": f"mean_error={res['mean_error']:.6f}",
            }
        )
    zrows = {0: unif, 1: unif}
    ydist = _typicality.ClassicalDistribution(("y",), (1.0,))
    for i, region in ((0, 1), (1, 2)):
        cmg = _channels.CoupledMac(
            unif, zrows, ydist, {(z, "y"): qubit(rng) for z in (0, 1)}
        )
        res = _decoders.monte_carlo_avg_error(
            cmg, (0.25, 0.25, 0.0), 4, 2, (seed, 10, i), "seq", delta=0.25, region=region
        )
        rows.append(
            {
                "id": f"decoders-cmg-region{region}",
                "holds": bool(res["all_bounds_satisfied"]),
                "slack": 0.0 if res["all_bounds_satisfied"] else -1.0,
                "note": f"mean_error={res['mean_error']:.6f}",
            }
        )
    return rows


SUITES = {
    "lemma-key": suite_lemma_key,
    "lemma-chain": suite_lemma_chain,
    "blocks": suite_blocks,
    "intersection": suite_intersection,
    "gentle": suite_gentle,
    "typicality": suite_typicality,
    "smoothing": suite_smoothing,
    "decoders": suite_decoders,
}


def run_suite(name: str, seed: int = DEFAULT_SEED) -> dict:
    """Run one named suite and summarise its rows."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {sorted(SUITES)} or 'all'")
    rows = SUITES[name](seed)
    failures = sum(1 for r in rows if not r["holds"])
    return {
        "suite": name,
        "seed": seed,
        "total": len(rows),
        "failures": failures,
        "ok": failures == 0,
        "instances": rows,
    }


def run_suites(names, seed: int = DEFAULT_SEED) -> dict:
    """Run several suites ('all' expands to every registered suite)."""
    expanded: list[str] = []
    for name in names:
        if name == "all":
            expanded.extend(k for k in SUITES if k not in expanded)
        elif name not in expanded:
            if name not in SUITES:
                raise ValueError(
                    f"unknown suite {name!r}; expected one of {sorted(SUITES)} or 'all'"
                )
            expanded.append(name)
    reports = [run_suite(name, seed) for name in expanded]
    return {
        "seed": seed,
        "suites": reports,
        "failures": sum(r["failures"] for r in reports),
        "ok": all(r["ok"] for r in reports),
    }
