"""Shared test utilities: hypothesis strategies and brute-force oracles."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from typedfisher import MarketInstance


def finite_floats(lo, hi):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


@st.composite
def type_patterns(draw, m: int, require_untyped: bool = False):
    """Partition a prefix of the goods 0..m-1 into consecutive types."""
    limit = m - 1 if require_untyped else m
    sizes = []
    used = 0
    while used < limit:
        if not draw(st.booleans()):
            break
        sz = draw(st.integers(min_value=1, max_value=limit - used))
        sizes.append(sz)
        used += sz
    types = []
    start = 0
    for sz in sizes:
        types.append(tuple(range(start, start + sz)))
        start += sz
    return tuple(types)


@st.composite
def small_markets(
    draw,
    max_n: int = 3,
    max_m: int = 4,
    require_untyped: bool = False,
    tight_ok: bool = False,
):
    """Valid small instances with strictly positive utilities.

    Typed capacities are drawn so each type's total stays below the
    participant count (strict feasibility) unless tight_ok is set.
    """
    n = draw(st.integers(min_value=1, max_value=max_n))
    m = draw(st.integers(min_value=1, max_value=max_m))
    u = np.array(
        draw(
            st.lists(
                st.lists(finite_floats(0.05, 10.0), min_size=m, max_size=m),
                min_size=n,
                max_size=n,
            )
        )
    )
    w = np.array(draw(st.lists(finite_floats(0.2, 20.0), min_size=n, max_size=n)))
    types = draw(type_patterns(m, require_untyped=require_untyped))
    caps = np.empty(m)
    typed = set()
    for goods in types:
        hi_frac = 1.0 if tight_ok else 0.85
        total = draw(finite_floats(0.1, hi_frac * n))
        weights = np.array(
            [draw(finite_floats(0.1, 1.0)) for _ in goods]
        )
        caps[list(goods)] = total * weights / weights.sum()
        typed.update(goods)
    for j in range(m):
        if j not in typed:
            caps[j] = draw(finite_floats(0.1, 2.0 * n))
    return MarketInstance(utilities=u, budgets=w, capacities=caps, types=types)


@st.composite
def price_vectors(draw, m: int, lo: float = 0.05, hi: float = 20.0):
    return np.array(draw(st.lists(finite_floats(lo, hi), min_size=m, max_size=m)))


def refine_grid_objective(inst: MarketInstance, lam, rounds: int = 7, grid: int = 81):
    """Brute-force optimum of the two-agent, two-good social program.

    Grids over agent 1's allocation (agent 2 takes the capacity remainder)
    and refines the box around the incumbent; independent of the solver.
    """
    assert inst.n_agents == 2 and inst.n_goods == 2
    s = inst.capacities
    c = inst.budgets + np.asarray(lam, dtype=float)
    U = inst.utilities
    lo = np.zeros(2)
    hi = s.copy()
    best = -np.inf
    best_pt = None
    for _ in range(rounds):
        xs = np.linspace(lo[0], hi[0], grid)
        ys = np.linspace(lo[1], hi[1], grid)
        X0, X1 = np.meshgrid(xs, ys, indexing="ij")
        x1 = np.stack([X0.ravel(), X1.ravel()], axis=1)
        x2 = s[None, :] - x1
        feas = np.ones(len(x1), dtype=bool)
        for t, goods in enumerate(inst.types):
            g = list(goods)
            if inst.participation[0, t]:
                feas &= x1[:, g].sum(axis=1) <= 1 + 1e-12
            if inst.participation[1, t]:
                feas &= x2[:, g].sum(axis=1) <= 1 + 1e-12
        u1 = x1 @ U[0]
        u2 = x2 @ U[1]
        feas &= (u1 > 1e-12) & (u2 > 1e-12)
        vals = np.full(len(x1), -np.inf)
        vals[feas] = c[0] * np.log(u1[feas]) + c[1] * np.log(u2[feas])
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            best_pt = x1[k].copy()
        span = (hi - lo) * (4.0 / (grid - 1))
        lo = np.maximum(best_pt - span, 0.0)
        hi = np.minimum(best_pt + span, s)
    return best


def random_feasible_market(rng, n=None, m=None, allow_types=True):
    """Seeded random valid instance; plain-rng counterpart of small_markets."""
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 5))
    u = rng.uniform(0.05, 10.0, size=(n, m))
    w = rng.uniform(0.2, 20.0, size=n)
    types = []
    used = 0
    while allow_types and used < m and rng.random() < 0.6:
        sz = int(rng.integers(1, m - used + 1))
        types.append(tuple(range(used, used + sz)))
        used += sz
    caps = np.empty(m)
    for goods in types:
        total = rng.uniform(0.1, 0.85 * n)
        weights = rng.uniform(0.1, 1.0, size=len(goods))
        caps[list(goods)] = total * weights / weights.sum()
    for j in range(used, m):
        caps[j] = rng.uniform(0.1, 2.0 * n)
    return MarketInstance(utilities=u, budgets=w, capacities=caps, types=tuple(types))
