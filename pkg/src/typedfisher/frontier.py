"""Lower convex hulls of price-utility points and the segments they induce.

For one agent and one resource type, plot each positively valued good at
(utility, price) together with the origin.  Any feasible within-type bundle
(nonnegative weights summing to at most one) lands inside the convex hull
of those points, so the cheapest way to reach a given utility runs along
the hull's lower frontier.  Each frontier segment is a purchasable
"virtual product": one unit of it moves the agent from the segment's low
endpoint to its high endpoint, costing the price difference and gaining
the utility difference.  Goods without a type cap reduce to a single
unbounded product with per-unit rate price/utility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class VirtualProduct:
    """One purchasable frontier segment.

    ``lo`` is the good at the low-utility endpoint (None for the hull
    origin); ``hi`` the good at the high endpoint.  ``slope`` is cost per
    unit utility; bang-per-buck is its reciprocal.  Unbounded products
    (goods without a type cap for this agent) may be bought in any
    quantity; bounded ones cap at one unit.
    """

    type_id: int | None
    lo: int | None
    hi: int
    delta_u: float
    delta_p: float
    slope: float
    unbounded: bool = False


@dataclass(frozen=True)
class Frontier:
    """Slope-ascending virtual products of one (agent, type) pair."""

    type_id: int
    products: tuple[VirtualProduct, ...]
    dominated: frozenset[int]

    @property
    def total_utility(self) -> float:
        return sum(pr.delta_u for pr in self.products)

    @property
    def total_price(self) -> float:
        return sum(pr.delta_p for pr in self.products)

    def cost_at(self, utility: float) -> float | None:
        """Minimum spend to reach ``utility`` within this type, None if
        the target exceeds the frontier's top vertex."""
        if utility <= 0:
            return 0.0
        cost = 0.0
        remaining = utility
        for pr in self.products:
            if remaining <= pr.delta_u:
                return cost + pr.slope * remaining
            cost += pr.delta_p
            remaining -= pr.delta_u
        return None if remaining > 1e-12 * max(1.0, utility) else cost


def build_frontier(
    u_row: Sequence[float] | np.ndarray,
    p: Sequence[float] | np.ndarray,
    type_goods: Iterable[int],
    agent: int = 0,
    type_id: int = 0,
) -> Frontier:
    """Lower hull of one type's (utility, price) points, from the origin
    to the highest-utility vertex.

    Zero-utility goods are dropped up front (they are never purchased).
    Among equal-utility points only the cheapest survives; among
    equal-price points only the highest utility.  Collinear hull points
    merge into a single segment.  All remaining ties break toward the
    lowest good index, so the result is deterministic.
    """
    u_row = np.asarray(u_row, dtype=float)
    p = np.asarray(p, dtype=float)
    goods = sorted(int(j) for j in type_goods)
    pts = [(float(u_row[j]), float(p[j]), j) for j in goods if u_row[j] > 0.0]
    if not pts:
        return Frontier(type_id=type_id, products=(), dominated=frozenset())

    # Deduplicate: per utility keep the cheapest (lowest index on a price
    # tie); per price keep the highest utility.
    by_u: dict[float, tuple[float, float, int]] = {}
    for pt in sorted(pts, key=lambda q: (q[0], q[1], q[2])):
        if pt[0] not in by_u:
            by_u[pt[0]] = pt
    by_p: dict[float, tuple[float, float, int]] = {}
    for pt in sorted(by_u.values(), key=lambda q: (q[1], -q[0], q[2])):
        if pt[1] not in by_p:
            by_p[pt[1]] = pt
    points = sorted(by_p.values())
    dominated = {j for _, _, j in pts} - {j for _, _, j in points}

    # Monotone chain from the origin, utility ascending.  Keep strictly
    # increasing slopes; cross-multiplied comparison avoids division.
    hull: list[tuple[float, float, int | None]] = [(0.0, 0.0, None)]
    for u, q, j in points:
        while len(hull) >= 2:
            au, ap, _ = hull[-2]
            bu, bp, _ = hull[-1]
            # pop b unless slope(a->b) < slope(a->c)
            if (bu - au) * (q - ap) - (bp - ap) * (u - au) <= 0.0:
                dominated.add(hull.pop()[2])
            else:
                break
        hull.append((u, q, j))

    products = []
    for k in range(1, len(hull)):
        lu, lp, lj = hull[k - 1]
        hu, hp, hj = hull[k]
        du, dp = hu - lu, hp - lp
        products.append(
            VirtualProduct(
                type_id=type_id,
                lo=lj,
                hi=hj,
                delta_u=du,
                delta_p=dp,
                slope=dp / du,
            )
        )
    return Frontier(
        type_id=type_id, products=tuple(products), dominated=frozenset(dominated)
    )


def untyped_rate(u_ij: float, p_j: float, good: int = 0) -> VirtualProduct | None:
    """Unbounded product for a good the agent may buy without a type cap.

    Returns None for a worthless good (u_ij <= 0).  A zero price with
    positive utility yields a slope-0 unbounded product; demand for it is
    infinite, which the demand oracle reports as an error.
    """
    if u_ij <= 0.0:
        return None
    return VirtualProduct(
        type_id=None,
        lo=None,
        hi=good,
        delta_u=float(u_ij),
        delta_p=float(p_j),
        slope=float(p_j) / float(u_ij),
        unbounded=True,
    )
