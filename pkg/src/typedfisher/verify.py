"""Independent numerical verification of equilibrium claims.

Everything here recomputes its conclusions from the instance alone; no
check trusts the provenance of a candidate (p, x).  An equilibrium means
three residual families vanish: every good sells exactly its capacity,
every budget is spent exactly, and each agent's bundle attains the
optimal utility at the posted prices (checked against the exact greedy
demand oracle).  Further checks cover the budget-gap identity of the
unperturbed social program, the cross-mapping from social-program duals
to individual-problem duals at a fixed point, and a brute-force price
grid scan used to certify non-existence on small markets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .demand import UnboundedDemandError, demand
from .instances import MarketInstance
from .solver import DEFAULT_TOL, DualBundle, solve_sop1


@dataclass
class EquilibriumReport:
    clearing_residuals: np.ndarray      # per good |demand - capacity|
    budget_residuals: np.ndarray        # per agent |spend - budget|
    optimality_gaps: np.ndarray         # per agent greedy minus achieved utility
    feasibility_violations: list[str]
    passed: bool
    tol_clearing: float
    tol_budget: float
    tol_opt: float

    @property
    def max_clearing(self) -> float:
        return float(self.clearing_residuals.max())

    @property
    def max_budget(self) -> float:
        return float(self.budget_residuals.max())

    @property
    def max_gap(self) -> float:
        return float(self.optimality_gaps.max())


def check_equilibrium(
    inst: MarketInstance,
    p,
    x,
    tol_clearing: float = 1e-5,
    tol_budget: float = 1e-5,
    tol_opt: float = 1e-6,
) -> EquilibriumReport:
    """Test a candidate (p, x) against the definition of equilibrium.

    Optimality gaps compare each agent's achieved utility with the exact
    greedy demand utility at p; a gap within tol_opt certifies the bundle
    optimal (slightly negative gaps are float noise).  Unbounded demand
    at p propagates as UnboundedDemandError.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n_agents, inst.n_goods):
        raise ValueError(f"allocation must have shape ({inst.n_agents}, {inst.n_goods})")

    clearing = np.abs(x.sum(axis=0) - inst.capacities)
    budget = np.abs(x @ p - inst.budgets)
    gaps = np.empty(inst.n_agents)
    for i in range(inst.n_agents):
        gaps[i] = demand(inst, i, p).utility - float(inst.utilities[i] @ x[i])

    violations: list[str] = []
    if np.any(x < -tol_clearing):
        i, j = np.argwhere(x < -tol_clearing)[0]
        violations.append(f"negative allocation x[{i + 1}][{j + 1}] = {x[i, j]:g}")
    for t, goods in enumerate(inst.types):
        sums = x[:, list(goods)].sum(axis=1)
        for i in range(inst.n_agents):
            if inst.participation[i, t] and sums[i] > 1.0 + tol_clearing:
                violations.append(
                    f"agent {i + 1} holds {sums[i]:g} units of type {t + 1}"
                )
    if np.any(p < -1e-9):
        violations.append(f"negative price {p.min():g}")

    passed = (
        not violations
        and bool(np.all(clearing <= tol_clearing))
        and bool(np.all(budget <= tol_budget))
        and bool(np.all(gaps <= tol_opt))
    )
    return EquilibriumReport(
        clearing_residuals=clearing,
        budget_residuals=budget,
        optimality_gaps=gaps,
        feasibility_violations=violations,
        passed=passed,
        tol_clearing=tol_clearing,
        tol_budget=tol_budget,
        tol_opt=tol_opt,
    )


@dataclass
class BudgetGapReport:
    """Unspent budget vs type-dual sums under the unperturbed program."""

    gaps: np.ndarray              # w_i - p . x_i
    r_sums: np.ndarray            # sum_t r_it
    identity_residuals: np.ndarray  # |gap - r_sum|
    unspent_witness: bool            # some agent retains budget beyond tol
    max_identity_residual: float


def sop1_budget_gap(
    inst: MarketInstance, tol: float = 1e-6, solver_tol: float = DEFAULT_TOL
) -> BudgetGapReport:
    """Solve the unperturbed program and audit the per-agent identity
    w_i - sum_j p_j x_ij = sum_t r_it implied by its optimality system."""
    x, duals, stats = solve_sop1(inst, tol=solver_tol)
    if not stats.success:
        raise RuntimeError(f"social program solve failed with status {stats.status}")
    gaps = inst.budgets - x @ duals.p
    r_sums = duals.r.sum(axis=1)
    ident = np.abs(gaps - r_sums)
    return BudgetGapReport(
        gaps=gaps,
        r_sums=r_sums,
        identity_residuals=ident,
        unspent_witness=bool(np.any(r_sums > tol)),
        max_identity_residual=float(ident.max()),
    )


class NotAtFixedPointError(ValueError):
    """The supplied perturbations are not self-consistent with the duals."""


@dataclass
class CrossCheckReport:
    """Residuals of the individual problem's optimality system built from
    social-program duals at a fixed point."""

    y: np.ndarray                 # budget duals, one per agent
    stationarity: float           # positive part of u_ij - y_i p_j - sum r~ A
    complementarity: float        # |x * stationarity margin|, |r~ * type slack|
    budget_residual: float        # |p . x_i - w_i|
    sign_violation: float
    max_residual: float
    passed: bool


def kkt_crosscheck(
    inst: MarketInstance,
    lam,
    x,
    duals: DualBundle,
    tol: float = 1e-6,
    fp_eps: float = 1e-5,
) -> CrossCheckReport:
    """Verify that scaled social duals solve each agent's own problem.

    At a fixed point the scalings y_i = (u_i . x_i)/(w_i + lam_i) and
    r~_it = y_i r_it turn the social stationarity system into each
    individual problem's system; this check rebuilds those duals and
    measures every residual.  Refuses (NotAtFixedPointError) when
    ||lam - sum_t r_it|| > fp_eps, since the construction is only valid
    at a fixed point.
    """
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    q = duals.r.sum(axis=1)
    drift = float(np.linalg.norm(lam - q))
    if drift > fp_eps:
        raise NotAtFixedPointError(
            f"perturbations are {drift:g} from the dual sums (limit {fp_eps:g})"
        )

    U = inst.utilities
    yhat = np.einsum("ij,ij->i", U, x)
    y = yhat / (inst.budgets + lam)
    r_eff = np.where(inst.participation, duals.r, 0.0) if inst.n_types else duals.r
    r_tilde = y[:, None] * r_eff

    rsum = np.zeros((inst.n_agents, inst.n_goods))
    type_sums = np.zeros((inst.n_agents, inst.n_types))
    for t, goods in enumerate(inst.types):
        goods = list(goods)
        rsum[:, goods] += r_tilde[:, t][:, None]
        type_sums[:, t] = x[:, goods].sum(axis=1)

    margin = U - y[:, None] * duals.p[None, :] - rsum
    stationarity = float(np.max(np.maximum(margin, 0.0)))
    comp = float(np.max(np.abs(x * margin)))
    if inst.n_types:
        slack = np.where(inst.participation, 1.0 - type_sums, 0.0)
        comp = max(comp, float(np.max(np.abs(r_tilde * slack))))
    budget_residual = float(np.max(np.abs(x @ duals.p - inst.budgets)))
    sign = max(
        float(np.max(np.maximum(-y, 0.0))),
        float(np.max(np.maximum(-r_tilde, 0.0))) if inst.n_types else 0.0,
    )
    worst = max(stationarity, comp, budget_residual, sign)
    return CrossCheckReport(
        y=y,
        stationarity=stationarity,
        complementarity=comp,
        budget_residual=budget_residual,
        sign_violation=sign,
        max_residual=worst,
        passed=worst <= tol,
    )


@dataclass
class GridScanResult:
    min_residual: float
    argmin_price: np.ndarray
    points_evaluated: int
    points_skipped: int
    step: float
    near_clearing: list = field(default_factory=list)  # prices under record_below

    @property
    def nonexistence_margin_ok(self) -> bool:
        # claim non-existence only with clear margin over the grid pitch
        return self.min_residual >= 10.0 * self.step

    def __iter__(self):
        return iter((self.min_residual, self.argmin_price))


def grid_nonexistence(
    inst: MarketInstance,
    p_max: float,
    step: float,
    max_points: int = 10_000_000,
    record_below: float | None = None,
) -> GridScanResult:
    """Scan the price grid {0, step, ..., p_max}^m for near-equilibria.

    At each grid price the residual is the worse of the clearing and
    budget deviations under the deterministic greedy demand; the minimum
    over the grid (ties resolved to the lexicographically smallest price)
    bounds how close any grid price comes to clearing the market.  Grid
    points whose demand is unbounded (free valued cap-free goods on the
    zero faces) are skipped and counted.  With ``record_below`` set, every
    grid price whose residual falls below it is kept (up to 1000), which
    is how non-uniqueness shows up in a scan.
    """
    m = inst.n_goods
    if m > 3:
        raise ValueError("grid scan supports at most 3 goods")
    if step <= 0 or p_max <= 0:
        raise ValueError("p_max and step must be positive")
    axis = np.arange(0.0, p_max + step / 2, step)
    if len(axis) ** m > max_points:
        raise ValueError(
            f"grid too large ({len(axis) ** m:.3g} points > {max_points:g})"
        )

    best = np.inf
    argmin = None
    evaluated = skipped = 0
    near: list[np.ndarray] = []
    for combo in itertools.product(axis, repeat=m):
        p = np.array(combo)
        try:
            spends = np.empty(inst.n_agents)
            total = np.zeros(m)
            for i in range(inst.n_agents):
                d = demand(inst, i, p)
                spends[i] = d.spend
                total += d.x
        except UnboundedDemandError:
            skipped += 1
            continue
        evaluated += 1
        res = max(
            float(np.max(np.abs(total - inst.capacities))),
            float(np.max(np.abs(spends - inst.budgets))),
        )
        if res < best:
            best = res
            argmin = p
        if record_below is not None and res <= record_below and len(near) < 1000:
            near.append(p)
    return GridScanResult(
        min_residual=best,
        argmin_price=argmin,
        points_evaluated=evaluated,
        points_skipped=skipped,
        step=step,
        near_clearing=near,
    )


def existence_condition(inst: MarketInstance) -> bool:
    """Sufficient condition for an equilibrium to exist: some good is
    outside every type and every agent values every good strictly."""
    return bool(inst.untyped_goods) and bool(np.all(inst.utilities > 0))
