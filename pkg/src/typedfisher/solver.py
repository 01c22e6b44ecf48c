"""Primal-dual interior-point solver for the social allocation programs.

Solves, for perturbations lam >= 0 (the plain social program is lam = 0):

    maximize    sum_i (w_i + lam_i) * log(u_i . x_i)
    subject to  sum_i x_ij = capacity_j          for every good j
                sum_{j in t} x_ij <= 1           for participating (i, t)
                x >= 0

and returns the allocation together with the dual variables the mechanism
needs: capacity duals p (the candidate prices), type-constraint duals
r[i, t], and nonnegativity duals s[i, j] <= 0, all satisfying stationarity
and complementary slackness to the requested tolerance.

The Newton systems decouple: the objective Hessian is block diagonal per
agent (rank one per block) and every type row touches a single agent, so
each step solves n small saddle systems plus one m-by-m Schur system for
the capacity duals.

Degenerate-tight types: when a type's goods have total capacity exactly
equal to its participating-agent count and every agent participates, the
type inequalities are implied equalities with zero slack, which a barrier
cannot hold.  Those rows are converted to hard equalities (one redundant
row per such type is dropped; it is implied by the capacity equalities).
The equality duals are then determined only up to a per-type shift moved
between p and r, so the returned duals are normalized by shifting along
that direction until min_i r[i, t] = 0, which keeps every Karush-Kuhn-
Tucker identity intact and r nonnegative.  Raw (unshifted) duals and the
applied shifts are reported alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import MarketInstance, validate_instance

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200

_TIGHT_ATOL = 1e-9


class InfeasibleInstanceError(ValueError):
    """A type's capacity exceeds what its participating agents may hold."""


class ZeroUtilityError(RuntimeError):
    """An agent's aggregate utility hit zero inside the log domain."""

    def __init__(self, agent: int):
        self.agent = agent
        super().__init__(f"agent {agent + 1} was forced to zero utility")


@dataclass
class DualBundle:
    """Dual variables of one converged solve.

    p: (m,) capacity duals (candidate prices).
    r: (n, T) type duals, nonnegative after tight-type normalization;
       zero at non-participating pairs.
    s: (n, m) nonnegativity duals, nonpositive.
    objective: attained value of the budget-weighted log objective.
    r_raw: duals before tight-type normalization.
    tight_shift: (T,) shift moved from r into p per tight type (zero
       elsewhere).
    """

    p: np.ndarray
    r: np.ndarray
    s: np.ndarray
    objective: float
    r_raw: np.ndarray
    tight_shift: np.ndarray


@dataclass
class SolveStats:
    iterations: int
    stationarity_residual: float
    primal_feasibility_residual: float
    complementarity_residual: float
    status: str  # converged | degenerate_tight | max_iter | infeasible
    tight_types: tuple[int, ...] = ()

    @property
    def success(self) -> bool:
        return self.status in ("converged", "degenerate_tight")


@dataclass
class KKTResiduals:
    """Independent residuals of the first-order optimality system."""

    stationarity: float
    complementarity: float
    feasibility: float
    dual_sign: float

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity, self.complementarity, self.feasibility, self.dual_sign
        )


def solve_sop1(
    inst: MarketInstance, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
):
    """Social program without budget perturbation (lam = 0)."""
    return solve_bpsop(inst, np.zeros(inst.n_agents), tol=tol, max_iter=max_iter)


def solve_bpsop(
    inst: MarketInstance,
    lam,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, DualBundle, SolveStats]:
    rep = validate_instance(inst)
    if rep.errors:
        if any("clearing infeasible" in e for e in rep.errors):
            raise InfeasibleInstanceError("; ".join(rep.errors))
        raise ValueError("invalid instance: " + "; ".join(rep.errors))

    n, m, T = inst.n_agents, inst.n_goods, inst.n_types
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (n,):
        raise ValueError(f"lam must have length {n}")
    if not np.all(np.isfinite(lam)) or np.any(lam < -1e-12):
        raise ValueError("lam must be finite and nonnegative")
    lam = np.maximum(lam, 0.0)

    U = inst.utilities
    sbar = inst.capacities
    c = inst.budgets + lam

    # --- constraint structure -------------------------------------------
    tight: list[int] = []
    for t, goods in enumerate(inst.types):
        n_part = int(inst.participation[:, t].sum())
        cap_sum = float(sum(sbar[j] for j in goods))
        if n_part == n and abs(cap_sum - n_part) <= _TIGHT_ATOL * max(1.0, n_part):
            tight.append(t)
    tight_set = set(tight)

    ineq: list[tuple[int, np.ndarray]] = []  # (agent, goods) with slack
    eq: list[tuple[int, np.ndarray]] = []  # (agent, goods) hard equality
    for t, goods in enumerate(inst.types):
        goods_arr = np.array(goods, dtype=int)
        for i in range(n):
            if not inst.participation[i, t]:
                continue
            if t in tight_set:
                if i < n - 1:  # last agent's row is implied; drop it
                    eq.append((i, goods_arr))
            else:
                ineq.append((i, goods_arr))
    ineq_types = [
        t
        for t, goods in enumerate(inst.types)
        for i in range(n)
        if inst.participation[i, t] and t not in tight_set
    ]
    eq_types = [
        t
        for t, goods in enumerate(inst.types)
        for i in range(n - 1)
        if inst.participation[i, t] and t in tight_set
    ]
    K, Q = len(ineq), len(eq)

    # flat index arrays for scatter/gather over the pair constraints
    def _flatten(pairs):
        ia, ig, ip = [], [], []
        for k, (i, goods) in enumerate(pairs):
            ia.extend([i] * len(goods))
            ig.extend(goods)
            ip.extend([k] * len(goods))
        return (np.array(ia, int), np.array(ig, int), np.array(ip, int))

    q_ia, q_ig, q_ip = _flatten(ineq)
    e_ia, e_ig, e_ip = _flatten(eq)
    ineq_agent = np.array([i for i, _ in ineq], int)
    eq_agent = np.array([i for i, _ in eq], int)
    eq_pos = np.zeros(Q, int)  # row slot of each equality within its agent block
    counts = np.zeros(n, int)
    for qi, (i, _) in enumerate(eq):
        eq_pos[qi] = counts[i]
        counts[i] += 1
    qmax = int(counts.max()) if Q else 0
    dim = m + qmax

    # --- initial interior point -----------------------------------------
    x = np.tile(sbar / n, (n, 1))
    for i, goods in ineq:
        k = len(goods)
        slack = 1.0 - x[i, goods].sum()
        center = 1.0 / (k + 1)
        target = min(0.01, 0.5 * center)
        if slack < target and center > slack:
            gamma = min(1.0, (target - slack) / (center - slack))
            x[i, goods] = (1 - gamma) * x[i, goods] + gamma * center

    yhat = np.einsum("ij,ij->i", U, x)
    grad_scale = (c / yhat)[:, None] * U
    delta0 = 0.1 * max(1.0, float(grad_scale.max()))
    z = grad_scale + delta0
    p = np.zeros(m)
    rho = np.zeros(Q)
    if K:
        xi = np.maximum(
            1.0 - np.bincount(q_ip, weights=x[q_ia, q_ig], minlength=K), 0.005
        )
        r = np.full(K, delta0)
    else:
        xi = np.zeros(0)
        r = np.zeros(0)

    reg = 1e-11
    n_comp = n * m + K
    stat = pfeas = comp = np.inf
    it = 0
    status = "max_iter"
    best_metric = np.inf
    best_state = None

    def _residuals():
        rsum = np.zeros((n, m))
        if K:
            np.add.at(rsum, (q_ia, q_ig), r[q_ip])
        if Q:
            np.add.at(rsum, (e_ia, e_ig), rho[e_ip])
        g = -(c / yhat)[:, None] * U
        r_dual = g + p[None, :] + rsum - z
        r_cap = x.sum(axis=0) - sbar
        r_ineq = (
            np.bincount(q_ip, weights=x[q_ia, q_ig], minlength=K) + xi - 1.0
            if K
            else np.zeros(0)
        )
        r_eq = (
            np.bincount(e_ip, weights=x[e_ia, e_ig], minlength=Q) - 1.0
            if Q
            else np.zeros(0)
        )
        return r_dual, r_cap, r_ineq, r_eq

    for it in range(1, max_iter + 1):
        yhat = np.einsum("ij,ij->i", U, x)
        if np.any(yhat <= 0.0):
            raise ZeroUtilityError(int(np.argmin(yhat)))
        r_dual, r_cap, r_ineq, r_eq = _residuals()
        xz = x * z
        xir = xi * r
        mu = (xz.sum() + xir.sum()) / n_comp
        stat = float(np.max(np.abs(r_dual)))
        pfeas = float(np.max(np.abs(r_cap)))
        if K:
            pfeas = max(pfeas, float(np.max(np.abs(r_ineq))))
        if Q:
            pfeas = max(pfeas, float(np.max(np.abs(r_eq))))
        comp = float(max(xz.max(initial=0.0), xir.max(initial=0.0)))
        metric = max(stat, pfeas, comp)
        if metric <= best_metric:
            best_metric = metric
            best_state = (
                x.copy(), z.copy(), xi.copy(), r.copy(), p.copy(), rho.copy(),
                stat, pfeas, comp,
            )
        if stat <= tol and pfeas <= tol and comp <= tol:
            status = "converged"
            break
        if it > 5 and metric > 1e4 * best_metric:
            break  # diverging; fall back to the best iterate seen
        min_prod = float(min(xz.min(initial=np.inf), xir.min(initial=np.inf)))

        # Newton matrix blocks, one saddle system per agent.  Barrier
        # diagonals are clamped so degenerate actives cannot overflow the
        # factorization; refinement below recovers the lost accuracy.
        beta = c / yhat**2
        Kb = np.zeros((n, dim, dim))
        Kb[:, :m, :m] = beta[:, None, None] * (U[:, :, None] * U[:, None, :])
        diag = np.arange(m)
        Kb[:, diag, diag] += np.minimum(z / x, 1e12) + reg
        for k, (i, goods) in enumerate(ineq):
            Kb[i, goods[:, None], goods[None, :]] += min(r[k] / xi[k], 1e12)
        scale = np.maximum(1.0, np.abs(Kb[:, :m, :m]).max(axis=(1, 2)))
        for qi, (i, goods) in enumerate(eq):
            row = m + eq_pos[qi]
            Kb[i, row, goods] = 1.0
            Kb[i, goods, row] = 1.0
            Kb[i, row, row] = -reg
        for i in range(n):
            for pad in range(m + counts[i], dim):
                Kb[i, pad, pad] = 1.0
        try:
            Kinv = np.linalg.inv(Kb)
        except np.linalg.LinAlgError:
            Kb[:, diag, diag] += 1e-8 * scale[:, None]
            try:
                Kinv = np.linalg.inv(Kb)
            except np.linalg.LinAlgError:
                break
        P = Kinv[:, :m, :m]
        S = P.sum(axis=0)

        rhs_eq = np.zeros((n, qmax)) if qmax else np.zeros((n, 0))
        if Q:
            rhs_eq[eq_agent, eq_pos] = -r_eq

        def _solve_structured(rhs, rhs_cap):
            # [K_i  E_i^T][sol_i]   [rhs_i]      E_i^T dp lands on the x rows
            # [E    0    ][ dp  ] = [rhs_cap]
            sol0 = np.einsum("nab,nb->na", Kinv, rhs)
            dp = np.linalg.solve(S, sol0[:, :m].sum(axis=0) - rhs_cap)
            sol = sol0 - np.einsum("nab,b->na", Kinv[:, :, :m], dp)
            return sol, dp

        def _kkt_apply(sol, dp):
            out = np.einsum("nab,nb->na", Kb, sol)
            out[:, :m] += dp[None, :]
            return out, sol[:, :m].sum(axis=0)

        def _direction(gamma_x, gamma_xi):
            b = -r_dual + gamma_x / x
            if K:
                np.subtract.at(
                    b, (q_ia, q_ig), ((gamma_xi + r * r_ineq) / xi)[q_ip]
                )
            rhs = np.concatenate([b, rhs_eq], axis=1)
            sol, dp = _solve_structured(rhs, -r_cap)
            # iterative refinement; the blocks are badly conditioned near
            # degenerate optima
            err = np.inf
            for _ in range(3):
                lhs, cap = _kkt_apply(sol, dp)
                res_a = rhs - lhs
                res_c = -r_cap - cap
                new_err = max(float(np.abs(res_a).max()), float(np.abs(res_c).max()))
                if not np.isfinite(new_err) or new_err >= 0.5 * err:
                    break
                err = new_err
                dsol, ddp = _solve_structured(res_a, res_c)
                sol = sol + dsol
                dp = dp + ddp
            dx = sol[:, :m]
            drho = sol[eq_agent, m + eq_pos] if Q else np.zeros(0)
            dz = (gamma_x - z * dx) / x
            if K:
                dxi = -r_ineq - np.bincount(
                    q_ip, weights=dx[q_ia, q_ig], minlength=K
                )
                dr = (gamma_xi - r * dxi) / xi
            else:
                dxi = np.zeros(0)
                dr = np.zeros(0)
            return dx, dz, dxi, dr, dp, drho

        def _max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return float(np.min(-v[neg] / dv[neg]))

        # predictor
        dxa, dza, dxia, dra, _, _ = _direction(-xz, -xir)
        alpha_aff = min(
            1.0,
            _max_step(x.ravel(), dxa.ravel()),
            _max_step(z.ravel(), dza.ravel()),
            _max_step(xi, dxia),
            _max_step(r, dra),
        )
        mu_aff = (
            ((x + alpha_aff * dxa) * (z + alpha_aff * dza)).sum()
            + ((xi + alpha_aff * dxia) * (r + alpha_aff * dra)).sum()
        ) / n_comp
        sigma = min(0.99, max(1e-8, (mu_aff / mu) ** 3))
        if min_prod < 1e-2 * mu:
            sigma = max(sigma, 0.5)  # recenter when products are unbalanced
        if mu < 0.1 * (stat + pfeas):
            sigma = max(sigma, 0.9)  # hold mu while other residuals catch up

        # corrector with centering
        dx, dz, dxi, dr, dp, drho = _direction(
            sigma * mu - xz - dxa * dza, sigma * mu - xir - dxia * dra
        )
        tau = 0.99 if mu > 1e-8 * max(1.0, comp) else 0.999
        tau = min(0.9995, max(tau, 1.0 - mu))
        alpha = min(
            1.0,
            tau * _max_step(x.ravel(), dx.ravel()),
            tau * _max_step(z.ravel(), dz.ravel()),
            tau * _max_step(xi, dxi),
            tau * _max_step(r, dr),
        )
        # stay inside a wide central-path neighborhood: no complementarity
        # product may collapse far below the average
        for _ in range(50):
            xn = x + alpha * dx
            zn = z + alpha * dz
            xin = xi + alpha * dxi
            rn = r + alpha * dr
            pn = (xn * zn).sum() + (xin * rn).sum()
            mn = pn / n_comp
            low = min(
                (xn * zn).min(initial=np.inf), (xin * rn).min(initial=np.inf)
            )
            if low >= 1e-4 * mn or alpha <= 1e-8:
                break
            alpha *= 0.75
        x = x + alpha * dx
        z = z + alpha * dz
        xi = xi + alpha * dxi
        r = r + alpha * dr
        p = p + alpha * dp
        rho = rho + alpha * drho

    if status != "converged" and best_state is not None:
        x, z, xi, r, p, rho, stat, pfeas, comp = best_state
        if stat <= tol and pfeas <= tol and comp <= tol:
            status = "converged"

    yhat = np.einsum("ij,ij->i", U, x)
    objective = float(c @ np.log(yhat))

    r_full = np.zeros((n, T))
    for k, t in enumerate(ineq_types):
        r_full[ineq_agent[k], t] = r[k]
    for qi, t in enumerate(eq_types):
        r_full[eq_agent[qi], t] = rho[qi]
    r_raw = r_full.copy()
    shift = np.zeros(T)
    p_out = p.copy()
    for t in tight:
        delta = float(r_full[:, t].min())
        r_full[:, t] -= delta
        for j in inst.types[t]:
            p_out[j] += delta
        shift[t] = delta

    duals = DualBundle(
        p=p_out,
        r=r_full,
        s=-z,
        objective=objective,
        r_raw=r_raw,
        tight_shift=shift,
    )
    if status == "converged" and tight:
        status = "degenerate_tight"
    stats = SolveStats(
        iterations=it,
        stationarity_residual=stat,
        primal_feasibility_residual=pfeas,
        complementarity_residual=comp,
        status=status,
        tight_types=tuple(tight),
    )
    return x, duals, stats


def kkt_residuals(inst: MarketInstance, lam, x, duals: DualBundle) -> KKTResiduals:
    """Residuals of the first-order system for any (x, duals) pair.

    Recomputes everything from the instance; independent of how the
    candidate solution was produced.  Raises ZeroUtilityError when some
    agent's aggregate utility is nonpositive (the objective gradient is
    then undefined).
    """
    n, m = inst.n_agents, inst.n_goods
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    U = inst.utilities
    c = inst.budgets + lam
    yhat = np.einsum("ij,ij->i", U, x)
    if np.any(yhat <= 0.0):
        raise ZeroUtilityError(int(np.argmin(yhat)))

    # a type's dual only exists for participating agents
    r_eff = np.where(inst.participation, duals.r, 0.0) if inst.n_types else duals.r
    rsum = np.zeros((n, m))
    type_sums = np.zeros((n, inst.n_types))
    for t, goods in enumerate(inst.types):
        goods = list(goods)
        rsum[:, goods] += r_eff[:, t][:, None]
        type_sums[:, t] = x[:, goods].sum(axis=1)

    margin = (c / yhat)[:, None] * U - duals.p[None, :] - rsum
    stationarity = float(np.max(np.abs(margin - duals.s)))
    comp_x = float(np.max(np.abs(x * margin)))
    comp_r = 0.0
    if inst.n_types:
        slack = np.where(inst.participation, 1.0 - type_sums, 0.0)
        comp_r = float(np.max(np.abs(r_eff * slack)))
    feasibility = float(np.max(np.abs(x.sum(axis=0) - inst.capacities)))
    if inst.n_types:
        viol = np.where(inst.participation, type_sums - 1.0, 0.0)
        feasibility = max(feasibility, float(np.max(np.maximum(viol, 0.0))))
    feasibility = max(feasibility, float(np.max(np.maximum(-x, 0.0))))
    dual_sign = max(
        float(np.max(np.maximum(duals.s, 0.0))),
        float(np.max(np.maximum(-r_eff, 0.0))) if inst.n_types else 0.0,
    )
    return KKTResiduals(
        stationarity=stationarity,
        complementarity=max(comp_x, comp_r),
        feasibility=feasibility,
        dual_sign=dual_sign,
    )
