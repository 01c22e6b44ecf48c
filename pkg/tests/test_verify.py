import numpy as np
import pytest

from typedfisher import (
    MarketInstance,
    UnboundedDemandError,
    builtin_instance,
    check_equilibrium,
    existence_condition,
    grid_nonexistence,
    kkt_crosscheck,
    random_instance,
    solve_sop1,
    sop1_budget_gap,
)
from typedfisher.fixedpoint import run
from typedfisher.verify import NotAtFixedPointError

PROP2_ALLOC = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])


def test_cited_equilibria_pass_exactly():
    inst = builtin_instance("prop2")
    for p in ([11.0, 10.0, 9.0], [10.0, 10.0, 10.0]):
        rep = check_equilibrium(
            inst, p, PROP2_ALLOC, tol_clearing=1e-9, tol_budget=1e-9, tol_opt=1e-9
        )
        assert rep.passed, (p, rep)


def test_constructed_violation_fails():
    inst = builtin_instance("prop2")
    x = PROP2_ALLOC.copy()
    x[0, 0] = 0.5
    rep = check_equilibrium(inst, [11.0, 10.0, 9.0], x)
    assert not rep.passed
    assert rep.clearing_residuals[0] == pytest.approx(0.5)


def test_check_is_solver_agnostic():
    # hand-built candidate for a one-agent one-good market
    inst = MarketInstance(utilities=[[5.0]], budgets=[10.0], capacities=[2.0])
    rep = check_equilibrium(inst, [5.0], [[2.0]])
    assert rep.passed


def test_check_flags_type_overconsumption():
    inst = builtin_instance("prop2")
    x = PROP2_ALLOC.copy()
    x[0, 1] = 0.6  # agent 1 now holds 1.6 units of the capped type
    rep = check_equilibrium(inst, [11.0, 10.0, 9.0], x)
    assert not rep.passed
    assert any("type" in v for v in rep.feasibility_violations)


def test_check_propagates_unbounded_demand():
    inst = builtin_instance("prop2")
    with pytest.raises(UnboundedDemandError):
        check_equilibrium(inst, [11.0, 10.0, 0.0], PROP2_ALLOC)


def test_existence_condition():
    assert existence_condition(builtin_instance("prop2"))
    assert not existence_condition(builtin_instance("prop1"))
    inst = MarketInstance(
        utilities=[[0.0, 1.0], [1.0, 1.0]],
        budgets=[1.0, 1.0],
        capacities=[1.0, 1.0],
    )
    assert not existence_condition(inst)  # a zero utility entry


def test_budget_gap_identity_on_three_buyers():
    rep = sop1_budget_gap(builtin_instance("prop2"))
    assert rep.max_identity_residual <= 1e-7
    assert rep.unspent_witness  # constrained buyers retain budget


def test_budget_gap_no_types_clears():
    inst = random_instance(seed=4, n=3, m=3)
    rep = sop1_budget_gap(inst)
    assert np.all(np.abs(rep.gaps) <= 1e-6)
    assert not rep.unspent_witness


def test_crosscheck_classical_market():
    inst = random_instance(seed=4, n=3, m=3)
    x, duals, stats = solve_sop1(inst)
    rep = kkt_crosscheck(inst, np.zeros(3), x, duals)
    assert rep.passed
    # budget duals are marginal utility of money: (u.x)/w
    expect_y = np.einsum("ij,ij->i", inst.utilities, x) / inst.budgets
    assert np.allclose(rep.y, expect_y)


def test_crosscheck_refuses_non_fixed_point():
    inst = builtin_instance("prop2")
    x, duals, stats = solve_sop1(inst)  # lam=0 is not a fixed point here
    with pytest.raises(NotAtFixedPointError):
        kkt_crosscheck(inst, np.zeros(3), x, duals)


def test_crosscheck_at_three_buyer_fixed_point():
    inst = builtin_instance("prop2")
    res = run(inst, eps=1e-7)
    rep = kkt_crosscheck(inst, res.lam, res.allocation, res.duals, tol=1e-5)
    assert rep.passed


def test_grid_scan_single_good():
    # price must be budget/capacity; the grid contains it exactly
    inst = MarketInstance(utilities=[[5.0]], budgets=[2.0], capacities=[2.0])
    scan = grid_nonexistence(inst, p_max=3.0, step=0.25)
    assert scan.min_residual == pytest.approx(0.0, abs=1e-12)
    assert scan.argmin_price[0] == pytest.approx(1.0)


def test_grid_scan_finds_both_equilibria():
    inst = builtin_instance("prop2")
    scan = grid_nonexistence(inst, p_max=15.0, step=0.5, record_below=1e-9)
    assert scan.min_residual <= 1e-9
    near = {tuple(p) for p in scan.near_clearing}
    assert (11.0, 10.0, 9.0) in near
    assert (10.0, 10.0, 10.0) in near
    assert len(near) >= 2  # the equilibrium is not unique
    # zero-price faces for the cap-free good are skipped, not crashed
    assert scan.points_skipped > 0


def test_grid_scan_two_buyer_market_has_gap():
    inst = builtin_instance("prop1")
    scan = grid_nonexistence(inst, p_max=30.0, step=0.5)
    assert scan.min_residual >= 0.1


def test_grid_scan_guards():
    inst = random_instance(seed=1, n=2, m=4)
    with pytest.raises(ValueError):
        grid_nonexistence(inst, p_max=1.0, step=0.1)  # m > 3
    inst3 = random_instance(seed=1, n=2, m=3)
    with pytest.raises(ValueError):
        grid_nonexistence(inst3, p_max=10.0, step=1e-4)  # too many points


def test_converged_runs_with_existence_condition_verify():
    """Whenever the scheme converges on a market satisfying the existence
    condition, the result must survive the full equilibrium audit."""
    rng = np.random.default_rng(42)
    converged = 0
    for _ in range(6):
        n = int(rng.integers(2, 5))
        total = rng.uniform(0.3, 0.85 * n)  # keep the type strictly feasible
        frac = rng.uniform(0.25, 0.75)
        inst = MarketInstance(
            utilities=rng.uniform(0.2, 5.0, (n, 3)),
            budgets=rng.uniform(1.0, 8.0, n),
            capacities=[total * frac, total * (1 - frac), rng.uniform(0.5, 2.0 * n)],
            types=((0, 1),),
        )
        assert existence_condition(inst)
        res = run(inst, eps=1e-7, max_iter=150)
        if res.trace.status != "converged":
            continue
        converged += 1
        rep = check_equilibrium(inst, res.prices, res.allocation)
        assert rep.passed, rep
    assert converged >= 1  # the claim must actually get exercised


def test_prop2_grid_residual_zero_at_cited_prices():
    inst = builtin_instance("prop2")
    from typedfisher import demand_all

    for p in ([11.0, 10.0, 9.0], [10.0, 10.0, 10.0]):
        X, excess = demand_all(inst, p)
        spends = X @ np.asarray(p)
        assert excess.max_abs <= 1e-12
        assert np.allclose(spends, inst.budgets, atol=1e-12)
