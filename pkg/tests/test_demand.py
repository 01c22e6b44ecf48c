import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typedfisher import (
    MarketInstance,
    UnboundedDemandError,
    brute_force_demand,
    builtin_instance,
    demand,
    demand_all,
)

from helpers import finite_floats, price_vectors, small_markets

EX_PRICES = np.array([0.1, 0.4, 0.7, 1.2, 1.7, 2.4])


def test_worked_example_one_allocation():
    inst = builtin_instance("iop_ex1")
    d = demand(inst, 0, EX_PRICES)
    assert np.allclose(d.x, [0.0, 0.0, 0.5, 1.0, 0.5, 0.0], atol=1e-12)
    assert d.spend == pytest.approx(2.4, abs=1e-12)
    assert d.budget_exhausted
    assert d.alpha_star == pytest.approx(0.5, abs=1e-12)


def test_worked_example_one_ledger():
    inst = builtin_instance("iop_ex1")
    d = demand(inst, 0, EX_PRICES)
    got = [(pu.slope, pu.units, pu.cost) for pu in d.ledger]
    expect = [
        (0.1, 1.0, 0.1),
        (0.2, 1.0, 0.4),
        (0.3, 1.0, 0.6),
        (0.4, 1.0, 0.8),
        (0.5, 0.5, 0.5),
    ]
    assert len(got) == len(expect)
    for g, e in zip(got, expect):
        assert g == pytest.approx(e, abs=1e-9)


def test_worked_example_two():
    inst = builtin_instance("iop_ex2")
    d = demand(inst, 0, EX_PRICES)
    assert np.allclose(d.x, [0.0, 1.0, 1.0, 0.0, 2.0, 0.0], atol=1e-12)
    # the cap-free good absorbs the remaining budget at rate 1.7 / 5
    last = d.ledger[-1]
    assert last.type_id is None
    assert last.slope == pytest.approx(0.34, abs=1e-12)
    assert last.units == pytest.approx(2.0, abs=1e-12)
    assert last.cost == pytest.approx(3.4, abs=1e-12)


def test_zero_budget_buys_nothing_at_positive_prices():
    inst = MarketInstance(
        utilities=[[3.0, 1.0]], budgets=[0.0], capacities=[1.0, 1.0],
        types=((0, 1),),
    )
    d = demand(inst, 0, [2.0, 1.0])
    assert np.allclose(d.x, 0.0, atol=1e-12)


def test_zero_budget_still_takes_free_typed_goods():
    inst = MarketInstance(
        utilities=[[3.0, 1.0]], budgets=[0.0], capacities=[1.0, 1.0],
        types=((0, 1),),
    )
    d = demand(inst, 0, [0.0, 1.0])
    assert d.x[0] == pytest.approx(1.0)  # free slope-0 product bought to cap
    assert d.spend == pytest.approx(0.0)


def test_three_buyer_demands_clear_at_both_price_vectors():
    inst = builtin_instance("prop2")
    for p in ([11.0, 10.0, 9.0], [10.0, 10.0, 10.0]):
        X, excess = demand_all(inst, p)
        assert np.allclose(excess.f, 0.0, atol=1e-12), p
    d = demand(inst, 0, [11.0, 10.0, 9.0])
    assert np.allclose(d.x, [1.0, 0.0, 1.0], atol=1e-12)
    assert d.spend == pytest.approx(20.0, abs=1e-12)


def test_two_buyer_market_undersells_at_high_price():
    inst = builtin_instance("prop1")
    _, excess = demand_all(inst, [12.0, 1.0])
    assert excess.f[0] < 0


def test_unbounded_free_good_raises():
    inst = builtin_instance("prop2")  # good 3 has no type
    with pytest.raises(UnboundedDemandError) as err:
        demand(inst, 0, [11.0, 10.0, 0.0])
    assert err.value.good == 2


def test_nonparticipating_type_is_cap_free():
    inst = MarketInstance(
        utilities=[[2.0, 1.0]], budgets=[10.0], capacities=[0.5, 0.5],
        types=((0, 1),), participation=[[False]],
    )
    d = demand(inst, 0, [1.0, 1.0])
    assert d.x[0] == pytest.approx(10.0)  # whole budget into the better good


def test_invalid_agent_index():
    with pytest.raises(IndexError):
        demand(builtin_instance("prop2"), 3, [1.0, 1.0, 1.0])


def test_negative_price_rejected():
    with pytest.raises(ValueError):
        demand(builtin_instance("prop2"), 0, [-1.0, 1.0, 1.0])


# --- brute-force oracle agreement ---------------------------------------------


def test_oracle_on_restricted_example():
    # worked example restricted to two goods of one type
    inst = MarketInstance(
        utilities=[[1.0, 3.0]], budgets=[0.5], capacities=[0.5, 0.5],
        types=((0, 1),),
    )
    p = [0.1, 0.7]
    exact = brute_force_demand(inst, 0, p)
    greedy = demand(inst, 0, p)
    assert greedy.utility == pytest.approx(exact.utility, abs=1e-9)
    coarse = brute_force_demand(inst, 0, p, grid_step=0.01)
    assert coarse.utility == pytest.approx(greedy.utility, abs=0.05)


def test_oracle_prop1_buyer_two():
    inst = builtin_instance("prop1")
    p = [10.0, 1.0]
    assert demand(inst, 1, p).utility == pytest.approx(
        brute_force_demand(inst, 1, p).utility, abs=1e-9
    )


def test_oracle_unaffordable_prices_give_zero_utility():
    inst = MarketInstance(
        utilities=[[4.0, 2.0]], budgets=[1e-9], capacities=[1.0, 1.0],
        types=((0, 1),),
    )
    d = brute_force_demand(inst, 0, [50.0, 80.0])
    assert d.utility <= 1e-9
    assert demand(inst, 0, [50.0, 80.0]).utility <= 1e-9


def test_oracle_dimension_guard():
    inst = MarketInstance(
        utilities=[np.ones(8)], budgets=[1.0], capacities=np.ones(8) / 8,
        types=(tuple(range(8)),),
    )
    with pytest.raises(ValueError):
        brute_force_demand(inst, 0, np.ones(8))


@settings(deadline=None, max_examples=150)
@given(small_markets(), st.data())
def test_greedy_matches_vertex_enumeration(inst, data):
    p = data.draw(price_vectors(inst.n_goods), label="prices")
    greedy = demand(inst, 0, p)
    exact = brute_force_demand(inst, 0, p)
    assert greedy.utility == pytest.approx(exact.utility, rel=1e-9, abs=1e-9)


@settings(deadline=None, max_examples=100)
@given(small_markets(), st.data())
def test_utility_nondecreasing_in_budget(inst, data):
    p = data.draw(price_vectors(inst.n_goods), label="prices")
    bump = data.draw(finite_floats(0.01, 5.0), label="bump")
    richer = MarketInstance(
        utilities=inst.utilities,
        budgets=inst.budgets + bump,
        capacities=inst.capacities,
        types=inst.types,
        participation=inst.participation,
    )
    assert demand(richer, 0, p).utility >= demand(inst, 0, p).utility - 1e-9


@settings(deadline=None, max_examples=150)
@given(small_markets(), st.data())
def test_at_most_one_type_holds_two_goods(inst, data):
    """The constructed optimum splits across two goods in at most one type
    and buys at most one good in every other type."""
    p = data.draw(price_vectors(inst.n_goods), label="prices")
    d = demand(inst, 0, p)
    split = 0
    for t, goods in enumerate(inst.types):
        if not inst.participation[0, t]:
            continue
        positive = sum(1 for j in goods if d.x[j] > 1e-9)
        assert positive <= 2
        if positive == 2:
            split += 1
    assert split <= 1


@settings(deadline=None, max_examples=100)
@given(small_markets(), st.data())
def test_budget_accounting(inst, data):
    p = data.draw(price_vectors(inst.n_goods), label="prices")
    d = demand(inst, 0, p)
    assert d.spend == pytest.approx(float(p @ d.x), rel=1e-9, abs=1e-9)
    assert d.spend <= inst.budgets[0] + 1e-9
    if any(inst.utilities[0, j] > 0 for j in inst.unbounded_goods(0)):
        # a priced cap-free product absorbs whatever budget remains
        assert d.budget_exhausted
    else:
        best = sum(
            float(np.max(inst.utilities[0, list(g)], initial=0.0))
            for t, g in enumerate(inst.types)
            if inst.participation[0, t]
        )
        if d.utility < best - 1e-9:  # products remained unbought
            assert d.budget_exhausted


def test_demand_all_propagates_agent_index():
    inst = builtin_instance("prop2")
    with pytest.raises(UnboundedDemandError) as err:
        demand_all(inst, [1.0, 1.0, 0.0])
    assert err.value.agent == 0
