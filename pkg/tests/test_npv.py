"""Net-present-value arithmetic against an exact rational oracle."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vts.npv import DEFAULT_DISCOUNT_RATE, compute_npv

flows = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=8,
)
rates = st.floats(min_value=-0.9, max_value=1.5, allow_nan=False, allow_infinity=False)


def oracle_npv(cashflows, rate) -> float:
    """Exact rational summation, converted to float at the very end."""
    factor = 1 + Fraction(rate)
    total = sum(Fraction(flow) / factor**t for t, flow in enumerate(cashflows))
    return float(total)


def rel_close(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def test_default_rate_value():
    assert DEFAULT_DISCOUNT_RATE == 0.108


def test_known_value():
    # -100 + 110/1.1 = 0 exactly in rationals; floats agree to tolerance.
    assert rel_close(compute_npv([-100.0, 110.0], 0.1), 0.0, tol=1e-9)


@given(flow=st.floats(min_value=-1e9, max_value=1e9, allow_nan=False, allow_infinity=False), rate=rates)
def test_single_flow_identity(flow, rate):
    assert compute_npv([flow], rate) == flow


@given(cashflows=flows, rate=rates)
def test_agrees_with_rational_oracle(cashflows, rate):
    assert rel_close(compute_npv(cashflows, rate), oracle_npv(cashflows, rate))


@given(cashflows=flows, rate=rates, scale=st.floats(min_value=-100, max_value=100, allow_nan=False))
def test_scaling_linearity(cashflows, rate, scale):
    scaled = [scale * flow for flow in cashflows]
    assert rel_close(compute_npv(scaled, rate), scale * compute_npv(cashflows, rate), tol=1e-9)


@given(cashflows=flows, rate=rates)
def test_additivity(cashflows, rate):
    doubled = [2.0 * flow for flow in cashflows]
    lhs = compute_npv(cashflows, rate) + compute_npv(cashflows, rate)
    assert rel_close(compute_npv(doubled, rate), lhs, tol=1e-9)


def test_thousand_random_cases_close_to_oracle():
    rng = random.Random(20260822)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(1, 10)
        cashflows = [rng.uniform(-5e5, 5e5) for _ in range(n)]
        rate = rng.uniform(-0.5, 1.0)
        got = compute_npv(cashflows, rate)
        want = oracle_npv(cashflows, rate)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        assert rel_close(got, want), (cashflows, rate)
    assert worst <= 1e-12


def test_empty_cashflows_rejected():
    with pytest.raises(ValueError):
        compute_npv([], 0.1)


def test_rate_at_or_below_minus_one_rejected():
    with pytest.raises(ValueError):
        compute_npv([1.0], -1.0)
    with pytest.raises(ValueError):
        compute_npv([1.0], -2.0)
