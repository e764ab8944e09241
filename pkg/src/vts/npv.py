"""Net present value of a per-period cashflow series."""

from __future__ import annotations

from collections.abc import Sequence

DEFAULT_DISCOUNT_RATE = 0.108


def compute_npv(cashflows: Sequence[float], rate: float) -> float:
    """Discount `cashflows` (period 0 first) at `rate` per period.

    Returns sum of cashflows[t] / (1 + rate)^t. The period-0 flow is
    undiscounted, so compute_npv([x], r) == x for any rate > -1.
    """
    if not cashflows:
        raise ValueError("cashflows must be non-empty")
    if rate <= -1.0:
        raise ValueError("rate must be greater than -1")
    total = 0.0
    factor = 1.0 + rate
    for t, flow in enumerate(cashflows):
        total += flow / factor**t
    return total
