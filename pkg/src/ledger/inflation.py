"""Issuance cap shared by the enclave and IPSC."""

from fractions import Fraction
from math import ceil, floor

from ..utils.clock import YEAR


def allowed_issued(t_i0: int, i_r: Fraction, created_at: int, now: int) -> int:
    """
    Maximum total issued tokens at ``now``.

    floor(t_i0 · (1 + i_r) ** ⌈elapsed / year⌉), with at least one year of
    growth so a fresh instance may already issue up to t_i0 · (1 + i_r).
    """
    elapsed = max(0, now - created_at)
    years = max(1, ceil(Fraction(elapsed, YEAR)))
    return floor(Fraction(t_i0) * (1 + i_r) ** years)


def meets_inflation_rate(t_i_new: int, t_i0: int, i_r: Fraction, created_at: int, now: int) -> bool:
    return t_i_new <= allowed_issued(t_i0, i_r, created_at, now)
