"""Exact money arithmetic in integer minor units.

All persisted and wire amounts are integers in the currency's minor unit
(cents for USD). Floats never touch stored amounts; parsing goes through
Decimal and fee application is pure integer arithmetic with half-up
rounding, so every node computes byte-identical payouts.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation

from .errors import VALIDATION_ERROR, ProtocolError

# ISO 4217 minor-unit exponents for the currencies the stack accepts.
CURRENCY_EXPONENT: dict[str, int] = {
    "USD": 2,
    "EUR": 2,
    "GBP": 2,
    "CAD": 2,
    "AUD": 2,
    "MXN": 2,
    "BRL": 2,
    "INR": 2,
    "JPY": 0,
    "KRW": 0,
    "KWD": 3,
    "BHD": 3,
}

# Fees are fixed-point with at most 4 fractional digits, held in parts-per-million.
_FEE_PPM_SCALE = 1_000_000


def currency_exponent(currency: str) -> int:
    try:
        return CURRENCY_EXPONENT[currency]
    except KeyError:
        raise ProtocolError(VALIDATION_ERROR, f"unsupported currency: {currency!r}") from None


def to_minor(amount: str | int | Decimal, currency: str) -> int:
    """Parse a decimal amount string into minor units, rejecting excess precision."""
    exp = currency_exponent(currency)
    if isinstance(amount, int):
        return amount * 10**exp
    try:
        d = Decimal(str(amount))
    except InvalidOperation:
        raise ProtocolError(VALIDATION_ERROR, f"not a decimal amount: {amount!r}") from None
    scaled = d * 10**exp
    if scaled != scaled.to_integral_value():
        raise ProtocolError(
            VALIDATION_ERROR, f"amount {amount} has more than {exp} decimal places for {currency}"
        )
    return int(scaled)


def format_minor(minor: int, currency: str) -> str:
    """Render minor units as a plain decimal string ('12.05', '7', '0.004')."""
    exp = currency_exponent(currency)
    if exp == 0:
        return str(minor)
    sign = "-" if minor < 0 else ""
    q, r = divmod(abs(minor), 10**exp)
    return f"{sign}{q}.{r:0{exp}d}"


def fee_to_ppm(fee_percent: str | float | Decimal) -> int:
    """Convert a percentage (max 4 decimal places) into parts-per-million.

    15 -> 150000 ppm. The 4-decimal cap means the ppm value is always exact.
    """
    try:
        d = Decimal(str(fee_percent))
    except InvalidOperation:
        raise ProtocolError(VALIDATION_ERROR, f"not a decimal fee: {fee_percent!r}") from None
    if d < 0 or d > 100:
        raise ProtocolError(VALIDATION_ERROR, f"fee percent out of range: {fee_percent}")
    scaled = d * 10_000
    if scaled != scaled.to_integral_value():
        raise ProtocolError(
            VALIDATION_ERROR, f"fee percent {fee_percent} exceeds 4 decimal places"
        )
    return int(scaled)


def payout_after_fee(amount_minor: int, fee_percent: str | float | Decimal) -> int:
    """amount * (1 - fee%) in minor units, rounded half-up.

    Integer-only: the fee is exact in ppm, so the product amount*(1e6-ppm)
    never loses precision before the single rounding step.
    """
    if amount_minor < 0:
        raise ProtocolError(VALIDATION_ERROR, "amount must be non-negative")
    ppm = fee_to_ppm(fee_percent)
    return (amount_minor * (_FEE_PPM_SCALE - ppm) + _FEE_PPM_SCALE // 2) // _FEE_PPM_SCALE
