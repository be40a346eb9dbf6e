"""Stable text forms for parameters and report numbers."""

from __future__ import annotations

import math


def fmt_param(x) -> str:
    """Shortest round-trip text for a spec parameter (ints stay ints)."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if x == 0.0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def fmt_float(x: float) -> str:
    """Report formatting: 17 significant digits, fixed spellings for inf/nan."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        return "0"
    return format(x, ".17g")
