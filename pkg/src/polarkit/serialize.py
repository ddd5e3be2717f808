"""Deterministic JSON/CSV formatting helpers.

Reals are printed with 17 significant digits (enough to round-trip float64
exactly), so repeated runs with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math


def fmt_real(x: float) -> str:
    if isinstance(x, bool):  # bool is an int subclass; keep it out of %g
        raise TypeError("fmt_real expects a number, got bool")
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def dumps_17g(obj, indent: int = 0) -> str:
    """JSON text with floats rendered at 17 significant digits."""
    pad = " " * indent

    def rec(v, depth):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            s = fmt_real(v)
            if s in ("nan", "inf", "-inf"):  # not valid JSON numbers
                return json.dumps(s)
            return s
        if isinstance(v, int):
            return str(v)
        if isinstance(v, str):
            return json.dumps(v)
        if v is None:
            return "null"
        if isinstance(v, dict):
            inner = ",\n".join(
                f"{pad * (depth + 1)}{json.dumps(str(k))}: {rec(w, depth + 1)}"
                for k, w in v.items()
            )
            if indent:
                return "{\n" + inner + "\n" + pad * depth + "}"
            return "{" + ", ".join(
                f"{json.dumps(str(k))}: {rec(w, depth)}" for k, w in v.items()
            ) + "}"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(rec(w, depth) for w in v) + "]"
        raise TypeError(f"cannot serialize {type(v).__name__}")

    return rec(obj, 0)
