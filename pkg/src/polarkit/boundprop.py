"""Interval propagation of Bhattacharyya bounds along a polarization path.

When only the root Z(W) is known (a general BMS channel rather than a BEC),
each branch step still sandwiches the synthetic channel:

    Z^{D_i(G)}  <=  Z(W^i)  <=  2^(ell-i) Z^{D_i(G)}                (Z side)
    (1-Z)^{D_i(H)}  <=  1-Z(W^i)  <=  2^(2i+1) (1-Z)^{D_i(H)}       (comp side)

The comp-side distances and constants are addressed through the empirically
resolved branch mapping of the kernel profile (branch j uses degree
comp_branch_degrees[j] and index comp_branch_indices[j]); the mapping orders
degrees non-increasingly, which is exactly the assumption the comp-side
constant needs, so the propagation refuses kernels where the mapping is
inconsistent with the derived matrix.

Also here: the runtime audit of the abstract polarization-process conditions
(drift to {0,1}; x^s lower bound; c*x^s upper bound) on recorded traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AssumptionUnmet, DomainError
from .extval import ExtendedUnitValue, _exp2
from .gf2kernel import KernelProfile
from .serialize import dumps_17g


@dataclass(frozen=True)
class IntervalState:
    """Bounds lo <= hi on the Z (or 1-Z) of the current synthetic channel.

    hi may be the TOP sentinel, meaning the upper bound has saturated at 1
    and is vacuous there.
    """

    lo: ExtendedUnitValue
    hi: ExtendedUnitValue

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError("interval bounds out of order")

    @staticmethod
    def degenerate(z) -> "IntervalState":
        """Point interval [z, z] for a known root value."""
        if not isinstance(z, ExtendedUnitValue):
            z = ExtendedUnitValue.from_float(z)
        return IntervalState(lo=z, hi=z)

    def contains(self, z: ExtendedUnitValue) -> bool:
        return self.lo <= z <= self.hi

    def as_pairs(self):
        return {"lo": self.lo.as_pair(), "hi": self.hi.as_pair()}


def propagate_z_interval(
    state: IntervalState, digit: int, profile: KernelProfile
) -> IntervalState:
    """One branch step of the Z-side sandwich.

    lo' = lo^D, hi' = 2^(ell-digit) * hi^D, saturating at the top of the unit
    interval (where the upper bound is vacuous).
    """
    ell = profile.ell
    if not 0 <= digit < ell:
        raise DomainError(f"digit {digit!r} outside 0..{ell - 1}")
    d = profile.partial_distances[digit]
    lo = state.lo.pow_int(d)
    hi = state.hi.pow_int(d).times_pow2(ell - digit)
    return IntervalState(lo=lo, hi=hi)


def propagate_comp_interval(
    state: IntervalState, digit: int, profile: KernelProfile
) -> IntervalState:
    """One branch step of the complement-side sandwich, on x = 1 - Z.

    lo' = lo^d_j, hi' = 2^(2 i_j + 1) * hi^d_j with (d_j, i_j) from the
    profile's comp branch mapping; requires the mapping to be consistent with
    the derived matrix's partial distances.
    """
    ell = profile.ell
    if not 0 <= digit < ell:
        raise DomainError(f"digit {digit!r} outside 0..{ell - 1}")
    if not profile.comp_map_consistent:
        raise AssumptionUnmet(
            "comp branch degrees do not match the derived matrix's partial "
            "distances; the complement-side constants are unproven here"
        )
    d = profile.comp_branch_degrees[digit]
    i = profile.comp_branch_indices[digit]
    lo = state.lo.pow_int(d)
    hi = state.hi.pow_int(d).times_pow2(2 * i + 1)
    return IntervalState(lo=lo, hi=hi)


@dataclass(frozen=True)
class ConditionReport:
    """Audit of the abstract process conditions along one trace."""

    steps: int
    c2_violations: int
    c3_violations: int
    max_c3_constant_observed: float
    terminal_drift: float
    c5_note: str

    def to_json(self) -> str:
        return dumps_17g(
            {
                "steps": self.steps,
                "c2_violations": self.c2_violations,
                "c3_violations": self.c3_violations,
                "max_c3_constant_observed": self.max_c3_constant_observed,
                "terminal_drift": self.terminal_drift,
                "c5_note": self.c5_note,
            },
            indent=2,
        )


_C5_NOTE = (
    "branch digits are drawn independently of the state by construction; "
    "independence is structural, not statistically tested"
)


def _as_extval(x) -> ExtendedUnitValue:
    if isinstance(x, ExtendedUnitValue):
        return x
    x = float(x)
    if not 0.0 < x < 1.0:
        raise DomainError("trace values must lie strictly inside (0,1)")
    return ExtendedUnitValue.from_float(x)


def check_process_conditions(trace, c: float) -> ConditionReport:
    """Count violations of x' >= x^s and x' <= c*x^s along a trace.

    ``trace`` is a list of (x, s) pairs; x may be a float or an
    ExtendedUnitValue, s >= 1 (the final pair's s is unused).  When s is
    integral the comparisons run in the extended representation (bit-exact
    against the evolution on pure-power branches); otherwise they fall back
    to the -log2 domain.  The terminal drift min(x, 1-x) stands in for the
    polarization condition; the independence conditions are structural.
    """
    if not trace:
        raise DomainError("empty trace")
    xs = [_as_extval(x) for x, _ in trace]
    ss = [float(s) for _, s in trace]
    for s in ss[:-1]:
        if s < 1.0:
            raise DomainError("exponents must satisfy s >= 1")
    if c <= 0.0:
        raise DomainError("constant c must be positive")
    log2c = math.log2(c)
    exact_c = log2c == int(log2c)

    c2 = 0
    c3 = 0
    max_ratio_log = -math.inf
    for k in range(len(xs) - 1):
        x, s, x_next = xs[k], ss[k], xs[k + 1]
        if s == int(s):
            ref = x.pow_int(int(s))
            if x_next < ref:
                c2 += 1
            if exact_c:
                if x_next > ref.times_pow2(int(log2c)):
                    c3 += 1
            else:
                if x_next.neglog2 < ref.neglog2 - log2c:
                    c3 += 1
            ratio_log = ref.neglog2 - x_next.neglog2
        else:
            lam, lam_next = x.neglog2, x_next.neglog2
            if lam_next > s * lam:
                c2 += 1
            if lam_next < s * lam - log2c:
                c3 += 1
            ratio_log = s * lam - lam_next
        if ratio_log > max_ratio_log:
            max_ratio_log = ratio_log

    last = xs[-1]
    drift = _exp2(-max(last.neglog2, last.complog2))
    return ConditionReport(
        steps=len(xs) - 1,
        c2_violations=c2,
        c3_violations=c3,
        max_c3_constant_observed=(
            _exp2(max_ratio_log) if len(xs) > 1 else 0.0
        ),
        terminal_drift=drift,
        c5_note=_C5_NOTE,
    )
