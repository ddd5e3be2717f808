"""Index selection rules and the error bounds attached to a selection.

Channel index i (1-based) corresponds to the branch digits b_1..b_n of i-1
in base ell, b_1 most significant, matching the enumeration order of
becpolar.  Three selection families are provided:

  * polar: smallest exact Z first (needs a full enumeration);
  * rm: largest row weight of the n-fold kernel power first
    (channel-independent);
  * hybrid: channel-dependent on the first m digits only (Z of the depth-m
    prefix below a double-exponential threshold), channel-independent
    partial-distance sums on the rest, optionally with intermediate
    sample-mean segments between breakpoints.

All tie-breaks resolve toward the smaller channel index so selections are
reproducible; hybrid ties fall back to the prefix polar ranking first, which
makes the m = n schedule reduce to the polar rule exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .becpolar import DEFAULT_BUDGET, LevelCdf
from .errors import (
    DomainError,
    IndexOutOfRange,
    MismatchedLevel,
    PrefixTooDeep,
    RequiresExactCdf,
)
from .extval import LINEAR, NEGLOG, ExtendedUnitValue, _exp2
from .gf2kernel import BitMatrix, KernelProfile, kernel_profile
from .asymptotics import q_inverse
from .serialize import dumps_17g


@dataclass(frozen=True, eq=False)
class SelectionSet:
    """A chosen set of floor(ell^n * rate) channel indices.

    ``indices`` is a sorted 1-based int64 array (set semantics, array
    storage); ``metadata`` records the rule parameters, including the pad
    count ("shortfall") for hybrid rules.
    """

    n: int
    ell: int
    rate: float
    indices: np.ndarray
    rule: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        size = self.ell**self.n
        want = math.floor(size * self.rate)
        idx = np.asarray(self.indices, dtype=np.int64)
        if len(idx) != want:
            raise DomainError(
                f"selection holds {len(idx)} indices, rate demands {want}")
        if len(idx) and (idx[0] < 1 or idx[-1] > size or
                         np.any(np.diff(idx) <= 0)):
            raise DomainError("indices must be sorted, unique, in 1..ell^n")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return len(self.indices)

    def to_csv(self) -> str:
        lines = ["index"]
        lines.extend(str(int(i)) for i in self.indices)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SelectionBounds:
    """Error-probability bounds of one selection on one channel.

    union_bound sums the selected Z (SC upper bound); its exact -log2 is
    kept separately in union_neglog2 because the sum may exceed 1, in which
    case the unit-interval field pins at the ceiling.  sc_lower is
    max (1-sqrt(1-Z^2))/2 over the selection, dmin_upper the minimum
    selected row weight of the n-fold kernel power, and map_lower the
    root-channel bound Z^(2 dmin)/4.
    """

    union_bound: ExtendedUnitValue
    union_neglog2: float
    sc_lower: ExtendedUnitValue
    dmin_upper: int
    map_lower: ExtendedUnitValue

    def to_json(self) -> str:
        return dumps_17g(
            {
                "union_bound": self.union_bound.as_pair(),
                "union_neglog2": self.union_neglog2,
                "sc_lower": self.sc_lower.as_pair(),
                "dmin_upper": self.dmin_upper,
                "map_lower": self.map_lower.as_pair(),
            },
            indent=2,
        )


def _target_size(ell: int, n: int, rate: float) -> int:
    if not 0.0 < rate <= 1.0:
        raise DomainError("rate must lie in (0, 1]")
    return math.floor(ell**n * rate)


def digit_reverse(i: int, ell: int, n: int) -> int:
    """Index whose base-ell digits (width n) are those of i, reversed.

    1-based on both sides: the digits of i-1 reversed give j-1.
    """
    if not 1 <= i <= ell**n:
        raise IndexOutOfRange(f"index {i} outside 1..{ell}^{n}")
    x = i - 1
    r = 0
    for _ in range(n):
        r = r * ell + x % ell
        x //= ell
    return r + 1


def _digit_scores(ell: int, n: int, lo: int, hi: int,
                  table: np.ndarray) -> np.ndarray:
    """Sum of table[digit] over digit positions lo..hi-1, for all ell^n paths."""
    scores = np.zeros(ell**n)
    if hi <= lo:
        return scores
    idx = np.arange(ell**n, dtype=np.int64)
    for pos in range(lo, hi):
        shift = ell ** (n - 1 - pos)
        scores += table[(idx // shift) % ell]
    return scores


def polar_selection(cdf: LevelCdf, rate: float) -> SelectionSet:
    """The floor(ell^n * rate) indices of smallest exact Z."""
    if not cdf.is_exact:
        raise RequiresExactCdf("polar selection ranks exact Z values")
    k = _target_size(cdf.ell, cdf.n, rate)
    order = cdf.z_order()
    chosen = np.sort(order[:k]) + 1
    return SelectionSet(n=cdf.n, ell=cdf.ell, rate=rate, indices=chosen,
                        rule="polar", metadata={"eps": cdf.eps})


def rm_selection(g: BitMatrix, n: int, rate: float) -> SelectionSet:
    """The floor(ell^n * rate) indices of largest row weight, ties by index.

    Row weight of index i is the product over digits of the kernel row
    weights; ranking uses float log2 weights (exact whenever the kernel's
    row weights are powers of two).
    """
    ell = g.ell
    k = _target_size(ell, n, rate)
    logw = np.log2(np.array(g.row_weights(), dtype=np.float64))
    scores = _digit_scores(ell, n, 0, n, logw)
    order = np.lexsort((np.arange(ell**n), -scores))
    chosen = np.sort(order[:k]) + 1
    return SelectionSet(n=n, ell=ell, rate=rate, indices=chosen, rule="rm",
                        metadata={})


def default_prefix_depth(n: int, beta: float, profile: KernelProfile,
                         budget: int = DEFAULT_BUDGET) -> int:
    """Channel-dependent prefix length ceil((log2 n + log2 log2 c)/beta).

    c is the kernel's process-condition constant; the result is clamped to
    1..n (the schedule outgrows n at desk scale).
    """
    if beta <= 0.0:
        raise DomainError("beta must be positive")
    m = math.ceil((math.log2(n) + math.log2(math.log2(profile.c3_constant)))
                  / beta)
    m = max(1, min(m, n))
    if profile.ell**m > budget:
        raise PrefixTooDeep(
            f"prefix depth {m} needs {profile.ell}^{m} nodes > budget {budget}")
    return m


def _prefix_rank(cdf_prefix) -> np.ndarray:
    order = cdf_prefix.z_order()
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    return rank


def hybrid_selection_recursive(
    g: BitMatrix,
    n: int,
    rate: float,
    schedule,
    beta: float,
    epsilon_slack: float,
    t: float,
    cdf_prefix: LevelCdf | None = None,
    pad_cdf: LevelCdf | None = None,
) -> SelectionSet:
    """Segmented hybrid rule over breakpoints m_0 < m_1 < ... <= n.

    Keeps indices whose depth-m_0 prefix has Z below 2^(-2^(beta*m_0))
    (channel-dependent; cdf_prefix must be the exact depth-m_0 enumeration,
    or None when m_0 = 0), whose intermediate segments each have sample-mean
    log2 partial distance >= E' - epsilon_slack, and whose final segment sum
    clears (n-m)E' + t*sqrt((n-m)V'), with E' = E log2(ell) and
    V' = V (log2 ell)^2.  Oversized candidate sets keep the largest suffix
    sums (ties: prefix polar rank, then index); undersized ones are padded
    from pad_cdf's polar ranking when given, else by the channel-independent
    scores, recording the pad count as metadata["shortfall"].
    """
    ell = g.ell
    schedule = [int(m) for m in schedule]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError("schedule must be a strictly increasing sequence")
    if schedule[0] < 0 or schedule[-1] > n:
        raise DomainError("breakpoints must lie in 0..n")
    m0 = schedule[0]
    if ell**m0 > DEFAULT_BUDGET:
        raise PrefixTooDeep(f"{ell}^{m0} prefix nodes exceed the budget")
    if m0 == 0:
        if cdf_prefix is not None:
            raise MismatchedLevel("m = 0 takes no prefix enumeration")
    else:
        if cdf_prefix is None:
            raise DomainError("m > 0 needs the exact depth-m enumeration")
        if not cdf_prefix.is_exact:
            raise RequiresExactCdf("prefix cdf must be an exact enumeration")
        if cdf_prefix.ell != ell or cdf_prefix.n != m0:
            raise MismatchedLevel(
                f"prefix cdf is depth {cdf_prefix.n}, schedule starts at {m0}")
    prof = kernel_profile(g)
    e2 = prof.exponent * math.log2(ell)
    v2 = prof.second_exponent * math.log2(ell) ** 2
    if not 0.0 < beta < e2:
        raise DomainError(f"beta must lie in (0, {e2}) for this kernel")
    if math.isnan(t) or math.isinf(t):
        raise DomainError("t must be finite")
    k = _target_size(ell, n, rate)
    size = ell**n
    logd = np.log2(np.array(prof.partial_distances, dtype=np.float64))

    mask = np.ones(size, dtype=bool)
    if m0 > 0:
        pref_of = np.arange(size, dtype=np.int64) // ell ** (n - m0)
        lam_pref = cdf_prefix.neglogs_by_index
        mask &= lam_pref[pref_of] > 2.0 ** (beta * m0)
        rank_pref = _prefix_rank(cdf_prefix)[pref_of]
    else:
        rank_pref = np.zeros(size, dtype=np.int64)
    for a, b in zip(schedule, schedule[1:]):
        seg = _digit_scores(ell, n, a, b, logd)
        mask &= seg >= (b - a) * (e2 - epsilon_slack)
    last = schedule[-1]
    h_need = (n - last) * e2 + t * math.sqrt((n - last) * v2)
    mask &= _digit_scores(ell, n, last, n, logd) >= h_need

    score = _digit_scores(ell, n, m0, n, logd)
    cand = np.flatnonzero(mask)
    sub = np.lexsort((cand, rank_pref[cand], -score[cand]))
    chosen = cand[sub[:k]]
    shortfall = k - len(chosen)
    if shortfall > 0:
        rest = np.flatnonzero(~mask)
        if pad_cdf is not None:
            if not pad_cdf.is_exact:
                raise RequiresExactCdf("pad cdf must be an exact enumeration")
            if pad_cdf.ell != ell or pad_cdf.n != n:
                raise MismatchedLevel("pad cdf must be a full-depth enumeration")
            pad_rank = _prefix_rank(pad_cdf)
            rsub = np.argsort(pad_rank[rest], kind="stable")
        else:
            rsub = np.lexsort((rest, rank_pref[rest], -score[rest]))
        chosen = np.concatenate([chosen, rest[rsub[:shortfall]]])
    meta = {
        "schedule": tuple(schedule),
        "beta": beta,
        "epsilon_slack": epsilon_slack,
        "t": t,
        "shortfall": int(max(shortfall, 0)),
    }
    return SelectionSet(n=n, ell=ell, rate=rate,
                        indices=np.sort(chosen) + 1, rule="hybrid",
                        metadata=meta)


def hybrid_selection(cdf_prefix: LevelCdf | None, g: BitMatrix, n: int,
                     rate: float, beta: float, t: float,
                     pad_cdf: LevelCdf | None = None) -> SelectionSet:
    """Two-part hybrid rule: depth-m prefix threshold, then suffix sums.

    The single-breakpoint case of hybrid_selection_recursive; m is the depth
    of cdf_prefix (0 when None, making the rule channel-independent).
    """
    m = 0 if cdf_prefix is None else cdf_prefix.n
    return hybrid_selection_recursive(
        g, n, rate, [m], beta, 0.0, t,
        cdf_prefix=cdf_prefix, pad_cdf=pad_cdf)


def _sc_lower_from_z(z: ExtendedUnitValue) -> ExtendedUnitValue:
    # (1 - sqrt(1 - z^2))/2 without cancellation in any band
    if z.mode == NEGLOG:
        # z^2/4 up to a factor 1 + O(z^2); exact at payload resolution
        return ExtendedUnitValue.from_neglog2(2.0 * z.payload + 2.0)
    if z.mode == LINEAR:
        p = z.payload
        v = p * p / (2.0 * (1.0 + math.sqrt((1.0 - p) * (1.0 + p))))
        return ExtendedUnitValue.from_float(v)
    d = _exp2(-z.payload)  # 1 - z
    return ExtendedUnitValue.from_float(0.5 * (1.0 - math.sqrt(d * (2.0 - d))))


def selection_bounds(sel: SelectionSet, cdf: LevelCdf,
                     profile: KernelProfile, root_z: float) -> SelectionBounds:
    """Union/SC-lower/dmin/MAP-lower bounds of a selection.

    The union bound is a compensated sum of the selected Z; when every term
    is deeply polarized the sum is assembled in the -log2 domain instead so
    nothing underflows.
    """
    if not cdf.is_exact:
        raise RequiresExactCdf("bounds need exact per-index values")
    if cdf.n != sel.n or cdf.ell != sel.ell or profile.ell != sel.ell:
        raise MismatchedLevel("selection, cdf and profile disagree on n/ell")
    if not 0.0 < root_z < 1.0:
        raise DomainError("root_z must lie in (0,1)")
    if sel.size == 0:
        raise DomainError("bounds of an empty selection are undefined")
    sel0 = sel.indices - 1
    lam = cdf.neglogs_by_index[sel0]

    total = math.fsum(np.exp2(-lam))
    if total >= 2.0**-40:
        union_neglog2 = -math.log2(total)
        union = (ExtendedUnitValue.top() if total >= 1.0
                 else ExtendedUnitValue.from_float(total))
    else:
        m = float(lam.min())
        s = math.fsum(np.exp2(m - lam))
        union_neglog2 = m - math.log2(s)
        union = ExtendedUnitValue.from_neglog2(union_neglog2)

    rank = _prefix_rank(cdf)
    zmax = cdf.value_at(int(sel0[np.argmax(rank[sel0])]) + 1)
    sc_lower = _sc_lower_from_z(zmax)

    ell, n = sel.ell, sel.n
    weights = np.array(profile.row_weights, dtype=np.float64)
    logw = np.log2(weights)
    wscore = np.zeros(len(sel0))
    digits = np.empty((len(sel0), n), dtype=np.int64)
    for pos in range(n):
        d = (sel0 // ell ** (n - 1 - pos)) % ell
        digits[:, pos] = d
        wscore += logw[d]
    near = np.flatnonzero(wscore <= wscore.min() + 1e-9)
    counts = np.zeros((len(near), ell), dtype=np.int64)
    for pos in range(n):
        np.add.at(counts, (np.arange(len(near)), digits[near, pos]), 1)
    dmin = None
    for row in np.unique(counts, axis=0):
        prod = 1
        for d in range(ell):
            prod *= int(profile.row_weights[d]) ** int(row[d])
        dmin = prod if dmin is None else min(dmin, prod)

    zp = ExtendedUnitValue.from_float(root_z).pow_int(2 * dmin)
    if zp.mode == NEGLOG:
        map_lower = ExtendedUnitValue.from_neglog2(zp.payload + 2.0)
    else:
        map_lower = ExtendedUnitValue.from_float(zp.value / 4.0)
    return SelectionBounds(union_bound=union, union_neglog2=union_neglog2,
                           sc_lower=sc_lower, dmin_upper=int(dmin),
                           map_lower=map_lower)


def overlap_fraction(a: SelectionSet, b: SelectionSet) -> float:
    """|a intersect b| / ell^n."""
    if a.n != b.n or a.ell != b.ell:
        raise MismatchedLevel("selections live at different levels")
    common = np.intersect1d(a.indices, b.indices, assume_unique=True)
    return len(common) / a.ell**a.n


def check_min_weight_row(sel: SelectionSet, profile: KernelProfile, n: int,
                         rate: float, channel_I: float,
                         epsilon_slack: float) -> bool:
    """True iff some selected row has log_ell weight sum below the
    E_w / V_w threshold at quantile Q^{-1}(rate/I) + slack."""
    if n != sel.n or profile.ell != sel.ell:
        raise MismatchedLevel("selection and profile disagree on n/ell")
    if not 0.0 < rate < channel_I <= 1.0:
        raise DomainError("need 0 < rate < channel_I <= 1")
    ell = sel.ell
    logw_ell = np.log2(np.array(profile.row_weights, dtype=np.float64))
    logw_ell /= math.log2(ell)
    sel0 = sel.indices - 1
    score = np.zeros(len(sel0))
    for pos in range(n):
        score += logw_ell[(sel0 // ell ** (n - 1 - pos)) % ell]
    threshold = (n * profile.weight_exponent
                 + math.sqrt(n * profile.weight_second_exponent)
                 * (q_inverse(rate / channel_I) + epsilon_slack))
    return bool(score.min() <= threshold)


def selection_report_json(sel: SelectionSet,
                          bounds: SelectionBounds | None = None) -> str:
    """JSON metadata block: rule, parameters, optional bounds."""
    doc = {
        "n": sel.n,
        "ell": sel.ell,
        "rate": sel.rate,
        "count": sel.size,
        "rule": sel.rule,
        "metadata": {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in sorted(sel.metadata.items())},
    }
    if bounds is not None:
        doc["bounds"] = {
            "union_bound": bounds.union_bound.as_pair(),
            "union_neglog2": bounds.union_neglog2,
            "sc_lower": bounds.sc_lower.as_pair(),
            "dmin_upper": bounds.dmin_upper,
            "map_lower": bounds.map_lower.as_pair(),
        }
    return dumps_17g(doc, indent=2)
