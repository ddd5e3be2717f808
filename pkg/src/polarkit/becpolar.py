"""Exact BEC polarization for arbitrary polarizing kernels.

One kernel step splits a BEC(z) into ell synthetic channels, each again a BEC.
Branch j stays erased under an erasure pattern E exactly when row j of the
kernel, restricted to the unerased coordinates, falls in the span of the later
rows restricted there; counting patterns by weight gives the branch's erasure
polynomial

    p_j(z) = sum_k a[j][k] z^k (1-z)^(ell-k).

Everything downstream (exact level enumeration, Monte Carlo paths, interval
propagation) reduces to iterating these polynomials in the extended-precision
representation of :mod:`polarkit.extval`.

Branch labels follow the channel-splitting order: branch 0 is the first input
bit of the kernel.  For the 2x2 kernel 10;11 this makes branch 0 the 2z - z^2
branch and branch 1 the squaring branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .errors import BudgetExceeded, DomainError, NotPolarizing, RequiresExactCdf
from .extval import COMPLOG, LINEAR, NEGLOG, SWITCH_BITS, ExtendedUnitValue
from .gf2kernel import (
    BitMatrix,
    determined_masks,
    is_polarizing,
    MAX_PERMUTATION_ELL,
    _rank,
)
from .serialize import dumps_17g, fmt_real

_LN2 = math.log(2.0)
DEFAULT_BUDGET = 2**22


@dataclass(frozen=True)
class ErasurePolynomialSet:
    """Pattern-count form of the ell branch erasure polynomials of a kernel.

    ``counts[j][k]`` is the number of weight-k erasure patterns that leave
    branch j undetermined; ``comp_counts`` are the analogous counts of the
    complement polynomials q_j(d) = 1 - p_j(1-d), whose leading degrees are
    matched against the derived matrix's partial distances (see
    ``KernelProfile.comp_branch_degrees``).
    """

    kernel: BitMatrix
    counts: tuple[tuple[int, ...], ...]
    leading_degree: tuple[int, ...]
    comp_counts: tuple[tuple[int, ...], ...]
    comp_leading_degree: tuple[int, ...]

    @property
    def ell(self) -> int:
        return self.kernel.ell

    def erasure_prob(self, j: int, eps: float) -> float:
        """p_j(eps) evaluated in float arithmetic; eps may be 0 or 1."""
        if not 0.0 <= eps <= 1.0:
            raise DomainError("erasure probability outside [0,1]")
        ell = self.ell
        c = 1.0 - eps
        return math.fsum(
            a * eps**k * c ** (ell - k) for k, a in enumerate(self.counts[j]) if a
        )

    def complement_prob(self, j: int, delta: float) -> float:
        """q_j(delta) = 1 - p_j(1 - delta), evaluated from its own counts."""
        if not 0.0 <= delta <= 1.0:
            raise DomainError("argument outside [0,1]")
        ell = self.ell
        c = 1.0 - delta
        return math.fsum(
            a * delta**k * c ** (ell - k)
            for k, a in enumerate(self.comp_counts[j])
            if a
        )

    def to_json(self) -> str:
        obj = {
            "kernel": self.kernel.to_literal(),
            "ell": self.ell,
            "counts": [list(row) for row in self.counts],
            "leading_degree": list(self.leading_degree),
            "comp_counts": [list(row) for row in self.comp_counts],
            "comp_leading_degree": list(self.comp_leading_degree),
        }
        return dumps_17g(obj, indent=2)


def split_erasure_polynomials(m: BitMatrix) -> ErasurePolynomialSet:
    """Exact one-step splitting of a BEC under the kernel.

    Enumerates all 2^ell erasure patterns; the polarizing property is checked
    when the permutation search is feasible (ell <= 8), otherwise only
    invertibility is enforced.
    """
    if m.ell <= MAX_PERMUTATION_ELL:
        if not is_polarizing(m):
            raise NotPolarizing(f"kernel {m.to_literal()!r} does not polarize")
    elif _rank(m.rows) < m.ell:
        raise NotPolarizing("kernel is singular")

    ell = m.ell
    det = determined_masks(m)
    counts = [[0] * (ell + 1) for _ in range(ell)]
    full = (1 << ell) - 1
    for E in range(1 << ell):
        K = full ^ E
        w = E.bit_count()
        for j in range(ell):
            if not ((det[j] >> K) & 1):
                counts[j][w] += 1
    comp = [
        [math.comb(ell, k) - counts[j][ell - k] for k in range(ell + 1)]
        for j in range(ell)
    ]
    lead = [min(k for k in range(ell + 1) if counts[j][k]) for j in range(ell)]
    comp_lead = [min(k for k in range(ell + 1) if comp[j][k]) for j in range(ell)]
    return ErasurePolynomialSet(
        kernel=m,
        counts=tuple(tuple(r) for r in counts),
        leading_degree=tuple(lead),
        comp_counts=tuple(tuple(r) for r in comp),
        comp_leading_degree=tuple(comp_lead),
    )


# ---------------------------------------------------------------------------
# Vectorized evolution over (mode, payload) arrays.
# ---------------------------------------------------------------------------


def _canonical_terms(row, ell):
    """Term triples (coeff, x_exp, y_exp) for sum_k a_k x^k y^(ell-k).

    A polynomial that is a pure power x^D in disguise (counts equal to the
    expansion of x^D ((1-x)+x)^(ell-D), which happens e.g. for the last kernel
    row whenever its weight is below ell) collapses to the single term
    1.0 * x^D: the maps z -> z^D written both ways are equal in exact
    arithmetic but not bit for bit in floats, and bound propagation compares
    against x^D computed as a plain power.
    """
    lead = min(k for k, a in enumerate(row) if a)
    if all(
        row[lead + i] == math.comb(ell - lead, i) for i in range(ell - lead + 1)
    ):
        return [(1.0, lead, 0)], lead
    return [(float(a), k, ell - k) for k, a in enumerate(row) if a], lead


class _EvolveTables:
    """Per-branch canonical term lists derived from an ErasurePolynomialSet."""

    def __init__(self, polys: ErasurePolynomialSet):
        ell = polys.ell
        self.ell = ell
        self.terms = []
        self.lead = []
        self.comp_terms = []
        self.comp_lead = []
        for j in range(ell):
            t, lead = _canonical_terms(polys.counts[j], ell)
            self.terms.append(t)
            self.lead.append(lead)
            ct, clead = _canonical_terms(polys.comp_counts[j], ell)
            self.comp_terms.append(ct)
            self.comp_lead.append(clead)


def _eval_terms(terms, x, y):
    """sum coeff * x^kx * y^ky over the term triples (ascending x power)."""
    acc = None
    for a, kx, ky in terms:
        t = a * x**kx * y**ky
        acc = t if acc is None else acc + t
    return acc


def _bracket_terms(terms, lead, x, y):
    """Same sum with x^lead factored out (exact: every kx >= lead)."""
    acc = None
    for a, kx, ky in terms:
        t = a * x ** (kx - lead) * y**ky
        acc = t if acc is None else acc + t
    return acc


def _step_arrays(mode, payload, j, t: _EvolveTables):
    """Apply branch j to every element of a (mode, payload) array pair.

    Inputs need not be in canonical mode bands; outputs are canonical.
    """
    out_m = np.empty_like(mode)
    out_p = np.empty_like(payload)
    thresh = 2.0**-SWITCH_BITS

    lin = mode == LINEAR
    if lin.any():
        z = payload[lin]
        zc = 1.0 - z
        p = _eval_terms(t.terms[j], z, zc)
        q = _eval_terms(t.comp_terms[j], zc, z)
        m_ = np.where(p < thresh, NEGLOG, np.where(q < thresh, COMPLOG, LINEAR))
        with np.errstate(divide="ignore"):
            pay = np.where(
                p < thresh, -np.log2(p), np.where(q < thresh, -np.log2(q), p)
            )
        out_m[lin] = m_
        out_p[lin] = pay

    neg = mode == NEGLOG
    if neg.any():
        lam = payload[neg]
        z = np.exp2(-lam)
        zc = 1.0 - z
        d = t.lead[j]
        bracket = _bracket_terms(t.terms[j], d, z, zc)
        lam2 = d * lam - np.log2(bracket)
        small = lam2 <= SWITCH_BITS  # re-normalize toward LINEAR
        out_m[neg] = np.where(small, LINEAR, NEGLOG)
        out_p[neg] = np.where(small, np.exp2(-lam2), lam2)

    comp = mode == COMPLOG
    if comp.any():
        mu = payload[comp]
        dd = np.exp2(-mu)
        dc = 1.0 - dd
        d = t.comp_lead[j]
        bracket = _bracket_terms(t.comp_terms[j], d, dd, dc)
        mu2 = d * mu - np.log2(bracket)
        small = mu2 <= SWITCH_BITS
        out_m[comp] = np.where(small, LINEAR, COMPLOG)
        out_p[comp] = np.where(small, 1.0 - np.exp2(-mu2), mu2)

    return out_m, out_p


def _neglog_array(mode, payload):
    """-log2(z) per element, accurate in every mode."""
    out = np.empty_like(payload)
    lin = mode == LINEAR
    neg = mode == NEGLOG
    comp = mode == COMPLOG
    if lin.any():
        out[lin] = -np.log2(payload[lin])
    if neg.any():
        out[neg] = payload[neg]
    if comp.any():
        out[comp] = -np.log1p(-np.exp2(-payload[comp])) / _LN2
    return out


def _value_array(mode, payload):
    """Nearest-float value per element (underflows at the extremes)."""
    out = np.empty_like(payload)
    lin = mode == LINEAR
    neg = mode == NEGLOG
    comp = mode == COMPLOG
    if lin.any():
        out[lin] = payload[lin]
    if neg.any():
        out[neg] = np.exp2(-payload[neg])
    if comp.any():
        out[comp] = 1.0 - np.exp2(-payload[comp])
    return out


def _check_depth(ell: int, n: int):
    if n < 0:
        raise DomainError("level must be nonnegative")
    if n * math.log2(ell) > 900.0:
        raise DomainError(
            "requested depth would push -log2 Z beyond the valid float range"
        )


def evolve_exact(z0, digits, polys: ErasurePolynomialSet) -> ExtendedUnitValue:
    """Exact Z after applying the branch sequence ``digits`` (first digit first).

    ``z0`` may be a float in (0,1) or an ExtendedUnitValue.
    """
    if not isinstance(z0, ExtendedUnitValue):
        z0 = ExtendedUnitValue.from_float(z0)
    digits = list(digits)
    _check_depth(polys.ell, len(digits))
    for b in digits:
        if not 0 <= int(b) < polys.ell:
            raise DomainError(f"digit {b!r} outside 0..{polys.ell - 1}")
    t = _EvolveTables(polys)
    mode = np.array([z0.mode], dtype=np.int8)
    payload = np.array([z0.payload], dtype=np.float64)
    for b in digits:
        mode, payload = _step_arrays(mode, payload, int(b), t)
    return ExtendedUnitValue(int(mode[0]), float(payload[0]))


# ---------------------------------------------------------------------------
# Exact level enumeration.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevelCdf:
    """All ell^n level-n erasure probabilities of a polarized BEC.

    Index i (1-based) corresponds to the branch digits (b_1..b_n) of i-1 with
    b_1 most significant; ``neglogs_by_index`` keeps that order and
    ``sorted_neglogs`` is its ascending copy.  ``source`` is "exact" for a full
    enumeration and "montecarlo" for an empirical level built from sampled
    paths.
    """

    n: int
    ell: int
    eps: float
    source: str
    neglogs_by_index: np.ndarray
    sorted_neglogs: np.ndarray
    sample_seed: int | None = None
    _modes: np.ndarray | None = field(default=None, repr=False)
    _payloads: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.neglogs_by_index)

    @property
    def is_exact(self) -> bool:
        return self.source == "exact"

    def cdf_at(self, z) -> Fraction:
        """F(n, z) = (number of indices with Z_i <= z) / count, exact rational."""
        if isinstance(z, ExtendedUnitValue):
            lam = z.neglog2
        else:
            z = float(z)
            if not 0.0 <= z <= 1.0:
                raise DomainError("cdf argument outside [0,1]")
            if z == 0.0:
                return Fraction(0, 1)
            lam = -math.log2(z)
        return self.cdf_at_neglog(lam)

    def cdf_at_neglog(self, lam: float) -> Fraction:
        """F at z = 2^-lam: fraction of indices with -log2 Z_i >= lam."""
        k = int(np.searchsorted(self.sorted_neglogs, lam, side="left"))
        return Fraction(self.size - k, self.size)

    def value_at(self, index: int) -> ExtendedUnitValue:
        """Exact Z of channel ``index`` (1-based); exact enumerations only."""
        if not self.is_exact or self._modes is None:
            raise RequiresExactCdf("per-index values need an exact enumeration")
        if not 1 <= index <= self.size:
            raise DomainError(f"index {index} outside 1..{self.size}")
        return ExtendedUnitValue(
            int(self._modes[index - 1]), float(self._payloads[index - 1])
        )

    def mean_z(self) -> float:
        """Mean of Z over the level (the martingale conserves this at eps)."""
        if self._modes is not None:
            vals = _value_array(self._modes, self._payloads)
        else:
            vals = np.exp2(-self.neglogs_by_index)
        return float(np.mean(vals))

    def z_order(self) -> np.ndarray:
        """0-based positions sorted by ascending Z, ties by smaller index.

        Uses the full (mode, payload) order, not the float lambda, so deeply
        polarized values that share an underflowed lambda still rank
        correctly.
        """
        if self._modes is None:
            raise RequiresExactCdf("ordering needs per-index values")
        # ascending z: NEGLOG (payload descending) < LINEAR < COMPLOG
        key0 = np.array([1, 0, 2], dtype=np.int8)[self._modes]
        key1 = np.where(self._modes == NEGLOG, -self._payloads, self._payloads)
        return np.lexsort((np.arange(self.size), key1, key0))

    def to_csv(self) -> str:
        lines = ["lambda"]
        lines.extend(fmt_real(v) for v in self.sorted_neglogs)
        return "\n".join(lines) + "\n"


def enumerate_levels(
    g: BitMatrix, eps: float, n: int, budget: int = DEFAULT_BUDGET
):
    """(mode, payload) arrays for every level 0..n, in tree order.

    Level d holds ell^d entries; entry v's children sit at v*ell + j in level
    d+1.  Raises BudgetExceeded when ell^n exceeds the node budget.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError("erasure probability must lie strictly inside (0,1)")
    _check_depth(g.ell, n)
    if g.ell**n > budget:
        raise BudgetExceeded(f"{g.ell}^{n} exceeds the enumeration budget {budget}")
    polys = split_erasure_polynomials(g)
    t = _EvolveTables(polys)
    root = ExtendedUnitValue.from_float(eps)
    modes = np.array([root.mode], dtype=np.int8)
    payloads = np.array([root.payload], dtype=np.float64)
    levels = [(modes, payloads)]
    ell = g.ell
    for _ in range(n):
        size = len(modes) * ell
        nm = np.empty(size, dtype=np.int8)
        npay = np.empty(size, dtype=np.float64)
        for j in range(ell):
            mj, pj = _step_arrays(modes, payloads, j, t)
            nm[j::ell] = mj
            npay[j::ell] = pj
        modes, payloads = nm, npay
        levels.append((modes, payloads))
    return levels


def enumerate_level(
    g: BitMatrix, eps: float, n: int, budget: int = DEFAULT_BUDGET
) -> LevelCdf:
    """Exact LevelCdf at depth n by full tree enumeration."""
    modes, payloads = enumerate_levels(g, eps, n, budget)[-1]
    lams = _neglog_array(modes, payloads)
    return LevelCdf(
        n=n,
        ell=g.ell,
        eps=eps,
        source="exact",
        neglogs_by_index=lams,
        sorted_neglogs=np.sort(lams, kind="stable"),
        _modes=modes,
        _payloads=payloads,
    )


# ---------------------------------------------------------------------------
# Monte Carlo paths.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathSample:
    """One sampled polarization path.

    ``sum_log_d`` and ``sum_log_w`` accumulate log2 of the branch partial
    distance / row weight along the path.
    """

    digits: np.ndarray
    z_final: ExtendedUnitValue
    sum_log_d: float
    sum_log_w: float


def sample_paths(
    g: BitMatrix, eps: float, n: int, count: int, seed: int
) -> list[PathSample]:
    """``count`` i.i.d. uniform digit paths of length n with exact evolution.

    Deterministic in (seed, parameters): path p draws its digits from the
    derived splitmix64 stream p (see :mod:`polarkit.rng`).
    """
    if not 0.0 < eps < 1.0:
        raise DomainError("erasure probability must lie strictly inside (0,1)")
    if count < 0:
        raise DomainError("path count must be nonnegative")
    _check_depth(g.ell, n)
    polys = split_erasure_polynomials(g)
    t = _EvolveTables(polys)
    ell = g.ell

    digit_mat = rng.path_digit_matrix(seed, count, n, ell)
    root = ExtendedUnitValue.from_float(eps)
    modes = np.full(count, root.mode, dtype=np.int8)
    payloads = np.full(count, root.payload, dtype=np.float64)
    for d in range(n):
        col = digit_mat[:, d]
        for j in range(ell):
            sel = col == j
            if not sel.any():
                continue
            mj, pj = _step_arrays(modes[sel], payloads[sel], j, t)
            modes[sel] = mj
            payloads[sel] = pj

    from .gf2kernel import partial_distances  # local import avoids cycle at import time

    dist = partial_distances(g)
    logd = np.array([math.log2(d) for d in dist])
    logw = np.array([math.log2(w) for w in g.row_weights()])
    sum_d = logd[digit_mat].sum(axis=1) if n else np.zeros(count)
    sum_w = logw[digit_mat].sum(axis=1) if n else np.zeros(count)

    out = []
    for p in range(count):
        out.append(
            PathSample(
                digits=digit_mat[p].copy(),
                z_final=ExtendedUnitValue(int(modes[p]), float(payloads[p])),
                sum_log_d=float(sum_d[p]),
                sum_log_w=float(sum_w[p]),
            )
        )
    return out


def level_from_samples(
    samples: list[PathSample], g: BitMatrix, eps: float, n: int, seed: int
) -> LevelCdf:
    """Empirical LevelCdf built from sampled paths (source 'montecarlo')."""
    lams = np.array([s.z_final.neglog2 for s in samples], dtype=np.float64)
    return LevelCdf(
        n=n,
        ell=g.ell,
        eps=eps,
        source="montecarlo",
        neglogs_by_index=lams,
        sorted_neglogs=np.sort(lams, kind="stable"),
        sample_seed=seed,
    )
