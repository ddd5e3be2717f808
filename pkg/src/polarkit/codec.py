"""Polar encoder and erasure-channel decoders for ell^n blocks.

Channel index i (1-based) has base-ell digits b_1..b_n of i-1, b_1 most
significant; digits name the branch taken at each combine level, root first.
The generator row feeding index i is the digit-reversed row of the n-fold
Kronecker power of the kernel, so encoding runs as n kernel-local stages:
consecutive blocks of ell^{n-1} inputs are encoded recursively and the
resulting words are combined ell consecutive output symbols at a time,
(x_{p ell}, ..., x_{p ell + ell - 1}) = (v_0[p], ..., v_{ell-1}[p]) G.

Successive cancellation over the erasure channel is exact ternary algebra:
at each kernel node, branch input u_j is determined iff g_j restricted to
the known output coordinates lies outside the span of the other unresolved
rows there (later rows plus earlier rows whose input is still unknown).
Determined bits are always correct, so the only failure mode is an
undetermined information bit and a block is in error iff one occurs; no
guesses are made.  MAP is the matching global test: the pattern is
ambiguous iff some nonzero combination of information rows is supported
entirely inside the erasure set.  Whenever that happens the SC decoder is
also stuck (a bit forced by the observations would have to agree with both
candidate words), so MAP failures are a per-trial subset of SC failures;
``simulate`` checks the inclusion on every trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .asymptotics import q_inverse
from .errors import (
    DimensionTooLarge,
    DomainError,
    FrozenBitNonzero,
    IndexOutOfRange,
    MismatchedLevel,
)
from .gf2kernel import KernelProfile
from .rng import subseed, uniform_matrix
from .serialize import fmt_real

ERASED = -1

# two-sided 95% normal quantile, used for Wilson intervals
WILSON_Z = q_inverse(0.025)

MAX_BLOCK = 2**22


@dataclass(frozen=True)
class PolarCode:
    """Frozen-set polar code over an ell x ell kernel, block length ell^n.

    ``frozen`` holds 1-based channel indices forced to zero; the rest carry
    information.  Typically built from a selection rule via
    ``from_selection`` (frozen = complement of the selected indices).
    """

    profile: KernelProfile
    n: int
    frozen: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        size = self.profile.ell**self.n
        if size > MAX_BLOCK:
            raise DimensionTooLarge(f"block length {size} exceeds {MAX_BLOCK}")
        object.__setattr__(self, "frozen", frozenset(int(i) for i in self.frozen))
        for i in self.frozen:
            if not 1 <= i <= size:
                raise IndexOutOfRange(f"frozen index {i} outside 1..{size}")

    @classmethod
    def from_selection(cls, profile: KernelProfile, selection) -> "PolarCode":
        if selection.ell != profile.ell:
            raise MismatchedLevel("selection kernel size does not match profile")
        size = profile.ell**selection.n
        frozen = frozenset(range(1, size + 1)) - frozenset(
            int(i) for i in selection.indices
        )
        return cls(profile=profile, n=selection.n, frozen=frozen)

    @property
    def block_length(self) -> int:
        return self.profile.ell**self.n

    @property
    def k(self) -> int:
        return self.block_length - len(self.frozen)

    @property
    def rate(self) -> float:
        return self.k / self.block_length

    @cached_property
    def info_indices(self) -> np.ndarray:
        """1-based information indices, ascending."""
        mask = np.ones(self.block_length, dtype=bool)
        for i in self.frozen:
            mask[i - 1] = False
        return np.flatnonzero(mask) + 1

    @cached_property
    def _info_mask(self) -> np.ndarray:
        mask = np.ones(self.block_length, dtype=bool)
        for i in self.frozen:
            mask[i - 1] = False
        return mask

    @cached_property
    def _kernel_array(self) -> np.ndarray:
        return np.array(self.profile.kernel.as_lists(), dtype=np.uint8)

    @cached_property
    def _node_tables(self) -> dict:
        return {}

    def generator_row(self, i: int) -> int:
        """Kronecker generator row of channel index i as a column bitmask.

        Row selection digit-reverses i-1: the innermost kernel factor takes
        the most significant channel digit.
        """
        ell = self.profile.ell
        if not 1 <= i <= self.block_length:
            raise IndexOutOfRange(f"index {i} outside 1..{self.block_length}")
        digits = []
        r = i - 1
        for _ in range(self.n):
            digits.append(r % ell)
            r //= ell
        v = 1
        span = 1
        for d in reversed(digits):  # b_1 first
            row = self.profile.kernel.rows[d]
            acc = 0
            for c in range(ell):
                if (row >> c) & 1:
                    acc |= v << (c * span)
            v = acc
            span *= ell
        return v

    @cached_property
    def _info_rows_packed(self) -> np.ndarray:
        """Information generator rows bit-packed to (k, ceil(N/64)) uint64."""
        return _pack_rows(
            [self.generator_row(int(i)) for i in self.info_indices],
            self.block_length,
        )

    @cached_property
    def _info_rref(self) -> tuple:
        """Reduced row echelon form of the information rows.

        Returns (packed rows, pivot column per row).  Row operations keep the
        row space, so rank tests on erasure-masked columns can use this form;
        a row whose pivot column is unerased is independent of everything
        else there, which shrinks the per-pattern elimination to the rows
        with erased pivots.
        """
        rows = [self.generator_row(int(i)) for i in self.info_indices]
        pivots = []
        reduced = []
        for row in rows:
            for pcol, prow in zip(pivots, reduced):
                if (row >> pcol) & 1:
                    row ^= prow
            p = (row & -row).bit_length() - 1
            for s, pcol in enumerate(pivots):
                if (reduced[s] >> p) & 1:
                    reduced[s] ^= row
            pivots.append(p)
            reduced.append(row)
        return (
            _pack_rows(reduced, self.block_length),
            np.array(pivots, dtype=np.int64),
        )


@dataclass(frozen=True, eq=False)
class ErasureWord:
    """Ternary channel word: 0, 1, or ERASED (-1) per position."""

    symbols: np.ndarray

    def __post_init__(self):
        sym = np.asarray(self.symbols, dtype=np.int8)
        if sym.ndim != 1:
            raise DomainError("symbols must be one-dimensional")
        if not np.isin(sym, (0, 1, ERASED)).all():
            raise DomainError("symbols must be 0, 1, or ERASED")
        sym = sym.copy()
        sym.setflags(write=False)
        object.__setattr__(self, "symbols", sym)

    def __len__(self):
        return self.symbols.size

    def erased_mask(self) -> np.ndarray:
        return self.symbols == ERASED

    @property
    def erasure_count(self) -> int:
        return int((self.symbols == ERASED).sum())


def _pack_rows(rows, size: int) -> np.ndarray:
    words = (size + 63) // 64
    out = np.zeros((len(rows), words), dtype=np.uint64)
    mask = (1 << 64) - 1
    for r, row in enumerate(rows):
        w = 0
        while row:
            out[r, w] = row & mask
            row >>= 64
            w += 1
    return out


def _encode_batch(u: np.ndarray, code: PolarCode) -> np.ndarray:
    ell = code.profile.ell
    n = code.n
    g = code._kernel_array
    t = np.ascontiguousarray(u, dtype=np.uint8).reshape((-1,) + (ell,) * n)
    for _ in range(n):
        # contract the current leading digit axis; kernel output axis lands
        # at the end, so after n stages axes read (batch, c_n, ..., c_1)
        t = np.tensordot(t, g, axes=([1], [0])) & 1
    axes = (0,) + tuple(range(n, 0, -1))
    return t.transpose(axes).reshape(u.shape[0], code.block_length)


def encode(u, code: PolarCode) -> np.ndarray:
    """Encode channel-ordered input bits u (frozen positions must be 0)."""
    u = np.asarray(u, dtype=np.uint8)
    if u.shape != (code.block_length,):
        raise DomainError(f"input length must be {code.block_length}")
    if (u > 1).any():
        raise DomainError("input bits must be 0 or 1")
    fro = np.fromiter(code.frozen, dtype=np.int64) if code.frozen else np.array([], np.int64)
    if fro.size and u[fro - 1].any():
        bad = int(fro[np.flatnonzero(u[fro - 1])[0]])
        raise FrozenBitNonzero(f"frozen index {bad} carries a nonzero bit")
    return _encode_batch(u[None, :], code)[0]


def transmit_bec(x, eps: float, seed: int) -> ErasureWord:
    """Erase each symbol independently with probability eps.

    Symbol k is erased iff output k of the splitmix64 stream with the given
    seed maps below eps, so the word is a pure function of (x, eps, seed).
    """
    x = np.asarray(x, dtype=np.int8)
    if x.ndim != 1:
        raise DomainError("codeword must be one-dimensional")
    if not (0.0 <= eps <= 1.0) or math.isnan(eps):
        raise DomainError("eps must lie in [0, 1]")
    if ((x != 0) & (x != 1)).any():
        raise DomainError("codeword bits must be 0 or 1")
    draws = uniform_matrix(seed, 1, x.size)[0]
    return ErasureWord(np.where(draws < eps, np.int8(ERASED), x))


def _branch_rule(code: PolarCode, j: int, kmask: int, pmask: int):
    """Determination rule for branch j of one kernel node.

    kmask marks known output coordinates, pmask marks earlier branches whose
    input is still unknown.  Returns (det, alpha, beta): when det, the input
    is u_j = parity(x & alpha) xor parity(u_prior & beta) with alpha a subset
    of kmask and beta over the known earlier branches.  u_j is determined iff
    the unit vector on u_j is reachable from the known-coordinate columns of
    the unresolved-row submatrix.
    """
    key = (j, kmask, pmask)
    hit = code._node_tables.get(key)
    if hit is not None:
        return hit
    rows = code.profile.kernel.rows
    ell = code.profile.ell
    unknown = (1 << j) | pmask
    for t in range(j + 1, ell):
        unknown |= 1 << t
    # column k as a bitvector over unresolved row indices, with the combo
    # of original columns tracked alongside for the alpha mask
    piv = {}
    for k in range(ell):
        if not (kmask >> k) & 1:
            continue
        v = 0
        for t in range(ell):
            if (unknown >> t) & 1:
                v |= ((rows[t] >> k) & 1) << t
        c = 1 << k
        while v:
            p = v.bit_length() - 1
            if p in piv:
                pv, pc = piv[p]
                v ^= pv
                c ^= pc
            else:
                piv[p] = (v, c)
                break
    target = 1 << j
    alpha = 0
    while target:
        p = target.bit_length() - 1
        if p not in piv:
            out = (False, 0, 0)
            code._node_tables[key] = out
            return out
        pv, pc = piv[p]
        target ^= pv
        alpha ^= pc
    beta = 0
    for t in range(j):
        if not (pmask >> t) & 1:
            beta |= ((rows[t] & alpha).bit_count() & 1) << t
    out = (True, alpha, beta)
    code._node_tables[key] = out
    return out


@dataclass(frozen=True, eq=False)
class ScResult:
    """Successive-cancellation outcome: ternary input estimate per index.

    ``undetermined`` lists the 1-based information indices whose value could
    not be forced; the block decodes iff it is empty.  Determined entries of
    ``u`` are exact.
    """

    u: np.ndarray
    undetermined: tuple

    @property
    def is_determined(self) -> bool:
        return not self.undetermined


def _sc_batch(y: np.ndarray, code: PolarCode) -> np.ndarray:
    """Decode B ternary words at once; returns (B, N) ternary inputs."""
    ell = code.profile.ell
    g = code._kernel_array
    info = code._info_mask
    shifts = (1 << np.arange(ell, dtype=np.uint32))[None, None, :]

    def rec(base: int, yy: np.ndarray):
        b, span = yy.shape
        if span == 1:
            if info[base]:
                u = yy.copy()
            else:
                u = np.zeros_like(yy)
            return u, u
        lc = span // ell
        y3 = yy.reshape(b, lc, ell)
        kmask = ((y3 != ERASED).astype(np.uint32) * shifts).sum(axis=2, dtype=np.uint32)
        xbits = ((y3 == 1).astype(np.uint32) * shifts).sum(axis=2, dtype=np.uint32)
        pbits = np.zeros((b, lc), dtype=np.uint32)
        perased = np.zeros((b, lc), dtype=np.uint32)
        uparts = []
        vparts = []
        for j in range(ell):
            keys = (kmask.astype(np.uint64) << np.uint64(32)) | perased.astype(np.uint64)
            uq, inv = np.unique(keys, return_inverse=True)
            det_t = np.empty(uq.size, dtype=bool)
            alpha_t = np.empty(uq.size, dtype=np.uint32)
            beta_t = np.empty(uq.size, dtype=np.uint32)
            for s, keyval in enumerate(uq):
                det_t[s], alpha_t[s], beta_t[s] = _branch_rule(
                    code, j, int(keyval >> np.uint64(32)), int(keyval & np.uint64(0xFFFFFFFF))
                )
            inv = inv.reshape(b, lc)
            val = (
                np.bitwise_count(xbits & alpha_t[inv])
                ^ np.bitwise_count(pbits & beta_t[inv])
            ) & 1
            w = np.where(det_t[inv], val.astype(np.int8), np.int8(ERASED))
            uj, vj = rec(base + j * lc, w)
            pbits |= (vj == 1).astype(np.uint32) << np.uint32(j)
            perased |= (vj == ERASED).astype(np.uint32) << np.uint32(j)
            uparts.append(uj)
            vparts.append(vj)
        # re-encode one kernel stage from the child words (ternary: any
        # erased operand on a used row erases the output symbol)
        x3 = np.empty((b, lc, ell), dtype=np.int8)
        for c in range(ell):
            acc = np.zeros((b, lc), dtype=np.int8)
            erb = np.zeros((b, lc), dtype=bool)
            for j in range(ell):
                if g[j, c]:
                    acc ^= vparts[j] == 1
                    erb |= vparts[j] == ERASED
            x3[:, :, c] = np.where(erb, np.int8(ERASED), acc)
        return np.concatenate(uparts, axis=1), x3.reshape(b, span)

    u, _ = rec(0, np.ascontiguousarray(y, dtype=np.int8))
    return u


def sc_decode_bec(word: ErasureWord, code: PolarCode) -> ScResult:
    """Successive cancellation over the erasure channel, no guessing."""
    if len(word) != code.block_length:
        raise MismatchedLevel(
            f"word length {len(word)} does not match block length {code.block_length}"
        )
    u = _sc_batch(word.symbols[None, :], code)[0]
    undet = np.flatnonzero((u == ERASED) & code._info_mask) + 1
    return ScResult(u=u, undetermined=tuple(int(i) for i in undet))


def _rank_deficient(m: np.ndarray) -> bool:
    """True iff the bit-packed (k, words) uint64 matrix has rank < k."""
    k = m.shape[0]
    rows = m.copy()
    for i in range(k):
        row = rows[i]
        w = np.flatnonzero(row)
        if w.size == 0:
            return True
        wi = w[0]
        word = int(row[wi])
        bit = np.uint64(word & -word)
        below = rows[i + 1 :]
        if below.shape[0]:
            hit = (below[:, wi] & bit).astype(bool)
            below[hit] ^= row
    return False


def map_decode_bec(word: ErasureWord, code: PolarCode) -> str:
    """Global erasure test: 'unique' or 'ambiguous'.

    Ambiguous iff the information rows admit a nonzero combination supported
    inside the erasure set, i.e. the generator restricted to the known
    coordinates drops rank.
    """
    if len(word) != code.block_length:
        raise MismatchedLevel(
            f"word length {len(word)} does not match block length {code.block_length}"
        )
    return "ambiguous" if _map_ambiguous(word.erased_mask(), code) else "unique"


def _map_ambiguous(erased: np.ndarray, code: PolarCode) -> bool:
    if code.k == 0:
        return False
    rows, pivots = code._info_rref
    orphan = erased[pivots]
    if not orphan.any():
        return False
    # rows with surviving pivots are independent on the kept columns and
    # already eliminated from the orphans, so only the orphans can collapse
    nwords = rows.shape[1]
    keep = np.zeros(8 * nwords, dtype=np.uint8)
    keep[: (erased.size + 7) // 8] = np.packbits(~erased, bitorder="little")
    words = keep.view(np.uint64)
    return _rank_deficient(rows[orphan] & words[None, :])


def wilson_interval(errors: int, trials: int, z: float = WILSON_Z) -> tuple:
    """Two-sided Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise DomainError("trials must be positive")
    if not 0 <= errors <= trials:
        raise DomainError("errors must lie in 0..trials")
    p = errors / trials
    zz = z * z / trials
    center = (p + zz / 2.0) / (1.0 + zz)
    half = (z / (1.0 + zz)) * math.sqrt(p * (1.0 - p) / trials + zz / (4.0 * trials))
    # at the boundary counts center and half agree exactly in theory; pin
    # the closed endpoint so roundoff cannot leak across it
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == trials else min(1.0, center + half)
    return (lo, hi)


@dataclass(frozen=True)
class SimulationReport:
    """Monte Carlo block-error summary for both decoders.

    Wilson fields are 95% score intervals.  ``sc_errors`` counts trials with
    at least one undetermined information bit; MAP errors are the ambiguous
    trials and are a subset by construction.
    """

    eps: float
    n: int
    ell: int
    rate: float
    trials: int
    seed: int
    sc_errors: int
    map_errors: int
    sc_interval: tuple = field(repr=False)
    map_interval: tuple = field(repr=False)

    @property
    def sc_rate(self) -> float:
        return self.sc_errors / self.trials

    @property
    def map_rate(self) -> float:
        return self.map_errors / self.trials

    def to_csv(self) -> str:
        head = (
            "eps,n,rate,trials,sc_errors,map_errors,sc_rate,map_rate,"
            "sc_wilson_lo,sc_wilson_hi,map_wilson_lo,map_wilson_hi"
        )
        row = ",".join(
            [
                fmt_real(self.eps),
                str(self.n),
                fmt_real(self.rate),
                str(self.trials),
                str(self.sc_errors),
                str(self.map_errors),
                fmt_real(self.sc_rate),
                fmt_real(self.map_rate),
                fmt_real(self.sc_interval[0]),
                fmt_real(self.sc_interval[1]),
                fmt_real(self.map_interval[0]),
                fmt_real(self.map_interval[1]),
            ]
        )
        return head + "\n" + row + "\n"


def simulate(
    code: PolarCode, eps: float, trials: int, seed: int, chunk: int = 2048
) -> SimulationReport:
    """Monte Carlo block-error rates for SC and MAP over the BEC.

    Both failure events depend only on the erasure pattern (the code is
    linear with frozen zeros), so trials run on the all-zero word. Trial t
    uses the pattern of ``transmit_bec(0, eps, subseed(seed, t))``.  Every
    trial asserts the MAP-implies-SC failure inclusion.
    """
    if not (0.0 <= eps <= 1.0) or math.isnan(eps):
        raise DomainError("eps must lie in [0, 1]")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    size = code.block_length
    info = code._info_mask
    sc_errors = 0
    map_errors = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        pat = np.empty((b, size), dtype=bool)
        for t in range(b):
            draws = uniform_matrix(subseed(seed, done + t), 1, size)[0]
            pat[t] = draws < eps
        y = np.where(pat, np.int8(ERASED), np.int8(0))
        u = _sc_batch(y, code)
        sc_fail = ((u == ERASED) & info[None, :]).any(axis=1)
        map_fail = np.fromiter(
            (_map_ambiguous(pat[t], code) for t in range(b)), dtype=bool, count=b
        )
        if (map_fail & ~sc_fail).any():
            t = int(np.flatnonzero(map_fail & ~sc_fail)[0])
            raise AssertionError(
                f"trial {done + t}: MAP ambiguous but SC determined"
            )
        sc_errors += int(sc_fail.sum())
        map_errors += int(map_fail.sum())
        done += b
    return SimulationReport(
        eps=eps,
        n=code.n,
        ell=code.profile.ell,
        rate=code.rate,
        trials=trials,
        seed=seed,
        sc_errors=sc_errors,
        map_errors=map_errors,
        sc_interval=wilson_interval(sc_errors, trials),
        map_interval=wilson_interval(map_errors, trials),
    )
