import json
import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest

from conftest import np_gf2_rank, random_invertible
from polarkit.becpolar import (
    DEFAULT_BUDGET,
    LevelCdf,
    PathSample,
    enumerate_level,
    enumerate_levels,
    evolve_exact,
    level_from_samples,
    sample_paths,
    split_erasure_polynomials,
)
from polarkit.errors import (
    BudgetExceeded,
    DomainError,
    NotPolarizing,
    RequiresExactCdf,
)
from polarkit.extval import COMPLOG, LINEAR, NEGLOG, ExtendedUnitValue
from polarkit.gf2kernel import BitMatrix, partial_distances
from polarkit.rng import path_digit_matrix


ARIKAN = BitMatrix.from_literal("10;11")
L3 = BitMatrix.from_literal("100;110;101")


def polarizing_sample():
    yield ARIKAN
    yield L3
    yield BitMatrix.from_literal("01;11")
    rng = np.random.default_rng(41)
    found = {ARIKAN.to_literal(), L3.to_literal(), "01;11"}
    for ell in (3, 4):
        got = 0
        while got < 4:
            m = random_invertible(rng, ell)
            lit = m.to_literal()
            if lit in found:
                continue
            try:
                split_erasure_polynomials(m)
            except NotPolarizing:
                continue
            found.add(lit)
            got += 1
            yield m


def oracle_counts(m):
    """Pattern counts by independent per-pattern rank tests."""
    ell = m.ell
    a = np.array(m.as_lists())
    counts = [[0] * (ell + 1) for _ in range(ell)]
    for E in range(1 << ell):
        known = [c for c in range(ell) if not ((E >> c) & 1)]
        w = bin(E).count("1")
        for j in range(ell):
            undet = np_gf2_rank(a[j:, known]) == np_gf2_rank(a[j + 1:, known])
            if undet:
                counts[j][w] += 1
    return counts


def frac_poly(counts_row, ell, x: Fraction) -> Fraction:
    return sum(
        a * x**k * (1 - x) ** (ell - k)
        for k, a in enumerate(counts_row)
        if a
    )


def mp_evolve(polys, eps, digits):
    z = mp.mpf(eps)
    ell = polys.ell
    for b in digits:
        z = mp.fsum(
            a * z**k * (1 - z) ** (ell - k)
            for k, a in enumerate(polys.counts[b])
            if a
        )
    return z


def assert_close_extval(got: ExtendedUnitValue, want_mp):
    if got.mode == NEGLOG:
        # z-side payloads never suffer cancellation; near machine precision
        want = float(-mp.log(want_mp, 2))
        assert math.isclose(got.neglog2, want, rel_tol=1e-10)
    elif got.mode == COMPLOG:
        # the complement of a value that crossed the linear band near 1
        # carries the crossing's 1-z cancellation (up to ~2^-53/2^-40 relative
        # on the complement); the value itself stays accurate to ~1e-15
        want = float(-mp.log(1 - want_mp, 2))
        assert math.isclose(got.complog2, want, rel_tol=1e-7, abs_tol=1e-2)
    else:
        assert math.isclose(got.value, float(want_mp), rel_tol=1e-12)


class TestSplit:
    def test_counts_match_pattern_oracle(self):
        for m in polarizing_sample():
            polys = split_erasure_polynomials(m)
            assert [list(r) for r in polys.counts] == oracle_counts(m)

    def test_arikan_polynomials(self):
        polys = split_erasure_polynomials(ARIKAN)
        assert polys.counts == ((0, 2, 1), (0, 0, 1))  # 2z-z^2 and z^2
        assert polys.comp_counts == ((0, 0, 1), (0, 2, 1))
        assert polys.leading_degree == (1, 2)
        assert polys.comp_leading_degree == (2, 1)

    def test_leading_degree_equals_partial_distance(self):
        for m in polarizing_sample():
            polys = split_erasure_polynomials(m)
            assert polys.leading_degree == partial_distances(m)

    def test_complement_identity(self):
        # q_j(d) = 1 - p_j(1-d) exactly, checked in rational arithmetic
        for m in polarizing_sample():
            polys = split_erasure_polynomials(m)
            for j in range(m.ell):
                for num in range(0, 14):
                    d = Fraction(num, 13)
                    q = frac_poly(polys.comp_counts[j], m.ell, d)
                    p = frac_poly(polys.counts[j], m.ell, 1 - d)
                    assert q == 1 - p

    def test_conservation_exact(self):
        # sum_j p_j(x) = ell * x as polynomials (martingale property)
        for m in polarizing_sample():
            polys = split_erasure_polynomials(m)
            for num in range(0, 12):
                x = Fraction(num, 11)
                total = sum(
                    frac_poly(polys.counts[j], m.ell, x) for j in range(m.ell)
                )
                assert total == m.ell * x

    def test_sandwich_exact(self):
        # x^D_j <= p_j(x) <= 2^(ell-j) x^D_j on a rational grid
        for m in polarizing_sample():
            polys = split_erasure_polynomials(m)
            dists = partial_distances(m)
            for j in range(m.ell):
                for num in range(1, 20):
                    x = Fraction(num, 20)
                    p = frac_poly(polys.counts[j], m.ell, x)
                    assert x ** dists[j] <= p <= 2 ** (m.ell - j) * x ** dists[j]

    def test_erasure_prob_matches_fractions(self):
        polys = split_erasure_polynomials(L3)
        for j in range(3):
            for eps in (0.0, 0.25, 0.5, 0.875, 1.0):
                want = float(frac_poly(polys.counts[j], 3, Fraction(eps)))
                assert math.isclose(
                    polys.erasure_prob(j, eps), want, rel_tol=1e-14, abs_tol=1e-15
                )
                wantc = float(frac_poly(polys.comp_counts[j], 3, Fraction(eps)))
                assert math.isclose(
                    polys.complement_prob(j, eps), wantc,
                    rel_tol=1e-14, abs_tol=1e-15,
                )
        with pytest.raises(DomainError):
            polys.erasure_prob(0, 1.5)

    def test_rejects_non_polarizing(self):
        with pytest.raises(NotPolarizing):
            split_erasure_polynomials(BitMatrix.from_literal("10;01"))

    def test_json(self):
        doc = json.loads(split_erasure_polynomials(ARIKAN).to_json())
        assert doc["counts"] == [[0, 2, 1], [0, 0, 1]]
        assert doc["leading_degree"] == [1, 2]


class TestEvolveExact:
    def test_pure_squaring_chain(self):
        polys = split_erasure_polynomials(ARIKAN)
        v = evolve_exact(0.5, [1] * 20, polys)
        assert v == ExtendedUnitValue(NEGLOG, float(2**20))

    def test_pure_good_chain(self):
        polys = split_erasure_polynomials(ARIKAN)
        v = evolve_exact(0.5, [0] * 20, polys)
        assert v == ExtendedUnitValue(COMPLOG, float(2**20))

    def test_against_mp_recursion_arikan(self):
        polys = split_erasure_polynomials(ARIKAN)
        rng = np.random.default_rng(2)
        paths = [
            [0] * 8 + [1] * 8,
            [1] * 8 + [0] * 8,
            [0, 1] * 8,
        ] + [rng.integers(0, 2, 16).tolist() for _ in range(10)]
        for digits in paths:
            got = evolve_exact(0.3, digits, polys)
            want = mp_evolve(polys, 0.3, digits)
            assert_close_extval(got, want)

    def test_against_mp_recursion_l3(self):
        polys = split_erasure_polynomials(L3)
        rng = np.random.default_rng(9)
        for _ in range(10):
            digits = rng.integers(0, 3, 10).tolist()
            got = evolve_exact(0.6, digits, polys)
            want = mp_evolve(polys, 0.6, digits)
            assert_close_extval(got, want)

    def test_extval_start(self):
        polys = split_erasure_polynomials(ARIKAN)
        z0 = ExtendedUnitValue(NEGLOG, 1000.0)
        v = evolve_exact(z0, [1, 1], polys)
        assert v == ExtendedUnitValue(NEGLOG, 4000.0)

    def test_empty_path_is_identity(self):
        polys = split_erasure_polynomials(ARIKAN)
        assert evolve_exact(0.25, [], polys).value == 0.25

    def test_bad_digit(self):
        polys = split_erasure_polynomials(ARIKAN)
        with pytest.raises(DomainError):
            evolve_exact(0.5, [2], polys)


class TestEnumerate:
    def test_tree_order_matches_evolve(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 8)
        polys = split_erasure_polynomials(ARIKAN)
        rng = np.random.default_rng(4)
        for i in rng.integers(1, 257, 12):
            digits = [(int(i) - 1) >> (7 - p) & 1 for p in range(8)]
            want = evolve_exact(0.5, digits, polys)
            got = cdf.value_at(int(i))
            assert got == want

    def test_tree_order_matches_evolve_l3(self, cdf_cache):
        cdf = cdf_cache("100;110;101", 0.4, 5)
        polys = split_erasure_polynomials(L3)
        for i in (1, 17, 100, 243):
            x = i - 1
            digits = []
            for p in range(5):
                digits.append(x // 3 ** (4 - p) % 3)
            assert cdf.value_at(i) == evolve_exact(0.4, digits, polys)

    def test_levels_shape_and_children(self):
        levels = enumerate_levels(ARIKAN, 0.5, 4)
        assert len(levels) == 5
        for d, (modes, payloads) in enumerate(levels):
            assert len(modes) == 2**d == len(payloads)

    def test_mean_martingale(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 10)
        assert abs(cdf.mean_z() - 0.5) < 1e-15
        cdf3 = cdf_cache("100;110;101", 0.4, 5)
        assert abs(cdf3.mean_z() - 0.4) < 1e-13

    def test_frozen_values_n10(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 10)
        assert cdf.value_at(1) == ExtendedUnitValue(COMPLOG, 1024.0)
        assert cdf.value_at(1024) == ExtendedUnitValue(NEGLOG, 1024.0)
        assert cdf.cdf_at_neglog(12.0) == Fraction(161, 512)

    def test_cdf_at_conventions(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 6)
        assert cdf.cdf_at(1.0) == Fraction(1, 1)
        assert cdf.cdf_at(0.0) == Fraction(0, 1)
        assert cdf.cdf_at(ExtendedUnitValue(NEGLOG, 64.0)) == cdf.cdf_at_neglog(64.0)
        with pytest.raises(DomainError):
            cdf.cdf_at(-0.1)
        # non-increasing in lambda; inclusive at exact values
        lams = [0.5, 1.0, 2.0, 64.0, 100.0]
        vals = [cdf.cdf_at_neglog(l) for l in lams]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        # the all-bad-branch channel sits exactly at lam = 64
        assert cdf.cdf_at_neglog(64.0) >= Fraction(1, 64)

    def test_z_order_sorts_values(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 6)
        order = cdf.z_order()
        vals = [cdf.value_at(int(i) + 1) for i in order]
        for a, b in zip(vals, vals[1:]):
            assert a <= b
        # deterministic tie-break toward the smaller index
        again = cdf.z_order()
        assert np.array_equal(order, again)

    def test_value_at_range(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 6)
        with pytest.raises(DomainError):
            cdf.value_at(0)
        with pytest.raises(DomainError):
            cdf.value_at(65)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            enumerate_level(ARIKAN, 0.5, 23)
        with pytest.raises(BudgetExceeded):
            enumerate_level(ARIKAN, 0.5, 8, budget=100)
        with pytest.raises(DomainError):
            enumerate_level(ARIKAN, 0.0, 4)

    def test_csv(self, cdf_cache):
        cdf = cdf_cache("10;11", 0.5, 6)
        lines = cdf.to_csv().strip().split("\n")
        assert lines[0] == "lambda"
        assert len(lines) == 65
        got = [float(x) for x in lines[1:]]
        assert got == sorted(got)


class TestSampling:
    def test_digits_come_from_rng_streams(self):
        samples = sample_paths(ARIKAN, 0.5, 12, 25, seed=7)
        want = path_digit_matrix(7, 25, 12, 2)
        got = np.stack([s.digits for s in samples])
        assert np.array_equal(got, want)

    def test_z_final_matches_evolve(self):
        polys = split_erasure_polynomials(L3)
        samples = sample_paths(L3, 0.3, 9, 10, seed=3)
        dist = partial_distances(L3)
        for s in samples:
            assert s.z_final == evolve_exact(0.3, s.digits.tolist(), polys)
            assert math.isclose(
                s.sum_log_d,
                sum(math.log2(dist[b]) for b in s.digits),
                abs_tol=1e-12,
            )
            assert math.isclose(
                s.sum_log_w,
                sum(math.log2(L3.row_weights()[b]) for b in s.digits),
                abs_tol=1e-12,
            )

    def test_deterministic(self):
        a = sample_paths(ARIKAN, 0.5, 10, 50, seed=11)
        b = sample_paths(ARIKAN, 0.5, 10, 50, seed=11)
        assert all(x.z_final == y.z_final for x, y in zip(a, b))
        c = sample_paths(ARIKAN, 0.5, 10, 50, seed=12)
        assert any(x.z_final != y.z_final for x, y in zip(a, c))

    def test_monte_carlo_matches_exact_cdf(self, cdf_cache):
        # empirical F at several thresholds within 99.9% Wilson bands
        exact = cdf_cache("10;11", 0.5, 16)
        count = 20000
        samples = sample_paths(ARIKAN, 0.5, 16, count, seed=42)
        emp = level_from_samples(samples, ARIKAN, 0.5, 16, seed=42)
        zcrit = 3.29
        for lam in (4.0, 12.0, 64.0, 1000.0):
            p = float(exact.cdf_at_neglog(lam))
            phat = float(emp.cdf_at_neglog(lam))
            half = zcrit * math.sqrt(p * (1 - p) / count) + 1 / count
            assert abs(phat - p) <= half

    def test_empirical_level_restrictions(self):
        samples = sample_paths(ARIKAN, 0.5, 8, 10, seed=1)
        emp = level_from_samples(samples, ARIKAN, 0.5, 8, seed=1)
        assert not emp.is_exact
        assert emp.source == "montecarlo"
        assert emp.sample_seed == 1
        with pytest.raises(RequiresExactCdf):
            emp.value_at(1)
        with pytest.raises(RequiresExactCdf):
            emp.z_order()
        assert emp.mean_z() > 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_paths(ARIKAN, 1.0, 4, 2, seed=0)
        with pytest.raises(DomainError):
            sample_paths(ARIKAN, 0.5, 4, -1, seed=0)
