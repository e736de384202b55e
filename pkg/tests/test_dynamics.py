import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PROPERTY_BETAS, G, g, geometric_value
from randbeta.dynamics import (
    GOLDEN,
    SILVER,
    TRIBONACCI,
    BetaParams,
    Interval,
    RandomState,
    Region,
    build_regions,
    check_point,
    classify,
    expand,
    greedy_step,
    kbeta_step,
    lazy_step,
    parse_beta,
    rbeta_step,
    reconstruct_omega,
    reflect,
    remainder_bound,
)
from randbeta.errors import DomainError, ExhaustedCoinsError, InvalidExpansionError

PROPS = settings(max_examples=300, deadline=None, derandomize=True)


def params_strategy():
    return st.sampled_from(PROPERTY_BETAS).map(BetaParams)


@st.composite
def point_in_j(draw, params=None):
    params = params or draw(params_strategy())
    u = draw(st.floats(0.0, 1.0))
    return params, u * params.j_max


coins_strategy = st.lists(st.integers(0, 1), min_size=64, max_size=64)


# ---------------------------------------------------------------- parameters


class TestBetaParams:
    def test_named_constants(self):
        assert GOLDEN**2 == pytest.approx(GOLDEN + 1, abs=1e-15)
        assert SILVER**2 == pytest.approx(2 * SILVER + 1, abs=1e-14)
        assert TRIBONACCI**3 == pytest.approx(TRIBONACCI**2 + TRIBONACCI + 1, abs=1e-14)

    def test_parse_beta(self):
        assert parse_beta("golden") == GOLDEN
        assert parse_beta("1.5") == 1.5
        with pytest.raises(DomainError):
            parse_beta("bronze")

    @pytest.mark.parametrize("beta", [2.0, 3.0 + 1e-11, 1.0, 0.5, -2.2])
    def test_rejects_integer_or_small_beta(self, beta):
        with pytest.raises(DomainError):
            BetaParams(beta)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_rejects_degenerate_p(self, p):
        with pytest.raises(DomainError):
            BetaParams(1.5, p)

    def test_derived_constants(self):
        params = BetaParams(2.5)
        assert params.floor_beta == 2
        assert params.j_max == 2 / 1.5
        assert BetaParams(GOLDEN).j_max == pytest.approx(G)


# ------------------------------------------------------------------- regions


class TestRegions:
    def test_golden_regions(self, golden):
        parts = build_regions(golden)
        labels = [label for _, label in parts.regions]
        assert labels == [Region("E", 0), Region("S", 1), Region("E", 1)]
        e0, s1, e1 = (iv for iv, _ in parts.regions)
        assert (e0.lo, e0.hi, e0.lo_closed, e0.hi_closed) == (0.0, pytest.approx(g), True, False)
        assert (s1.lo, s1.hi) == (pytest.approx(g), pytest.approx(1.0))
        assert s1.lo_closed and s1.hi_closed
        assert (e1.lo, e1.hi, e1.lo_closed, e1.hi_closed) == (pytest.approx(1.0), pytest.approx(G), False, True)

    def test_three_halves_regions(self):
        parts = build_regions(BetaParams(1.5))
        s1 = parts.interval(Region("S", 1))
        assert (s1.lo, s1.hi) == (pytest.approx(2 / 3), pytest.approx(4 / 3))
        assert parts.interval(Region("E", 1)).hi == 2.0

    def test_two_and_a_half_tiles(self):
        params = BetaParams(2.5)
        parts = build_regions(params)
        assert [str(label) for _, label in parts.regions] == ["E_0", "S_1", "E_1", "S_2", "E_2"]
        for k in (1, 2):
            s = parts.interval(Region("S", k))
            assert s.lo == pytest.approx(k / 2.5)
            assert s.hi == pytest.approx(2 / (2.5 * 1.5) + (k - 1) / 2.5)
        total = sum(iv.length for iv, _ in parts.regions)
        assert total == pytest.approx(params.j_max, abs=1e-14)

    @pytest.mark.parametrize("beta", PROPERTY_BETAS)
    def test_lazy_cells_mirror_greedy_cells(self, beta):
        params = BetaParams(beta)
        parts = build_regions(params)
        b = params.floor_beta
        for (cell, d), (mirror, d2) in zip(parts.lazy_cells, reversed(parts.greedy_cells)):
            assert d == b - d2
            assert cell.lo == pytest.approx(params.j_max - mirror.hi, abs=1e-12)
            assert cell.hi == pytest.approx(params.j_max - mirror.lo, abs=1e-12)

    @PROPS
    @given(point_in_j())
    def test_each_point_lies_in_exactly_one_region(self, case):
        params, x = case
        hits = [label for iv, label in build_regions(params).regions if x in iv]
        assert len(hits) == 1
        assert build_regions(params).locate(x) == hits[0]

    def test_shared_endpoint_belongs_to_switch(self, golden):
        parts = build_regions(golden)
        assert parts.locate(golden.switch_hi[0]) == Region("S", 1)
        assert parts.locate(golden.switch_lo[0]) == Region("S", 1)
        # 1.0 is one ulp above the float S_1 end; inputs are snapped onto it
        assert classify(golden, check_point(golden, 1.0)) == Region("S", 1)

    def test_degenerate_interval_must_be_closed(self):
        with pytest.raises(ValueError):
            Interval(1.0, 1.0, True, False)


# --------------------------------------------------------------------- steps


class TestSteps:
    def test_greedy_examples(self, golden):
        d, y = greedy_step(golden, 1.0)
        assert d == 1 and y == pytest.approx(g)
        assert greedy_step(golden, 0.0) == (0, 0.0)
        assert greedy_step(BetaParams(1.5), 1.0) == (1, pytest.approx(0.5))

    def test_lazy_examples(self, golden):
        d, y = lazy_step(golden, G)
        assert d == 1 and y == pytest.approx(G)
        d, y = lazy_step(golden, 0.8)
        assert d == 0 and y == pytest.approx(1.2944271909999159)
        assert lazy_step(BetaParams(1.5), 1.0) == (0, pytest.approx(1.5))

    def test_out_of_domain(self, golden):
        with pytest.raises(DomainError):
            greedy_step(golden, -0.01)
        with pytest.raises(DomainError):
            lazy_step(golden, G + 1e-6)

    def test_endpoint_clamped_within_tolerance(self, golden):
        assert greedy_step(golden, -1e-13)[1] == 0.0

    @PROPS
    @given(point_in_j())
    def test_conjugacy(self, case):
        params, x = case
        _, lazy = lazy_step(params, x)
        _, greedy = greedy_step(params, reflect(params, x))
        assert abs(reflect(params, lazy) - greedy) <= 1e-10

    def test_kbeta_examples(self, golden):
        d, s = kbeta_step(golden, RandomState((1, 0), 0.8))
        assert d == 1 and s.x == pytest.approx(0.2944271909999159) and s.omega == (0,)
        d, s = kbeta_step(golden, RandomState((0, 1), 0.8))
        assert d == 0 and s.x == pytest.approx(1.2944271909999159) and s.omega == (1,)
        d, s = kbeta_step(golden, RandomState((1, 1), 0.3))
        assert d == 0 and s.x == pytest.approx(0.4854101966249685) and s.omega == (1, 1)

    def test_kbeta_needs_a_coin_on_switch(self, golden):
        with pytest.raises(ExhaustedCoinsError):
            kbeta_step(golden, RandomState((), 0.8))
        assert kbeta_step(golden, RandomState((), 0.3))[0] == 0

    def test_rbeta_examples(self, golden):
        assert rbeta_step(golden, RandomState((1,), 0.3)).x == pytest.approx(0.4854101966249685)
        s = rbeta_step(golden, RandomState((0, 1), 0.3))
        assert s.x == pytest.approx(0.4854101966249685) and s.omega == (1,)
        assert rbeta_step(golden, RandomState((0,), 0.8)).x == pytest.approx(1.2944271909999159)
        with pytest.raises(ExhaustedCoinsError):
            rbeta_step(golden, RandomState((), 0.3))


# ---------------------------------------------------------------- expansions


class TestExpand:
    def test_greedy_expansion_of_one(self, golden):
        assert expand(golden, 1.0, 4) == (1, 1, 0, 0)

    def test_lazy_expansion_of_right_endpoint(self, golden):
        assert expand(golden, G, 3, "lazy") == (1, 1, 1)

    def test_random_with_tails_is_lazy(self, golden):
        digits = expand(golden, 1.0, 4, "random", iter([0] * 10))
        assert digits == (0, 1, 1, 1)
        assert digits.coins_used == 1

    def test_random_mode_requires_coins(self, golden):
        with pytest.raises(ExhaustedCoinsError):
            expand(golden, 1.0, 4, "random", iter([]))

    def test_digit_cap(self, golden):
        with pytest.raises(DomainError):
            expand(golden, 1.0, 65)

    def test_value_and_bound(self, golden):
        digits = expand(golden, 0.7, 30)
        assert abs(digits.value(G) - 0.7) <= remainder_bound(golden, 30)

    @PROPS
    @given(point_in_j(), coins_strategy, st.sampled_from(["greedy", "lazy", "random"]))
    def test_expansion_identity(self, case, coins, mode):
        params, x = case
        n = 40
        digits = expand(params, x, n, mode, iter(coins))
        # rounding in the float orbit contributes at most a few ulps per digit
        slack = 1e-12
        assert abs(x - geometric_value(digits, params.beta)) <= remainder_bound(params, n) + slack
        assert all(0 <= d <= params.floor_beta for d in digits)

    @PROPS
    @given(point_in_j(), coins_strategy, coins_strategy)
    def test_lexicographic_monotonicity(self, case, c1, c2):
        params, x = case
        lo, hi = sorted([tuple(c1), tuple(c2)])
        d_lo = expand(params, x, 40, "random", iter(lo))
        d_hi = expand(params, x, 40, "random", iter(hi))
        assert tuple(d_lo) <= tuple(d_hi)

    @PROPS
    @given(point_in_j(), coins_strategy)
    def test_greedy_and_lazy_are_extremal(self, case, coins):
        params, x = case
        rand = tuple(expand(params, x, 40, "random", iter(coins)))
        assert tuple(expand(params, x, 40, "lazy")) <= rand <= tuple(expand(params, x, 40, "greedy"))

    @PROPS
    @given(point_in_j(), coins_strategy)
    def test_complement_identity(self, case, coins):
        params, x = case
        # Rounding errors grow like beta**n; compare only the digits for
        # which two float orbits that start 1 ulp apart still agree.
        n = min(40, int(11 / math.log10(params.beta)))
        flipped = [1 - c for c in coins]
        d = expand(params, x, n, "random", iter(coins))
        d_bar = expand(params, reflect(params, x), n, "random", iter(flipped))
        assert tuple(d) == tuple(params.floor_beta - a for a in d_bar)


# ------------------------------------------------------------ reconstruction


class TestReconstruct:
    def test_greedy_digits_of_one(self, golden):
        omega = reconstruct_omega(golden, 1.0, (1, 1, 0, 0))
        assert omega[0] == 1

    def test_lazy_digits_of_one(self, golden):
        assert reconstruct_omega(golden, 1.0, (0, 1, 1, 1)) == (0,)

    def test_no_switch_hits(self, golden):
        assert reconstruct_omega(golden, 0.3, (0, 0)) == ()

    def test_forced_digit_mismatch(self, golden):
        with pytest.raises(InvalidExpansionError):
            reconstruct_omega(golden, 0.3, (1,))

    def test_remainder_leaves_domain(self, golden):
        with pytest.raises(InvalidExpansionError):
            reconstruct_omega(golden, 1.0, (1, 1, 1, 1))

    @PROPS
    @given(point_in_j(), coins_strategy)
    def test_round_trip(self, case, coins):
        params, x = case
        digits = expand(params, x, 40, "random", iter(coins))
        omega = reconstruct_omega(params, x, digits)
        assert len(omega) == digits.coins_used
        assert list(omega) == coins[: len(omega)]
        assert expand(params, x, 40, "random", iter(omega)) == digits
