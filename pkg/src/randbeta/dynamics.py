"""Pointwise dynamics of greedy, lazy and random beta-expansions.

Points live in ``J = [0, floor(beta)/(beta - 1)]``.  The interval is cut into
equality regions ``E_0, ..., E_b`` (one admissible digit) and switch regions
``S_1, ..., S_b`` (two admissible digits, ``k`` greedy and ``k - 1`` lazy),
where ``b = floor(beta)``.  Switch regions are closed at both ends; a point on
the shared endpoint of an equality and a switch region belongs to the switch
region.

All arithmetic is binary64.  Every map result is snapped onto a region
endpoint (or onto ``0`` / ``j_max``) when it lands within ``EPS`` of one, so
that orbits through endpoints such as the golden-mean orbit of 1 stay on the
endpoints instead of drifting by one ulp into a neighbouring region.
"""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from functools import cached_property
from itertools import islice
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import DomainError, ExhaustedCoinsError, InvalidExpansionError

EPS = 1e-12
INTEGER_TOL = 1e-9
MAX_DIGITS = 64

GOLDEN = (1 + math.sqrt(5)) / 2
SILVER = 1 + math.sqrt(2)
# real root of x^3 = x^2 + x + 1
TRIBONACCI = (1 + (19 + 3 * math.sqrt(33)) ** (1 / 3) + (19 - 3 * math.sqrt(33)) ** (1 / 3)) / 3

NAMED_BETAS = {"golden": GOLDEN, "silver": SILVER, "tribonacci": TRIBONACCI}

EQUALITY = "E"
SWITCH = "S"


def parse_beta(text: str | float) -> float:
    """Accept a float, a numeric string or one of the named constants."""
    if isinstance(text, (int, float)):
        return float(text)
    key = text.strip().lower()
    if key in NAMED_BETAS:
        return NAMED_BETAS[key]
    try:
        return float(key)
    except ValueError:
        raise DomainError(
            f"beta must be a number or one of {sorted(NAMED_BETAS)}, got {text!r}"
        ) from None


@dataclass(frozen=True)
class BetaParams:
    """Base ``beta`` and coin bias ``p`` with the derived constants."""

    beta: float
    p: float = 0.5

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or beta <= 1:
            raise DomainError(f"beta must be > 1, got {self.beta}")
        if abs(beta - round(beta)) < INTEGER_TOL:
            raise DomainError(f"beta must be non-integer, got {self.beta}")
        if not 0 < self.p < 1:
            raise DomainError(f"p must lie in (0, 1), got {self.p}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p", float(self.p))

    @cached_property
    def floor_beta(self) -> int:
        return math.floor(self.beta)

    @cached_property
    def j_max(self) -> float:
        return self.floor_beta / (self.beta - 1)

    @cached_property
    def switch_lo(self) -> tuple[float, ...]:
        return tuple(k / self.beta for k in range(1, self.floor_beta + 1))

    @cached_property
    def switch_hi(self) -> tuple[float, ...]:
        b, beta = self.floor_beta, self.beta
        return tuple(
            b / (beta * (beta - 1)) + (k - 1) / beta for k in range(1, b + 1)
        )

    @cached_property
    def endpoints(self) -> tuple[float, ...]:
        """Sorted boundary points of the region partition, including 0 and j_max."""
        return tuple(sorted({0.0, self.j_max, *self.switch_lo, *self.switch_hi}))

    def with_p(self, p: float) -> "BetaParams":
        return BetaParams(self.beta, p)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        if self.lo == self.hi and not (self.lo_closed and self.hi_closed):
            raise ValueError("a degenerate interval must be closed")

    def __contains__(self, x: float) -> bool:
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return above and below

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def overlap(self, lo: float, hi: float) -> float:
        """Lebesgue measure of the intersection with ``[lo, hi]``."""
        return max(0.0, min(self.hi, hi) - max(self.lo, lo))

    def __repr__(self):
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:.12g}, {self.hi:.12g}{right}"


class Region(NamedTuple):
    kind: str  # EQUALITY or SWITCH
    k: int

    def __str__(self):
        return f"{self.kind}_{self.k}"


@dataclass(frozen=True)
class RegionPartition:
    regions: tuple[tuple[Interval, Region], ...]
    greedy_cells: tuple[tuple[Interval, int], ...]
    lazy_cells: tuple[tuple[Interval, int], ...]

    def locate(self, x: float) -> Region:
        hits = [label for interval, label in self.regions if x in interval]
        if len(hits) != 1:
            raise DomainError(f"{x} lies in {len(hits)} regions")
        return hits[0]

    def interval(self, label: Region) -> Interval:
        for interval, lab in self.regions:
            if lab == label:
                return interval
        raise KeyError(label)


def build_regions(params: BetaParams) -> RegionPartition:
    """Equality/switch partition of J plus the greedy and lazy digit cells.

    Regions are ordered left to right as ``E_0, S_1, E_1, ..., S_b, E_b``.
    For ``1 <= k <= b - 1`` the equality region ``E_k`` is open at both ends;
    ``E_0`` is closed at 0 and ``E_b`` is closed at ``j_max``.
    """
    b, j_max = params.floor_beta, params.j_max
    lo, hi = params.switch_lo, params.switch_hi

    regions = [(Interval(0.0, lo[0], True, False), Region(EQUALITY, 0))]
    for k in range(1, b + 1):
        regions.append((Interval(lo[k - 1], hi[k - 1]), Region(SWITCH, k)))
        right = lo[k] if k < b else j_max
        regions.append((Interval(hi[k - 1], right, False, k == b), Region(EQUALITY, k)))

    # C(j) = [j/beta, (j+1)/beta), the last one closed at j_max
    greedy = [(Interval(0.0, lo[0], True, False), 0)]
    for j in range(1, b + 1):
        right = lo[j] if j < b else j_max
        greedy.append((Interval(lo[j - 1], right, True, j == b), j))

    # Delta(d) = l(C(b - d)) with l(x) = j_max - x
    lazy = [(Interval(0.0, hi[0]), 0)]
    for d in range(1, b + 1):
        right = hi[d] if d < b else j_max
        lazy.append((Interval(hi[d - 1], right, False, True), d))

    return RegionPartition(tuple(regions), tuple(greedy), tuple(lazy))


def classify(params: BetaParams, x: float) -> Region:
    """Region containing ``x`` (assumed already inside J)."""
    k = bisect_right(params.switch_lo, x)
    if k and x <= params.switch_hi[k - 1]:
        return Region(SWITCH, k)
    return Region(EQUALITY, k)


def snap(params: BetaParams, x: float) -> float:
    """Clamp into J and pull ``x`` onto a region endpoint within ``EPS``."""
    ends = params.endpoints
    if x <= 0.0:
        return 0.0
    if x >= params.j_max:
        return params.j_max
    i = bisect_left(ends, x)
    if ends[i] - x <= EPS:
        return ends[i]
    if x - ends[i - 1] <= EPS:
        return ends[i - 1]
    return x


def check_point(params: BetaParams, x: float) -> float:
    """Validate a user-supplied point of J, returning its snapped value."""
    x = float(x)
    if not math.isfinite(x) or x < -EPS or x > params.j_max + EPS:
        raise DomainError(f"x must lie in J = [0, {params.j_max:.12g}], got {x}")
    return snap(params, x)


def reflect(params: BetaParams, x: float) -> float:
    """The reflection ``l(x) = j_max - x`` conjugating lazy onto greedy."""
    return snap(params, params.j_max - x)


def _advance(params: BetaParams, x: float, digit: int) -> float:
    return snap(params, params.beta * x - digit)


def greedy_step(params: BetaParams, x: float) -> tuple[int, float]:
    x = check_point(params, x)
    digit = classify(params, x).k
    return digit, _advance(params, x, digit)


def lazy_step(params: BetaParams, x: float) -> tuple[int, float]:
    x = check_point(params, x)
    region = classify(params, x)
    digit = region.k - 1 if region.kind == SWITCH else region.k
    return digit, _advance(params, x, digit)


@dataclass(frozen=True)
class RandomState:
    """A point ``(omega, x)`` of the skew product; ``omega`` holds the unused coins."""

    omega: tuple[int, ...]
    x: float

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(int(c) for c in self.omega))
        if any(c not in (0, 1) for c in self.omega):
            raise DomainError("coins must be 0 or 1")


def kbeta_step(params: BetaParams, state: RandomState) -> tuple[int, RandomState]:
    """One step of the random map K.

    On an equality region the coins are left untouched; on a switch region
    the first coin is consumed, heads giving the greedy digit ``k`` and tails
    the lazy digit ``k - 1``.
    """
    x = check_point(params, state.x)
    region = classify(params, x)
    omega = state.omega
    if region.kind == SWITCH:
        if not omega:
            raise ExhaustedCoinsError(f"x = {x} is in {region} but no coins are left")
        digit = region.k if omega[0] == 1 else region.k - 1
        omega = omega[1:]
    else:
        digit = region.k
    return digit, RandomState(omega, _advance(params, x, digit))


def rbeta_step(params: BetaParams, state: RandomState) -> RandomState:
    """One step of the skew product R: greedy map on heads, lazy map on tails."""
    if not state.omega:
        raise ExhaustedCoinsError("R consumes a coin at every step")
    step = greedy_step if state.omega[0] == 1 else lazy_step
    _, x = step(params, state.x)
    return RandomState(state.omega[1:], x)


class DigitSequence(tuple):
    """A finite digit string; compares lexicographically like a tuple.

    ``coins_used`` records how many coins a random expansion consumed.
    """

    coins_used: int = 0

    def __new__(cls, digits: Iterable[int] = (), coins_used: int = 0):
        self = super().__new__(cls, (int(d) for d in digits))
        self.coins_used = coins_used
        return self

    def value(self, beta: float) -> float:
        """Partial sum ``sum d_i beta**-i``."""
        total = 0.0
        for d in reversed(self):
            total = (total + d) / beta
        return total


def _digits(params: BetaParams, x: float, mode: str, coins: Iterator[int] | None):
    x = check_point(params, x)
    while True:
        region = classify(params, x)
        if region.kind == SWITCH and mode != "greedy":
            if mode == "lazy":
                digit, used = region.k - 1, False
            else:
                try:
                    coin = next(coins)
                except StopIteration:
                    raise ExhaustedCoinsError(
                        f"x = {x} is in {region} but no coins are left"
                    ) from None
                digit, used = (region.k if coin else region.k - 1), True
        else:
            digit, used = region.k, False
        yield digit, used, x
        x = _advance(params, x, digit)


def expand(
    params: BetaParams,
    x: float,
    n: int,
    mode: str = "greedy",
    coins: Iterable[int] | None = None,
) -> DigitSequence:
    """First ``n`` digits of the greedy, lazy or random expansion of ``x``.

    Parameters
    ----------
    params : BetaParams
    x : float
        Point of J.
    n : int
        Number of digits, at most ``MAX_DIGITS``; beyond that the binary64
        orbit no longer tracks the exact one.
    mode : {"greedy", "lazy", "random"}
    coins : iterable of {0, 1}, optional
        Coin tosses for ``mode="random"``, consumed only at switch hits.

    Returns
    -------
    DigitSequence
        With ``coins_used`` set to the number of coins consumed.
    """
    if mode not in ("greedy", "lazy", "random"):
        raise DomainError(f"unknown mode {mode!r}")
    if not 0 <= n <= MAX_DIGITS:
        raise DomainError(f"n must lie in [0, {MAX_DIGITS}], got {n}")
    if mode == "random" and coins is None:
        raise DomainError("random mode needs a coin sequence")
    stream = iter(coins) if coins is not None else None
    digits, used = [], 0
    for digit, consumed, _ in islice(_digits(params, x, mode, stream), n):
        digits.append(digit)
        used += consumed
    return DigitSequence(digits, coins_used=used)


def remainder_bound(params: BetaParams, n: int) -> float:
    """Bound ``j_max * beta**-n`` on ``|x - sum_{i<=n} d_i beta**-i|``."""
    return params.j_max * params.beta ** (-n)


def reconstruct_omega(
    params: BetaParams, x: float, digits: Sequence[int]
) -> tuple[int, ...]:
    """Coin tosses that make the random algorithm produce ``digits`` for ``x``.

    A coin is emitted at every switch hit: 1 where the digit is the greedy
    one, 0 where it is the lazy one.  Replaying :func:`expand` in random mode
    with the result reproduces ``digits``.
    """
    x = check_point(params, x)
    coins = []
    for i, digit in enumerate(digits):
        region = classify(params, x)
        if region.kind == SWITCH and digit in (region.k, region.k - 1):
            coins.append(1 if digit == region.k else 0)
        elif region.kind == EQUALITY and digit == region.k:
            pass
        else:
            raise InvalidExpansionError(
                f"digit {digit} at position {i + 1} is not admissible at x = {x} ({region})"
            )
        y = params.beta * x - digit
        if y < -EPS or y > params.j_max + EPS:
            raise InvalidExpansionError(f"remainder {y} left J at position {i + 1}")
        x = snap(params, y)
    return tuple(coins)
