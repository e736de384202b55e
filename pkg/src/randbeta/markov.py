"""Markov partitions for bases where 1 has a finite greedy expansion.

When ``1 = b_1/beta + ... + b_n/beta^n`` with every ``b_i >= 1``, refining the
equality/switch partition by the greedy orbits of 1 and of ``c = b_1/(beta-1) - 1``
gives a partition ``C_0, ..., C_L`` on which the random map is a finite-state
Markov chain.  The invariant density is then ``pi[j] / |C_j|`` on ``C_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    EQUALITY,
    SWITCH,
    BetaParams,
    Interval,
    Region,
    build_regions,
    classify,
    greedy_step,
    lazy_step,
)
from .errors import HypothesisError, InconsistentPatternError
from .transfer import PiecewiseConstantDensity

ORBIT_TOL = 1e-10
DEDUPE_TOL = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class GreedyOnePattern:
    """Digits ``b_1 ... b_n`` of a finite greedy expansion of 1."""

    coefficients: tuple[int, ...]
    all_positive: bool
    quadratic: bool  # beta^2 == b_1 beta + 1

    @property
    def n(self) -> int:
        return len(self.coefficients)

    @property
    def qualifies(self) -> bool:
        return self.all_positive and self.n >= 2


def greedy_expansion_of_one(
    params: BetaParams, max_iter: int = 64, tol: float = ORBIT_TOL
) -> GreedyOnePattern | None:
    """Iterate the greedy map from 1; ``None`` if the orbit does not reach 0.

    Finiteness is numerical only: the orbit must come within ``tol`` of 0 in
    at most ``max_iter`` steps.
    """
    beta = params.beta
    x, digits = 1.0, []
    for _ in range(max_iter):
        d, x = greedy_step(params, x)
        digits.append(d)
        if abs(x) <= tol:
            break
    else:
        return None
    value = sum(d * beta ** -(i + 1) for i, d in enumerate(digits))
    if abs(value - 1) > tol:
        return None
    b1 = digits[0]
    return GreedyOnePattern(
        coefficients=tuple(digits),
        all_positive=all(d >= 1 for d in digits),
        quadratic=abs(beta * beta - b1 * beta - 1) <= tol,
    )


def _region_closure(params: BetaParams, region: Region) -> tuple[float, float]:
    interval = build_regions(params).interval(region)
    return interval.lo, interval.hi


def proposition_checks(
    params: BetaParams, pattern: GreedyOnePattern
) -> tuple[list[float], list[float], dict[str, float]]:
    """Orbits of 1 and of ``c = b_1/(beta-1) - 1`` with the defects of each claim.

    The orbits follow the equality-region branches prescribed by the digits:
    ``T^{i+1} 1 = beta T^i 1 - b_{i+1}`` and
    ``T^{i+1} c = beta T^i c - (b_1 - b_{i+1})``.  Off the region boundaries
    this is the common value of the greedy and lazy maps.  When
    ``beta^2 = b_1 beta + 1`` the orbit points sit on region endpoints, where
    the branch continuation is the meaningful one.

    Returns the two lists (indices ``0 .. n-2``) and a dict mapping each
    claim to its numerical defect (0 means exact).
    """
    b = pattern.coefficients
    n, b1, beta = pattern.n, b[0], params.beta
    c0 = b1 / (beta - 1) - 1
    checks: dict[str, float] = {}

    def distance_to(region, x):
        lo, hi = _region_closure(params, region)
        return max(0.0, lo - x, x - hi)

    ones, comps = [1.0], [c0]
    for i in range(n - 1):
        x, c = ones[-1], comps[-1]
        checks[f"(i) T^{i} 1 in E_{b[i]}"] = distance_to(Region(EQUALITY, b[i]), x)
        checks[f"(iii) T^{i} c in E_{b1 - b[i]}"] = distance_to(Region(EQUALITY, b1 - b[i]), c)
        ones.append(beta * x - b[i])
        comps.append(beta * c - (b1 - b[i]))
        for label, point in (("1", x), ("c", c)):
            region = classify(params, point)
            if region.kind == EQUALITY and distance_to(region, point) == 0.0:
                lo, hi = _region_closure(params, region)
                if min(point - lo, hi - point) > ORBIT_TOL:
                    # interior point: the greedy and lazy maps must agree
                    tx, lx = greedy_step(params, point)[1], lazy_step(params, point)[1]
                    checks[f"(i/iii) T = L at T^{i} {label}"] = abs(tx - lx)

    x_last, c_last = ones[-1], comps[-1]
    bn = b[-1]
    checks["(ii) T^(n-1) 1 = b_n/beta"] = abs(x_last - bn / beta)
    checks[f"(ii) T^(n-1) 1 in S_{bn}"] = distance_to(Region(SWITCH, bn), x_last)
    checks["(ii) T^n 1 = 0"] = abs(beta * x_last - bn)
    checks["(ii) L^n 1 = 1"] = abs(beta * x_last - (bn - 1) - 1)
    target = b1 / (beta * (beta - 1)) + (b1 - bn) / beta
    checks["(iv) T^(n-1) c"] = abs(c_last - target)
    checks[f"(iv) T^(n-1) c in S_{b1 - bn + 1}"] = distance_to(Region(SWITCH, b1 - bn + 1), c_last)
    checks["(iv) T^n c = c"] = abs(beta * c_last - (b1 - bn + 1) - c0)
    checks["(iv) L^n c = j_max"] = abs(beta * c_last - (b1 - bn) - params.j_max)
    return ones[:-1], comps[:-1], checks


def orbit_points(
    params: BetaParams, pattern: GreedyOnePattern, tol: float = ORBIT_TOL
) -> tuple[list[float], list[float]]:
    """``(T^i 1)`` and ``(T^i c)`` for ``i = 0 .. n-2``, after validating the orbit claims.

    Raises
    ------
    HypothesisError
        If the pattern has a zero digit or length below 2.
    InconsistentPatternError
        If any claim fails by more than ``tol``.
    """
    if not pattern.qualifies:
        raise HypothesisError("the greedy expansion of 1 must have n >= 2 positive digits")
    ones, comps, checks = proposition_checks(params, pattern)
    bad = {k: v for k, v in checks.items() if v > tol}
    if bad:
        raise InconsistentPatternError(f"orbit checks failed: {bad}")
    return ones, comps


@dataclass(frozen=True, eq=False)
class MarkovModel:
    params: BetaParams
    pattern: GreedyOnePattern
    cells: tuple[Interval, ...]
    labels: tuple[Region, ...]
    equality_index_sets: tuple[tuple[int, ...], ...]
    switch_states: dict[int, int]
    adjacency: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray
    endpoint_roles: dict[float, str] = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.cells) - 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([c.lo for c in self.cells] + [self.cells[-1].hi])

    @property
    def switch_mass(self) -> float:
        return float(sum(self.stationary[j] for j in self.switch_states.values()))

    def to_dict(self) -> dict:
        return {
            "beta": self.params.beta,
            "p": self.params.p,
            "greedy_expansion_of_one": list(self.pattern.coefficients),
            "cells": [
                {
                    "index": j,
                    "lo": c.lo,
                    "hi": c.hi,
                    "lo_closed": c.lo_closed,
                    "hi_closed": c.hi_closed,
                    "region": str(lab),
                }
                for j, (c, lab) in enumerate(zip(self.cells, self.labels))
            ],
            "equality_index_sets": [list(m) for m in self.equality_index_sets],
            "switch_states": {str(k): j for k, j in self.switch_states.items()},
            "adjacency": self.adjacency.astype(int).tolist(),
            "transition": self.transition.tolist(),
            "stationary": self.stationary.tolist(),
        }


def _dedupe(points, anchors, tol=DEDUPE_TOL):
    """Sorted points with near-duplicates merged, preferring anchor values."""
    out: list[float] = []
    for x in sorted(points, key=lambda t: (t, t not in anchors)):
        if out and x - out[-1] <= tol:
            if x in anchors and out[-1] not in anchors:
                out[-1] = x
            continue
        out.append(x)
    return out


def stationary_distribution(P: np.ndarray, tol: float = 1e-14, max_iter: int = 1_000_000) -> np.ndarray:
    """Solve ``pi P = pi``, ``sum(pi) = 1`` directly; power iteration if ill-conditioned."""
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    if np.linalg.cond(A) <= COND_LIMIT:
        pi = np.linalg.solve(A, rhs)
    else:
        pi = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            nxt = pi @ P
            if np.abs(nxt - pi).max() <= tol:
                break
            pi = nxt
        pi = nxt
    return pi / pi.sum()


def build_model(params: BetaParams, pattern: GreedyOnePattern | None = None) -> MarkovModel:
    """Markov partition, adjacency, transition matrix and stationary law.

    Parameters
    ----------
    params : BetaParams
    pattern : GreedyOnePattern, optional
        Computed with :func:`greedy_expansion_of_one` when omitted.

    Raises
    ------
    HypothesisError
        If 1 has no finite greedy expansion with positive digits.
    InconsistentPatternError
        If a partition property (Markov property, switch images, cell
        counts) fails numerically.
    """
    if pattern is None:
        pattern = greedy_expansion_of_one(params)
    if pattern is None:
        raise HypothesisError(
            f"1 has no finite greedy expansion in base {params.beta} "
            "(checked numerically up to 64 digits)"
        )
    if not pattern.qualifies:
        raise HypothesisError(
            f"greedy expansion of 1 is {pattern.coefficients}; "
            "the Markov construction needs n >= 2 and every digit >= 1"
        )
    beta, j_max, b1 = params.beta, params.j_max, params.floor_beta
    ones, comps = orbit_points(params, pattern)
    orbit = ones + comps
    for i, x in enumerate(orbit):
        for y in orbit[i + 1 :]:
            if abs(x - y) <= DEDUPE_TOL:
                raise InconsistentPatternError(
                    f"orbit points of 1 and c coincide at {x}; the refinement is undefined"
                )

    anchors = set(params.endpoints)
    cuts = _dedupe([*params.endpoints, *orbit], anchors)
    roles: dict[float, str] = {}
    for x in ones:
        roles.setdefault(min(cuts, key=lambda t: abs(t - x)), "left")
    for x in comps:
        roles.setdefault(min(cuts, key=lambda t: abs(t - x)), "right")

    labels = [classify(params, 0.5 * (lo + hi)) for lo, hi in zip(cuts[:-1], cuts[1:])]
    cells = []
    for j, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
        if labels[j].kind == SWITCH:
            lo_closed = hi_closed = True
        else:
            lo_closed = lo == 0.0 or (roles.get(lo) == "left" and lo not in anchors)
            hi_closed = hi == j_max or (roles.get(hi) == "right" and hi not in anchors)
            if j == 0 or j == len(cuts) - 2:
                lo_closed = hi_closed = True  # C_0 = [0, c], C_L = [1, j_max]
        cells.append(Interval(lo, hi, lo_closed, hi_closed))
    size = len(cells)
    last = size - 1

    index_sets = tuple(
        tuple(j for j, lab in enumerate(labels) if lab == Region(EQUALITY, i))
        for i in range(b1 + 1)
    )
    switch_states = {}
    for k in range(1, b1 + 1):
        hits = [j for j, lab in enumerate(labels) if lab == Region(SWITCH, k)]
        if len(hits) != 1:
            raise InconsistentPatternError(f"S_{k} is split into {len(hits)} cells")
        switch_states[k] = hits[0]
    for i in range(b1 + 1):
        if len(index_sets[i]) != len(index_sets[b1 - i]):
            raise InconsistentPatternError(f"|M_{i}| != |M_{b1 - i}|")

    c0 = b1 / (beta - 1) - 1
    scale = max(1.0, j_max)
    if abs(cells[0].hi - c0) > ORBIT_TOL * scale or abs(cells[-1].lo - 1) > ORBIT_TOL * scale:
        raise InconsistentPatternError("end cells are not [0, c] and [1, j_max]")

    A = np.zeros((size, size), dtype=np.int8)
    P = np.zeros((size, size))
    p = params.p
    for i, (cell, lab) in enumerate(zip(cells, labels)):
        if lab.kind == SWITCH:
            img_t = (beta * cell.lo - lab.k, beta * cell.hi - lab.k)
            img_l = (beta * cell.lo - lab.k + 1, beta * cell.hi - lab.k + 1)
            if (
                max(abs(img_t[0]), abs(img_t[1] - cells[0].hi)) > ORBIT_TOL * scale
                or max(abs(img_l[0] - cells[-1].lo), abs(img_l[1] - j_max)) > ORBIT_TOL * scale
            ):
                raise InconsistentPatternError(f"switch cell {i} does not map onto C_0 / C_L")
            A[i, 0] = A[i, last] = 1
            P[i, 0] += p
            P[i, last] += 1 - p
            continue
        u, v = beta * cell.lo - lab.k, beta * cell.hi - lab.k
        for j, target in enumerate(cells):
            ov = target.overlap(u, v)
            if ov <= ORBIT_TOL * scale:
                continue
            if abs(ov - target.length) > ORBIT_TOL * scale:
                raise InconsistentPatternError(
                    f"T(C_{i}) covers only part of C_{j}: Markov property fails"
                )
            A[i, j] = 1
            P[i, j] = ov / (v - u)
    P /= P.sum(axis=1, keepdims=True)
    pi = stationary_distribution(P)
    if np.any(pi <= 0):
        raise InconsistentPatternError("stationary vector is not strictly positive")
    return MarkovModel(
        params=params,
        pattern=pattern,
        cells=tuple(cells),
        labels=tuple(labels),
        equality_index_sets=index_sets,
        switch_states=switch_states,
        adjacency=A,
        transition=P,
        stationary=pi,
        endpoint_roles=roles,
    )


def is_aperiodic(adjacency: np.ndarray) -> bool:
    """True if some power ``A^k`` with ``k <= n^2`` is entrywise positive."""
    n = adjacency.shape[0]
    base = (adjacency > 0).astype(np.int64)
    power = base.copy()
    for _ in range(n * n):
        if power.all():
            return True
        power = np.minimum(power @ base, 1)
    return bool(power.all())


def exact_density(model: MarkovModel) -> PiecewiseConstantDensity:
    """The invariant density ``pi[j] / |C_j|`` on each cell."""
    bp = model.breakpoints
    return PiecewiseConstantDensity(bp, model.stationary / np.diff(bp))


def _coin_entropy(p: float) -> float:
    return p * math.log(p) + (1 - p) * math.log(1 - p)


def entropy_closed_form(params: BetaParams, tol: float = ORBIT_TOL) -> float:
    """``log beta - b_1/(1+beta^2) (p log p + (1-p) log(1-p))``, valid when ``beta^2 = b_1 beta + 1``."""
    beta, b1 = params.beta, params.floor_beta
    if abs(beta * beta - b1 * beta - 1) > tol:
        raise HypothesisError(
            f"closed-form entropy needs beta^2 = {b1} beta + 1; beta = {beta} does not satisfy it"
        )
    return math.log(beta) - b1 / (1 + beta * beta) * _coin_entropy(params.p)


def chain_entropy(model: MarkovModel) -> float:
    P = model.transition
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-np.dot(model.stationary, terms.sum(axis=1)))


def conjecture_entropy(model: MarkovModel) -> float:
    """``log beta - mu(S) (p log p + (1-p) log(1-p))`` with ``mu(S)`` from the chain."""
    return math.log(model.params.beta) - model.switch_mass * _coin_entropy(model.params.p)
