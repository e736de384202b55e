"""Invariant densities of the random map via Ulam discretisation.

The random Frobenius-Perron operator is ``P = p P_T + (1 - p) P_L`` where
``T`` and ``L`` are the greedy and lazy maps.  Both maps are affine with slope
``beta`` on each digit cell, so Ulam matrices are assembled from closed-form
interval overlaps; no quadrature is involved.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .dynamics import BetaParams, greedy_step
from .errors import ConvergenceError, DomainError

NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDensity:
    """Density with value ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.shape != (bp.size - 1,):
            raise DomainError("need one value per cell")
        if np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(vals < 0):
            raise DomainError("density values must be nonnegative")
        total = float(np.dot(vals, np.diff(bp)))
        if abs(total - 1) > NORMALIZATION_TOL:
            raise DomainError(f"density integrates to {total}, not 1")
        bp.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_masses(cls, breakpoints, masses) -> "PiecewiseConstantDensity":
        bp = np.asarray(breakpoints, dtype=float)
        m = np.asarray(masses, dtype=float)
        return cls(bp, m / m.sum() / np.diff(bp))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.widths

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        idx = np.clip(idx, 0, self.values.size - 1)
        return self.values[idx]

    def cdf(self, x):
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        return np.interp(x, self.breakpoints, cum)

    def measure(self, a, b):
        """Mass of ``[a, b]`` (zero where ``b <= a``); vectorised."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return np.where(b > a, self.cdf(b) - self.cdf(a), 0.0)

    def cell_averages(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        return np.diff(self.cdf(edges)) / np.diff(edges)

    def l1_distance(self, other: "PiecewiseConstantDensity") -> float:
        bp = np.union1d(self.breakpoints, other.breakpoints)
        mid = 0.5 * (bp[:-1] + bp[1:])
        return float(np.sum(np.abs(self(mid) - other(mid)) * np.diff(bp)))

    def sup_distance(self, other: "PiecewiseConstantDensity") -> float:
        bp = np.union1d(self.breakpoints, other.breakpoints)
        mid = 0.5 * (bp[:-1] + bp[1:])
        return float(np.max(np.abs(self(mid) - other(mid))))

    def rows(self):
        for lo, hi, v in zip(self.breakpoints[:-1], self.breakpoints[1:], self.values):
            yield float(lo), float(hi), float(v)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("x_lo,x_hi,value\n")
        for lo, hi, v in self.rows():
            out.write(f"{lo:.17g},{hi:.17g},{v:.17g}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PiecewiseConstantDensity":
        lines = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("#")]
        if lines[0].replace(" ", "") != "x_lo,x_hi,value":
            raise DomainError("missing x_lo,x_hi,value header")
        data = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]])
        return cls(np.append(data[:, 0], data[-1, 1]), data[:, 2])


def greedy_branches(params: BetaParams) -> list[tuple[float, float, int]]:
    """``(lo, hi, d)`` for the cells ``C(d)`` on which ``T(x) = beta*x - d``."""
    lo = (0.0, *params.switch_lo)
    hi = (*params.switch_lo, params.j_max)
    return [(lo[d], hi[d], d) for d in range(params.floor_beta + 1)]


def lazy_branches(params: BetaParams) -> list[tuple[float, float, int]]:
    """``(lo, hi, d)`` for the cells ``Delta(d)`` on which ``L(x) = beta*x - d``."""
    lo = (0.0, *params.switch_hi)
    hi = (*params.switch_hi, params.j_max)
    return [(lo[d], hi[d], d) for d in range(params.floor_beta + 1)]


def _branches(params, which):
    if which == "greedy":
        return greedy_branches(params)
    if which == "lazy":
        return lazy_branches(params)
    raise ValueError(f"unknown map {which!r}")


def ulam_matrix(params: BetaParams, m: int, which: str = "greedy") -> sparse.csr_matrix:
    """Ulam matrix ``M[i, j] = |I_i ∩ f^-1 I_j| / |I_i|`` on a uniform m-cell grid.

    ``which`` selects the greedy or the lazy map.  Rows are renormalised to
    absorb the rounding from clipping images at the ends of J.
    """
    if m < 2:
        raise DomainError(f"grid needs at least 2 cells, got {m}")
    beta, j_max = params.beta, params.j_max
    edges = np.linspace(0.0, j_max, m + 1)
    h = j_max / m
    span = int(np.ceil(beta)) + 2
    rows, cols, vals = [], [], []
    for lo, hi, d in _branches(params, which):
        a = np.maximum(edges[:-1], lo)
        b = np.minimum(edges[1:], hi)
        idx = np.nonzero(b > a)[0]
        u = np.clip(beta * a[idx] - d, 0.0, j_max)
        v = np.clip(beta * b[idx] - d, 0.0, j_max)
        first = np.clip(np.floor(u / h).astype(np.int64), 0, m - 1)
        for k in range(span):
            j = first + k
            ok = j < m
            jj = np.where(ok, j, 0)
            ov = np.minimum(v, edges[jj + 1]) - np.maximum(u, edges[jj])
            keep = ok & (ov > 0)
            rows.append(idx[keep])
            cols.append(jj[keep])
            vals.append(ov[keep] / (beta * h))
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    ).tocsr()
    sums = np.asarray(mat.sum(axis=1)).ravel()
    return sparse.diags(1.0 / sums) @ mat


@dataclass(frozen=True, eq=False)
class UlamOperator:
    params: BetaParams
    grid: np.ndarray
    matrix: sparse.csr_matrix

    @property
    def m(self) -> int:
        return self.grid.size - 1


def build_ulam(params: BetaParams, m: int) -> UlamOperator:
    """Row-stochastic Ulam matrix of ``P = p P_T + (1 - p) P_L`` with m cells."""
    mat = params.p * ulam_matrix(params, m, "greedy") + (1 - params.p) * ulam_matrix(
        params, m, "lazy"
    )
    grid = np.linspace(0.0, params.j_max, m + 1)
    return UlamOperator(params, grid, sparse.csr_matrix(mat))


def fixed_density(
    op: UlamOperator,
    scheme: str = "cesaro",
    tol: float = 1e-10,
    max_iter: int = 100_000,
    window: int = 32,
) -> PiecewiseConstantDensity:
    """Invariant density of the Ulam operator, starting from the constant density.

    ``scheme="power"`` iterates ``f <- f M``.  ``scheme="cesaro"`` replaces
    ``f`` by the average of ``f, f M, ..., f M^(window-1)`` and repeats; the
    fixed points of this averaging are exactly the invariant densities and it
    converges without any aperiodicity assumption.  Iteration stops once
    ``||f M - f||_1 <= tol``; ``max_iter`` bounds the number of
    matrix-vector products.
    """
    if scheme not in ("cesaro", "power"):
        raise ValueError(f"unknown scheme {scheme!r}")
    step = op.matrix.T.tocsr()
    q = np.full(op.m, 1.0 / op.m)  # cell masses of the constant density
    nxt = step @ q
    residual = float(np.abs(nxt - q).sum())
    used = 1
    while residual > tol:
        if used >= max_iter:
            raise ConvergenceError(
                f"{scheme} iteration did not reach tol={tol:g} in {max_iter} products",
                residual,
            )
        if scheme == "power":
            q = nxt
        else:
            acc = q.copy()
            v = nxt
            for _ in range(window - 1):
                acc += v
                v = step @ v
                used += 1
            q = acc / window
        q /= q.sum()
        nxt = step @ q
        used += 1
        residual = float(np.abs(nxt - q).sum())
    return PiecewiseConstantDensity.from_masses(op.grid, q)


def preimage_measure(params, density, a, b, which):
    """``mu(f^-1 [a, b])`` for the greedy or lazy map, branch by branch."""
    beta = params.beta
    total = np.zeros(np.broadcast(a, b).shape)
    for lo, hi, d in _branches(params, which):
        total += density.measure(np.maximum(lo, (a + d) / beta), np.minimum(hi, (b + d) / beta))
    return total


def invariance_residual(
    params: BetaParams,
    density: PiecewiseConstantDensity,
    n_check: int = 1000,
    seed: int = 0,
    p: float | None = None,
) -> float:
    """Largest defect of ``mu = p mu∘T^-1 + (1-p) mu∘L^-1`` over random intervals.

    The intervals ``[a, b]`` are drawn uniformly from J with a seeded
    generator, together with the region cells.  ``p`` overrides
    ``params.p`` and may be 0 or 1 (lazy or Parry measure).
    """
    p = params.p if p is None else p
    rng = np.random.default_rng(seed)
    pts = np.sort(rng.uniform(0.0, params.j_max, size=(n_check, 2)), axis=1)
    ends = np.array(params.endpoints)
    a = np.concatenate([pts[:, 0], ends[:-1]])
    b = np.concatenate([pts[:, 1], ends[1:]])
    direct = density.measure(a, b)
    pulled = p * preimage_measure(params, density, a, b, "greedy") + (
        1 - p
    ) * preimage_measure(params, density, a, b, "lazy")
    return float(np.max(np.abs(direct - pulled)))


def parry_density(
    params: BetaParams, n_terms: int = 64
) -> tuple[PiecewiseConstantDensity, float]:
    """Truncated Parry series for the greedy map.

    Returns the normalised density and the truncation bound
    ``beta**-n_terms / (1 - 1/beta)`` (zero when the greedy orbit of 1
    reaches 0 within ``n_terms`` steps, in which case the series is exact).
    """
    if n_terms < 1:
        raise DomainError("n_terms must be >= 1")
    beta = params.beta
    orbit, x = [], 1.0
    for _ in range(n_terms):
        if x == 0.0:
            break
        orbit.append(x)
        _, x = greedy_step(params, x)
    bound = 0.0 if x == 0.0 else beta ** (-n_terms) / (1 - 1 / beta)
    cuts = np.unique(np.array([0.0, *orbit, 1.0]))
    right = cuts[1:]
    weights = np.array([beta ** (-n) for n in range(len(orbit))])
    tops = np.array(orbit)
    # cell [c_i, c_{i+1}) lies inside [0, T^n 1) iff c_{i+1} <= T^n 1
    vals = ((right[:, None] <= tops[None, :]) * weights[None, :]).sum(axis=1)
    bp = np.append(cuts, params.j_max)
    vals = np.append(vals, 0.0)
    norm = float(np.dot(vals, np.diff(bp)))
    return PiecewiseConstantDensity(bp, vals / norm), bound


def reflect_density(density: PiecewiseConstantDensity) -> PiecewiseConstantDensity:
    """Density of the image measure under ``x -> j_max - x``."""
    j_max = density.breakpoints[-1]
    bp = j_max - density.breakpoints[::-1]
    bp[0] = 0.0
    bp[-1] = j_max
    return PiecewiseConstantDensity(bp, density.values[::-1])


def density_lower_bound(density: PiecewiseConstantDensity) -> float:
    return float(np.min(density.values))
