"""Seeded Monte-Carlo checks of the ergodic behaviour of the random map.

Every randomised routine takes an :class:`RngSpec`; equal specs give equal
results.  Standard errors of time averages are batch-means errors (the
sample standard deviation of batch averages over the square root of the
number of batches), which accounts for the serial correlation of an orbit.
"""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dynamics import EPS, BetaParams, DigitSequence, check_point
from .errors import HypothesisError
from .markov import MarkovModel
from .transfer import PiecewiseConstantDensity

BURN_IN = 1000
TAIL_DIGITS = 64
BOUNDARY_GAP = 1e-9
N_BATCHES = 100


@dataclass(frozen=True)
class RngSpec:
    seed: int = 0
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass
class SimulationReport:
    name: str
    estimates: dict[str, float]
    standard_errors: dict[str, float | None]
    sample_size: int
    seed: RngSpec
    targets: dict[str, float | None] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        """One JSON-ready record per estimate."""
        return [
            {
                "name": f"{self.name}.{key}",
                "estimate": float(value),
                "target": self.targets.get(key),
                "stderr": self.standard_errors.get(key),
                "n": int(self.sample_size),
                "seed": int(self.seed.seed),
            }
            for key, value in self.estimates.items()
        ]

    def within(self, key: str, n_se: float) -> bool:
        return abs(self.estimates[key] - self.targets[key]) <= n_se * self.standard_errors[key]


def batch_stderr(samples: np.ndarray, n_batches: int = N_BATCHES) -> float:
    samples = np.asarray(samples, dtype=float)
    size = samples.size // n_batches
    if size == 0:
        return float(samples.std(ddof=1) / math.sqrt(samples.size))
    means = samples[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def kbeta_orbit(
    params: BetaParams, x0: float, steps: int, coins: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Run the random map for ``steps`` steps from ``x0`` with the given coins.

    Coins are consumed in order, one per switch hit, exactly as
    :func:`randbeta.dynamics.kbeta_step` does.

    Returns
    -------
    xs : ndarray
        The points ``x_0, ..., x_{steps-1}`` at which each digit was read.
    digits : ndarray of int8
    in_switch : ndarray of bool
    used : int
        Number of coins consumed.
    """
    lo, hi, ends = params.switch_lo, params.switch_hi, params.endpoints
    beta, j_max = params.beta, params.j_max
    xs = np.empty(steps)
    digits = np.empty(steps, dtype=np.int8)
    flags = np.zeros(steps, dtype=bool)
    coin_list = coins.tolist()
    used = 0
    x = check_point(params, x0)
    for i in range(steps):
        xs[i] = x
        k = bisect_right(lo, x)
        if k and x <= hi[k - 1]:
            d = k if coin_list[used] else k - 1
            used += 1
            flags[i] = True
        else:
            d = k
        digits[i] = d
        x = beta * x - d
        # inline of dynamics.snap
        if x <= 0.0:
            x = 0.0
        elif x >= j_max:
            x = j_max
        else:
            j = bisect_left(ends, x)
            if ends[j] - x <= EPS:
                x = ends[j]
            elif j and x - ends[j - 1] <= EPS:
                x = ends[j - 1]
    return xs, digits, flags, used


def _coin_draws(params: BetaParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random(n) < params.p


def switch_frequency(
    params: BetaParams,
    x0: float,
    steps: int,
    rng: RngSpec,
    burn_in: int = BURN_IN,
    target: float | None = None,
) -> SimulationReport:
    """Fraction of orbit points in the switch regions, after a burn-in."""
    if steps < 1000:
        raise ValueError("steps must be at least 1000")
    gen = rng.generator()
    total = burn_in + steps
    _, _, flags, used = kbeta_orbit(params, x0, total, _coin_draws(params, total, gen))
    hits = flags[burn_in:].astype(float)
    return SimulationReport(
        name="switch_frequency",
        estimates={"switch_frequency": float(hits.mean())},
        standard_errors={"switch_frequency": batch_stderr(hits)},
        targets={"switch_frequency": target},
        sample_size=steps,
        seed=rng,
        extra={"coins_used": used, "burn_in": burn_in},
    )


def _switch_hits(args):
    params, x0, steps, rng, burn_in = args
    gen = rng.generator()
    total = burn_in + steps
    _, _, flags, _ = kbeta_orbit(params, x0, total, _coin_draws(params, total, gen))
    return int(flags[burn_in:].sum()), flags[burn_in:].astype(float)


def switch_frequency_streams(
    params: BetaParams,
    x0: float,
    steps_per_stream: int,
    seed: int,
    n_streams: int,
    burn_in: int = BURN_IN,
    max_workers: int | None = 1,
    target: float | None = None,
) -> SimulationReport:
    """Independent orbits on streams ``0 .. n_streams-1``, pooled in stream order.

    With ``max_workers > 1`` the streams run in separate processes; the
    result does not depend on the number of workers.
    """
    jobs = [
        (params, x0, steps_per_stream, RngSpec(seed, s), burn_in) for s in range(n_streams)
    ]
    if max_workers == 1:
        results = list(map(_switch_hits, jobs))
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_switch_hits, jobs))
    hits = sum(r[0] for r in results)
    n = steps_per_stream * n_streams
    means = np.array([r[1].mean() for r in results])
    if n_streams > 1:
        se = float(means.std(ddof=1) / math.sqrt(n_streams))
    else:
        se = batch_stderr(results[0][1])
    return SimulationReport(
        name="switch_frequency",
        estimates={"switch_frequency": hits / n},
        standard_errors={"switch_frequency": se},
        targets={"switch_frequency": target},
        sample_size=n,
        seed=RngSpec(seed, 0),
        extra={"streams": n_streams},
    )


def random_expansion(
    params: BetaParams, x0: float, n_digits: int, rng: RngSpec, mode: str = "random"
) -> np.ndarray:
    """Long digit string of ``x0`` (no 64-digit cap: this is an orbit statistic).

    ``mode="greedy"`` or ``"lazy"`` uses constant coins.
    """
    if mode == "random":
        coins = _coin_draws(params, n_digits, rng.generator())
    elif mode in ("greedy", "lazy"):
        coins = np.full(n_digits, mode == "greedy")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return kbeta_orbit(params, x0, n_digits, coins)[1]


def _block_codes(digits: np.ndarray, length: int, base: int) -> np.ndarray:
    """Base-``base`` codes of all overlapping blocks of the given length."""
    d = np.asarray(digits, dtype=np.int64)
    n = d.size - length + 1
    codes = np.zeros(max(n, 0), dtype=np.int64)
    for j in range(length):
        codes = codes * base + d[j : j + n]
    return codes


def block_name(code: int, length: int, base: int) -> str:
    out = []
    for _ in range(length):
        code, r = divmod(code, base)
        out.append(str(r))
    return "".join(reversed(out))


def block_census(
    params: BetaParams,
    x0: float,
    n_digits: int,
    max_block_len: int,
    rng: RngSpec,
    mode: str = "random",
) -> SimulationReport:
    """Occurrence counts of every block of length ``<= max_block_len`` in one expansion."""
    base = params.floor_beta + 1
    digits = random_expansion(params, x0, n_digits, rng, mode)
    estimates, counts = {}, {}
    seen = 0
    total = 0
    for length in range(1, max_block_len + 1):
        tally = np.bincount(_block_codes(digits, length, base), minlength=base**length)
        n_blocks = max(digits.size - length + 1, 1)
        for code, count in enumerate(tally):
            name = block_name(code, length, base)
            counts[name] = int(count)
            estimates[f"block:{name}"] = count / n_blocks
        seen += int(np.count_nonzero(tally))
        total += base**length
    estimates["universal"] = float(seen == total)
    return SimulationReport(
        name="block_census",
        estimates=estimates,
        standard_errors={},
        sample_size=n_digits,
        seed=rng,
        extra={"counts": counts, "blocks_seen": seen, "blocks_total": total, "mode": mode},
    )


def max_entropy_digit_stream(params: BetaParams, n_digits: int, rng: RngSpec) -> DigitSequence:
    """I.i.d. uniform digits; their value is a sample of the Bernoulli convolution."""
    if n_digits < 1:
        raise ValueError("n_digits must be >= 1")
    gen = rng.generator()
    return DigitSequence(gen.integers(0, params.floor_beta + 1, size=n_digits).tolist())


def bernoulli_convolution_samples(
    params: BetaParams, n_samples: int, rng: RngSpec, tail_digits: int = TAIL_DIGITS
) -> np.ndarray:
    """Samples of ``sum d_i beta^-i`` with i.i.d. uniform digits, truncated at ``tail_digits``."""
    gen = rng.generator()
    weights = params.beta ** -np.arange(1, tail_digits + 1)
    out = np.empty(n_samples)
    chunk = 65536
    for start in range(0, n_samples, chunk):
        stop = min(start + chunk, n_samples)
        digits = gen.integers(0, params.floor_beta + 1, size=(stop - start, tail_digits))
        out[start:stop] = digits @ weights
    return out


def _near(values: np.ndarray, points, gap: float) -> np.ndarray:
    mask = np.zeros(values.shape, dtype=bool)
    for p in points:
        mask |= np.abs(values - p) <= gap
    return mask


def singularity_diagnostic(
    params: BetaParams, model: MarkovModel, n_samples: int, rng: RngSpec
) -> SimulationReport:
    """Switch-to-``C_0`` mass ratio under the maximal-entropy and the Markov measure.

    Under the maximal-entropy measure the second coordinate is the
    Bernoulli convolution, sampled with 64 uniform digits; samples within
    ``1e-9`` of a region or ``C_0`` endpoint are discarded and counted.
    Under the Markov measure the ratio is ``sum pi(s_i) / pi(0)``.
    """
    if abs(params.p - 0.5) > 1e-12:
        raise HypothesisError("the singularity diagnostic is defined for p = 1/2")
    b = params.floor_beta
    ys = bernoulli_convolution_samples(params, n_samples, rng)
    c0_hi = model.cells[0].hi
    discard = _near(ys, (*params.endpoints, c0_hi), BOUNDARY_GAP)
    kept = ys[~discard]
    lo = np.array(params.switch_lo)
    hi = np.array(params.switch_hi)
    in_s = np.any((kept[:, None] >= lo) & (kept[:, None] <= hi), axis=1)
    in_c0 = kept <= c0_hi
    n_s, n_c0 = int(in_s.sum()), int(in_c0.sum())
    ratio = n_s / n_c0
    se = ratio * math.sqrt(1 / n_s + 1 / n_c0)
    markov_ratio = model.switch_mass / float(model.stationary[0])
    beta = params.beta
    return SimulationReport(
        name="singularity",
        estimates={"max_entropy_ratio": ratio, "markov_ratio": markov_ratio},
        standard_errors={"max_entropy_ratio": se, "markov_ratio": 0.0},
        targets={"max_entropy_ratio": 2 * b / (b + 1), "markov_ratio": 2 * (beta - 1) / beta},
        sample_size=n_samples,
        seed=rng,
        extra={"discarded": int(discard.sum()), "in_switch": n_s, "in_c0": n_c0},
    )


def normality_test(
    digits, max_block_len: int, n_symbols: int, alpha: float = 1e-3
) -> SimulationReport:
    """Chi-square test of block frequencies against ``n_symbols**-n``.

    Blocks of each length are taken non-overlapping, so the counts are
    multinomial and the chi-square reference distribution applies.  The
    stream is flagged as deviating when any length has a p-value below
    ``alpha / max_block_len``.
    """
    d = np.asarray(digits, dtype=np.int64)
    estimates, ses, extra = {}, {}, {}
    min_p = 1.0
    for length in range(1, max_block_len + 1):
        usable = (d.size // length) * length
        blocks = d[:usable].reshape(-1, length)
        codes = np.zeros(blocks.shape[0], dtype=np.int64)
        for j in range(length):
            codes = codes * n_symbols + blocks[:, j]
        cats = n_symbols**length
        obs = np.bincount(codes, minlength=cats)
        n = obs.sum()
        expected = n / cats
        chi2 = float(((obs - expected) ** 2 / expected).sum())
        pval = float(stats.chi2.sf(chi2, cats - 1))
        freq = obs / n
        estimates[f"chi2_len{length}"] = chi2
        estimates[f"max_dev_len{length}"] = float(np.max(np.abs(freq - 1 / cats)))
        estimates[f"pvalue_len{length}"] = pval
        ses[f"max_dev_len{length}"] = math.sqrt((1 / cats) * (1 - 1 / cats) / n)
        extra[f"dof_len{length}"] = cats - 1
        min_p = min(min_p, pval)
    estimates["significant"] = float(min_p < alpha / max_block_len)
    return SimulationReport(
        name="normality",
        estimates=estimates,
        standard_errors=ses,
        sample_size=int(d.size),
        seed=RngSpec(0),
        extra=extra,
    )


def digit_complement(digits, params: BetaParams) -> DigitSequence:
    """Entrywise ``floor(beta) - d``."""
    b = params.floor_beta
    return DigitSequence(b - int(d) for d in digits)


def coin_prefix_law(
    params: BetaParams, n_samples: int, prefix_len: int, rng: RngSpec, n_digits: int = 200
) -> SimulationReport:
    """Law of the first coins that reproduce i.i.d. uniform digit strings.

    For each sampled digit string the tail values
    ``y_j = sum_i d_{j+i-1} beta^-i`` are computed from the back, and a coin is
    read off at every ``y_j`` in a switch region (1 for the greedy digit).
    Strings with a tail within ``1e-9`` of a region endpoint, or with fewer
    than ``prefix_len`` switch hits, are discarded.
    """
    gen = rng.generator()
    beta = params.beta
    digits = gen.integers(0, params.floor_beta + 1, size=(n_samples, n_digits))
    tails = np.zeros((n_samples, n_digits))
    acc = np.zeros(n_samples)
    for j in range(n_digits - 1, -1, -1):
        acc = (digits[:, j] + acc) / beta
        tails[:, j] = acc
    check = tails[:, : n_digits - TAIL_DIGITS]
    bad = _near(check, params.endpoints[1:-1], BOUNDARY_GAP).any(axis=1)
    lo = np.array(params.switch_lo)
    hi = np.array(params.switch_hi)
    k = np.searchsorted(lo, check, side="right")
    km1 = np.clip(k - 1, 0, len(hi) - 1)
    in_s = (k > 0) & (check <= hi[km1])
    coin = digits[:, : check.shape[1]] == k
    codes = np.full(n_samples, -1)
    for i in range(n_samples):
        if bad[i]:
            continue
        bits = coin[i][in_s[i]][:prefix_len]
        if bits.size == prefix_len:
            codes[i] = int("".join("1" if b else "0" for b in bits), 2)
    valid = codes[codes >= 0]
    n = valid.size
    freq = np.bincount(valid, minlength=2**prefix_len) / n
    estimates, ses, targets = {}, {}, {}
    for code in range(2**prefix_len):
        name = format(code, f"0{prefix_len}b")
        comp = (2**prefix_len - 1) ^ code
        diff = freq[code] - freq[comp]
        estimates[f"freq:{name}"] = float(freq[code])
        ses[f"freq:{name}"] = math.sqrt(freq[code] * (1 - freq[code]) / n)
        estimates[f"asym:{name}"] = float(diff)
        ses[f"asym:{name}"] = math.sqrt(max(freq[code] + freq[comp] - diff**2, 0.0) / n)
        targets[f"asym:{name}"] = 0.0
    return SimulationReport(
        name="coin_prefix",
        estimates=estimates,
        standard_errors=ses,
        targets=targets,
        sample_size=n,
        seed=rng,
        extra={"discarded": int(n_samples - n)},
    )


def ensemble_histogram(
    params: BetaParams,
    n_chains: int,
    steps: int,
    bins: int,
    rng: RngSpec,
    burn_in: int = BURN_IN,
    skew: str = "K",
    x0: np.ndarray | None = None,
) -> PiecewiseConstantDensity:
    """Histogram of second coordinates of many independent orbits.

    ``skew="K"`` runs the random map (coin used only on switch regions),
    ``skew="R"`` the skew product (greedy or lazy map chosen at every step).
    Chains start from ``x0`` or from uniform points of J; points from the
    first ``burn_in`` steps are not counted.
    """
    gen = rng.generator()
    beta, j_max = params.beta, params.j_max
    lo = np.array(params.switch_lo)
    hi = np.array(params.switch_hi)
    x = gen.uniform(0.0, j_max, n_chains) if x0 is None else np.array(x0, dtype=float)
    counts = np.zeros(bins, dtype=np.int64)
    for step in range(burn_in + steps):
        if step >= burn_in:
            idx = np.minimum((x / j_max * bins).astype(np.int64), bins - 1)
            counts += np.bincount(idx, minlength=bins)
        heads = gen.random(n_chains) < params.p
        k = np.searchsorted(lo, x, side="right")
        km1 = np.clip(k - 1, 0, len(hi) - 1)
        in_s = (k > 0) & (x <= hi[km1])
        if skew == "K":
            d = np.where(in_s & ~heads, k - 1, k)
        else:
            # greedy digit is k everywhere; lazy digit is k-1 on S_k, k on E_k
            d = np.where(heads | ~in_s, k, k - 1)
        x = np.clip(beta * x - d, 0.0, j_max)
    edges = np.linspace(0.0, j_max, bins + 1)
    return PiecewiseConstantDensity.from_masses(edges, counts)
