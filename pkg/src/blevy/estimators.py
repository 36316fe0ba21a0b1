"""Monte Carlo estimators of the scaled quantities in the limit theorems.

All estimators map replica index ranges to partial aggregates and reduce them
in fixed chunk order, so results are bit-identical for any worker count.
Replicas that hit the event cap are excluded from the mean and reported in
the record; estimators never truncate silently.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import ExplosionError, simulate_replica
from .levy import LevyDriver
from .offspring import BranchingConfig

CHUNK = 1 << 13          # replicas per reduction chunk (fixed for determinism)


class EstimatorError(RuntimeError):
    pass


@dataclass
class EstimateRecord:
    value: float
    stderr: float
    replicas: int
    exploded: int
    master_seed: int
    label: str

    def __post_init__(self):
        if not math.isfinite(self.value) or self.stderr < 0:
            raise EstimatorError("record must carry a finite value, stderr >= 0")
        if self.exploded > self.replicas:
            raise EstimatorError("exploded count exceeds replica count")


def _chunk_ranges(replicas: int):
    return [(lo, min(lo + CHUNK, replicas)) for lo in range(0, replicas, CHUNK)]


def _map_chunks(fn, args, replicas: int, workers: int):
    """Apply fn((args, lo, hi)) per chunk; yield partials in chunk order."""
    ranges = _chunk_ranges(replicas)
    if workers <= 1 or len(ranges) == 1:
        return [fn((args, lo, hi)) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [((args), lo, hi) for lo, hi in ranges]))


def _thm1_chunk(packed):
    (config, driver, x0, t, h, g, a_h, a_g, seed), lo, hi = packed
    s = s2 = 0.0
    n = exploded = 0
    sqrt_t = math.sqrt(t)
    for i in range(lo, hi):
        try:
            r = simulate_replica(config, driver, x0, t, seed, i,
                                 want_extremes=False)
        except ExplosionError:
            exploded += 1
            continue
        arg = 0.0
        if len(r.positions):
            if h is not None:
                arg += a_h * float(np.sum(h(r.positions)))
            if g is not None:
                arg += a_g * float(np.sum(g(r.positions / sqrt_t)))
        w = math.exp(-arg)
        s += w
        s2 += w * w
        n += 1
    return n, s, s2, exploded


def estimate_thm1_lhs(config: BranchingConfig, driver: LevyDriver, y: float,
                      t: float, h, g, replicas: int, seed: int,
                      workers: int = 1) -> EstimateRecord:
    """t**(1/(a-1)) (1 - E exp{-t**(-(1/(a-1)-1/2)) sum h(x_i)
    - t**(-1/(a-1)) sum g(x_i/sqrt(t))}), ancestor at sqrt(t) y."""
    if t <= 1:
        raise EstimatorError("t must exceed 1")
    a = config.offspring.alpha
    expo = 1.0 / (a - 1.0)
    a_h = t ** (-(expo - 0.5))
    a_g = t ** (-expo)
    args = (config, driver, math.sqrt(t) * y, t, h, g, a_h, a_g, seed)
    n = exploded = 0
    s = s2 = 0.0
    for cn, cs, cs2, cex in _map_chunks(_thm1_chunk, args, replicas, workers):
        n += cn
        s += cs
        s2 += cs2
        exploded += cex
    if n == 0:
        raise EstimatorError("all replicas exploded")
    mean = s / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    scale = t ** expo
    return EstimateRecord(scale * (1.0 - mean), scale * math.sqrt(var / n),
                          replicas, exploded, seed, "thm1_lhs")


def _thm2_chunk(packed):
    (config, driver, x0, t, lo_a, hi_a, seed), lo, hi = packed
    hits = n = exploded = 0
    for i in range(lo, hi):
        try:
            r = simulate_replica(config, driver, x0, t, seed, i,
                                 want_extremes=False)
        except ExplosionError:
            exploded += 1
            continue
        n += 1
        if len(r.positions) and np.any((r.positions >= lo_a)
                                       & (r.positions <= hi_a)):
            hits += 1
    return n, hits, exploded


def estimate_thm2_lhs(config: BranchingConfig, driver: LevyDriver, y: float,
                      t: float, A, replicas: int, seed: int,
                      workers: int = 1) -> EstimateRecord:
    """t**(1/(alpha-1)) P_{sqrt(t) y}(Z_t(A) > 0), binomial stderr."""
    if t <= 1:
        raise EstimatorError("t must exceed 1")
    lo_a, hi_a = float(A[0]), float(A[1])
    if not hi_a > lo_a:
        raise EstimatorError("A must be a nondegenerate interval")
    args = (config, driver, math.sqrt(t) * y, t, lo_a, hi_a, seed)
    n = hits = exploded = 0
    for cn, ch, cex in _map_chunks(_thm2_chunk, args, replicas, workers):
        n += cn
        hits += ch
        exploded += cex
    if n == 0:
        raise EstimatorError("all replicas exploded")
    p = hits / n
    scale = t ** (1.0 / (config.offspring.alpha - 1.0))
    return EstimateRecord(scale * p, scale * math.sqrt(p * (1 - p) / n),
                          replicas, exploded, seed, "thm2_lhs")


def _cond_chunk(packed):
    (config, driver, x0, t, lo_a, hi_a, f, theta, vague, seed), lo, hi = packed
    sz = sz2 = sd = szd = 0.0
    n = exploded = 0
    sqrt_t = math.sqrt(t)
    for i in range(lo, hi):
        try:
            r = simulate_replica(config, driver, x0, t, seed, i,
                                 want_extremes=False)
        except ExplosionError:
            exploded += 1
            continue
        n += 1
        if not (len(r.positions) and np.any((r.positions >= lo_a)
                                            & (r.positions <= hi_a))):
            continue
        if f is None:
            fsum = 0.0
        elif vague:
            fsum = float(np.sum(f(r.positions)))
        else:
            fsum = float(np.sum(f(r.positions / sqrt_t)))
        w = math.exp(-theta * fsum)
        sz += w
        sz2 += w * w
        sd += 1.0
        szd += w
    return n, sz, sz2, sd, szd, exploded


def estimate_conditional(config: BranchingConfig, driver: LevyDriver, y: float,
                         t: float, A, f, mode: str, replicas: int, seed: int,
                         workers: int = 1) -> EstimateRecord:
    """Ratio estimator of E[exp{-theta_t F} | Z_t(A) > 0] with the mode-specific
    scaling theta_t, stderr by the delta method on (numerator, denominator)."""
    if t <= 1:
        raise EstimatorError("t must exceed 1")
    if mode not in ("vague", "weak"):
        raise EstimatorError("mode must be 'vague' or 'weak'")
    a = config.offspring.alpha
    expo = 1.0 / (a - 1.0)
    vague = mode == "vague"
    theta = t ** (-(expo - 0.5)) if vague else t ** (-expo)
    lo_a, hi_a = float(A[0]), float(A[1])
    args = (config, driver, math.sqrt(t) * y, t, lo_a, hi_a, f, theta,
            vague, seed)
    n = exploded = 0
    sz = sz2 = sd = szd = 0.0
    for cn, cz, cz2, cd, czd, cex in _map_chunks(_cond_chunk, args,
                                                 replicas, workers):
        n += cn
        sz += cz
        sz2 += cz2
        sd += cd
        szd += czd
        exploded += cex
    if sd == 0:
        raise EstimatorError("no conditioning events (no survivor in A)")
    ratio = sz / sd
    # delta method: Var(N/D) with D a Bernoulli mean
    zbar = sz / n
    dbar = sd / n
    var_z = max(sz2 / n - zbar * zbar, 0.0)
    var_d = dbar * (1.0 - dbar)
    cov = szd / n - zbar * dbar
    var_r = (var_z + ratio * ratio * var_d - 2.0 * ratio * cov) / (
        n * dbar * dbar)
    return EstimateRecord(ratio, math.sqrt(max(var_r, 0.0)),
                          replicas, exploded, seed, f"conditional_{mode}")


def _mtail_chunk(packed):
    (config, driver, x_grid, seed), lo, hi = packed
    counts = np.zeros(len(x_grid), dtype=np.int64)
    n = exploded = 0
    for i in range(lo, hi):
        try:
            r = simulate_replica(config, driver, 0.0, math.inf, seed, i)
        except ExplosionError:
            exploded += 1
            continue
        n += 1
        counts += r.sup_all_time >= x_grid
    return n, counts, exploded


def estimate_m_tail(config: BranchingConfig, driver: LevyDriver, x_grid,
                    replicas: int, seed: int, workers: int = 1):
    """(fitted log-log slope of P(M >= x), per-point records).

    Run-to-extinction replicas from the origin; the slope targets
    -2/(alpha-1).  Exploded replicas are excluded and reported.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if len(x_grid) < 4 or np.any(np.diff(x_grid) <= 0):
        raise EstimatorError("x_grid must be increasing with >= 4 points")
    args = (config, driver, x_grid, seed)
    n = exploded = 0
    counts = np.zeros(len(x_grid), dtype=np.int64)
    for cn, cc, cex in _map_chunks(_mtail_chunk, args, replicas, workers):
        n += cn
        counts += cc
        exploded += cex
    if n == 0:
        raise EstimatorError("all replicas exploded")
    if counts[-1] < 10:
        raise EstimatorError(
            f"only {counts[-1]} exceedances at x = {x_grid[-1]}; fit refused")
    p = counts / n
    records = [
        EstimateRecord(float(pi), math.sqrt(pi * (1 - pi) / n), replicas,
                       exploded, seed, f"m_tail_x={xi:g}")
        for pi, xi in zip(p, x_grid)
    ]
    slope = float(np.polyfit(np.log(x_grid), np.log(p), 1)[0])
    return slope, records
