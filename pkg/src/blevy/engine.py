"""Event-driven exact simulation of the branching Lévy particle system.

A single ancestor at x0 moves by the driving Lévy process, branches at rate
beta into an offspring-law number of children, and the replica is read off at
horizon t (or run to extinction with t = inf).  The traversal is depth-first
with an explicit stack, so memory scales with tree depth rather than with the
alive population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .levy import LevyDriver
from .offspring import BranchingConfig


class ExplosionError(RuntimeError):
    """A replica hit the branching-event cap; carries the partial count."""

    def __init__(self, events: int, seed_id: int = -1):
        super().__init__(
            f"replica {seed_id} exceeded the event cap after {events} events")
        self.events = events
        self.seed_id = seed_id


@dataclass
class Realization:
    positions: np.ndarray     # particle positions at the horizon
    survived: bool
    max_t: float              # max position at t, -inf when extinct
    min_t: float              # min position at t, +inf when extinct
    sup_all_time: float       # running sup over all particles up to t
    events: int
    seed_id: int = -1


def replica_rng(master_seed: int, replica_index: int) -> np.random.Generator:
    """Independent counter-based stream for one replica."""
    return np.random.Generator(
        np.random.Philox(key=[master_seed, replica_index]))


@njit(cache=True)
def _kernel(rng, cdf, tail_coeff, alpha, beta, sigma, lam, half_width,
            x0, t, event_cap, want_extremes):
    """One replica; returns (positions, npos, sup_all, events, exploded)."""
    # explicit DFS stack of (birth_time, position, pending sibling count)
    cap = 256
    s_birth = np.empty(cap)
    s_pos = np.empty(cap)
    s_cnt = np.empty(cap, dtype=np.int64)
    top = 0
    s_birth[0] = 0.0
    s_pos[0] = x0
    s_cnt[0] = 1
    top = 1

    pcap = 64
    positions = np.empty(pcap)
    npos = 0
    sup_all = x0
    events = 0
    exploded = False

    while top > 0:
        top -= 1
        birth = s_birth[top]
        pos = s_pos[top]
        if s_cnt[top] > 1:
            s_cnt[top] -= 1
            top += 1          # leave the remaining siblings on the stack

        lifetime = rng.exponential(1.0 / beta)
        alive_at_t = birth + lifetime > t
        duration = (t - birth) if alive_at_t else lifetime

        # motion segment: diffusive pieces between uniform jumps, with the
        # running maximum of each diffusive piece drawn exactly given its
        # endpoint displacement
        disp = 0.0
        seg_max = 0.0
        tcur = 0.0
        while True:
            gap = rng.exponential(1.0 / lam) if lam > 0.0 else duration
            piece = min(gap, duration - tcur)
            if piece > 0.0 and sigma > 0.0:
                s2t = sigma * sigma * piece
                d = math.sqrt(s2t) * rng.standard_normal()
                if want_extremes:
                    u = rng.random()
                    m = 0.5 * (d + math.sqrt(d * d - 2.0 * s2t * math.log(u)))
                    if disp + m > seg_max:
                        seg_max = disp + m
                disp += d
            tcur += piece
            if disp > seg_max:
                seg_max = disp
            if tcur >= duration or gap >= duration - (tcur - piece):
                break
            disp += half_width * (2.0 * rng.random() - 1.0)
            if disp > seg_max:
                seg_max = disp

        if pos + seg_max > sup_all:
            sup_all = pos + seg_max

        if alive_at_t:
            if npos == positions.shape[0]:
                grown = np.empty(2 * positions.shape[0])
                grown[:npos] = positions
                positions = grown
            positions[npos] = pos + disp
            npos += 1
            continue

        # branching event at the death position
        events += 1
        if events > event_cap:
            exploded = True
            break
        u = rng.random()
        k = np.searchsorted(cdf, u, side="right")
        if k >= cdf.shape[0]:
            if tail_coeff == 0.0:
                k = cdf.shape[0] - 1
            else:
                # invert the exact power tail: smallest n with
                # P(X >= n + 1) < 1 - u
                resid = 1.0 - u
                lo = cdf.shape[0]
                hi = lo
                while tail_coeff * math.exp(
                        math.lgamma(hi + 1 - alpha) - math.lgamma(hi + 1.0)
                ) >= resid:
                    hi *= 2
                while lo < hi:
                    mid = (lo + hi) // 2
                    if tail_coeff * math.exp(
                            math.lgamma(mid + 1 - alpha) - math.lgamma(mid + 1.0)
                    ) < resid:
                        hi = mid
                    else:
                        lo = mid + 1
                k = lo
        if k > 0:
            if top == s_birth.shape[0]:
                nc = 2 * s_birth.shape[0]
                nb = np.empty(nc)
                np_ = np.empty(nc)
                ncnt = np.empty(nc, dtype=np.int64)
                nb[:top] = s_birth
                np_[:top] = s_pos
                ncnt[:top] = s_cnt
                s_birth, s_pos, s_cnt = nb, np_, ncnt
            s_birth[top] = birth + lifetime
            s_pos[top] = pos + disp
            s_cnt[top] = k
            top += 1

    return positions[:npos], npos, sup_all, events, exploded


def simulate(config: BranchingConfig, driver: LevyDriver, x0: float, t: float,
             rng: np.random.Generator, seed_id: int = -1,
             want_extremes: bool = True) -> Realization:
    """Exact-law draw of the particle configuration at horizon t.

    t = inf runs the replica to extinction; positions are then empty and
    sup_all_time is the exact all-time maximum M (on non-exploding replicas).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    law = config.offspring
    if t == 0:
        return Realization(np.array([x0]), True, x0, x0, x0, 0, seed_id)
    # the kernel runs at the origin; shifting afterwards makes translation
    # equivariance exact in floating point
    positions, npos, sup_all, events, exploded = _kernel(
        rng, law.cdf, law.tail_coeff, law.alpha, config.branching_rate,
        driver.sigma, driver.jump_rate, driver.jump_half_width,
        0.0, t, config.event_cap, want_extremes)
    if exploded:
        raise ExplosionError(events, seed_id)
    survived = npos > 0
    positions = positions + x0
    return Realization(
        positions=positions,
        survived=survived,
        max_t=float(positions.max()) if survived else -math.inf,
        min_t=float(positions.min()) if survived else math.inf,
        sup_all_time=float(sup_all) + x0,
        events=int(events),
        seed_id=seed_id,
    )


def simulate_replica(config: BranchingConfig, driver: LevyDriver, x0: float,
                     t: float, master_seed: int, replica_index: int,
                     want_extremes: bool = True) -> Realization:
    return simulate(config, driver, x0, t,
                    replica_rng(master_seed, replica_index),
                    seed_id=replica_index, want_extremes=want_extremes)


def functionals(r: Realization, t: float, h=None, g=None,
                A: Optional[tuple] = None):
    """(sum h(x_i), sum g(x_i / sqrt(t)), count in A, any in A)."""
    x = r.positions
    sh = float(np.sum(h(x))) if (h is not None and len(x)) else 0.0
    sg = float(np.sum(g(x / math.sqrt(t)))) if (g is not None and len(x)) else 0.0
    if A is not None and len(x):
        count = int(np.sum((x >= A[0]) & (x <= A[1])))
    else:
        count = 0
    return sh, sg, count, count > 0
