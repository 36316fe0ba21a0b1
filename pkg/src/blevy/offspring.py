"""Critical offspring laws with stable tails and their branching nonlinearities.

The canonical heavy-tail family is the Slack family with generating function
f(s) = s + c (1 - s)**alpha, which keeps every derived quantity (the
nonlinearity psi, its time scaling, the tail constant, the survival
probability) in closed form.  Explicit probability vectors cover the
finite-variance alpha = 2 regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

TAIL_CUTOFF = 1 << 16


class OffspringError(ValueError):
    """Invalid offspring-law parameters or regime misuse."""


@dataclass(frozen=True)
class OffspringLaw:
    """Critical offspring distribution (mean exactly 1, p_1 < 1).

    probs holds p_0..p_K.  For the Slack family the law extends beyond K with
    the exact tail P(X >= n) = tail_coeff * Gamma(n - alpha) / Gamma(n); for
    vector laws the support is finite.
    """

    alpha: float
    probs: np.ndarray
    kappa: float            # tail constant of (H1); 0.0 in the alpha = 2 regime
    sigma2: float           # sum k^2 p_k - 1 when alpha = 2, nan otherwise
    slack_c: Optional[float] = None
    # sampling tables, filled in __post_init__
    cdf: np.ndarray = None
    tail_coeff: float = 0.0  # 0 means finite support

    def __post_init__(self):
        cdf = np.cumsum(self.probs)
        object.__setattr__(self, "cdf", cdf)
        if self.slack_c is not None and self.alpha < 2.0:
            # P(X >= n) = c * (-1)^n * binom(alpha-1, n-1), closed form
            coeff = self.slack_c / abs(math.gamma(1.0 - self.alpha))
            object.__setattr__(self, "tail_coeff", coeff)
        resid = 1.0 - cdf[-1]
        tail = self._tail_mass(len(self.probs))
        if abs(resid - tail) > 1e-9:
            raise OffspringError("probability mass does not sum to 1")

    def _tail_mass(self, n: int) -> float:
        """P(X >= n) beyond the stored prefix."""
        if self.tail_coeff == 0.0:
            return 0.0
        return self.tail_coeff * math.exp(
            math.lgamma(n - self.alpha) - math.lgamma(n)
        )

    @property
    def is_slack(self) -> bool:
        return self.slack_c is not None

    def generating_function(self, s):
        if self.is_slack:
            return s + self.slack_c * (1.0 - s) ** self.alpha
        k = np.arange(len(self.probs))
        return np.sum(self.probs * np.asarray(s)[..., None] ** k, axis=-1)

    def mean(self) -> float:
        k = np.arange(len(self.probs))
        m = float(np.dot(k, self.probs))
        if self.tail_coeff != 0.0:
            # sum_{k >= n0} k p_k = (n0-1) T(n0) + sum_{n >= n0} T(n), and the
            # tail sums telescope: sum Gamma(n-a)/Gamma(n) = Gamma(n0-a)/((a-1) Gamma(n0-1))
            n0 = len(self.probs)
            s = self.tail_coeff * math.exp(
                math.lgamma(n0 - self.alpha) - math.lgamma(n0 - 1.0)
            ) / (self.alpha - 1.0)
            m += (n0 - 1.0) * self._tail_mass(n0) + s
        return m


def _slack_prefix(alpha: float, c: float, cutoff: int) -> np.ndarray:
    """p_0..p_cutoff of the Slack law by exact coefficient recursion."""
    q = np.empty(cutoff + 1)
    q[0] = 1.0
    q[1] = -alpha
    for k in range(1, cutoff):
        q[k + 1] = q[k] * (k - alpha) / (k + 1)
    p = c * q
    p[0] = c
    p[1] = 1.0 - c * alpha
    return p


def make_slack_offspring(alpha: float, c: float, cutoff: int = TAIL_CUTOFF) -> OffspringLaw:
    """Law with generating function f(s) = s + c (1-s)**alpha.

    Requires 1 < alpha <= 2 and 0 < c <= 1/alpha (so that p_1 >= 0).
    """
    if not (1.0 < alpha <= 2.0):
        raise OffspringError(f"alpha must lie in (1, 2], got {alpha}")
    if not (0.0 < c <= 1.0 / alpha):
        raise OffspringError(f"c must lie in (0, 1/alpha], got {c}")
    if alpha == 2.0:
        probs = np.array([c, 1.0 - 2.0 * c, c])
        return OffspringLaw(alpha=2.0, probs=probs, kappa=0.0,
                            sigma2=2.0 * c, slack_c=c)
    probs = _slack_prefix(alpha, c, cutoff)
    kappa = c / (alpha * math.gamma(-alpha))
    return OffspringLaw(alpha=alpha, probs=probs, kappa=kappa,
                        sigma2=float("nan"), slack_c=c)


def make_vector_offspring(probs, tail_exponent: Optional[float] = None) -> OffspringLaw:
    """Explicit finite probability vector; must be critical.

    tail_exponent is accepted for interface completeness but analytic
    power-tail extensions of raw vectors are not supported: heavy tails come
    from the Slack family, vectors are finite-support (alpha = 2 regime).
    """
    if tail_exponent is not None:
        raise OffspringError(
            "power-tail vector laws are not supported; use the slack family")
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or len(p) < 1 or np.any(p < 0):
        raise OffspringError("probabilities must be a nonnegative vector")
    if abs(p.sum() - 1.0) > 1e-12:
        raise OffspringError("probabilities must sum to 1")
    k = np.arange(len(p))
    if abs(np.dot(k, p) - 1.0) > 1e-12:
        raise OffspringError("offspring mean must be exactly 1 (criticality)")
    if len(p) > 1 and p[1] >= 1.0:
        raise OffspringError("p_1 must be < 1")
    sigma2 = float(np.dot(k * k, p)) - 1.0
    return OffspringLaw(alpha=2.0, probs=p, kappa=0.0, sigma2=sigma2)


@dataclass(frozen=True)
class BranchingConfig:
    offspring: OffspringLaw
    branching_rate: float            # beta, events per unit time
    event_cap: int = 100_000_000

    def __post_init__(self):
        if self.branching_rate <= 0:
            raise OffspringError("branching_rate must be positive")
        if self.event_cap < 1:
            raise OffspringError("event_cap must be >= 1")


def kappa_of(law: OffspringLaw) -> float:
    """Tail constant kappa = lim n^alpha P(X >= n) of the heavy-tail regime."""
    if law.alpha >= 2.0:
        raise OffspringError("kappa is undefined for alpha = 2 (finite variance)")
    return law.kappa


def psi(law: OffspringLaw, beta: float, v):
    """Branching nonlinearity psi(v) = beta (f(1-v) - (1-v)) on [0, 1]."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > 1):
        raise OffspringError("psi argument must lie in [0, 1]")
    if law.is_slack:
        out = beta * law.slack_c * v ** law.alpha
    else:
        k = np.arange(len(law.probs))
        s = 1.0 - v
        out = beta * (np.sum(law.probs * s[..., None] ** k, axis=-1) - s)
    return out if out.ndim else float(out)


def psi_scaled(law: OffspringLaw, beta: float, t: float, v):
    """Time-scaled nonlinearity t**(a/(a-1)) psi(v t**(-1/(a-1)))."""
    if t <= 0:
        raise OffspringError("t must be positive")
    a = law.alpha
    scale = t ** (1.0 / (a - 1.0))
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > scale * (1.0 + 1e-12)):
        raise OffspringError("scaled psi argument out of [0, t^(1/(alpha-1))]")
    out = t * scale * psi(law, beta, np.minimum(v / scale, 1.0))
    return out if np.ndim(out) else float(out)


def cee_alpha(law: OffspringLaw, beta: float) -> float:
    """Limit branching-mechanism constant: phi(lam) = cee * lam**alpha."""
    if law.alpha == 2.0:
        k = np.arange(len(law.probs))
        return 0.5 * beta * float(np.dot(k * (k - 1), law.probs))
    return beta * law.kappa * math.gamma(2.0 - law.alpha) / (law.alpha - 1.0)


def psi_lipschitz_constant(law: OffspringLaw, beta: float) -> float:
    """Calibrated C with |psi_t(u) - psi_t(v)| <= C (u^(a-1) + v^(a-1)) |u - v|.

    1.05 x the supremum of the observed ratio over a dense (u, v, t) grid;
    the constant exists but is not derived analytically.
    """
    a = law.alpha
    sup = 0.0
    for t in (1.0, 10.0, 100.0, 1000.0):
        hi = min(10.0, t ** (1.0 / (a - 1.0)))
        u = np.linspace(0.0, hi, 201)
        pu = np.asarray(psi_scaled(law, beta, t, u))
        du = np.abs(pu[:, None] - pu[None, :])
        den = (u[:, None] ** (a - 1.0) + u[None, :] ** (a - 1.0)) * np.abs(
            u[:, None] - u[None, :])
        mask = den > 0
        sup = max(sup, float(np.max(du[mask] / den[mask])))
    return 1.05 * sup


def survival_ode(law: OffspringLaw, beta: float, t):
    """Total-mass survival probability u(t): u' = -psi(u), u(0) = 1.

    Slack laws use the closed form (1 + (alpha-1) beta c t)**(-1/(alpha-1));
    other laws integrate adaptively at oracle tolerance.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise OffspringError("t must be nonnegative")
    if law.is_slack:
        a, c = law.alpha, law.slack_c
        out = (1.0 + (a - 1.0) * beta * c * t_arr) ** (-1.0 / (a - 1.0))
    else:
        out = np.ones_like(t_arr)
        pos = t_arr > 0
        if np.any(pos):
            tmax = float(t_arr.max())
            sol = solve_ivp(
                lambda _, u: [-psi(law, beta, min(max(u[0], 0.0), 1.0))],
                (0.0, tmax), [1.0], t_eval=np.sort(t_arr[pos]),
                rtol=1e-10, atol=1e-10, method="RK45", dense_output=True)
            out[pos] = sol.sol(t_arr[pos])[0]
    return out if np.ndim(t) else float(out[0])


def sample_offspring(law: OffspringLaw, rng: np.random.Generator, size=None):
    """Exact draw(s) from the offspring law: inverse CDF over the prefix,
    exact closed-form tail inversion beyond the cutoff (no truncation bias)."""
    if size is None:
        return int(_draw(law, float(rng.random())))
    u = rng.random(size)
    out = np.searchsorted(law.cdf, u, side="right")
    over = out >= len(law.probs)
    if np.any(over):
        out = out.astype(np.int64)
        for i in np.nonzero(over.ravel())[0]:
            out.ravel()[i] = _tail_invert(law, float(u.ravel()[i]))
    return out


def _draw(law: OffspringLaw, u: float) -> int:
    k = int(np.searchsorted(law.cdf, u, side="right"))
    if k < len(law.probs):
        return k
    return _tail_invert(law, u)


def _tail_invert(law: OffspringLaw, u: float) -> int:
    """Smallest n with P(X >= n+1) < 1-u, searched on the exact tail."""
    resid = 1.0 - u
    lo = len(law.probs)            # tail mass at lo is >= resid by construction
    hi = lo
    while law._tail_mass(hi + 1) >= resid:
        hi = 2 * hi
    while lo < hi:
        mid = (lo + hi) // 2
        if law._tail_mass(mid + 1) < resid:
            hi = mid
        else:
            lo = mid + 1
    return lo
