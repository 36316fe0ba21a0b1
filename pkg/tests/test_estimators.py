import math

import numpy as np
import pytest

from blevy.engine import ExplosionError
from blevy.estimators import (
    CHUNK,
    EstimateRecord,
    EstimatorError,
    estimate_conditional,
    estimate_m_tail,
    estimate_thm1_lhs,
    estimate_thm2_lhs,
)
from blevy.levy import make_driver
from blevy.offspring import BranchingConfig, make_slack_offspring, survival_ode
from blevy.pde import solve_scaled_field
from blevy.presets import scaled, triangle

BM = make_driver("brownian")
BINARY = BranchingConfig(make_slack_offspring(2.0, 0.5), 1.0)


def test_record_validation():
    with pytest.raises(EstimatorError):
        EstimateRecord(1.0, -0.1, 10, 0, 0, "x")
    with pytest.raises(EstimatorError):
        EstimateRecord(1.0, 0.1, 10, 11, 0, "x")
    with pytest.raises(EstimatorError):
        EstimateRecord(math.nan, 0.1, 10, 0, 0, "x")


def test_thm1_zero_functionals_give_zero():
    rec = estimate_thm1_lhs(BINARY, BM, 0.0, 4.0, None, None, 500, seed=1)
    assert rec.value == 0.0 and rec.stderr == 0.0
    assert rec.replicas == 500 and rec.exploded == 0


def test_thm1_requires_large_t():
    with pytest.raises(EstimatorError):
        estimate_thm1_lhs(BINARY, BM, 0.0, 1.0, None, triangle, 10, seed=1)


def test_thm1_matches_scaled_solver():
    # the Monte Carlo functional and the deterministic scaled solver compute
    # the same finite-t quantity, so they must agree to statistical accuracy
    t = 64.0
    target = solve_scaled_field(t, BM, BINARY.offspring, 1.0,
                                triangle, None).at(1.0, 0.0)
    rec = estimate_thm1_lhs(BINARY, BM, 0.0, t, None, triangle,
                            10 ** 5, seed=101)
    assert rec.exploded == 0
    assert abs(rec.value - target) < 3.0 * rec.stderr + 1e-3


def test_thm2_matches_survival_ode():
    # A = (huge interval) reduces the event to bare survival
    t = 16.0
    target = t * survival_ode(BINARY.offspring, 1.0, t)
    rec = estimate_thm2_lhs(BINARY, BM, 0.0, t, (-1e6, 1e6), 10 ** 5, seed=7)
    assert abs(rec.value - target) < 3.0 * rec.stderr
    assert rec.stderr > 0


def test_thm2_validation():
    with pytest.raises(EstimatorError):
        estimate_thm2_lhs(BINARY, BM, 0.0, 4.0, (1.0, 1.0), 10, seed=1)
    with pytest.raises(EstimatorError):
        estimate_thm2_lhs(BINARY, BM, 0.0, 0.5, (0.0, 1.0), 10, seed=1)


def test_worker_count_invariance():
    n = CHUNK + 1234        # force more than one chunk
    a = estimate_thm1_lhs(BINARY, BM, 0.0, 4.0, None, triangle, n,
                          seed=11, workers=1)
    b = estimate_thm1_lhs(BINARY, BM, 0.0, 4.0, None, triangle, n,
                          seed=11, workers=2)
    assert a.value == b.value and a.stderr == b.stderr
    c = estimate_thm1_lhs(BINARY, BM, 0.0, 4.0, None, triangle, n,
                          seed=11, workers=1)
    assert a.value == c.value


def test_stderr_shrinks_like_root_two():
    a = estimate_thm2_lhs(BINARY, BM, 0.0, 4.0, (-1e6, 1e6), 2 * 10 ** 4,
                          seed=13)
    b = estimate_thm2_lhs(BINARY, BM, 0.0, 4.0, (-1e6, 1e6), 4 * 10 ** 4,
                          seed=13)
    assert a.stderr / b.stderr == pytest.approx(math.sqrt(2.0), rel=0.1)


def test_conditional_without_functional_is_one():
    rec = estimate_conditional(BINARY, BM, 0.0, 4.0, (-2.0, 2.0), None,
                               "vague", 2000, seed=17)
    assert rec.value == 1.0


def test_conditional_modes_bounded():
    for mode in ("vague", "weak"):
        rec = estimate_conditional(BINARY, BM, 0.0, 16.0, (-2.0, 2.0),
                                   triangle, mode, 2 * 10 ** 4, seed=19)
        assert 0.0 < rec.value <= 1.0
        assert rec.stderr > 0
    with pytest.raises(EstimatorError):
        estimate_conditional(BINARY, BM, 0.0, 16.0, (-2.0, 2.0), triangle,
                             "strong", 100, seed=19)


def test_conditional_no_events_raises():
    with pytest.raises(EstimatorError):
        estimate_conditional(BINARY, BM, 0.0, 4.0, (1e6, 1e6 + 1.0),
                             triangle, "vague", 200, seed=23)


def test_conditional_monotone_in_functional_coupled_seeds():
    # same seed means the same replicas, so a pointwise larger functional
    # strictly lowers every weight that is below one
    lo = estimate_conditional(BINARY, BM, 0.0, 16.0, (-2.0, 2.0), triangle,
                              "weak", 10 ** 4, seed=29)
    hi = estimate_conditional(BINARY, BM, 0.0, 16.0, (-2.0, 2.0),
                              scaled(triangle, 3.0), "weak", 10 ** 4, seed=29)
    assert hi.value < lo.value


def test_m_tail_validation():
    with pytest.raises(EstimatorError):
        estimate_m_tail(BINARY, BM, [1.0, 2.0, 3.0], 100, seed=1)
    with pytest.raises(EstimatorError):
        estimate_m_tail(BINARY, BM, [1.0, 2.0, 2.0, 3.0], 100, seed=1)


def test_m_tail_refuses_sparse_tail():
    capped = BranchingConfig(BINARY.offspring, 1.0, event_cap=10 ** 5)
    with pytest.raises(EstimatorError, match="fit refused"):
        estimate_m_tail(capped, BM, [1.0, 2.0, 4.0, 1e4], 300, seed=31)


def test_m_tail_binary_matches_travelling_wave():
    # exact all-time-maximum tail for this model: P(M >= x) = 6/(x + sqrt(6))^2
    capped = BranchingConfig(BINARY.offspring, 1.0, event_cap=10 ** 6)
    x_grid = np.geomspace(2.0, 8.0, 5)
    n = 3 * 10 ** 4
    slope, records = estimate_m_tail(capped, BM, x_grid, n, seed=37)
    assert records[0].exploded / n < 3e-3
    for x, rec in zip(x_grid, records):
        target = 6.0 / (x + math.sqrt(6.0)) ** 2
        assert abs(rec.value - target) < 4.0 * rec.stderr + records[0].exploded / n
    # pre-asymptotic local exponent of the exact tail over [2, 8]
    assert -2.5 < slope < -0.8


def test_all_replicas_exploded(monkeypatch):
    import blevy.estimators as est

    def boom(*args, **kwargs):
        raise ExplosionError(5, 0)

    monkeypatch.setattr(est, "simulate_replica", boom)
    with pytest.raises(EstimatorError, match="exploded"):
        estimate_thm1_lhs(BINARY, BM, 0.0, 4.0, None, triangle, 50, seed=1)
    with pytest.raises(EstimatorError, match="exploded"):
        estimate_m_tail(BINARY, BM, [1.0, 2.0, 3.0, 4.0], 50, seed=1)
