from __future__ import annotations

import numpy as np
import pytest

from complyctl.errors import DimensionMismatchError, NonUnitAxisError, SingularSystemError
from complyctl.schemas import EstimatorConfig
from complyctl.services.calculations.wrench import (
    Wrench,
    estimate,
    estimate_axis,
    estimate_full,
    gram_condition,
)
from complyctl.services.chain_model import jacobian
from tests.conftest import ARM5_Q0
from tests.helpers import planar_chain, random_chain


def test_force_recovered_on_arm5(arm5):
    jp, _ = jacobian(arm5, ARM5_Q0, 0)
    force = np.array([1.5, -2.0, 4.0])
    result = estimate_full(jp, None, jp.T @ force, lam=1e-12)
    np.testing.assert_allclose(result.wrench.force, force, atol=1e-6)
    np.testing.assert_array_equal(result.wrench.torque, 0.0)
    assert result.residual < 1e-8


def test_regularisation_shrinks_toward_zero(arm5):
    jp, _ = jacobian(arm5, ARM5_Q0, 0)
    tau = jp.T @ np.array([0.0, 5.0, 0.0])
    small = estimate_full(jp, None, tau, lam=1e-5).wrench.force
    large = estimate_full(jp, None, tau, lam=1e-1).wrench.force
    assert 0 < large[1] < small[1] <= 5.0


def test_stacked_wrench_recovery():
    chain = random_chain(7, seed=5)
    jp, jr = jacobian(chain, np.full(7, 0.3), 0)
    truth = np.array([2.0, -1.0, 0.5, 0.05, 0.1, -0.02])
    tau = jp.T @ truth[:3] + jr.T @ truth[3:]
    result = estimate_full(jp, jr, tau, lam=1e-12)
    np.testing.assert_allclose(result.wrench.as_vector(), truth, atol=1e-5)
    assert np.isfinite(result.gram_condition)


def test_separate_solve_matches_independent_problems():
    chain = random_chain(7, seed=6)
    jp, jr = jacobian(chain, np.full(7, -0.2), 0)
    tau = np.linspace(-1.0, 1.0, 7)
    result = estimate_full(jp, jr, tau, lam=1e-3, stacked=False)
    np.testing.assert_allclose(result.wrench.force, estimate_full(jp, None, tau, 1e-3).wrench.force)
    np.testing.assert_allclose(result.wrench.torque, estimate_full(jr, None, tau, 1e-3).wrench.force)


def test_rank_deficient_without_regularisation():
    chain = planar_chain()
    jp, _ = jacobian(chain, np.array([0.2, 0.3, -0.1]), 0)
    assert gram_condition(jp) == float("inf")
    with pytest.raises(SingularSystemError):
        estimate_full(jp, None, np.ones(3), lam=0.0)
    # regularised solve stays finite and gives nothing out of plane
    force = estimate_full(jp, None, np.ones(3), lam=1e-3).wrench.force
    assert force[1] == pytest.approx(0.0, abs=1e-12)


def test_gram_condition_of_orthonormal_rows():
    assert gram_condition(np.eye(3, 5)) == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        estimate_full(np.zeros((3, 4)), None, np.zeros(5))
    with pytest.raises(DimensionMismatchError):
        estimate_full(np.eye(3), np.zeros((2, 3)), np.zeros(3))


def test_axis_estimate_closed_form(rng):
    jac = rng.normal(size=(3, 6))
    tau = rng.normal(size=6)
    u = np.array([0.0, 0.6, 0.8])
    magnitude, vector = estimate_axis(jac, tau, u, lam=1e-3)
    row = u @ jac
    assert magnitude == pytest.approx(row @ tau / (row @ row + 1e-3))
    np.testing.assert_allclose(vector, magnitude * u)


def test_axis_estimate_unobservable_axis():
    jac = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    magnitude, vector = estimate_axis(jac, np.array([1.0, 2.0]), [0.0, 0.0, 1.0], lam=0.0)
    assert magnitude == 0.0
    np.testing.assert_array_equal(vector, 0.0)


def test_axis_estimate_requires_unit_axis():
    with pytest.raises(NonUnitAxisError):
        estimate_axis(np.eye(3), np.zeros(3), [1.0, 1.0, 0.0])


def test_estimate_dispatch_by_mode(arm5):
    jp, jr = jacobian(arm5, ARM5_Q0, 0)
    tau = jp.T @ np.array([0.0, 0.0, -3.0])

    full = estimate(EstimatorConfig(lam=1e-9), jp, jr, tau)
    assert full.wrench.force[2] == pytest.approx(-3.0, abs=1e-5)

    axis_config = EstimatorConfig.model_validate(
        {"lambda": 1e-9, "mode": "axis-set", "axes": [{"direction": [0.0, 0.0, 1.0]}]}
    )
    axis = estimate(axis_config, jp, jr, tau)
    assert axis.wrench.force[2] == pytest.approx(-3.0, rel=1e-3)
    assert axis.wrench.force[0] == 0.0

    with pytest.raises(DimensionMismatchError):
        estimate(EstimatorConfig(mode="full-wrench"), jp, None, tau)


def test_wrench_vector_helpers():
    total = Wrench.from_vector([1, 2, 3, 4, 5, 6]) + Wrench.zero()
    np.testing.assert_array_equal(total.as_vector(), [1, 2, 3, 4, 5, 6])
    assert not Wrench(np.array([np.nan, 0, 0]), np.zeros(3)).is_finite()


def test_vanishing_regularisation_is_least_squares(rng):
    chain = random_chain(7, seed=8)
    jp, _ = jacobian(chain, np.full(7, 0.4), 0)
    tau = rng.normal(size=7)
    expected = np.linalg.lstsq(jp.T, tau, rcond=None)[0]
    np.testing.assert_allclose(estimate_full(jp, None, tau, lam=1e-12).wrench.force, expected, rtol=1e-6, atol=1e-9)


def test_regularisation_bias_is_bounded(arm5, rng):
    lam = 1e-2
    for _ in range(20):
        q = rng.uniform(arm5.lower * 0.8, arm5.upper * 0.8)
        jp, _ = jacobian(arm5, q, 0)
        truth = rng.normal(size=3) * 5.0
        found = estimate_full(jp, None, jp.T @ truth, lam=lam).wrench.force
        bound = lam * np.linalg.norm(np.linalg.inv(jp @ jp.T + lam * np.eye(3)), 2) * np.linalg.norm(truth)
        assert np.linalg.norm(found - truth) <= bound * (1 + 1e-9)


def test_axis_estimate_flips_with_the_axis(rng):
    jac = rng.normal(size=(3, 5))
    tau = rng.normal(size=5)
    u = np.array([0.48, -0.6, 0.64])
    magnitude, vector = estimate_axis(jac, tau, u)
    flipped, flipped_vector = estimate_axis(jac, tau, -u)
    assert flipped == pytest.approx(-magnitude)
    np.testing.assert_allclose(flipped_vector, vector)
