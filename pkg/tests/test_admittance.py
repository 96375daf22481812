from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from complyctl.errors import NonUnitAxisError, NotPositiveDefiniteError, StabilityError
from complyctl.services.calculations.admittance import (
    ComplianceCommand,
    TaskState,
    block_stiffness,
    check_stability,
    critical_damping,
    smd_accel,
    step,
    stiffness_from_normal,
)
from complyctl.services.calculations.wrench import Wrench
from complyctl.services.spatial import Pose, pose_error, pose_retract


def _origin() -> Pose:
    return Pose(np.zeros(3), np.zeros(3))


def _command(kp_diag, **kwargs) -> ComplianceCommand:
    return ComplianceCommand.critically_damped(_origin(), np.diag(kp_diag), **kwargs)


def test_critical_damping_of_diagonal():
    kd = critical_damping(np.diag([4.0, 9.0, 16.0, 1.0, 0.25, 0.0]))
    np.testing.assert_allclose(np.diag(kd), [4.0, 6.0, 8.0, 2.0, 1.0, 0.0])


def test_critical_damping_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        critical_damping(np.diag([1.0, -1.0, 1.0, 1.0, 1.0, 1.0]))
    with pytest.raises(NotPositiveDefiniteError):
        critical_damping(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_command_rejects_bad_shapes():
    with pytest.raises(NotPositiveDefiniteError):
        ComplianceCommand(_origin(), np.zeros(6), np.eye(3), np.eye(3))
    with pytest.raises(ValueError):
        _command([1.0] * 6, mass=0.0)


def test_accel_at_rest_is_wrench_over_mass():
    cmd = _command([100.0] * 6, f_cmd=Wrench(np.array([0.0, 0.0, -2.0]), np.zeros(3)), mass=2.0)
    f_ext = Wrench(np.array([1.0, 0.0, 0.0]), np.zeros(3))
    accel = smd_accel(TaskState.at_rest(_origin()), cmd, f_ext)
    np.testing.assert_allclose(accel, [0.5, 0.0, -1.0, 0.0, 0.0, 0.0])


def test_step_is_semi_implicit():
    cmd = _command([100.0] * 6)
    state = TaskState.at_rest(Pose(np.array([0.01, 0.0, 0.0]), np.zeros(3)))
    new = step(state, cmd, Wrench.zero(), 0.01)
    # velocity updates first and the position uses the new velocity
    assert new.xdot_ref[0] == pytest.approx(-0.01)
    assert new.x_ref.position[0] == pytest.approx(0.01 - 1e-4)


def test_zero_inputs_stay_put():
    cmd = _command([50.0] * 6)
    state = TaskState.at_rest(_origin())
    for _ in range(10):
        state = step(state, cmd, Wrench.zero(), 0.01)
    np.testing.assert_array_equal(state.x_ref.position, 0.0)
    np.testing.assert_array_equal(state.xdot_ref, 0.0)


def test_rotation_error_on_the_group():
    cmd = _command([0.0, 0.0, 0.0, 10.0, 10.0, 10.0])
    start = Pose(np.zeros(3), np.array([0.0, 0.0, 3.0]))
    state = TaskState.at_rest(start)
    for _ in range(600):
        state = step(state, cmd, Wrench.zero(), 0.01)
    # converges to identity by the short way round
    assert Rotation.from_rotvec(state.x_ref.orientation).magnitude() < 1e-4


def test_stability_check():
    cmd = _command([10000.0] * 6)
    assert check_stability(cmd, 0.005) == pytest.approx(0.5)
    with pytest.raises(StabilityError):
        check_stability(cmd, 0.02)
    with pytest.raises(StabilityError):
        step(TaskState.at_rest(_origin()), cmd, Wrench.zero(), 0.0)


def test_speed_limits_cap_norms():
    cmd = _command([100.0] * 6, f_cmd=Wrench(np.array([500.0, 0.0, 0.0]), np.array([0.0, 0.0, 500.0])))
    new = step(TaskState.at_rest(_origin()), cmd, Wrench.zero(), 0.01, speed_limit=0.05, angular_limit=0.5)
    assert np.linalg.norm(new.xdot_ref[:3]) == pytest.approx(0.05)
    assert np.linalg.norm(new.xdot_ref[3:]) == pytest.approx(0.5)


def test_stiffness_from_normal():
    n = np.array([0.0, 0.6, 0.8])
    k = stiffness_from_normal(n, 50.0, 400.0)
    assert n @ k @ n == pytest.approx(50.0)
    tangent = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(k @ tangent, 400.0 * tangent)
    with pytest.raises(NonUnitAxisError):
        stiffness_from_normal([0.0, 0.0, 2.0], 50.0, 400.0)


def test_block_stiffness_forms():
    trans = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(np.diag(block_stiffness(trans, 5.0)), [1, 2, 3, 5, 5, 5])
    np.testing.assert_array_equal(np.diag(block_stiffness(trans, [4.0, 5.0, 6.0])), [1, 2, 3, 4, 5, 6])
    full = block_stiffness(trans, np.eye(3))
    assert full.shape == (6, 6)
    np.testing.assert_array_equal(full[:3, 3:], 0.0)


def test_pose_retract_inverts_pose_error(rng):
    for _ in range(20):
        current = Pose(rng.normal(size=3), Rotation.random(random_state=rng).as_rotvec())
        delta = np.concatenate([rng.normal(size=3), rng.uniform(-0.5, 0.5, size=3)])
        moved = pose_retract(current, delta)
        np.testing.assert_allclose(pose_error(moved, current), delta, atol=1e-10)


def test_critically_damped_energy_never_grows():
    kp = np.diag([100.0] * 6)
    cmd = ComplianceCommand.critically_damped(_origin(), kp)
    state = TaskState.at_rest(Pose(np.array([0.05, -0.02, 0.01]), np.zeros(3)))

    def energy(task: TaskState) -> float:
        error = pose_error(cmd.x_des, task.x_ref)
        return 0.5 * error @ kp @ error + 0.5 * cmd.mass * task.xdot_ref @ task.xdot_ref

    energies = [energy(state)]
    for _ in range(2000):
        state = step(state, cmd, Wrench.zero(), 0.001)
        energies.append(energy(state))
    assert np.all(np.diff(energies) <= 1e-15)
    assert energies[-1] < 1e-6 * energies[0]


def test_critical_damping_commutes_with_stiffness(rng):
    for _ in range(10):
        basis = rng.normal(size=(6, 6))
        kp = basis @ basis.T + 0.1 * np.eye(6)
        kd = critical_damping(kp)
        np.testing.assert_allclose(kd @ kp, kp @ kd, atol=1e-9 * np.abs(kp).max())
        np.testing.assert_allclose(kd @ kd, 4.0 * kp, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("axis", range(6))
def test_push_moves_reference_along_its_own_axis(axis):
    cmd = _command([100.0, 200.0, 300.0, 10.0, 20.0, 30.0])
    push = np.zeros(6)
    push[axis] = 1.0
    state = TaskState.at_rest(_origin())
    for _ in range(5):
        state = step(state, cmd, Wrench.from_vector(push), 0.01)
    moved = state.x_ref.as_vector()
    assert moved[axis] > 0
    np.testing.assert_allclose(np.delete(moved, axis), 0.0, atol=1e-12)
