from __future__ import annotations

import numpy as np
import pytest

from complyctl.errors import SchemaError
from complyctl.schemas import HybridCommand
from complyctl.services.calculations.hybrid import (
    integrate_velocity,
    make_compliance_command,
    read_hybrid_commands,
    stiffness_from_velocity,
)
from complyctl.services.spatial import Pose

HEADER = "t,vx,vy,vz,k_low,k_high,fx,fy,fz\n"


def test_stiffness_is_high_along_motion():
    cmd = HybridCommand(v=(0.0, 0.02, 0.0), k_low=10.0, k_high=500.0)
    k = stiffness_from_velocity(cmd)
    np.testing.assert_allclose(np.diag(k), [10.0, 500.0, 10.0])


def test_zero_velocity_is_isotropic_low():
    k = stiffness_from_velocity(HybridCommand(k_low=5.0, k_high=500.0))
    np.testing.assert_array_equal(k, 5.0 * np.eye(3))


def test_gains_must_be_ordered():
    with pytest.raises(ValueError):
        HybridCommand(k_low=10.0, k_high=1.0)


def test_integrate_velocity():
    pose = Pose(np.array([0.1, 0.0, 0.0]), np.array([0.0, 0.0, 0.5]))
    moved = integrate_velocity(pose, [0.0, 0.1, 0.0], 0.5)
    np.testing.assert_allclose(moved.position, [0.1, 0.05, 0.0])
    np.testing.assert_array_equal(moved.orientation, pose.orientation)
    with pytest.raises(ValueError):
        integrate_velocity(pose, [0.0, 0.0, 0.0], 0.0)


def test_compliance_command_from_hybrid():
    cmd = HybridCommand(v=(0.05, 0.0, 0.0), k_low=20.0, k_high=400.0, f_offset=(0.0, 0.0, -2.0, 0.0, 0.0, 0.0))
    compliance = make_compliance_command(cmd, Pose(np.zeros(3), np.zeros(3)), rotational_stiffness=30.0)
    np.testing.assert_allclose(np.diag(compliance.kp), [400.0, 20.0, 20.0, 30.0, 30.0, 30.0])
    np.testing.assert_allclose(compliance.kd @ compliance.kd, 4.0 * compliance.kp, atol=1e-9)
    np.testing.assert_allclose(compliance.xdot_des, [0.05, 0.0, 0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(compliance.f_cmd.force, [0.0, 0.0, -2.0])


def test_read_hybrid_commands(tmp_path):
    path = tmp_path / "commands.csv"
    path.write_text(HEADER + "0,0,0,0,10,10,0,0,0\n1.5,0.02,0,0,10,400,0,0,-1\n", encoding="utf-8")
    commands = read_hybrid_commands(path)
    assert [t for t, _ in commands] == [0.0, 1.5]
    assert commands[1][1].v == (0.02, 0.0, 0.0)
    assert commands[1][1].f_offset[2] == -1.0


@pytest.mark.parametrize(
    "body, match",
    [
        ("t,vx,vy\n0,0,0\n", ":1: header"),
        (HEADER + "0,0,0,0,10,10,0,0,0\n1,x,0,0,10,10,0,0,0\n", ":3: non-numeric"),
        (HEADER + "1,0,0,0,10,10,0,0,0\n0,0,0,0,10,10,0,0,0\n", "non-decreasing"),
        (HEADER + "0,0,0,0,50,10,0,0,0\n", ":2: "),
        ("", ":1: empty"),
    ],
)
def test_read_hybrid_commands_errors(tmp_path, body, match):
    path = tmp_path / "commands.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(SchemaError, match=match):
        read_hybrid_commands(path)
