from __future__ import annotations

import json

import numpy as np
import pytest

from complyctl.errors import ChainParseError, ChainValidationError, DimensionMismatchError
from complyctl.services.chain_model import forward_kinematics, gravity_torques, jacobian, load_chain
from tests.conftest import ARM5_Q0
from tests.helpers import finite_difference_gravity, finite_difference_jacobian, planar_chain, random_chain


def _write(tmp_path, payload, name="chain.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload) if not isinstance(payload, str) else payload, encoding="utf-8")
    return path


def _arm5_payload(fixtures_dir) -> dict:
    return json.loads((fixtures_dir / "arm5.json").read_text(encoding="utf-8"))


def test_load_arm5(arm5):
    assert arm5.n_joints == 5
    assert arm5.site_names == ("tool",)
    assert arm5.joint_names[0] == "base_yaw"
    assert arm5.gear_ratios.tolist() == [200.0] * 5
    assert arm5.motors[0].kt == pytest.approx(0.007)


def test_arm5_tool_pose_points_down(arm5):
    (pose,) = forward_kinematics(arm5, ARM5_Q0)
    np.testing.assert_allclose(pose.position, [0.1536, 0.0, 0.0538], atol=5e-4)
    tool_x = pose.rotation[:, 0]
    np.testing.assert_allclose(tool_x, [0.0, 0.0, -1.0], atol=1e-4)


def test_chain_arrays_are_read_only(arm5):
    with pytest.raises(ValueError):
        arm5.axes[0, 0] = 2.0


def test_planar_jacobian_closed_form():
    chain = planar_chain((0.3, 0.25, 0.1))
    jp, jr = jacobian(chain, np.zeros(3), 0)
    np.testing.assert_allclose(jp[2], [-0.65, -0.35, -0.1], atol=1e-12)
    np.testing.assert_allclose(jp[:2], 0.0, atol=1e-12)
    np.testing.assert_allclose(jr[1], [1.0, 1.0, 1.0], atol=1e-12)


def test_jacobian_matches_finite_differences(arm5, rng):
    for _ in range(10):
        q = rng.uniform(arm5.lower * 0.8, arm5.upper * 0.8)
        jp, jr = jacobian(arm5, q, 0)
        fd_p, fd_r = finite_difference_jacobian(arm5, q, 0)
        scale = max(1.0, float(np.abs(jp).max()))
        assert np.abs(jp - fd_p).max() <= 1e-6 * scale
        assert np.abs(jr - fd_r).max() <= 1e-6


def test_gravity_matches_energy_gradient(arm5, rng):
    for _ in range(10):
        q = rng.uniform(arm5.lower * 0.8, arm5.upper * 0.8)
        np.testing.assert_allclose(gravity_torques(arm5, q), finite_difference_gravity(arm5, q), atol=1e-6)


def test_vertical_axes_carry_no_gravity(arm5):
    tau = gravity_torques(arm5, ARM5_Q0)
    assert tau[0] == pytest.approx(0.0, abs=1e-12)
    assert tau[4] == pytest.approx(0.0, abs=1e-6)
    # leaning further forward lowers the arm, so the shoulder holds against +q
    assert tau[1] < -0.1


def test_branch_site_ignores_other_branch():
    chain = random_chain(6, seed=3, branch_at=2)
    jp, jr = jacobian(chain, np.zeros(6), chain.site_index("branch"))
    # joints 4 and 5 hang off joint 2 on the other branch; joint 3 carries the site
    np.testing.assert_array_equal(jp[:, 4:], 0.0)
    np.testing.assert_array_equal(jr[:, 4:], 0.0)
    assert np.abs(jr[:, 3]).max() > 0


def test_clamped_forward_kinematics(arm5):
    outside = ARM5_Q0.copy()
    outside[1] = 5.0
    clamped = ARM5_Q0.copy()
    clamped[1] = arm5.upper[1]
    (a,) = forward_kinematics(arm5, outside, clamp=True)
    (b,) = forward_kinematics(arm5, clamped)
    np.testing.assert_allclose(a.position, b.position)


def test_truncated_prefix(fixtures_dir):
    chain = load_chain(fixtures_dir / "arm6.json")
    prefix = chain.truncated(3)
    assert prefix.n_joints == 3
    assert prefix.site_names == ("elbow_pad",)
    with pytest.raises(DimensionMismatchError):
        chain.truncated(0)
    with pytest.raises(ChainValidationError):
        chain.truncated(2)


def test_dimension_and_site_errors(arm5):
    with pytest.raises(DimensionMismatchError):
        forward_kinematics(arm5, np.zeros(4))
    with pytest.raises(DimensionMismatchError):
        jacobian(arm5, ARM5_Q0, 3)
    with pytest.raises(ChainValidationError):
        arm5.site_index("gripper")


def test_malformed_json_reports_position(tmp_path):
    path = _write(tmp_path, '{"schema_version": 1,\n  "joints": [,]}')
    with pytest.raises(ChainParseError, match=r"chain\.json:2:\d+"):
        load_chain(path)


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ChainParseError):
        load_chain(tmp_path / "absent.json")


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda p: p["joints"][1].update(parent=3), "parents must precede children"),
        (lambda p: p["joints"][0].update(motor="missing"), "unknown motor"),
        (lambda p: p["joints"][2].update(axis=[0.0, 1.0, 0.1]), "unit norm"),
        (lambda p: p["joints"][3].update(limits=[1.0, -1.0]), "min < max"),
        (lambda p: p["links"].pop(), "links has 4 entries"),
        (lambda p: p["sites"][0].update(parent=9), "missing joint"),
        (lambda p: p.update(schema_version=2), "unsupported schema_version"),
        (lambda p: p["motors"]["servo"].update(eta=1.5), "motors.servo.eta"),
    ],
)
def test_structural_errors(tmp_path, fixtures_dir, mutate, message):
    payload = _arm5_payload(fixtures_dir)
    mutate(payload)
    with pytest.raises(ChainValidationError, match=message):
        load_chain(_write(tmp_path, payload))


def test_gravity_torque_is_the_holding_torque():
    # one 0.4 m link about +y with 2 kg at its midpoint: positive q lowers it
    chain = planar_chain((0.4,), masses=(2.0,))
    (tau,) = gravity_torques(chain, np.zeros(1))
    assert tau == pytest.approx(-2.0 * 9.81 * 0.2)
    assert tau == pytest.approx(finite_difference_gravity(chain, np.zeros(1))[0])


def test_truncated_chain_reproduces_prefix_poses(fixtures_dir, rng):
    chain = load_chain(fixtures_dir / "arm6.json")
    prefix = chain.truncated(3)
    site = chain.site_index("elbow_pad")
    for _ in range(5):
        q = rng.uniform(chain.lower * 0.8, chain.upper * 0.8)
        (short,) = forward_kinematics(prefix, q[:3])
        full = forward_kinematics(chain, q)[site]
        np.testing.assert_allclose(short.position, full.position, atol=1e-12)
        np.testing.assert_allclose(short.rotation, full.rotation, atol=1e-12)


def test_jacobian_difference_error_shrinks_quadratically(arm5, rng):
    q = rng.uniform(arm5.lower * 0.8, arm5.upper * 0.8)
    jp, _ = jacobian(arm5, q, 0)
    errors = [np.abs(finite_difference_jacobian(arm5, q, 0, h=h)[0] - jp).max() for h in (1e-2, 5e-3)]
    assert 3.0 < errors[0] / errors[1] < 5.0
