"""Shared model fixtures: the bundled walker plus small purpose-built rigs."""

import numpy as np
import pytest

from physref.model import load_builtin_model, robot_model_from_dict


@pytest.fixture(scope="session")
def walker():
    return load_builtin_model("planar-walker-7")


def make_pendulum(kd=0.0, kp=0.0):
    """Fixed-base single pendulum: 1 kg rod, COM 0.5 m below the pivot."""
    return robot_model_from_dict({
        "format_version": 1, "name": "pendulum", "floating_base": False,
        "standing_root_height": 1.0,
        "links": [
            {"name": "stand", "mass": 0.001, "inertia": 0.001, "length": 1.0,
             "com_offset": [0.0, 0.0]},
            {"name": "rod", "mass": 1.0, "inertia": 1.0 / 12.0, "length": 1.0,
             "com_offset": [0.0, -0.5]},
        ],
        "joints": [
            {"name": "pivot", "parent": "stand", "child": "rod", "anchor": [0.0, 0.0],
             "limits": [-6.3, 6.3], "velocity_limit": 100.0, "torque_limit": 1000.0,
             "kp": kp, "kd": kd},
        ],
        "default_pose": [0.0], "tracked_bodies": ["rod"], "end_effectors": [],
    })


def make_double_pendulum():
    return robot_model_from_dict({
        "format_version": 1, "name": "double-pendulum", "floating_base": False,
        "standing_root_height": 1.5,
        "links": [
            {"name": "stand", "mass": 0.001, "inertia": 0.001, "length": 0.0,
             "com_offset": [0.0, 0.0]},
            {"name": "rod1", "mass": 1.0, "inertia": 0.02, "length": 0.5,
             "com_offset": [0.0, -0.25]},
            {"name": "rod2", "mass": 1.0, "inertia": 0.02, "length": 0.5,
             "com_offset": [0.0, -0.25]},
        ],
        "joints": [
            {"name": "shoulder", "parent": "stand", "child": "rod1", "anchor": [0.0, 0.0],
             "limits": [-12.6, 12.6], "velocity_limit": 100.0, "torque_limit": 1000.0,
             "kp": 0.0, "kd": 0.0},
            {"name": "elbow", "parent": "rod1", "child": "rod2", "anchor": [0.0, -0.5],
             "limits": [-12.6, 12.6], "velocity_limit": 100.0, "torque_limit": 1000.0,
             "kp": 0.0, "kd": 0.0},
        ],
        "default_pose": [0.0, 0.0], "tracked_bodies": ["rod1", "rod2"],
        "end_effectors": [],
    })


def make_block():
    """Free 2 kg box with heel/toe contact points; Coulomb friction oracle rig."""
    return robot_model_from_dict({
        "format_version": 1, "name": "block", "floating_base": True,
        "standing_root_height": 0.05,
        "links": [
            {"name": "box", "mass": 2.0, "inertia": 0.01, "length": 0.2,
             "com_offset": [0.0, 0.0],
             "contact_points": [[-0.1, -0.05], [0.1, -0.05]]},
        ],
        "joints": [], "default_pose": [],
        "tracked_bodies": ["box"], "end_effectors": ["box"],
    })


def make_free_link():
    """Single floating link, COM at the frame origin, no contact points.

    In flight its horizontal and angular velocities are exactly constant,
    which makes push bookkeeping and ballistic checks exact.
    """
    return robot_model_from_dict({
        "format_version": 1, "name": "free-link", "floating_base": True,
        "standing_root_height": 1.0,
        "links": [
            {"name": "body", "mass": 2.0, "inertia": 0.05, "length": 0.4,
             "com_offset": [0.0, 0.0]},
        ],
        "joints": [], "default_pose": [],
        "tracked_bodies": ["body"], "end_effectors": [],
    })


def make_single_joint(kp=50.0, kd=2.0, torque_limit=60.0):
    """Fixed-base single-joint arm used for PD and FK velocity oracles."""
    return robot_model_from_dict({
        "format_version": 1, "name": "one-joint", "floating_base": False,
        "standing_root_height": 1.0,
        "links": [
            {"name": "base", "mass": 0.001, "inertia": 0.001, "length": 0.0,
             "com_offset": [0.0, 0.0]},
            {"name": "arm", "mass": 1.0, "inertia": 0.05, "length": 0.6,
             "com_offset": [0.0, -0.3]},
        ],
        "joints": [
            {"name": "j", "parent": "base", "child": "arm", "anchor": [0.0, 0.0],
             "limits": [-6.3, 6.3], "velocity_limit": 50.0, "torque_limit": torque_limit,
             "kp": kp, "kd": kd},
        ],
        "default_pose": [0.0], "tracked_bodies": ["arm"], "end_effectors": [],
    })


def standing_qpos(model):
    q = np.zeros(model.nq)
    q[1] = model.standing_root_height
    return q
