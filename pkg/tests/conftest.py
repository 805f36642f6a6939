import numpy as np
import pytest

from gravsim.robot import GeneralizedState, Joint, Link, RobotModel, reference_model
from gravsim.rotations import IDENTITY_QUAT


@pytest.fixture(scope="session")
def quadruped() -> RobotModel:
    return reference_model()


def make_state(model: RobotModel, rng=None, base_pos=(0.0, 0.0, 0.6),
               with_velocity=True) -> GeneralizedState:
    """A valid random-ish state; deterministic when rng is seeded."""
    q = np.zeros(model.nq)
    v = np.zeros(model.nv)
    q[0:3] = base_pos
    q[3:7] = IDENTITY_QUAT
    q[7:] = model.q_def
    if rng is not None:
        q[0:3] += rng.normal(0, 0.3, 3)
        quat = rng.normal(size=4)
        q[3:7] = quat / np.linalg.norm(quat)
        lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
        q[7:] = rng.uniform(lo, hi)
        if with_velocity:
            v = rng.normal(0, 1.0, model.nv)
    return GeneralizedState(q=q, v=v)


def pendulum_model(mass=1.0, length=0.5, base_mass=50.0, tiny=1e-10) -> RobotModel:
    """Point-mass pendulum hanging from the base, swinging about +y."""
    links = (
        Link("base", base_mass, np.zeros(3), np.eye(3)),
        Link("bob", mass, np.array([0.0, 0.0, -length]), np.eye(3) * tiny),
    )
    joints = (
        Joint("hinge", 0, np.array([0.0, 1.0, 0.0]), np.zeros(3), np.eye(3),
              (-12.0, 12.0), 60.0),
    )
    return RobotModel("pendulum", links, joints, q_def=np.zeros(1))


def double_pendulum_model(m1=1.3, m2=0.7, l1=0.4, l2=0.6, tiny=1e-10) -> RobotModel:
    links = (
        Link("base", 50.0, np.zeros(3), np.eye(3)),
        Link("link1", m1, np.array([0.0, 0.0, -l1]), np.eye(3) * tiny),
        Link("link2", m2, np.array([0.0, 0.0, -l2]), np.eye(3) * tiny),
    )
    joints = (
        Joint("j1", 0, np.array([0.0, 1.0, 0.0]), np.zeros(3), np.eye(3),
              (-12.0, 12.0), 60.0),
        Joint("j2", 1, np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, -l1]),
              np.eye(3), (-12.0, 12.0), 60.0),
    )
    return RobotModel("double_pendulum", links, joints, q_def=np.zeros(2))


def point_mass_model(mass=3.0, feet=()) -> RobotModel:
    links = (Link("base", mass, np.zeros(3), np.eye(3) * 0.05),)
    return RobotModel("point", links, (), q_def=np.zeros(0), feet=tuple(feet))
