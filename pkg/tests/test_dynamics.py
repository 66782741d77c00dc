import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_sensing.dynamics import (AgentKind, AgentModel, MultiAgentConfig,
                                     jacobian, propagate_nominal, vector_field)
from sparse_sensing.errors import DivergenceError
from sparse_sensing.scenario import build_agents, reference_config

C = 0.9
X0 = np.array([3.0, 0.0, 1.7636, 0.5215, -1.7636, 0.5215])


def harmonic_only():
    return MultiAgentConfig(agents=(AgentModel(AgentKind.HARMONIC),),
                            primary_count=1, secondary_count=0,
                            initial_nominal=np.array([3.0, 0.0]))


@pytest.fixture(scope="module")
def agents():
    return build_agents(reference_config())


def test_agent_model_requires_shape_parameter():
    with pytest.raises(ValueError):
        AgentModel(AgentKind.VAN_DER_POL)
    with pytest.raises(ValueError):
        AgentModel(AgentKind.VAN_DER_POL_REVERSED, c=-1.0)
    AgentModel(AgentKind.HARMONIC)  # no parameter needed


def test_config_dimension_checks():
    with pytest.raises(ValueError):
        MultiAgentConfig(agents=(AgentModel(AgentKind.HARMONIC),), primary_count=1,
                         secondary_count=1, initial_nominal=np.zeros(2))
    with pytest.raises(ValueError):
        MultiAgentConfig(agents=(AgentModel(AgentKind.HARMONIC),), primary_count=1,
                         secondary_count=0, initial_nominal=np.zeros(4))


def test_vector_field_harmonic_point():
    out = vector_field(np.array([1.0, 0.0]), harmonic_only())
    np.testing.assert_allclose(out, [0.0, -1.0])


def test_vector_field_vdp_origin_velocity(agents):
    # x2 = 0 kills both nonlinear terms: (xdot, zdot) = (z, z)
    state = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 0.0])
    out = vector_field(state, agents)
    np.testing.assert_allclose(out[2:4], [1.0, 1.0])


def test_vector_field_reference_fixture(agents):
    # hand evaluation, agent by agent, frozen values
    x2, z2 = 1.7636, 0.5215
    zdot2 = (1.0 - x2 * x2 / (C * C)) * z2 - x2 / C
    expected = np.array([0.0, -3.0, 0.5215, zdot2, -0.5215, zdot2])
    np.testing.assert_allclose(expected[3], -3.440541489679012, rtol=1e-12)
    np.testing.assert_allclose(vector_field(X0, agents), expected, rtol=0, atol=1e-15)


def test_vector_field_dimension_error(agents):
    with pytest.raises(ValueError):
        vector_field(np.zeros(5), agents)


def test_jacobian_harmonic_block():
    J = jacobian(np.array([2.7, -1.1]), harmonic_only())
    np.testing.assert_allclose(J, [[0.0, 1.0], [-1.0, 0.0]])


def test_jacobian_vdp_block_at_origin(agents):
    J = jacobian(np.zeros(6), agents)
    np.testing.assert_allclose(J[2:4, 2:4], [[0.0, 1.0], [-1.0 / C, 1.0]])
    # mirrored variant flips both the velocity sign and the stiffness sign
    np.testing.assert_allclose(J[4:6, 4:6], [[0.0, -1.0], [1.0 / C, 1.0]])


def test_jacobian_cross_agent_blocks_zero(agents, rng):
    state = rng.normal(size=6)
    J = jacobian(state, agents)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert np.all(J[2 * i:2 * i + 2, 2 * j:2 * j + 2] == 0.0)


def _fd_jacobian(state, config, h=1e-6):
    n = state.size
    out = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        out[:, j] = (vector_field(state + e, config) -
                     vector_field(state - e, config)) / (2 * h)
    return out


def test_jacobian_matches_finite_differences(agents, rng):
    for _ in range(100):
        state = rng.uniform(-3, 3, size=6)
        J = jacobian(state, agents)
        Jfd = _fd_jacobian(state, agents)
        err = np.abs(J - Jfd).max() / max(np.abs(J).max(), 1.0)
        assert err <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_jacobian_finite_difference_property(vals):
    agents = build_agents(reference_config())
    state = np.array(vals)
    err = np.abs(jacobian(state, agents) - _fd_jacobian(state, agents)).max()
    assert err <= 1e-5 * max(np.abs(state).max() ** 2, 1.0)


def test_propagate_harmonic_closed_form():
    traj = propagate_nominal(harmonic_only(), 2 * np.pi, 1e-3)
    exact_x = 3 * np.cos(traj.times)
    exact_z = -3 * np.sin(traj.times)
    assert np.abs(traj.states[:, 0] - exact_x).max() <= 1e-6
    assert np.abs(traj.states[:, 1] - exact_z).max() <= 1e-6


def test_propagate_harmonic_energy_conservation():
    traj = propagate_nominal(harmonic_only(), 2 * np.pi, 1e-3)
    energy = traj.states[:, 0] ** 2 + traj.states[:, 1] ** 2
    assert np.abs(energy - 9.0).max() <= 1e-8


def test_reference_orbits_close_after_one_period(agents):
    traj = propagate_nominal(agents, 2 * np.pi, 2 * np.pi / 1000)
    assert np.linalg.norm(traj.states[-1] - traj.states[0]) < 0.05
    assert np.abs(traj.states).max() < 4.0
    # the reversed agent stays the exact mirror image of the plain one
    np.testing.assert_allclose(traj.states[:, 4], -traj.states[:, 2], atol=1e-12)
    np.testing.assert_allclose(traj.states[:, 5], traj.states[:, 3], atol=1e-12)


def test_rk4_convergence_order(agents):
    t_end = 2 * np.pi / 10
    end_states = [propagate_nominal(agents, t_end, h).states[-1]
                  for h in (t_end / 50, t_end / 100, t_end / 200)]
    e1 = np.linalg.norm(end_states[0] - end_states[2])
    e2 = np.linalg.norm(end_states[1] - end_states[2])
    order = np.log2(e1 / e2) - 0.0  # e(h)/e(h/2) ~ 2^4 up to the reference error
    assert order >= 3.5


def test_propagate_diverging_state_raises():
    cfg = MultiAgentConfig(agents=(AgentModel(AgentKind.VAN_DER_POL, c=0.9),),
                           primary_count=1, secondary_count=0,
                           initial_nominal=np.array([1e200, 0.0]))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError):
            propagate_nominal(cfg, 1.0, 0.01)


def test_grid_contains_endpoint(agents):
    traj = propagate_nominal(agents, 1.0, 0.3)  # 0.3 does not divide 1.0
    assert traj.times[0] == 0.0
    assert traj.times[-1] == 1.0
    steps = np.diff(traj.times)
    np.testing.assert_allclose(steps, steps[0])
