import numpy as np
import pytest

from sparse_sensing.discretization import (ContinuousNoiseSpec, GaussianState,
                                           build_discrete_system,
                                           discretize_process_noise,
                                           propagate_mean_cov, state_transition)
from sparse_sensing.dynamics import (AgentKind, AgentModel, MultiAgentConfig,
                                     jacobian, propagate_nominal)
from sparse_sensing.errors import DiscretizationError
from sparse_sensing.scenario import (build_agents, build_noise, initial_state,
                                     reference_config)


@pytest.fixture(scope="module")
def ref():
    config = reference_config()
    agents = build_agents(config)
    nominal = propagate_nominal(agents, config.period, config.fine_step)
    return config, agents, nominal


def harmonic_nominal(h=1e-3):
    cfg = MultiAgentConfig(agents=(AgentModel(AgentKind.HARMONIC),),
                           primary_count=1, secondary_count=0,
                           initial_nominal=np.array([3.0, 0.0]))
    return propagate_nominal(cfg, 2 * np.pi, h)


def test_harmonic_stm_is_rotation():
    nominal = harmonic_nominal()
    t0, t1 = nominal.times[500], nominal.times[1700]
    delta = t1 - t0
    expected = np.array([[np.cos(delta), np.sin(delta)],
                         [-np.sin(delta), np.cos(delta)]])
    phi = state_transition(nominal, t0, t1)
    assert np.abs(phi - expected).max() <= 1e-8


def test_stm_identity_at_zero_interval(ref):
    _, _, nominal = ref
    phi = state_transition(nominal, 1.0 * nominal.step * 100, 1.0 * nominal.step * 100)
    np.testing.assert_allclose(phi, np.eye(6))


def test_stm_semigroup_property(ref, rng):
    _, _, nominal = ref
    grid = nominal.times
    for _ in range(5):
        i0, i1, i2 = np.sort(rng.choice(len(grid), size=3, replace=False))
        t0, t1, t2 = grid[i0], grid[i1], grid[i2]
        full = state_transition(nominal, t0, t2)
        composed = state_transition(nominal, t1, t2) @ state_transition(nominal, t0, t1)
        assert np.abs(full - composed).max() <= 1e-7


def test_stm_liouville_determinant(ref, rng):
    config, agents, nominal = ref
    for _ in range(3):
        i0, i1 = np.sort(rng.choice(len(nominal.times) // 2, size=2, replace=False))
        i1 += 100
        t0, t1 = nominal.times[i0], nominal.times[i1]
        phi = state_transition(nominal, t0, t1)
        traces = np.array([np.trace(jacobian(s, agents))
                           for s in nominal.states[i0:i1 + 1]])
        integral = np.trapezoid(traces, dx=nominal.step)
        assert abs(np.linalg.det(phi) - np.exp(integral)) <= 1e-4 * np.exp(integral)


def test_stm_outside_grid_rejected(ref):
    _, _, nominal = ref
    with pytest.raises(ValueError):
        state_transition(nominal, 0.0, 100.0)
    with pytest.raises(ValueError):
        state_transition(nominal, 0.0123456, 1.0)  # off-grid point


def test_noiseless_propagation_matches_stm():
    nominal = harmonic_nominal()
    noise = ContinuousNoiseSpec(density=np.zeros((1, 1)),
                                input_matrix=np.array([[0.0], [1.0]]))
    sigma0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    series = propagate_mean_cov(GaussianState(np.array([1.0, -1.0]), sigma0),
                                nominal, noise, 2 * np.pi)
    t_mid = nominal.times[len(nominal.times) // 2]
    t_idx = nominal.index_at(t_mid)
    phi = state_transition(nominal, 0.0, t_mid)
    np.testing.assert_allclose(series.covs[t_idx], phi @ sigma0 @ phi.T, atol=1e-9)
    # rotation preserves the trace of the covariance
    np.testing.assert_allclose(np.trace(series.covs[t_idx]), np.trace(sigma0),
                               atol=1e-9)


def test_mean_propagation_is_linear(ref):
    # scaling by a power of two commutes with every rounding, so the scaled
    # propagation must match bit for bit
    config, agents, nominal = ref
    noise = build_noise(config, agents)
    mu = np.array([0.1, 0.0, -0.2, 0.05, 0.3, -0.1])
    cov = 1e-4 * np.eye(6)
    s1 = propagate_mean_cov(GaussianState(mu, cov), nominal, noise, config.period)
    s2 = propagate_mean_cov(GaussianState(2.0 * mu, cov), nominal, noise, config.period)
    assert np.array_equal(s2.means, 2.0 * s1.means)


def test_reference_envelope_grows(ref):
    config, agents, nominal = ref
    noise = build_noise(config, agents)
    series = propagate_mean_cov(initial_state(config, agents), nominal, noise,
                                config.period)
    traces = np.trace(series.covs, axis1=1, axis2=2)
    assert traces[-1] > 10 * traces[0]
    # the harmonic block injects q per unit time and rotation preserves trace,
    # so its sub-trace grows monotonically; the Van der Pol blocks may contract
    harmonic = series.covs[:, 0, 0] + series.covs[:, 1, 1]
    assert np.all(np.diff(harmonic) > 0)


def test_discretize_zero_noise_gives_zero():
    covs = [np.eye(2)] * 4
    transitions = [np.eye(2)] * 3
    qs = discretize_process_noise(covs, transitions)
    for q in qs:
        np.testing.assert_allclose(q, 0.0, atol=1e-15)


def test_discretize_scalar_wiener_increment():
    # xdot = 0 with unit input: Sigma(t) = q t, so Q_k = q dt
    q, dt = 0.3, 0.25
    covs = [np.array([[q * (k * dt)]]) for k in range(5)]
    transitions = [np.eye(1)] * 4
    qs = discretize_process_noise(covs, transitions)
    for qk in qs:
        np.testing.assert_allclose(qk, [[q * dt]], rtol=1e-12)


def test_discretize_inconsistent_grid_raises():
    covs = [np.eye(2), 0.5 * np.eye(2)]   # shrinking under identity transition
    with pytest.raises(DiscretizationError):
        discretize_process_noise(covs, [np.eye(2)])


def test_reference_process_noise_psd_and_consistent(ref):
    config, agents, nominal = ref
    noise = build_noise(config, agents)
    init = initial_state(config, agents)
    times = config.spacing * np.arange(config.horizon_steps + 1)
    system = build_discrete_system(nominal, noise, times, init)
    series = propagate_mean_cov(init, nominal, noise, config.period)
    for k in range(system.num_steps):
        w = np.linalg.eigvalsh(system.noise_covs[k])
        assert w.min() >= 0.0
        # the difference identity reproduces the propagated covariance
        i0 = nominal.index_at(times[k])
        i1 = nominal.index_at(times[k + 1])
        recon = system.transitions[k] @ series.covs[i0] @ system.transitions[k].T \
            + system.noise_covs[k]
        assert np.abs(recon - series.covs[i1]).max() <= 1e-8


def test_reference_qk_matches_quadrature_oracle(ref):
    """Composite-Simpson quadrature of Phi B Q B^T Phi^T reproduces Q_k."""
    config, agents, nominal = ref
    noise = build_noise(config, agents)
    init = initial_state(config, agents)
    times = config.spacing * np.arange(config.horizon_steps + 1)
    system = build_discrete_system(nominal, noise, times, init)
    bqb = noise.input_matrix @ noise.density @ noise.input_matrix.T
    nodes = 50  # Simpson interval count per measurement step (even)
    for k in range(3):  # three steps keep the oracle affordable
        t0, t1 = times[k], times[k + 1]
        taus = np.linspace(t0, t1, nodes + 1)
        integrand = []
        for tau in taus:
            tau = nominal.times[nominal.index_at(tau)]
            phi = state_transition(nominal, tau, t1)
            integrand.append(phi @ bqb @ phi.T)
        integrand = np.array(integrand)
        h = (t1 - t0) / nodes
        simpson = integrand[0] + integrand[-1] \
            + 4 * integrand[1:-1:2].sum(axis=0) + 2 * integrand[2:-1:2].sum(axis=0)
        simpson *= h / 3
        rel = np.abs(simpson - system.noise_covs[k]).max() / \
            np.abs(system.noise_covs[k]).max()
        assert rel <= 1e-4


def test_singular_initial_covariance_tolerated(ref):
    config, agents, nominal = ref
    init = initial_state(config, agents)
    assert np.min(np.diag(init.cov)) == 0.0  # the scenario really is singular
    noise = build_noise(config, agents)
    times = config.spacing * np.arange(config.horizon_steps + 1)
    system = build_discrete_system(nominal, noise, times, init)
    assert np.isfinite(system.noise_covs).all()
