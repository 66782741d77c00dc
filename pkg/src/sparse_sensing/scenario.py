"""Scenario configuration: parsing, validation, hashing, pipeline assembly.

Config files are plain ``key = value`` text, one entry per line, ``#``
comments allowed.  Unknown keys are rejected.  Schema (defaults in
brackets):

====================  ========================================================
agents                agent kinds, comma/space separated:
                      harmonic | van_der_pol | van_der_pol_reversed
vdp_shape             Van der Pol shape parameter c (required with VdP agents)
primary_count         number of directly trackable agents (leading ones)
initial_nominal       nominal initial state, 2 numbers per agent
stations              station positions, "x z" pairs separated by commas
station_targets       1-based tracked agent per station
relative_pairs        observer:target 1-based agent pairs, e.g. "1:2 1:3"
process_noise_density scalar q; spectral density is q * I (one noise per agent,
                      entering the velocity)
initial_mean_scale    mu(0) = scale * initial_nominal
initial_cov_scale     Sigma(0) = scale^2 * diag(|mu(0)|)
period                horizon length in seconds (measurement spacing is
                      period / horizon_steps)
horizon_steps         measurements per horizon, at t_k = k * spacing [10]
substeps              fine integration substeps per measurement interval [100]
meas_jacobian_at      interval_start | measurement_time: nominal point at
                      which each step's range Jacobian is evaluated
                      [interval_start]
gamma                 absolute posterior-trace bound (exclusive with fraction)
gamma_fraction        bound = fraction * prior trace at horizon end, in (0,1)
s_max                 one or more max-precision cases, space separated
blocked               unavailable cells "channel@step", both 1-based [none]
horizons              receding-horizon repetitions [1]
reweight_epsilon_scale  epsilon = scale * max(s_max) [1e-3]
reweight_max_iters    reweighting iteration cap [5]
active_threshold      active-set threshold relative to max(s_max) [1e-6]
gap_tol, feas_tol     conic solver tolerances [1e-9, 1e-9]
seed                  RNG seed for simulation/validation [0]
====================  ========================================================
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

import numpy as np

from .discretization import (ContinuousNoiseSpec, GaussianState, build_discrete_system)
from .dynamics import (AgentKind, AgentModel, MultiAgentConfig, NominalTrajectory,
                       propagate_nominal)
from .errors import ConfigError
from .kalman import BatchSystem, build_batch
from .precision_opt import PrecisionProblem
from .sensing import (AvailabilityMask, SensingTopology, apply_mask,
                      measurement_jacobian)

_JACOBIAN_MODES = ("interval_start", "measurement_time")


@dataclass(frozen=True)
class ScenarioConfig:
    agents: tuple[str, ...]
    primary_count: int
    initial_nominal: tuple[float, ...]
    stations: tuple[tuple[float, float], ...]
    station_targets: tuple[int, ...]          # 1-based in the file, stored as given
    relative_pairs: tuple[tuple[int, int], ...]
    process_noise_density: float
    initial_mean_scale: float
    initial_cov_scale: float
    period: float
    s_max: tuple[float, ...]
    vdp_shape: float | None = None
    horizon_steps: int = 10
    substeps: int = 100
    meas_jacobian_at: str = "interval_start"
    gamma: float | None = None
    gamma_fraction: float | None = None
    blocked: tuple[tuple[int, int], ...] = ()  # (channel, step), 1-based
    horizons: int = 1
    reweight_epsilon_scale: float = 1e-3
    reweight_max_iters: int = 5
    active_threshold: float = 1e-6
    gap_tol: float = 1e-9
    feas_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        kinds = {k.value for k in AgentKind}
        for a in self.agents:
            if a not in kinds:
                raise ConfigError(f"agents: unknown kind '{a}'")
        if not 0 < self.primary_count <= len(self.agents):
            raise ConfigError("primary_count: must be in 1..len(agents)")
        if any(a != "harmonic" for a in self.agents) and \
                (self.vdp_shape is None or not self.vdp_shape > 0):
            raise ConfigError("vdp_shape: required and positive with Van der Pol agents")
        if len(self.initial_nominal) != 2 * len(self.agents):
            raise ConfigError(
                f"initial_nominal: expected {2 * len(self.agents)} values, "
                f"got {len(self.initial_nominal)}")
        if len(self.station_targets) != len(self.stations):
            raise ConfigError("station_targets: one 1-based agent per station")
        n_agents = len(self.agents)
        for i, t in enumerate(self.station_targets):
            if not 1 <= t <= self.primary_count:
                raise ConfigError(f"station_targets: entry {i + 1} ({t}) is not a "
                                  "primary agent")
        for i, (obs, tgt) in enumerate(self.relative_pairs):
            if not 1 <= obs <= self.primary_count:
                raise ConfigError(f"relative_pairs: pair {i + 1} observer {obs} is "
                                  "not a primary agent")
            if not self.primary_count < tgt <= n_agents:
                raise ConfigError(f"relative_pairs: pair {i + 1} target {tgt} is "
                                  "not a secondary agent")
        if not self.process_noise_density >= 0:
            raise ConfigError("process_noise_density: must be non-negative")
        if not self.period > 0:
            raise ConfigError("period: must be positive")
        if not self.horizon_steps >= 1:
            raise ConfigError("horizon_steps: must be at least 1")
        if not self.substeps >= 1:
            raise ConfigError("substeps: must be at least 1")
        if self.meas_jacobian_at not in _JACOBIAN_MODES:
            raise ConfigError(f"meas_jacobian_at: must be one of {_JACOBIAN_MODES}")
        if (self.gamma is None) == (self.gamma_fraction is None):
            raise ConfigError("exactly one of gamma / gamma_fraction is required")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma: must be positive")
        if self.gamma_fraction is not None and not 0 < self.gamma_fraction < 1:
            raise ConfigError("gamma_fraction: must lie strictly between 0 and 1")
        if not self.s_max or any(v <= 0 for v in self.s_max):
            raise ConfigError("s_max: at least one positive value required")
        m_y = len(self.stations) + len(self.relative_pairs)
        total_steps = self.horizon_steps * self.horizons
        for ch, step in self.blocked:
            if not 1 <= ch <= m_y:
                raise ConfigError(f"blocked: channel {ch} outside 1..{m_y}")
            if not 1 <= step <= total_steps:
                raise ConfigError(f"blocked: step {step} outside 1..{total_steps}")
        if not self.horizons >= 1:
            raise ConfigError("horizons: must be at least 1")
        if not self.reweight_epsilon_scale > 0:
            raise ConfigError("reweight_epsilon_scale: must be positive")
        if not self.reweight_max_iters >= 1:
            raise ConfigError("reweight_max_iters: must be at least 1")
        if not 0 <= self.active_threshold < 1:
            raise ConfigError("active_threshold: must lie in [0, 1)")
        for key in ("gap_tol", "feas_tol"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")

    # -- derived ----------------------------------------------------------
    @property
    def num_channels(self) -> int:
        return len(self.stations) + len(self.relative_pairs)

    @property
    def spacing(self) -> float:
        return self.period / self.horizon_steps

    @property
    def fine_step(self) -> float:
        return self.spacing / self.substeps

    def canonical_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


# -- parsing ---------------------------------------------------------------

def _floats(value: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in value.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got '{value}'") from exc


def _ints(value: str, key: str) -> tuple[int, ...]:
    nums = _floats(value, key)
    if any(v != int(v) for v in nums):
        raise ConfigError(f"{key}: expected integers, got '{value}'")
    return tuple(int(v) for v in nums)


def _pairs(value: str, key: str) -> tuple[tuple[float, float], ...]:
    out = []
    for chunk in value.split(","):
        nums = _floats(chunk, key)
        if len(nums) != 2:
            raise ConfigError(f"{key}: each comma-separated entry needs two numbers")
        out.append((nums[0], nums[1]))
    return tuple(out)


def _colon_pairs(value: str, key: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in value.replace(",", " ").split():
        parts = tok.split(":")
        if len(parts) != 2:
            raise ConfigError(f"{key}: expected entries like '1:2', got '{tok}'")
        out.append((int(parts[0]), int(parts[1])))
    return tuple(out)


def _blocked(value: str, key: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in value.replace(",", " ").split():
        parts = tok.split("@")
        if len(parts) != 2:
            raise ConfigError(f"{key}: expected entries like '1@10', got '{tok}'")
        out.append((int(parts[0]), int(parts[1])))
    return tuple(out)


_PARSERS = {
    "agents": lambda v, k: tuple(v.replace(",", " ").split()),
    "vdp_shape": lambda v, k: float(v),
    "primary_count": lambda v, k: int(v),
    "initial_nominal": _floats,
    "stations": _pairs,
    "station_targets": _ints,
    "relative_pairs": _colon_pairs,
    "process_noise_density": lambda v, k: float(v),
    "initial_mean_scale": lambda v, k: float(v),
    "initial_cov_scale": lambda v, k: float(v),
    "period": lambda v, k: float(v),
    "horizon_steps": lambda v, k: int(v),
    "substeps": lambda v, k: int(v),
    "meas_jacobian_at": lambda v, k: v.strip(),
    "gamma": lambda v, k: float(v),
    "gamma_fraction": lambda v, k: float(v),
    "s_max": _floats,
    "blocked": _blocked,
    "horizons": lambda v, k: int(v),
    "reweight_epsilon_scale": lambda v, k: float(v),
    "reweight_max_iters": lambda v, k: int(v),
    "active_threshold": lambda v, k: float(v),
    "gap_tol": lambda v, k: float(v),
    "feas_tol": lambda v, k: float(v),
    "seed": lambda v, k: int(v),
}

_REQUIRED = ("agents", "primary_count", "initial_nominal", "stations",
             "station_targets", "relative_pairs", "process_noise_density",
             "initial_mean_scale", "initial_cov_scale", "period", "s_max")


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a config file body; raises :class:`ConfigError`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"unknown key '{key}' (line {lineno})")
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (line {lineno})")
        if not value:
            continue  # empty value == leave at default
        try:
            values[key] = _PARSERS[key](value, key)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"{key}: cannot parse '{value}' ({exc})") from exc
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    return ScenarioConfig(**values)


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def reference_config() -> ScenarioConfig:
    """The three-agent tracking scenario used throughout the test suite."""
    return ScenarioConfig(
        agents=("harmonic", "van_der_pol", "van_der_pol_reversed"),
        vdp_shape=0.9,
        primary_count=1,
        initial_nominal=(3.0, 0.0, 1.7636, 0.5215, -1.7636, 0.5215),
        stations=((3.0, -3.0), (-3.0, -3.0), (-3.0, 3.0), (3.0, 3.0)),
        station_targets=(1, 1, 1, 1),
        relative_pairs=((1, 2), (1, 3)),
        process_noise_density=0.0025,
        initial_mean_scale=0.05,
        initial_cov_scale=0.1,
        period=2.0 * np.pi,
        horizon_steps=10,
        substeps=100,
        meas_jacobian_at="interval_start",
        gamma_fraction=0.1,
        s_max=(450.0, 750.0, 1200.0),
        seed=20260811,
    )


# -- pipeline ---------------------------------------------------------------

def build_agents(config: ScenarioConfig) -> MultiAgentConfig:
    models = []
    for name in config.agents:
        kind = AgentKind(name)
        c = None if kind is AgentKind.HARMONIC else config.vdp_shape
        models.append(AgentModel(kind=kind, c=c))
    return MultiAgentConfig(
        agents=tuple(models),
        primary_count=config.primary_count,
        secondary_count=len(models) - config.primary_count,
        initial_nominal=np.asarray(config.initial_nominal),
    )


def build_topology(config: ScenarioConfig) -> SensingTopology:
    topo = SensingTopology(
        stations=config.stations,
        station_targets=tuple(t - 1 for t in config.station_targets),
        relative_pairs=tuple((o - 1, t - 1) for o, t in config.relative_pairs),
    )
    topo.validate_against(config.primary_count, len(config.agents))
    return topo


def build_noise(config: ScenarioConfig, agents: MultiAgentConfig) -> ContinuousNoiseSpec:
    m_w = len(agents.agents)
    input_matrix = np.kron(np.eye(m_w), np.array([[0.0], [1.0]]))
    return ContinuousNoiseSpec(density=config.process_noise_density * np.eye(m_w),
                               input_matrix=input_matrix)


def initial_state(config: ScenarioConfig, agents: MultiAgentConfig) -> GaussianState:
    mu0 = config.initial_mean_scale * agents.initial_nominal
    cov0 = config.initial_cov_scale ** 2 * np.diag(np.abs(mu0))
    return GaussianState(mu0, cov0)


@dataclass(frozen=True)
class BatchContext:
    """Everything one horizon's optimization needs, independent of s_max."""

    config: ScenarioConfig
    agents: MultiAgentConfig
    topology: SensingTopology
    noise: ContinuousNoiseSpec
    nominal: NominalTrajectory
    batch: BatchSystem
    meas_jacobians: tuple[np.ndarray, ...]
    sample_times: np.ndarray
    gamma: float
    prior_trace: float
    horizon_index: int


def propagate_scenario_nominal(config: ScenarioConfig,
                               agents: MultiAgentConfig | None = None,
                               ) -> NominalTrajectory:
    agents = build_agents(config) if agents is None else agents
    return propagate_nominal(agents, config.horizons * config.period, config.fine_step)


def build_context(config: ScenarioConfig,
                  nominal: NominalTrajectory | None = None,
                  posterior: GaussianState | None = None,
                  horizon_index: int = 0) -> BatchContext:
    """Build the batch system for one horizon from the posterior at its start."""
    agents = build_agents(config)
    topology = build_topology(config)
    noise = build_noise(config, agents)
    if nominal is None:
        nominal = propagate_scenario_nominal(config, agents)
    if posterior is None:
        if horizon_index != 0:
            raise ValueError("later horizons need the previous posterior")
        posterior = initial_state(config, agents)
    p = config.horizon_steps
    t0 = horizon_index * config.period
    sample_times = t0 + config.spacing * np.arange(p + 1)
    system = build_discrete_system(nominal, noise, sample_times, posterior)
    eval_times = sample_times[:-1] if config.meas_jacobian_at == "interval_start" \
        else sample_times[1:]
    meas = tuple(measurement_jacobian(nominal.state_at(t), topology)
                 for t in eval_times)
    batch = build_batch(system, list(meas), posterior, horizon=p)
    prior_trace = float(np.trace(batch.mask @ batch.prior_cov @ batch.mask.T))
    gamma = config.gamma if config.gamma is not None \
        else config.gamma_fraction * prior_trace
    return BatchContext(config=config, agents=agents, topology=topology, noise=noise,
                        nominal=nominal, batch=batch, meas_jacobians=meas,
                        sample_times=sample_times, gamma=gamma,
                        prior_trace=prior_trace, horizon_index=horizon_index)


def horizon_mask(config: ScenarioConfig, horizon_index: int = 0) -> AvailabilityMask:
    """Availability mask for one horizon, from the 1-based global blocked list."""
    p = config.horizon_steps
    local = []
    for ch, step in config.blocked:
        step0 = step - 1 - horizon_index * p
        if 0 <= step0 < p:
            local.append((step0, ch - 1))
    return AvailabilityMask.with_blocked(p, config.num_channels, local)


def problem_for(context: BatchContext, s_max_value: float) -> PrecisionProblem:
    """Availability-masked precision problem for one s_max case."""
    config = context.config
    bounds = np.full((config.horizon_steps, config.num_channels), float(s_max_value))
    bounds = apply_mask(horizon_mask(config, context.horizon_index), bounds)
    return PrecisionProblem(batch=context.batch, gamma=context.gamma, s_max=bounds)


def with_overrides(config: ScenarioConfig, *, s_max=None, seed=None,
                   gap_tol=None, feas_tol=None) -> ScenarioConfig:
    """CLI-flag overrides; returns a new validated config."""
    kwargs = {}
    if s_max is not None:
        kwargs["s_max"] = tuple(float(v) for v in s_max)
    if seed is not None:
        kwargs["seed"] = int(seed)
    if gap_tol is not None:
        kwargs["gap_tol"] = float(gap_tol)
    if feas_tol is not None:
        kwargs["feas_tol"] = float(feas_tol)
    return replace(config, **kwargs) if kwargs else config
