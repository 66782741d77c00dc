"""Planar multi-agent trajectory models and their linearizations.

Each agent carries two states, position ``x`` and velocity ``z``, stacked as
``[x1, z1, x2, z2, ...]``.  Three oscillator kinds are supported:

* harmonic:      xdot = z,  zdot = -x
* van_der_pol:   xdot = z,  zdot = (1 - x^2/c^2) z - x/c
* van_der_pol_reversed: the mirror image of van_der_pol about the vertical
  axis, traversed in the opposite sense: xdot = -z,
  zdot = (1 - x^2/c^2) z + x/c.  Starting it from the mirrored initial point
  of a van_der_pol agent keeps the two orbits exact reflections of each
  other, so both close after the same period.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError


class AgentKind(enum.Enum):
    HARMONIC = "harmonic"
    VAN_DER_POL = "van_der_pol"
    VAN_DER_POL_REVERSED = "van_der_pol_reversed"


_VDP_KINDS = (AgentKind.VAN_DER_POL, AgentKind.VAN_DER_POL_REVERSED)


@dataclass(frozen=True)
class AgentModel:
    """One agent's dynamics; ``c`` is the Van der Pol shape parameter."""

    kind: AgentKind
    c: float | None = None

    def __post_init__(self):
        if self.kind in _VDP_KINDS:
            if self.c is None or not self.c > 0:
                raise ValueError(f"{self.kind.value} agent requires shape parameter c > 0")


@dataclass(frozen=True)
class MultiAgentConfig:
    """Ordered agents plus the nominal initial state.

    Agent order fixes the state stacking ``[x1, z1, x2, z2, ...]``; the first
    ``primary_count`` agents are directly trackable, the rest are secondary.
    """

    agents: tuple[AgentModel, ...]
    primary_count: int
    secondary_count: int
    initial_nominal: np.ndarray

    def __post_init__(self):
        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        if len(agents) != self.primary_count + self.secondary_count:
            raise ValueError(
                f"{len(agents)} agents but primary_count + secondary_count = "
                f"{self.primary_count + self.secondary_count}")
        x0 = np.asarray(self.initial_nominal, dtype=float).copy()
        if x0.shape != (2 * len(agents),):
            raise ValueError(
                f"initial_nominal has shape {x0.shape}, expected ({2 * len(agents)},)")
        x0.setflags(write=False)
        object.__setattr__(self, "initial_nominal", x0)

    @property
    def n(self) -> int:
        return 2 * len(self.agents)


@dataclass(frozen=True)
class NominalTrajectory:
    """Noise-free trajectory sampled on a uniform grid; states[0] == x(0)."""

    times: np.ndarray
    states: np.ndarray
    step: float
    config: MultiAgentConfig

    def __post_init__(self):
        self.times.setflags(write=False)
        self.states.setflags(write=False)

    def index_at(self, t: float) -> int:
        """Grid index of time ``t``; raises if t is not (close to) a grid point."""
        i = int(round(t / self.step))
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the nominal grid")
        return i

    def state_at(self, t: float) -> np.ndarray:
        return self.states[self.index_at(t)]


def vector_field(state: np.ndarray, config: MultiAgentConfig) -> np.ndarray:
    """Time derivative of the stacked state under the noise-free dynamics."""
    state = np.asarray(state, dtype=float)
    if state.shape != (config.n,):
        raise ValueError(f"state has shape {state.shape}, expected ({config.n},)")
    out = np.empty_like(state)
    for i, agent in enumerate(config.agents):
        x, z = state[2 * i], state[2 * i + 1]
        if agent.kind is AgentKind.HARMONIC:
            out[2 * i] = z
            out[2 * i + 1] = -x
        elif agent.kind is AgentKind.VAN_DER_POL:
            c = agent.c
            out[2 * i] = z
            out[2 * i + 1] = (1 - x * x / (c * c)) * z - x / c
        else:
            c = agent.c
            out[2 * i] = -z
            out[2 * i + 1] = (1 - x * x / (c * c)) * z + x / c
    return out


def jacobian(state: np.ndarray, config: MultiAgentConfig) -> np.ndarray:
    """Block-diagonal Jacobian of :func:`vector_field` at ``state``."""
    state = np.asarray(state, dtype=float)
    if state.shape != (config.n,):
        raise ValueError(f"state has shape {state.shape}, expected ({config.n},)")
    J = np.zeros((config.n, config.n))
    for i, agent in enumerate(config.agents):
        x, z = state[2 * i], state[2 * i + 1]
        r, c_ = 2 * i, 2 * i
        if agent.kind is AgentKind.HARMONIC:
            J[r, c_ + 1] = 1.0
            J[r + 1, c_] = -1.0
        elif agent.kind is AgentKind.VAN_DER_POL:
            c = agent.c
            J[r, c_ + 1] = 1.0
            J[r + 1, c_] = -2 * x * z / (c * c) - 1 / c
            J[r + 1, c_ + 1] = 1 - x * x / (c * c)
        else:
            c = agent.c
            J[r, c_ + 1] = -1.0
            J[r + 1, c_] = -2 * x * z / (c * c) + 1 / c
            J[r + 1, c_ + 1] = 1 - x * x / (c * c)
    return J


def rk4_step(field, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h``."""
    k1 = field(y)
    k2 = field(y + 0.5 * h * k1)
    k3 = field(y + 0.5 * h * k2)
    k4 = field(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate_nominal(config: MultiAgentConfig, t_end: float, h: float) -> NominalTrajectory:
    """Integrate the noise-free dynamics from x(0) with fixed-step RK4.

    The step is adjusted to the nearest value that divides ``t_end`` evenly so
    the grid contains ``t_end`` exactly.
    """
    if not (t_end > 0 and h > 0):
        raise ValueError("t_end and h must be positive")
    n_steps = max(1, int(round(t_end / h)))
    times = np.linspace(0.0, t_end, n_steps + 1)
    step = t_end / n_steps
    states = np.empty((n_steps + 1, config.n))
    states[0] = config.initial_nominal
    y = states[0].copy()
    for k in range(n_steps):
        y = rk4_step(lambda s: vector_field(s, config), y, step)
        if not np.isfinite(y).all():
            raise DivergenceError(f"nominal state non-finite at t={times[k + 1]:.6g}")
        states[k + 1] = y
    return NominalTrajectory(times=times, states=states, step=step, config=config)
