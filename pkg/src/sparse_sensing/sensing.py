"""Range measurement model, its Jacobian, and channel availability masking.

Channel order is fixed everywhere: station channels first (in station list
order), then relative channels (in pair list order).  Stacked precision
vectors, the batch output matrix, report grids, and heatmaps all use it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularRangeError

_MIN_RANGE = 1e-9


@dataclass(frozen=True)
class SensingTopology:
    """Fixed tracking stations plus agent-to-agent relative range links.

    ``stations[i]`` is a planar position whose channel measures the range of
    agent ``station_targets[i]``; ``relative_pairs`` are (observer, target)
    agent indices, all 0-based.
    """

    stations: tuple[tuple[float, float], ...]
    station_targets: tuple[int, ...]
    relative_pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.stations) != len(self.station_targets):
            raise ValueError("one target agent required per station")
        for i, (obs, tgt) in enumerate(self.relative_pairs):
            if obs == tgt:
                raise ValueError(f"relative pair {i} observes itself")
        if any(t < 0 for t in self.station_targets) or \
           any(o < 0 or t < 0 for o, t in self.relative_pairs):
            raise ValueError("agent indices must be non-negative")

    @property
    def num_channels(self) -> int:
        return len(self.stations) + len(self.relative_pairs)

    def max_agent_index(self) -> int:
        idx = list(self.station_targets)
        for o, t in self.relative_pairs:
            idx += [o, t]
        return max(idx)

    def validate_against(self, primary_count: int, agent_count: int) -> None:
        """Stations track primary agents; pairs observe secondaries from primaries."""
        for i, t in enumerate(self.station_targets):
            if t >= primary_count:
                raise ValueError(f"station {i} targets non-primary agent {t}")
        for i, (obs, tgt) in enumerate(self.relative_pairs):
            if obs >= primary_count:
                raise ValueError(f"relative pair {i} observer {obs} is not primary")
            if not (primary_count <= tgt < agent_count):
                raise ValueError(f"relative pair {i} target {tgt} is not secondary")


def _positions(state: np.ndarray, topology: SensingTopology) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.ndim != 1 or state.size % 2 != 0:
        raise ValueError("state must be a flat vector of (position, velocity) pairs")
    if state.size < 2 * (topology.max_agent_index() + 1):
        raise ValueError("state does not cover all agents referenced by the topology")
    return state.reshape(-1, 2)


def range_measurement(state: np.ndarray, topology: SensingTopology) -> np.ndarray:
    """Noiseless ranges in channel order; raises on zero separation."""
    pos = _positions(state, topology)
    out = np.empty(topology.num_channels)
    for i, ((sx, sz), tgt) in enumerate(zip(topology.stations, topology.station_targets)):
        r = np.hypot(pos[tgt, 0] - sx, pos[tgt, 1] - sz)
        if r < _MIN_RANGE:
            raise SingularRangeError(f"agent {tgt} coincides with station {i}")
        out[i] = r
    base = len(topology.stations)
    for j, (obs, tgt) in enumerate(topology.relative_pairs):
        r = np.hypot(pos[tgt, 0] - pos[obs, 0], pos[tgt, 1] - pos[obs, 1])
        if r < _MIN_RANGE:
            raise SingularRangeError(f"agents {obs} and {tgt} coincide")
        out[base + j] = r
    return out


def measurement_jacobian(nominal_state: np.ndarray, topology: SensingTopology) -> np.ndarray:
    """Jacobian of :func:`range_measurement` with respect to the stacked state.

    Station rows carry the unit direction from the station in the target's
    position columns; relative rows carry +/- the unit observer-to-target
    direction in the target's and observer's position columns.
    """
    pos = _positions(nominal_state, topology)
    n = np.asarray(nominal_state).size
    C = np.zeros((topology.num_channels, n))
    for i, ((sx, sz), tgt) in enumerate(zip(topology.stations, topology.station_targets)):
        dx, dz = pos[tgt, 0] - sx, pos[tgt, 1] - sz
        r = np.hypot(dx, dz)
        if r < _MIN_RANGE:
            raise SingularRangeError(f"agent {tgt} coincides with station {i}")
        C[i, 2 * tgt] = dx / r
        C[i, 2 * tgt + 1] = dz / r
    base = len(topology.stations)
    for j, (obs, tgt) in enumerate(topology.relative_pairs):
        dx, dz = pos[tgt, 0] - pos[obs, 0], pos[tgt, 1] - pos[obs, 1]
        r = np.hypot(dx, dz)
        if r < _MIN_RANGE:
            raise SingularRangeError(f"agents {obs} and {tgt} coincide")
        C[base + j, 2 * tgt] = dx / r
        C[base + j, 2 * tgt + 1] = dz / r
        C[base + j, 2 * obs] = -dx / r
        C[base + j, 2 * obs + 1] = -dz / r
    return C


@dataclass(frozen=True)
class AvailabilityMask:
    """Per-step, per-channel usability flags; True means the channel is usable."""

    values: np.ndarray  # (p, m_y) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=bool)
        if v.ndim != 2:
            raise ValueError("mask must be a (steps, channels) array")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def fully_available(cls, steps: int, channels: int) -> "AvailabilityMask":
        return cls(np.ones((steps, channels), dtype=bool))

    @classmethod
    def with_blocked(cls, steps: int, channels: int,
                     blocked: "list[tuple[int, int]]") -> "AvailabilityMask":
        """``blocked`` holds 0-based (step, channel) pairs to mark unusable."""
        v = np.ones((steps, channels), dtype=bool)
        for step, ch in blocked:
            v[step, ch] = False
        return cls(v)


def apply_mask(mask: AvailabilityMask, bounds: np.ndarray) -> np.ndarray:
    """Zero the max-precision bound of masked-out cells (forces the channel off)."""
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != mask.values.shape:
        raise ValueError(f"bounds shape {bounds.shape} != mask shape {mask.values.shape}")
    return np.where(mask.values, bounds, 0.0)
