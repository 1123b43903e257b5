"""Leaky integrate-and-fire neuron: explicit-Euler membrane integration,
threshold-and-reset spiking, refractory gating, and a single-neuron
simulator.

The membrane update is the forward-Euler discretisation of
``dv/dt = (-v + r_m * i) / tau_m`` with step ``dt_ms``; the pure leak has
the closed form ``v0 * exp(-t / tau_m)`` exposed by :func:`lif_decay` as an
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, NumericError


@dataclass(frozen=True)
class LifParams:
    """Neuron constants.

    ``rate_min_hz``/``rate_max_hz`` are carried as configuration metadata
    only; no computation here consumes them.  Capacitance is derived as
    ``tau_m / r_m`` and not stored.
    """

    v_th: float = 1.0
    v_reset: float = 0.0
    tau_m: float = 40.0
    r_m: float = 1.0
    refractory_ms: float = 1.0
    dt_ms: float = 1.0
    noise_std: float = 0.1
    rate_min_hz: float = 100.0
    rate_max_hz: float = 200.0

    def __post_init__(self):
        if self.v_th <= self.v_reset:
            raise ConfigurationError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")
        if self.tau_m <= 0:
            raise ConfigurationError(f"tau_m must be positive, got {self.tau_m}")
        if self.dt_ms <= 0:
            raise ConfigurationError(f"dt_ms must be positive, got {self.dt_ms}")
        if self.dt_ms > self.tau_m:
            raise ConfigurationError(
                f"dt_ms ({self.dt_ms}) must not exceed tau_m ({self.tau_m}) for Euler stability"
            )
        if self.refractory_ms < 0:
            raise ConfigurationError(f"refractory_ms must be >= 0, got {self.refractory_ms}")
        if self.noise_std < 0:
            raise ConfigurationError(f"noise_std must be >= 0, got {self.noise_std}")

    @property
    def c_m(self) -> float:
        return self.tau_m / self.r_m


@dataclass(frozen=True)
class LifState:
    """Membrane potential and remaining refractory time of one neuron."""

    v: float = 0.0
    refractory_left_ms: float = 0.0


def lif_step(state: LifState, i_in: float, params: LifParams) -> tuple[LifState, bool]:
    """Advance one Euler step; returns the new state and whether a spike fired.

    During the refractory window the input current is ignored and the
    potential is held at ``v_reset``.
    """
    if not math.isfinite(i_in):
        raise NumericError(f"input current must be finite, got {i_in}")
    if state.refractory_left_ms > 0:
        left = max(0.0, state.refractory_left_ms - params.dt_ms)
        return LifState(v=params.v_reset, refractory_left_ms=left), False

    v = state.v + (params.dt_ms / params.tau_m) * (-state.v + params.r_m * i_in)
    if v >= params.v_th:
        return LifState(v=params.v_reset, refractory_left_ms=params.refractory_ms), True
    return LifState(v=v, refractory_left_ms=0.0), False


def lif_decay(v0: float, t_ms: float, params: LifParams) -> float:
    """Closed-form passive decay ``v0 * exp(-t / tau_m)``."""
    if t_ms < 0:
        raise ConfigurationError(f"elapsed time must be >= 0, got {t_ms}")
    return v0 * math.exp(-t_ms / params.tau_m)


def simulate_neuron(
    i_trace, params: LifParams, v0: float = 0.0
) -> tuple[list[float], list[int]]:
    """Fold :func:`lif_step` over an input-current trace.

    Returns the post-update potential per step and the indices of spiking
    steps (strictly increasing, separated by more than the refractory
    window).
    """
    currents = list(i_trace)
    if not currents:
        raise ConfigurationError("input current trace must be non-empty")
    state = LifState(v=v0)
    v_trace: list[float] = []
    spike_times: list[int] = []
    for step, i_in in enumerate(currents):
        state, spiked = lif_step(state, float(i_in), params)
        v_trace.append(state.v)
        if spiked:
            spike_times.append(step)
    return v_trace, spike_times
