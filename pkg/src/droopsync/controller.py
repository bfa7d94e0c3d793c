"""Per-agent secondary frequency controller: delayed linear consensus plus
integral sliding-mode rejection.

The smooth input fed to the plant is omega_bar; only its derivative carries
the relay discontinuity.  These functions define the per-agent semantics;
the engine evaluates the algebraically identical vectorized form and a test
cross-checks the two.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import logging

import numpy as np

from .topology import CommTopology, GainSet

__all__ = [
    "AgentState",
    "LeaderReference",
    "sign_select",
    "consensus_rate",
    "ism_rate",
    "agent_step",
    "verify_gain_condition",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LeaderReference:
    """Frequency set-point broadcast by the virtual node 0 (rad/s, > 0)."""

    omega_0: float

    def __post_init__(self):
        if not np.isfinite(self.omega_0) or self.omega_0 <= 0:
            raise ValueError("omega_0 must be > 0")


@dataclass(frozen=True)
class AgentState:
    """Controller state of one agent.

    u_c: linear consensus component; z: sliding-reference integrator;
    omega_bar: the smooth control input; enabled: secondary control active.
    """

    u_c: float
    z: float
    omega_bar: float
    enabled: bool = False

    @classmethod
    def idle(cls, nominal: float) -> "AgentState":
        return cls(u_c=nominal, z=nominal, omega_bar=nominal, enabled=False)

    def activate(self, omega_now: float) -> "AgentState":
        """Close the loop: rebase z to the measured frequency and start the
        consensus component from the current input."""
        return AgentState(u_c=self.omega_bar, z=omega_now,
                          omega_bar=self.omega_bar, enabled=True)


def sign_select(s: float, boundary_layer: float = 0.0) -> float:
    """Relay with the 0 selection at s = 0.

    With boundary_layer > 0 the relay is linear inside the layer; the default
    is the exact discontinuous relay.
    """
    if boundary_layer > 0.0:
        return float(np.clip(s / boundary_layer, -1.0, 1.0))
    if s > 0.0:
        return 1.0
    if s < 0.0:
        return -1.0
    return 0.0


def consensus_rate(i: int, topology: CommTopology, gains: GainSet,
                   omega_delayed: dict[int, float],
                   u_c_delayed: dict[int, float],
                   leader: LeaderReference) -> float:
    """du_c/dt for agent i from the delayed snapshot.

    omega_delayed and u_c_delayed map DG index -> value at t - tau(t) and
    must contain agent i itself and all its neighbors.  The leader value
    (j = 0) is the undelayed reference since it is piecewise constant.
    """
    rate = 0.0
    for (a, j), kij in gains.k.items():
        if a != i:
            continue
        other = leader.omega_0 if j == 0 else omega_delayed[j]
        rate -= kij * (omega_delayed[i] - other)
    for (a, j), kbar in gains.k_bar.items():
        if a != i:
            continue
        rate -= kbar * (u_c_delayed[i] - u_c_delayed[j])
    return rate


def ism_rate(s: float, m_i: float, boundary_layer: float = 0.0) -> float:
    """Relay component du_d/dt = -m_i * SIGN(s)."""
    if m_i <= 0:
        raise ValueError("m_i must be > 0")
    return -m_i * sign_select(s, boundary_layer)


def agent_step(agent: AgentState, omega_i: float, du_c: float, du_d: float,
               h: float, nominal: float) -> tuple[AgentState, float]:
    """One forward-Euler update of an agent.

    Returns the new state and the sliding variable S = omega_i - z computed
    after the update.  Disabled agents hold omega_bar at the nominal input.
    """
    if not agent.enabled:
        idle = replace(agent, u_c=nominal, z=omega_i, omega_bar=nominal)
        return idle, 0.0
    new = AgentState(
        u_c=agent.u_c + h * du_c,
        z=agent.z + h * du_c,
        omega_bar=agent.omega_bar + h * (du_c + du_d),
        enabled=True,
    )
    return new, omega_i - new.z


def verify_gain_condition(m: np.ndarray, Pi: float) -> np.ndarray:
    """Check the reaching condition m_i > Pi per DG (strict).

    A failed entry is a configuration warning, not an error: simulations with
    insufficient relay amplitude are legitimate (they demonstrate the bound
    being violated).
    """
    m = np.asarray(m, dtype=float)
    ok = m > Pi
    if not np.all(ok):
        bad = np.where(~ok)[0] + 1
        log.warning("relay amplitude <= disturbance-rate bound at DG %s "
                    "(m=%s, Pi=%g); sliding may not hold", bad.tolist(),
                    m.tolist(), Pi)
    return ok
