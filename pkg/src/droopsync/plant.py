"""Physical microgrid model: droop-controlled DG dynamics, nonlinear power
flow over the line graph, local loads, and first-order power-measurement
filters.

Conventions: powers in W / VAR, voltages in V_rms, angles in rad,
frequencies in rad/s.  All plant functions are pure and operate on
per-DG numpy arrays so the engine can evaluate them once per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import ElectricalGraph

__all__ = [
    "DgParams",
    "LoadComponent",
    "LoadRamp",
    "LoadProfile",
    "DisturbanceBound",
    "PlantArrays",
    "power_flow",
    "plant_derivatives",
    "droop_steady_state",
    "sharing_ratio",
    "disturbance_rate",
]


@dataclass(frozen=True)
class DgParams:
    """Per-DG droop and filter constants.

    k_P: frequency droop (rad/s per W); k_Q: voltage droop (V per VAR);
    k_v: voltage time constant (s); tau_P/tau_Q: power measurement filter
    time constants (s).  All strictly positive.
    """

    k_P: float
    k_Q: float
    k_v: float
    tau_P: float
    tau_Q: float

    def __post_init__(self):
        for name in ("k_P", "k_Q", "k_v", "tau_P", "tau_Q"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} = {v} must be > 0")


@dataclass(frozen=True)
class LoadComponent:
    """One switchable load block at a bus (constant power when connected)."""

    P: float
    Q: float
    connected: bool = True

    def __post_init__(self):
        if self.P < 0 or self.Q < 0:
            raise ValueError("load component magnitudes must be >= 0")


@dataclass(frozen=True)
class LoadRamp:
    """Linear load ramp at one bus: adds rate*(t - t_start) W (and VAR) while
    t in [t_start, t_end], then holds the reached value."""

    bus: int
    p_rate: float
    q_rate: float
    t_start: float
    t_end: float

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError("ramp t_end must be >= t_start")

    def value_at(self, t: float) -> tuple[float, float]:
        dt = min(max(t - self.t_start, 0.0), self.t_end - self.t_start)
        return self.p_rate * dt, self.q_rate * dt


class LoadProfile:
    """Per-bus switchable load components plus optional ramps.

    Events toggle the whole bus (all components at once); individual
    component flags come from the scenario file and stay fixed during a run.
    """

    def __init__(self, components: list[list[LoadComponent]],
                 ramps: list[LoadRamp] = ()):  # components[bus-1] = list
        self.components = [list(c) for c in components]
        self.ramps = list(ramps)
        self.n = len(components)
        self._bus_on = np.ones(self.n, dtype=bool)
        for r in self.ramps:
            if not (1 <= r.bus <= self.n):
                raise ValueError(f"ramp bus {r.bus} out of range")
        self._refresh_base()

    def _refresh_base(self):
        base_p = np.zeros(self.n)
        base_q = np.zeros(self.n)
        for b in range(self.n):
            if self._bus_on[b]:
                base_p[b] = sum(c.P for c in self.components[b] if c.connected)
                base_q[b] = sum(c.Q for c in self.components[b] if c.connected)
        self._base_p, self._base_q = base_p, base_q

    def set_bus_connected(self, bus: int, on: bool) -> None:
        if not (1 <= bus <= self.n):
            raise ValueError(f"bus {bus} out of range")
        self._bus_on[bus - 1] = on
        self._refresh_base()

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Connected load (P, Q) per bus at time t.

        Without ramps the returned arrays are shared internal state; callers
        must treat them as read-only.
        """
        if not self.ramps:
            return self._base_p, self._base_q
        p = self._base_p.copy()
        q = self._base_q.copy()
        for r in self.ramps:
            if self._bus_on[r.bus - 1]:
                dp, dq = r.value_at(t)
                p[r.bus - 1] += dp
                q[r.bus - 1] += dq
        return p, q


@dataclass(frozen=True)
class DisturbanceBound:
    """A-priori bounds: Pi on |d/dt(-k_P P)| (rad/s^2), Pi_P/Pi_Q on |P|, |Q|."""

    Pi: float
    Pi_P: float = np.inf
    Pi_Q: float = np.inf

    def __post_init__(self):
        if self.Pi <= 0 or self.Pi_P <= 0 or self.Pi_Q <= 0:
            raise ValueError("disturbance bounds must be > 0")


@dataclass
class PlantArrays:
    """Vectorized per-DG parameter arrays packed from DgParams."""

    k_P: np.ndarray
    k_Q: np.ndarray
    k_v: np.ndarray
    tau_P: np.ndarray
    tau_Q: np.ndarray

    @classmethod
    def pack(cls, params: list[DgParams]) -> "PlantArrays":
        return cls(
            k_P=np.array([p.k_P for p in params]),
            k_Q=np.array([p.k_Q for p in params]),
            k_v=np.array([p.k_v for p in params]),
            tau_P=np.array([p.tau_P for p in params]),
            tau_Q=np.array([p.tau_Q for p in params]),
        )


def power_flow(delta: np.ndarray, v: np.ndarray, p_load: np.ndarray,
               q_load: np.ndarray, edges) -> tuple[np.ndarray, np.ndarray]:
    """Injected active/reactive power per DG for the current angles/voltages.

    For each line (i, j):
      P_i += G v_i (v_i - v_j cos d_ij) + B v_i v_j sin d_ij
      Q_i += B v_i (v_i - v_j cos d_ij) - G v_i v_j sin d_ij
    with d_ij = delta_i - delta_j, plus the local load.  With G = 0 the line
    term seen from i is minus the term seen from j (lossless antisymmetry).

    edges is the (src, dst, G, B) array bundle from
    ElectricalGraph.directed_arrays().
    """
    # single fused reduction: NaN/Inf propagate through the sum
    if not np.isfinite(float(delta.sum()) + float(v.sum())):
        raise FloatingPointError("non-finite plant state in power flow")
    src, dst, G, B, inc = edges
    d = delta[src] - delta[dst]
    cos_d = np.cos(d)
    sin_d = np.sin(d)
    vi = v[src]
    vj = v[dst]
    # overflow of a diverging run is reported via the finiteness contract
    # on the next step, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        common = vi * (vi - vj * cos_d)
        cross = vi * vj * sin_d
        p_line = G * common + B * cross
        q_line = B * common - G * cross
        P = inc @ p_line + p_load
        Q = inc @ q_line + q_load
    return P, Q


def plant_derivatives(delta, v, p_meas, q_meas, omega_bar, v_bar, P, Q,
                      arrays: PlantArrays):
    """Time derivatives of the DG states.

    d(delta)/dt = omega = omega_bar - k_P * p_meas
    k_v dv/dt   = -v + v_bar - k_Q * q_meas
    d(p_meas)/dt = (P - p_meas)/tau_P   (and likewise Q)

    Returns (d_delta, d_v, d_pm, d_qm); d_delta is also the DG frequency.
    """
    omega = omega_bar - arrays.k_P * p_meas
    d_v = (-v + v_bar - arrays.k_Q * q_meas) / arrays.k_v
    d_pm = (P - p_meas) / arrays.tau_P
    d_qm = (Q - q_meas) / arrays.tau_Q
    return omega, d_v, d_pm, d_qm


def droop_steady_state(params: list[DgParams], total_power: float,
                       omega_0: float) -> float:
    """Synchronized droop frequency: omega_0 - sum(P) / sum(1/k_P)."""
    inv = sum(1.0 / p.k_P for p in params)
    return omega_0 - total_power / inv


def sharing_ratio(powers: np.ndarray, params: list[DgParams],
                  threshold: float = 1e-9) -> np.ndarray:
    """Pairwise droop-weighted power ratios k_P[i]*P[i] / (k_P[j]*P[j]).

    Entries where the denominator magnitude falls below ``threshold`` are
    returned as NaN (undefined).  At droop steady state every defined entry
    equals 1.
    """
    w = np.array([p.k_P for p in params]) * np.asarray(powers, dtype=float)
    n = len(w)
    out = np.full((n, n), np.nan)
    for j in range(n):
        if abs(w[j]) > threshold:
            out[:, j] = w / w[j]
    return out


def droop_equilibrium(graph: ElectricalGraph, params: list[DgParams],
                      p_load: np.ndarray, q_load: np.ndarray,
                      omega_bar: float, v_bar: float,
                      tol: float = 1e-10, max_iter: int = 60):
    """Solve the droop-only equilibrium by damped Newton iteration.

    At equilibrium every DG runs at the common frequency
    omega_bar - total_load / sum(1/k_P) and the droop-weighted injections
    k_P[i] * P_i are equal, so the unknowns are the relative angles and the
    voltages.  Returns (delta, v, P, Q) with delta[0] = 0.

    Intended for lossless graphs (G = 0); with losses the common droop
    product is only approximate and the iteration minimizes the residual.
    """
    n = graph.n_dg
    k_P = np.array([p.k_P for p in params])
    k_Q = np.array([p.k_Q for p in params])
    edges = graph.directed_arrays()
    c = float(np.sum(p_load)) / float(np.sum(1.0 / k_P))
    p_target = c / k_P

    x = np.zeros(2 * n - 1)          # (delta[1:], v)
    x[n - 1:] = v_bar

    def residual(xv):
        delta = np.concatenate([[0.0], xv[:n - 1]])
        v = xv[n - 1:]
        P, Q = power_flow(delta, v, p_load, q_load, edges)
        return np.concatenate([(P - p_target)[1:] * k_P[1:],
                               (v - v_bar + k_Q * Q) / v_bar]), P, Q

    for _ in range(max_iter):
        f, P, Q = residual(x)
        if np.max(np.abs(f)) < tol:
            break
        J = np.empty((2 * n - 1, 2 * n - 1))
        for col in range(2 * n - 1):
            dx = np.zeros_like(x)
            dx[col] = 1e-7 * max(1.0, abs(x[col]))
            J[:, col] = (residual(x + dx)[0] - f) / dx[col]
        try:
            stepv = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            raise RuntimeError("droop equilibrium Newton step singular")
        x = x - np.clip(stepv, -0.5, 0.5)
    else:
        raise RuntimeError("droop equilibrium did not converge")
    delta = np.concatenate([[0.0], x[:n - 1]])
    v = x[n - 1:]
    P, Q = power_flow(delta, v, p_load, q_load, edges)
    return delta, v, P, Q


def disturbance_rate(p_meas: np.ndarray, k_P: np.ndarray, step: float,
                     exclude: list[tuple[float, float]] = ()) -> np.ndarray:
    """Per-DG max |d/dt(-k_P * p_meas)| estimated by finite differences.

    p_meas has shape (n_samples, n_dg) on a uniform grid of ``step`` seconds.
    Windows (t_lo, t_hi) in ``exclude`` mask out known discontinuities such
    as load-switch instants before taking the max.
    """
    d = -k_P[None, :] * np.asarray(p_meas, dtype=float)
    rate = np.abs(np.diff(d, axis=0)) / step
    t_mid = (np.arange(rate.shape[0]) + 0.5) * step
    mask = np.ones(rate.shape[0], dtype=bool)
    for lo, hi in exclude:
        mask &= ~((t_mid >= lo) & (t_mid <= hi))
    if not np.any(mask):
        return np.zeros(d.shape[1])
    return rate[mask].max(axis=0)
