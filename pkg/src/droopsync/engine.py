"""Fixed-step co-simulation of the plant and the per-agent controllers.

One forward-Euler step advances everything from a frozen snapshot: read the
delay, query the shared history buffer at t - tau(t), evaluate all
derivatives, update all states, then append the new sample to the buffer.
No agent ever reads another agent's live state, so results are independent
of agent ordering.

``plant_mode="linear"`` replaces the physical plant by the disturbance-free
integrator d(omega)/dt = d(u_c)/dt with everything else identical (same
engine, same controllers, same delay trace); it is the comparison system
for the sliding-mode equivalence check and the stability analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comms import DelayTrace, HistoryBuffer, generate_delay_trace
from .plant import PlantArrays, power_flow
from .scenario import Scenario

__all__ = ["SimulationError", "InitialState", "Trajectory", "run"]


class SimulationError(RuntimeError):
    """Simulation aborted; carries the step index and offending DG."""

    def __init__(self, msg: str, step_index: int, dg: int):
        super().__init__(msg)
        self.step_index = step_index
        self.dg = dg


@dataclass
class InitialState:
    """Plant/controller state snapshot used to chain runs."""

    delta: np.ndarray
    v: np.ndarray
    p_meas: np.ndarray
    q_meas: np.ndarray
    omega: np.ndarray | None = None  # used by linear mode


@dataclass
class Trajectory:
    """Uniform-grid record of one run plus the metadata metrics need."""

    step: float
    n_dg: int
    k_P: np.ndarray
    t: np.ndarray
    tau: np.ndarray
    omega0: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    u_c: np.ndarray
    z: np.ndarray
    S: np.ndarray
    omega_bar: np.ndarray
    p_meas: np.ndarray | None = None   # filtered measurements (not in CSV)
    q_meas: np.ndarray | None = None
    final_plant: "InitialState | None" = None

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Boolean sample mask for t in [t_lo, t_hi)."""
        return (self.t >= t_lo - 1e-12) & (self.t < t_hi - 1e-12)


def _resolve_initial(scenario: Scenario, initial: InitialState | None):
    n = scenario.n_dg
    delta = np.zeros(n)
    v = np.full(n, scenario.nominal_vbar, dtype=float)
    p_meas = np.zeros(n)
    q_meas = np.zeros(n)
    omega = None
    if scenario.initial:
        ini = scenario.initial
        if "delta_rad" in ini:
            delta = np.array(ini["delta_rad"], dtype=float)
        if "v_V" in ini:
            v = np.array(ini["v_V"], dtype=float)
        if "p_meas_W" in ini:
            p_meas = np.array(ini["p_meas_W"], dtype=float)
        if "q_meas_VAR" in ini:
            q_meas = np.array(ini["q_meas_VAR"], dtype=float)
        if "omega_rad_s" in ini:
            omega = np.array(ini["omega_rad_s"], dtype=float)
    if initial is not None:
        delta = initial.delta.copy()
        v = initial.v.copy()
        if initial.p_meas is not None:
            p_meas = initial.p_meas.copy()
        if initial.q_meas is not None:
            q_meas = initial.q_meas.copy()
        if initial.omega is not None:
            omega = initial.omega.copy()
    for name, arr in (("delta", delta), ("v", v), ("p_meas", p_meas),
                      ("q_meas", q_meas)):
        if arr.shape != (n,):
            raise ValueError(f"initial {name} must have {n} entries")
    return delta, v, p_meas, q_meas, omega


def run(scenario: Scenario, *, step: float | None = None,
        seed: int | None = None, initial: InitialState | None = None,
        delay_trace: DelayTrace | None = None) -> Trajectory:
    """Simulate one scenario and return the full-resolution trajectory.

    ``step`` and ``seed`` override the scenario values (CLI flags); a
    prebuilt ``delay_trace`` pins the delay realization exactly, which the
    oracle comparisons use to drive two runs with identical delays.
    """
    if scenario.gains is None:
        raise ValueError("scenario has no gains; synthesize first")
    h = float(step if step is not None else scenario.step)
    if h <= 0:
        raise ValueError("step must be > 0")
    n = scenario.n_dg
    n_steps = int(round(scenario.duration / h))
    n_samples = n_steps + 1
    linear = scenario.plant_mode == "linear"

    from .topology import follower_matrix, pinned_matrix

    Kc = pinned_matrix(scenario.comm, scenario.gains)
    Kbar = follower_matrix(scenario.comm, scenario.gains)
    pinvec = Kc @ np.ones(n)
    m = np.array(scenario.gains.m if scenario.gains.m
                 else [0.0] * n, dtype=float)
    bl = scenario.boundary_layer

    arrays = PlantArrays.pack(scenario.dg_params)
    edges = scenario.electrical.directed_arrays()
    loads = scenario.load_profile()

    if delay_trace is None:
        delay_trace = generate_delay_trace(
            scenario.delay_bounds, scenario.delay_step, scenario.duration,
            scenario.delay_seed if seed is None else seed,
            tau0=scenario.delay_tau0)
    t_grid = np.arange(n_samples) * h
    idx = np.clip((t_grid / delay_trace.step + 1e-9).astype(int), 0,
                  len(delay_trace.samples) - 1)
    tau_arr = delay_trace.samples[idx]

    # precomputed set-point schedule (events are known up front)
    omega0_arr = np.full(n_samples, scenario.nominal_omega)
    for ev in scenario.events:
        if ev.kind == "set_omega0":
            omega0_arr[t_grid >= ev.t - 1e-12] = ev.value

    delta, v, p_meas, q_meas, omega_lin = _resolve_initial(scenario, initial)
    vbar = np.full(n, scenario.nominal_vbar)
    u_c = np.full(n, scenario.nominal_omega)
    z = np.zeros(n)
    omega_bar = np.full(n, scenario.nominal_omega)
    enabled = False
    if linear:
        if omega_lin is None:
            omega_lin = omega_bar - arrays.k_P * p_meas
        omega = omega_lin.astype(float)
    else:
        omega = omega_bar - arrays.k_P * p_meas
    z[:] = omega

    cap = int(np.ceil(scenario.delay_bounds.tau_star / h)) + 8
    snap = np.empty(2 * n)
    snap[:n] = omega
    snap[n:] = omega_bar if scenario.couple_omega_bar else u_c
    buffer = HistoryBuffer(dim=2 * n, capacity=cap, initial=snap)
    buffer.append(0.0, snap)

    rec = {name: np.empty((n_samples, n)) for name in
           ("delta", "omega", "v", "P", "Q", "u_c", "z", "S", "omega_bar",
            "p_meas", "q_meas")}

    events = list(scenario.events)
    ev_i = 0
    zeros = np.zeros(n)
    # what the k_bar coupling acts on: the internal consensus state (default)
    # or the transmitted control input (input-consensus variant, which pins
    # the relay integrators and thereby enforces steady-state power sharing)
    couple_input = scenario.couple_omega_bar

    for k in range(n_samples):
        t = t_grid[k]

        # working-point events scheduled at or before this instant
        while ev_i < len(events) and events[ev_i].t <= t + 1e-12:
            ev = events[ev_i]
            ev_i += 1
            if ev.kind == "activate_freq_sc":
                if not linear:
                    omega = omega_bar - arrays.k_P * p_meas
                z = omega.copy()
                u_c = omega_bar.copy()
                enabled = True
            elif ev.kind == "set_omega0":
                pass  # already folded into omega0_arr
            elif ev.kind == "connect_load":
                loads.set_bus_connected(ev.bus, ev.connected)
            elif ev.kind == "set_vbar":
                vbar[ev.bus - 1] = ev.value

        if linear:
            P = Q = zeros
        else:
            p_load, q_load = loads.at(t)
            try:
                P, Q = power_flow(delta, v, p_load, q_load, edges)
            except FloatingPointError as exc:
                bad = int(np.argmax(~np.isfinite(delta + v))) + 1
                raise SimulationError(
                    f"non-finite plant state at step {k} (t={t:.6f}s, "
                    f"DG {bad}): {exc}", k, bad) from exc
            omega = omega_bar - arrays.k_P * p_meas

        if not np.isfinite(float(omega.sum())):
            bad = int(np.argmax(~np.isfinite(omega))) + 1
            raise SimulationError(
                f"non-finite frequency at step {k} (t={t:.6f}s, DG {bad})",
                k, bad)

        if not enabled:
            z = omega.copy()
        S = omega - z

        rec["delta"][k] = delta
        rec["omega"][k] = omega
        rec["v"][k] = v
        rec["P"][k] = P
        rec["Q"][k] = Q
        rec["u_c"][k] = u_c
        rec["z"][k] = z
        rec["S"][k] = S
        rec["omega_bar"][k] = omega_bar
        rec["p_meas"][k] = p_meas
        rec["q_meas"][k] = q_meas

        if k == n_steps:
            break

        # delayed snapshot shared by every agent; the 1 ns bias keeps
        # grid-aligned delays resolving to the exact sample despite
        # floating-point rounding of t - tau
        delayed = buffer.query(t - tau_arr[k] + 1e-9)
        om_d = delayed[:n]
        uc_d = delayed[n:]

        if enabled:
            if scenario.delayed_leader:
                j = min(max(int((t - tau_arr[k]) / h + 1e-9), 0), n_samples - 1)
                omega0_now = omega0_arr[j]
            else:
                omega0_now = omega0_arr[k]
            du_c = -(Kc @ om_d) + omega0_now * pinvec - (Kbar @ uc_d)
            if bl > 0.0:
                du_d = -m * np.clip(S / bl, -1.0, 1.0)
            else:
                du_d = -m * np.sign(S)
        else:
            du_c = zeros
            du_d = zeros

        if linear:
            if enabled:
                omega = omega + h * (du_c + du_d)
        else:
            d_v = (-v + vbar - arrays.k_Q * q_meas) / arrays.k_v
            delta = delta + h * omega
            v = v + h * d_v
            p_meas = p_meas + h * (P - p_meas) / arrays.tau_P
            q_meas = q_meas + h * (Q - q_meas) / arrays.tau_Q

        if enabled:
            u_c = u_c + h * du_c
            z = z + h * du_c
            omega_bar = omega_bar + h * (du_c + du_d)

        if not linear:
            omega = omega_bar - arrays.k_P * p_meas
        snap[:n] = omega
        snap[n:] = omega_bar if couple_input else u_c
        buffer.append(t_grid[k + 1], snap)

    traj = Trajectory(step=h, n_dg=n, k_P=arrays.k_P.copy(), t=t_grid,
                      tau=tau_arr.copy(), omega0=omega0_arr,
                      delta=rec["delta"], omega=rec["omega"], v=rec["v"],
                      P=rec["P"], Q=rec["Q"], u_c=rec["u_c"], z=rec["z"],
                      S=rec["S"], omega_bar=rec["omega_bar"],
                      p_meas=rec["p_meas"], q_meas=rec["q_meas"])
    # attach an exact final snapshot for run chaining
    traj.final_plant = InitialState(delta=delta.copy(), v=v.copy(),
                                    p_meas=p_meas.copy(), q_meas=q_meas.copy(),
                                    omega=omega.copy())
    return traj
