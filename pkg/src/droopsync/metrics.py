"""Summary metrics over simulated trajectories: frequency tracking error,
droop-weighted power sharing, sliding-variable excursions, settling times."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Trajectory

__all__ = ["WindowMetrics", "window_metrics", "sharing_error",
           "settling_time", "summarize"]


@dataclass(frozen=True)
class WindowMetrics:
    t_lo: float
    t_hi: float
    max_freq_error: float
    max_sharing_error: float
    max_abs_s: float


def sharing_error(P: np.ndarray, k_P: np.ndarray) -> float:
    """Worst relative deviation of P_i/P_j from the droop-implied ratio.

    The expected ratio is k_P[j]/k_P[i]; the error is
    |P_i/P_j - k_P[j]/k_P[i]| / (k_P[j]/k_P[i]), maximized over ordered
    pairs and samples.  P has shape (n_samples, n_dg).
    """
    P = np.atleast_2d(P)
    n = P.shape[1]
    worst = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            expected = k_P[j] / k_P[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = P[:, i] / P[:, j]
            err = np.abs(ratio - expected) / expected
            err = err[np.isfinite(err)]
            if err.size:
                worst = max(worst, float(err.max()))
    return worst


def window_metrics(traj: Trajectory, t_lo: float, t_hi: float) -> WindowMetrics:
    mask = traj.window(t_lo, t_hi)
    if not np.any(mask):
        raise ValueError(f"window [{t_lo}, {t_hi}) contains no samples")
    freq_err = np.abs(traj.omega[mask] - traj.omega0[mask, None])
    return WindowMetrics(
        t_lo=t_lo, t_hi=t_hi,
        max_freq_error=float(freq_err.max()),
        max_sharing_error=sharing_error(traj.P[mask], traj.k_P),
        max_abs_s=float(np.abs(traj.S[mask]).max()),
    )


def settling_time(traj: Trajectory, t_event: float, band: float = 0.02,
                  horizon: float | None = None) -> float:
    """Time after t_event for all |omega_i - omega0| to enter and stay within
    ``band`` of the initial post-event deviation (2 percent band by default).

    Returns NaN when the trajectory never settles inside the horizon.
    """
    mask = traj.t >= t_event - 1e-12
    if horizon is not None:
        mask &= traj.t <= t_event + horizon
    t = traj.t[mask]
    err = np.abs(traj.omega[mask] - traj.omega0[mask, None]).max(axis=1)
    if err.size == 0:
        return float("nan")
    level = band * err[0]
    if level == 0.0:
        return 0.0
    inside = err <= level
    # last crossing into the band
    if not inside[-1]:
        return float("nan")
    idx = len(inside) - 1
    while idx > 0 and inside[idx - 1]:
        idx -= 1
    return float(t[idx] - t_event)


def summarize(traj: Trajectory, windows=None, events=None) -> dict:
    """JSON-friendly metric summary: per-window stats plus settling times."""
    out: dict = {"step_s": traj.step, "n_dg": traj.n_dg,
                 "duration_s": float(traj.t[-1]),
                 "max_tau_s": float(traj.tau.max())}
    if windows:
        out["windows"] = []
        for lo, hi in windows:
            wm = window_metrics(traj, lo, hi)
            out["windows"].append({
                "t_lo_s": wm.t_lo, "t_hi_s": wm.t_hi,
                "max_freq_error_rad_s": wm.max_freq_error,
                "max_sharing_error": wm.max_sharing_error,
                "max_abs_S_rad_s": wm.max_abs_s})
    if events:
        out["settling_s"] = {f"{t:g}": settling_time(traj, t) for t in events}
    return out
