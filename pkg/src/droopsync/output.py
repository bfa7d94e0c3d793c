"""Trajectory serialization: CSV traces (lossless round trip) and SVG plots.

CSV layout: header ``t,tau,dg,delta,omega,v,P,Q,u_c,z,S,omega_bar`` and one
row per (sample, DG), decimal points, UTF-8, LF line endings.  Floats are
written with shortest-round-trip repr so a read-back reproduces the in-memory
values bit for bit.
"""

from __future__ import annotations

import numpy as np

from .engine import Trajectory

__all__ = ["CSV_HEADER", "write_csv", "read_csv", "write_svg"]

CSV_HEADER = "t,tau,dg,delta,omega,v,P,Q,u_c,z,S,omega_bar"


def write_csv(traj: Trajectory, path, decimation: int = 1) -> None:
    """Write the trajectory, keeping every ``decimation``-th sample.

    Decimation only affects what lands in the file; metrics are always
    computed from the full-resolution in-memory trajectory.
    """
    if decimation < 1:
        raise ValueError("decimation must be >= 1")
    rows = range(0, traj.n_samples, decimation)
    cols = (traj.delta, traj.omega, traj.v, traj.P, traj.Q,
            traj.u_c, traj.z, traj.S, traj.omega_bar)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for k in rows:
            t_r = repr(float(traj.t[k]))
            tau_r = repr(float(traj.tau[k]))
            for d in range(traj.n_dg):
                vals = ",".join(repr(float(c[k, d])) for c in cols)
                fh.write(f"{t_r},{tau_r},{d + 1},{vals}\n")


def read_csv(path) -> Trajectory:
    """Read a trace written by write_csv back into a Trajectory.

    The set-point series is not stored in the file, so ``omega0`` is
    reconstructed as NaN and ``k_P`` as ones; metrics needing them must come
    from the original run or be recomputed with explicit parameters.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        data = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not data:
        raise ValueError("empty trace")
    dgs = sorted({int(r[2]) for r in data})
    n_dg = len(dgs)
    if dgs != list(range(1, n_dg + 1)):
        raise ValueError("non-contiguous DG indices in trace")
    n_samples = len(data) // n_dg
    if n_samples * n_dg != len(data):
        raise ValueError("row count is not a multiple of the DG count")
    t = np.empty(n_samples)
    tau = np.empty(n_samples)
    fields = [np.empty((n_samples, n_dg)) for _ in range(9)]
    for ridx, row in enumerate(data):
        k, d = divmod(ridx, n_dg)
        t[k] = float(row[0])
        tau[k] = float(row[1])
        for f, val in zip(fields, row[3:]):
            f[k, int(row[2]) - 1] = float(val)
    step = float(t[1] - t[0]) if n_samples > 1 else 0.0
    return Trajectory(step=step, n_dg=n_dg, k_P=np.ones(n_dg), t=t, tau=tau,
                      omega0=np.full(n_samples, np.nan),
                      delta=fields[0], omega=fields[1], v=fields[2],
                      P=fields[3], Q=fields[4], u_c=fields[5], z=fields[6],
                      S=fields[7], omega_bar=fields[8])


def write_svg(traj: Trajectory, path, max_points: int = 4000) -> None:
    """Four-panel SVG: frequencies, power-sharing ratios, control inputs,
    voltages."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stride = max(1, traj.n_samples // max_points)
    t = traj.t[::stride]
    fig, axes = plt.subplots(4, 1, figsize=(8, 11), sharex=True)

    for d in range(traj.n_dg):
        axes[0].plot(t, traj.omega[::stride, d], lw=0.8, label=f"DG {d + 1}")
    axes[0].plot(t, traj.omega0[::stride], "k--", lw=0.8, label="set-point")
    axes[0].set_ylabel("frequency [rad/s]")
    axes[0].legend(loc="best", fontsize=7, ncol=3)

    ref = traj.n_dg - 1
    for d in range(traj.n_dg):
        if d == ref:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = traj.P[::stride, d] / traj.P[::stride, ref]
        expected = traj.k_P[ref] / traj.k_P[d]
        axes[1].plot(t, ratio, lw=0.8, label=f"P{d + 1}/P{ref + 1}")
        axes[1].axhline(expected, color="gray", lw=0.5, ls=":")
    axes[1].set_ylabel(f"P_i / P_{ref + 1}")
    axes[1].legend(loc="best", fontsize=7, ncol=3)

    for d in range(traj.n_dg):
        axes[2].plot(t, traj.omega_bar[::stride, d], lw=0.8)
    axes[2].set_ylabel("control input [rad/s]")

    for d in range(traj.n_dg):
        axes[3].plot(t, traj.v[::stride, d], lw=0.8)
    axes[3].set_ylabel("voltage [V]")
    axes[3].set_xlabel("t [s]")

    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
