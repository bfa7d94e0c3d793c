"""Electrical and communication graphs plus the structural matrices of the
closed-loop error dynamics.

DG buses are numbered 1..N externally (scenario files, gain tables); the
virtual set-point provider is node 0.  Matrices returned by this module are
dense and 0-indexed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TopologyError",
    "ElectricalGraph",
    "CommTopology",
    "GainSet",
    "pinned_matrix",
    "follower_matrix",
    "disagreement_matrix",
    "error_dynamics_matrix",
    "reduced_error_matrix",
]


class TopologyError(ValueError):
    """Raised for malformed graphs or gains inconsistent with the edge sets."""


def _check_connected(n: int, pairs: set[tuple[int, int]]) -> bool:
    """Union-find connectivity over nodes 1..n with undirected pairs."""
    if n == 1:
        return True
    parent = list(range(n + 1))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        parent[find(i)] = find(j)
    roots = {find(i) for i in range(1, n + 1)}
    return len(roots) == 1


@dataclass(frozen=True)
class ElectricalGraph:
    """Power-line topology with per-line conductance G and susceptance B (1/ohm).

    Lines are undirected; each line is stored once as (i, j, G, B) with
    1-based bus indices.  The graph must be connected over lines with
    nonzero susceptance.
    """

    n_dg: int
    lines: tuple[tuple[int, int, float, float], ...]

    def __post_init__(self):
        if self.n_dg < 1:
            raise TopologyError("need at least one DG")
        seen = set()
        for i, j, G, B in self.lines:
            if i == j:
                raise TopologyError(f"self-loop on bus {i}")
            if not (1 <= i <= self.n_dg and 1 <= j <= self.n_dg):
                raise TopologyError(f"line ({i},{j}) outside 1..{self.n_dg}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise TopologyError(f"duplicate line ({i},{j})")
            seen.add(key)
            if not (np.isfinite(G) and np.isfinite(B)):
                raise TopologyError(f"non-finite admittance on line ({i},{j})")
        coupled = {(min(i, j), max(i, j)) for i, j, _, B in self.lines if B != 0.0}
        if not _check_connected(self.n_dg, coupled):
            raise TopologyError("electrical graph not connected over B != 0 lines")

    def directed_arrays(self):
        """Both orientations of every line as index/value arrays plus the
        node-edge incidence matrix for vectorized power-flow accumulation.
        Indices are 0-based."""
        src, dst, G, B = [], [], [], []
        for i, j, g, b in self.lines:
            src += [i - 1, j - 1]
            dst += [j - 1, i - 1]
            G += [g, g]
            B += [b, b]
        src = np.asarray(src, dtype=int)
        dst = np.asarray(dst, dtype=int)
        inc = np.zeros((self.n_dg, len(src)))
        inc[src, np.arange(len(src))] = 1.0
        return (src, dst, np.asarray(G, dtype=float),
                np.asarray(B, dtype=float), inc)


@dataclass(frozen=True)
class CommTopology:
    """Communication graph: undirected follower links plus leader pins.

    ``follower_edges`` holds undirected DG pairs (1-based).  ``leader_pins``
    lists the DGs with a direct link to the virtual set-point node 0; it must
    be non-empty and the follower graph must be connected so node 0 can reach
    every agent.
    """

    n_dg: int
    follower_edges: frozenset[tuple[int, int]]
    leader_pins: frozenset[int]

    def __post_init__(self):
        norm = set()
        for i, j in self.follower_edges:
            if i == j:
                raise TopologyError(f"self-loop ({i},{i}) in follower edges")
            if not (1 <= i <= self.n_dg and 1 <= j <= self.n_dg):
                raise TopologyError(f"edge ({i},{j}) outside 1..{self.n_dg}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "follower_edges", frozenset(norm))
        if not self.leader_pins:
            raise TopologyError("leader_pins must be non-empty")
        for i in self.leader_pins:
            if not (1 <= i <= self.n_dg):
                raise TopologyError(f"pin {i} outside 1..{self.n_dg}")
        if not _check_connected(self.n_dg, set(self.follower_edges)):
            raise TopologyError("follower graph not connected")

    @classmethod
    def make(cls, n_dg, follower_edges, leader_pins) -> "CommTopology":
        return cls(n_dg, frozenset(tuple(e) for e in follower_edges),
                   frozenset(leader_pins))

    def directed_follower_pairs(self) -> list[tuple[int, int]]:
        out = []
        for i, j in sorted(self.follower_edges):
            out += [(i, j), (j, i)]
        return out

    def pinned_pairs(self) -> list[tuple[int, int]]:
        """All directed pairs of the augmented graph: follower pairs plus
        (i, 0) for each pinned DG."""
        return self.directed_follower_pairs() + [(i, 0) for i in sorted(self.leader_pins)]


@dataclass(frozen=True)
class GainSet:
    """Consensus gains on the communication graph.

    ``k`` maps directed pairs (i, j) of the augmented graph (j = 0 for the
    leader pin) to the frequency-coupling gain; ``k_bar`` maps directed
    follower pairs to the input-coupling gain; ``m`` is the per-DG relay
    amplitude.  Gains may be asymmetric (k[i,j] != k[j,i]).
    """

    k: dict[tuple[int, int], float] = field(default_factory=dict)
    k_bar: dict[tuple[int, int], float] = field(default_factory=dict)
    m: tuple[float, ...] = ()

    def __post_init__(self):
        for name, table in (("k", self.k), ("k_bar", self.k_bar)):
            for (i, j), v in table.items():
                if not np.isfinite(v) or v <= 0.0:
                    raise TopologyError(f"{name}[{i},{j}] = {v} must be > 0")
        for v in self.m:
            if not np.isfinite(v) or v <= 0.0:
                raise TopologyError(f"relay amplitude m = {v} must be > 0")

    def validate_against(self, topology: CommTopology) -> None:
        """Reject gains on non-edges and missing gains on edges."""
        pin_pairs = set(topology.pinned_pairs())
        fol_pairs = set(topology.directed_follower_pairs())
        for pair in self.k:
            if pair not in pin_pairs:
                raise TopologyError(f"gain k{pair} set on a non-edge")
        for pair in self.k_bar:
            if pair not in fol_pairs:
                raise TopologyError(f"gain k_bar{pair} set on a non-edge")
        for pair in fol_pairs:
            if pair not in self.k:
                raise TopologyError(f"missing gain k{pair}")
            if pair not in self.k_bar:
                raise TopologyError(f"missing gain k_bar{pair}")
        for i in topology.leader_pins:
            if (i, 0) not in self.k:
                raise TopologyError(f"missing pin gain k({i},0)")
        if self.m and len(self.m) != topology.n_dg:
            raise TopologyError("m must have one entry per DG")


def pinned_matrix(topology: CommTopology, gains: GainSet) -> np.ndarray:
    """Gain matrix of the frequency-coupling term over the augmented graph.

    Diagonal entry i sums the gains of all of agent i's links including the
    leader pin; off-diagonal (i, j) is -k[i,j] on follower edges.  Row sums
    therefore equal the leader-pin weights.
    """
    gains.validate_against(topology)
    n = topology.n_dg
    K = np.zeros((n, n))
    for (i, j), v in gains.k.items():
        if j == 0:
            K[i - 1, i - 1] += v
        else:
            K[i - 1, i - 1] += v
            K[i - 1, j - 1] -= v
    return K


def follower_matrix(topology: CommTopology, gains: GainSet) -> np.ndarray:
    """Weighted Laplacian of the follower graph built from the k_bar gains
    (no leader terms; all row sums zero)."""
    gains.validate_against(topology)
    n = topology.n_dg
    K = np.zeros((n, n))
    for (i, j), v in gains.k_bar.items():
        K[i - 1, i - 1] += v
        K[i - 1, j - 1] -= v
    return K


def disagreement_matrix(n: int) -> np.ndarray:
    """Projector onto the subspace orthogonal to consensus: I - 11^T/n.

    Symmetric, idempotent, and annihilates the all-ones vector.
    """
    if n < 1:
        raise TopologyError("n must be >= 1")
    return np.eye(n) - np.ones((n, n)) / n


def error_dynamics_matrix(K: np.ndarray, K_bar: np.ndarray,
                          omega: np.ndarray) -> np.ndarray:
    """Block matrix A of the delayed error dynamics d/dt (e, eps) = A (e, eps)(t-tau).

    A = -[[K, K_bar], [omega K, omega K_bar]]; the negated blocks give the
    negative-feedback closed loop (the coupling terms enter the protocol with
    a minus sign).  The second block row is omega times the first by
    construction.
    """
    K = np.asarray(K, dtype=float)
    K_bar = np.asarray(K_bar, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or K_bar.shape != (n, n) or omega.shape != (n, n):
        raise TopologyError("K, K_bar, omega must be square with equal size")
    top = np.hstack([K, K_bar])
    return -np.vstack([top, omega @ top])


def reduced_error_matrix(K: np.ndarray, K_bar: np.ndarray) -> np.ndarray:
    """N x N matrix -(K + K_bar) governing the synchronization error alone.

    On trajectories started with synchronized frequencies and equal controller
    offsets, the disagreement part equals omega @ e, and the full 2N-state
    error dynamics collapse onto d/dt e = -(K + K_bar) e(t - tau).  The
    nonzero spectrum of error_dynamics_matrix equals the spectrum of this
    matrix; the remaining N eigenvalues of the 2N form are structural zeros.
    """
    K = np.asarray(K, dtype=float)
    K_bar = np.asarray(K_bar, dtype=float)
    if K.shape != K_bar.shape or K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise TopologyError("K and K_bar must be square with equal size")
    return -(K + K_bar)
