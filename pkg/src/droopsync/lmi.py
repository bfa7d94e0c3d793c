"""Delay-dependent stability certificates and gain synthesis.

The certificate machinery works on the error-dynamics matrix ``A`` of the
delayed closed loop d/dt chi = A chi(t - tau).  Two matrix forms are
provided:

* ``assemble_xi`` builds the compact 4x4 block form, which carries no
  compensation for the double-integral term.  That form is structurally
  obstructed: the direction (x, -x, 2x, 0) reduces it to
  chi'(-2A + tau_g Q)chi and the direction (x*, x*, 0, 0) with x* in ker A
  to tau_g chi'Q chi, so with Q positive definite its largest eigenvalue is
  always >= 0 regardless of the gains.  It is kept for analysis and tests.

* ``assemble_xi_completed`` restores the Jensen compensation -P/tau_star in
  block (3,3) that the compact form omits, and couples the slack X into
  block (2,4).  This is the classical descriptor form with the
  double-integral weight named P and the descriptor slack named X; a
  negative-definite completed matrix is a sound sufficiency certificate for
  global asymptotic stability of the delayed dynamics.

Synthesis certifies the reduced N-dimensional error matrix -(K + K_bar):
the full 2N block form has N structural zero eigenvalues (its second block
row is omega times the first), which make any strict certificate impossible,
while physical trajectories evolve on the subspace carried by the reduced
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comms import DelayBounds
from .topology import CommTopology, follower_matrix, pinned_matrix, reduced_error_matrix
from .topology import GainSet

__all__ = [
    "SynthesisError",
    "LmiCertificate",
    "LkWeights",
    "CertificateCheck",
    "SynthesisOptions",
    "assemble_xi",
    "assemble_xi_completed",
    "check_certificate",
    "certify_matrix",
    "scalar_gain_ceiling",
    "synthesize_gains",
    "lk_weights_from_certificate",
    "evaluate_lk_functional",
    "build_error_series",
]

COMPLETED = "completed"
COMPACT = "compact"


class SynthesisError(RuntimeError):
    """Gain synthesis infeasible within the configured budget."""

    def __init__(self, msg: str, best_margin: float | None = None):
        super().__init__(msg)
        self.best_margin = best_margin


@dataclass(frozen=True)
class LmiCertificate:
    """Decision matrices certifying the delay LMI for one error matrix.

    Q, R, P are symmetric positive definite; M, T, X are free.  ``margin``
    is -lambda_max of the assembled matrix; ``form`` records which assembly
    the certificate targets.
    """

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    M: np.ndarray
    T: np.ndarray
    X: np.ndarray
    tau_star: float
    tau_g: float
    margin: float = 0.0
    form: str = COMPLETED

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def matrices(self):
        return self.Q, self.R, self.P, self.M, self.T, self.X


@dataclass(frozen=True)
class LkWeights:
    """Weights of the trajectory functional V = |chi|^2 + integral terms."""

    Q: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        for name in ("Q", "W"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(0.5 * (mat + mat.T))) <= 0:
                raise ValueError(f"{name} must be positive definite")


def _xi_blocks(A, tau_star, tau_g, Q, R, P, M, T, X, completed: bool):
    """4x4 block grid; works for numpy arrays and cvxpy expressions."""
    n = Q.shape[0]
    Z = np.zeros((n, n))
    b11 = A + A.T + Q + M.T + M
    b12 = -M.T + T
    b13 = -A - M.T + R.T
    b22 = -(1.0 - tau_g) * Q - T.T - T
    b23 = -T.T - R.T
    b33 = -2.0 * R
    b44 = tau_star * P + X.T + X
    if completed:
        b24 = -A.T @ X
        b33 = b33 - P / tau_star
    else:
        b24 = -A.T
    return [[b11, b12, b13, Z],
            [b12.T, b22, b23, b24],
            [b13.T, b23.T, b33, Z],
            [Z.T, b24.T, Z.T, b44]]


def _check_square(A, cert_n=None):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if cert_n is not None and A.shape[0] != cert_n:
        raise ValueError(f"A is {A.shape[0]}x{A.shape[0]} but certificate "
                         f"matrices are {cert_n}x{cert_n}")
    return A


def assemble_xi(A, tau_star, tau_g, cert: LmiCertificate) -> np.ndarray:
    """Compact block form over (chi(t), chi(t-tau), int chi_dot, chi_dot)."""
    A = _check_square(A, cert.n)
    if tau_star <= 0:
        raise ValueError("tau_star must be > 0")
    Xi = np.block(_xi_blocks(A, tau_star, tau_g, *cert.matrices(),
                             completed=False))
    return 0.5 * (Xi + Xi.T)


def assemble_xi_completed(A, tau_star, tau_g, cert: LmiCertificate) -> np.ndarray:
    """Jensen-completed descriptor form (see module docstring)."""
    A = _check_square(A, cert.n)
    if tau_star <= 0:
        raise ValueError("tau_star must be > 0")
    Xi = np.block(_xi_blocks(A, tau_star, tau_g, *cert.matrices(),
                             completed=True))
    return 0.5 * (Xi + Xi.T)


@dataclass(frozen=True)
class CertificateCheck:
    accepted: bool
    margin: float
    lambda_max_xi: float
    min_eig_q: float
    min_eig_r: float
    min_eig_p: float
    reasons: tuple[str, ...] = ()


def check_certificate(A, bounds: DelayBounds, cert: LmiCertificate,
                      eps_pd: float = 1e-6,
                      eps_margin: float = 1e-8) -> CertificateCheck:
    """Verify a candidate certificate by eigenvalue computation.

    The matrix is assembled at the delay parameters the certificate claims
    to cover; the certified tau_star must dominate the scenario bound.  The
    rate parameter is informative only: rate bounds >= 1 neutralize the
    Q-term, and the trace generator never exceeds rate 1, so a certificate
    solved at the capped rate still covers generated traces.  Accepts iff
    Q, R, P clear the definiteness floor and lambda_max <= -eps_margin.
    """
    for name in ("Q", "R", "P"):
        mat = getattr(cert, name)
        if not np.allclose(mat, mat.T, atol=1e-8 * (1 + np.abs(mat).max())):
            raise ValueError(f"certificate {name} must be symmetric")
    assemble = assemble_xi_completed if cert.form == COMPLETED else assemble_xi
    Xi = assemble(A, cert.tau_star, cert.tau_g, cert)
    lam = float(np.linalg.eigvalsh(Xi)[-1])
    eig_q = float(np.linalg.eigvalsh(0.5 * (cert.Q + cert.Q.T))[0])
    eig_r = float(np.linalg.eigvalsh(0.5 * (cert.R + cert.R.T))[0])
    eig_p = float(np.linalg.eigvalsh(0.5 * (cert.P + cert.P.T))[0])
    reasons = []
    # floor check with a small relative slack for solver round-off
    floor = eps_pd * (1.0 - 1e-6)
    if eig_q < floor:
        reasons.append(f"Q not positive definite enough (min eig {eig_q:.3e})")
    if eig_r < floor:
        reasons.append(f"R not positive definite enough (min eig {eig_r:.3e})")
    if eig_p < floor:
        reasons.append(f"P not positive definite enough (min eig {eig_p:.3e})")
    if lam > -eps_margin:
        reasons.append(f"lambda_max(Xi) = {lam:.3e} > -{eps_margin:.0e}")
    if cert.tau_star < bounds.tau_star - 1e-12:
        reasons.append(f"certified tau_star {cert.tau_star} below the "
                       f"required bound {bounds.tau_star}")
    return CertificateCheck(accepted=not reasons, margin=-lam,
                            lambda_max_xi=lam, min_eig_q=eig_q,
                            min_eig_r=eig_r, min_eig_p=eig_p,
                            reasons=tuple(reasons))


@dataclass(frozen=True)
class SynthesisOptions:
    """Knobs for certificate solving and gain synthesis.

    ``tau_g_cap`` bounds the delay-rate parameter used when solving: rate
    bounds >= 1 disable the Q-term of the functional entirely, and the
    generator never exceeds rate 1, so certificates are solved at
    min(bounds.tau_g, tau_g_cap) and record the value they actually used.
    """

    eps_pd: float = 1e-6
    eps_margin: float = 1e-8
    k_min: float = 0.1
    k_max: float = 60.0
    var_bound: float = 1e4
    spectral_gap: float = 0.02      # stay this fraction inside the certified band
    tau_g_cap: float = 0.999
    solver: str = "CLARABEL"


def _solve_fixed_matrix(A, tau_star, tau_g, opts: SynthesisOptions):
    """Minimize lambda_max of the completed form for a fixed error matrix."""
    import cvxpy as cp

    n = A.shape[0]
    Q = cp.Variable((n, n), symmetric=True)
    R = cp.Variable((n, n), symmetric=True)
    P = cp.Variable((n, n), symmetric=True)
    M = cp.Variable((n, n))
    T = cp.Variable((n, n))
    X = cp.Variable((n, n))
    t = cp.Variable()
    Xi = cp.bmat(_xi_blocks(A, tau_star, tau_g, Q, R, P, M, T, X,
                            completed=True))
    I = np.eye(n)
    bound = opts.var_bound
    # solve with a doubled floor so the returned matrices clear eps_pd
    # even after solver round-off
    floor = 2.0 * opts.eps_pd
    cons = [Q >> floor * I, R >> floor * I, P >> floor * I,
            Q << bound * I, R << bound * I, P << bound * I,
            cp.abs(M) <= bound, cp.abs(T) <= bound, cp.abs(X) <= bound,
            Xi << t * np.eye(4 * n)]
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=getattr(cp, opts.solver))
    if t.value is None:
        raise SynthesisError(f"certificate solve failed: {prob.status}")
    mats = [np.asarray(V.value) for V in (Q, R, P, M, T, X)]
    mats[0] = 0.5 * (mats[0] + mats[0].T)
    mats[1] = 0.5 * (mats[1] + mats[1].T)
    mats[2] = 0.5 * (mats[2] + mats[2].T)
    return float(t.value), mats


def certify_matrix(A, bounds: DelayBounds,
                   options: SynthesisOptions | None = None) -> LmiCertificate:
    """Solve the completed LMI for a fixed error matrix A.

    Raises SynthesisError (with the best achievable margin) when no
    certificate reaches the required margin.
    """
    opts = options or SynthesisOptions()
    A = _check_square(A)
    if bounds.tau_star <= 0:
        raise ValueError("certificates require tau_star > 0")
    tau_g = min(bounds.tau_g, opts.tau_g_cap)
    t_val, mats = _solve_fixed_matrix(A, bounds.tau_star, tau_g, opts)
    cert = LmiCertificate(*mats, tau_star=bounds.tau_star, tau_g=tau_g,
                          margin=-t_val, form=COMPLETED)
    if t_val > -opts.eps_margin:
        raise SynthesisError(
            f"no certificate: best lambda_max = {t_val:.3e} "
            f"(needs <= -{opts.eps_margin:.0e})", best_margin=-t_val)
    return cert


_CEILING_CACHE: dict[tuple, float] = {}


def scalar_gain_ceiling(bounds: DelayBounds,
                        options: SynthesisOptions | None = None,
                        tol: float = 1e-3) -> float:
    """Largest scalar gain k certifiable for dx/dt = -k x(t - tau).

    Bisection against the completed LMI inside (0, pi/(2 tau_star)); the
    upper end of the bracket is the exact constant-delay margin, which no
    sound certificate can exceed.
    """
    opts = options or SynthesisOptions()
    if bounds.tau_star <= 0:
        return np.inf
    tau_g = min(bounds.tau_g, opts.tau_g_cap)
    key = (bounds.tau_star, tau_g, opts.eps_pd, opts.eps_margin,
           opts.var_bound, opts.solver, tol)
    if key in _CEILING_CACHE:
        return _CEILING_CACHE[key]
    lo, hi = 0.0, float(np.pi / (2 * bounds.tau_star))
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        t_val, _ = _solve_fixed_matrix(np.array([[-mid]]), bounds.tau_star,
                                       tau_g, opts)
        if t_val <= -opts.eps_margin:
            lo = mid
        else:
            hi = mid
    _CEILING_CACHE[key] = lo
    return lo


def synthesize_gains(topology: CommTopology, bounds: DelayBounds,
                     options: SynthesisOptions | None = None,
                     m: tuple[float, ...] = ()) -> tuple[GainSet, LmiCertificate]:
    """Find certified consensus gains for a communication topology.

    Two convex stages.  Stage one places the spectrum of the combined
    coupling matrix K + K_bar inside the certified scalar band
    (0, ceiling], maximizing the slowest eigenvalue subject to the per-edge
    bounds (symmetric gains, so the spectral constraints are exact).  Stage
    two solves the completed LMI for the resulting reduced error matrix with
    all certificate matrices free.  The returned certificate always passes
    check_certificate at the configured tolerances.
    """
    import cvxpy as cp

    opts = options or SynthesisOptions()
    if bounds.tau_star <= 0:
        raise ValueError("gain synthesis requires tau_star > 0 (the "
                         "delay-free problem needs no certificate)")
    n = topology.n_dg
    ceiling = scalar_gain_ceiling(bounds, opts)
    u = ceiling * (1.0 - opts.spectral_gap)

    edges = sorted(topology.follower_edges)
    pins = sorted(topology.leader_pins)
    w = cp.Variable(len(edges)) if edges else None
    b = cp.Variable(len(edges)) if edges else None
    p = cp.Variable(len(pins))
    S = cp.Constant(np.zeros((n, n)))
    eye = np.eye(n)
    for idx, (i, j) in enumerate(edges):
        d = eye[i - 1] - eye[j - 1]
        S = S + (w[idx] + b[idx]) * np.outer(d, d)
    for idx, i in enumerate(pins):
        S = S + p[idx] * np.outer(eye[i - 1], eye[i - 1])
    s = cp.Variable()
    cons = [S >> s * eye, S << u * eye, p >= opts.k_min, p <= opts.k_max]
    if edges:
        cons += [w >= opts.k_min, w <= opts.k_max,
                 b >= opts.k_min, b <= opts.k_max]
    prob = cp.Problem(cp.Maximize(s), cons)
    prob.solve(solver=getattr(cp, opts.solver))
    if prob.status not in ("optimal", "optimal_inaccurate") or s.value is None:
        # report the best margin at the feasibility corner for diagnostics
        corner = _corner_gains(topology, opts.k_min)
        A_corner = reduced_error_matrix(pinned_matrix(topology, corner),
                                        follower_matrix(topology, corner))
        t_val, _ = _solve_fixed_matrix(A_corner, bounds.tau_star,
                                       min(bounds.tau_g, opts.tau_g_cap),
                                       opts)
        raise SynthesisError(
            f"gain synthesis infeasible for tau_star={bounds.tau_star}: "
            f"{prob.status}; margin at minimum gains = {-t_val:.3e}",
            best_margin=-t_val)

    k_map: dict[tuple[int, int], float] = {}
    kbar_map: dict[tuple[int, int], float] = {}
    for idx, (i, j) in enumerate(edges):
        k_map[(i, j)] = k_map[(j, i)] = float(w.value[idx])
        kbar_map[(i, j)] = kbar_map[(j, i)] = float(b.value[idx])
    for idx, i in enumerate(pins):
        k_map[(i, 0)] = float(p.value[idx])
    gains = GainSet(k=k_map, k_bar=kbar_map,
                    m=tuple(m) if m else tuple())
    A_red = reduced_error_matrix(pinned_matrix(topology, gains),
                                 follower_matrix(topology, gains))
    cert = certify_matrix(A_red, bounds, opts)
    return gains, cert


def _corner_gains(topology: CommTopology, k_min: float) -> GainSet:
    k_map = {}
    kbar_map = {}
    for i, j in topology.follower_edges:
        k_map[(i, j)] = k_map[(j, i)] = k_min
        kbar_map[(i, j)] = kbar_map[(j, i)] = k_min
    for i in topology.leader_pins:
        k_map[(i, 0)] = k_min
    return GainSet(k=k_map, k_bar=kbar_map)


def lk_weights_from_certificate(cert: LmiCertificate) -> LkWeights:
    """Trajectory-functional weights matching a certificate.

    For the completed (descriptor) form the double-integral weight is the
    certificate's P itself.  For the compact form it is recovered as
    X^-1 P X^-T, symmetrized.
    """
    if cert.form == COMPLETED:
        W = cert.P
    else:
        Xinv = np.linalg.inv(cert.X)
        W = Xinv @ cert.P @ Xinv.T
    W = 0.5 * (W + W.T)
    return LkWeights(Q=0.5 * (cert.Q + cert.Q.T), W=W)


def _cumtrapz(f: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(len(f))
    np.cumsum(0.5 * h * (f[1:] + f[:-1]), out=out[1:])
    return out


def _interp(cum: np.ndarray, h: float, t: float) -> float:
    """Linear interpolation of a cumulative integral sampled at k*h."""
    x = t / h
    k = int(np.floor(x))
    if k < 0:
        return float(cum[0])
    if k >= len(cum) - 1:
        return float(cum[-1])
    frac = x - k
    return float(cum[k] * (1 - frac) + cum[k + 1] * frac)


def evaluate_lk_functional(chi: np.ndarray, step: float, tau: np.ndarray,
                           weights: LkWeights, tau_star: float) -> np.ndarray:
    """Evaluate V(t) = |chi|^2 + int_{t-tau}^t chi'Q chi ds
    + int_{-tau*}^0 int_{t+th}^t chi_dot' W chi_dot ds dth along a sampled
    trajectory.

    chi has shape (n_samples, n) on a uniform grid of ``step`` seconds; tau
    is the delay at each sample.  Quadrature is trapezoidal; the double
    integral reduces to a single weighted integral over the trailing
    tau_star window.  Entries with t < tau_star are NaN (not enough
    history); a series shorter than tau_star raises ValueError.
    """
    chi = np.asarray(chi, dtype=float)
    n_t = chi.shape[0]
    if (n_t - 1) * step < tau_star:
        raise ValueError("trajectory shorter than the delay horizon")
    tau = np.asarray(tau, dtype=float)
    if tau.shape[0] != n_t:
        raise ValueError("tau series must match chi in length")

    v1 = np.einsum("ti,ti->t", chi, chi)
    f2 = np.einsum("ti,ij,tj->t", chi, weights.Q, chi)
    chid = np.diff(chi, axis=0) / step
    chid = np.vstack([chid, chid[-1:]])
    f3 = np.einsum("ti,ij,tj->t", chid, weights.W, chid)

    c2 = _cumtrapz(f2, step)
    c3 = _cumtrapz(f3, step)
    d3 = _cumtrapz(f3 * (np.arange(n_t) * step), step)

    V = np.full(n_t, np.nan)
    start = int(np.ceil(tau_star / step - 1e-9))
    for kk in range(start, n_t):
        t = kk * step
        v2 = c2[kk] - _interp(c2, step, t - tau[kk])
        ci = c3[kk] - _interp(c3, step, t - tau_star)
        di = d3[kk] - _interp(d3, step, t - tau_star)
        v3 = (tau_star - t) * ci + di
        V[kk] = v1[kk] + v2 + v3
    return V


def build_error_series(omega: np.ndarray, u_c: np.ndarray, omega0,
                       reduced: bool = True) -> np.ndarray:
    """Error-coordinate series from frequency and consensus-input series.

    reduced=True returns e(t) = omega - omega0 (N columns), the coordinate
    certified by synthesis.  reduced=False appends the disagreement part
    Omega @ u_c for the full 2N form.
    """
    omega = np.asarray(omega, dtype=float)
    e = omega - np.asarray(omega0, dtype=float).reshape(-1, 1)
    if reduced:
        return e
    u_c = np.asarray(u_c, dtype=float)
    eps = u_c - u_c.mean(axis=1, keepdims=True)
    return np.hstack([e, eps])
