"""Gaussian-state evolution for the two-oscillator system.

Moments are propagated in centre-of-mass / relative coordinates
(X, P, x, p) = ((x1+x2)/2, P1+P2, x1-x2, (P1-P2)/2) with masses M1 = 2M and
M2 = M/2.  The centre of mass follows

    d<X>/dt = <P>/M1,  d<P>/dt = -M1 (W^2 + dW2(t)) <X> - 2 G(t) <P>
    dS/dt = A S + S A^T + D,   D = [[0, Dl(t)], [Dl(t), 2 Sg(t)]]

and the relative coordinate rotates unitarily.
"""
from dataclasses import dataclass, field
import csv
import enum

import numpy as np
from scipy.linalg import expm
from scipy.interpolate import CubicSpline

from .errors import ConfigError, NumericalError, UnsupportedModel


class Ordering(enum.Enum):
    CMREL = "cmrel"   # (X, P, x, p)
    LAB = "lab"       # (x1, P1, x2, P2)


J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
J4 = np.kron(np.eye(2), J2)

# Lab -> CmRel linear map
T_LAB_TO_CM = np.array([
    [0.5, 0.0, 0.5, 0.0],
    [0.0, 1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 0.5, 0.0, -0.5],
])
T_CM_TO_LAB = np.linalg.inv(T_LAB_TO_CM)


def symplectic_form(ordering=None):
    # both orderings list (q, p) pairs
    return J4.copy()


def rs_min_eig(cov, hbar=1.0):
    """Smallest eigenvalue of cov + (i hbar / 2) J (Robertson-Schroedinger)."""
    n = cov.shape[-1]
    J = np.kron(np.eye(n // 2), J2)
    return float(np.linalg.eigvalsh(cov + 0.5j * hbar * J).min())


@dataclass(frozen=True)
class GaussianState:
    ordering: Ordering
    mean: np.ndarray
    cov: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(4)
        c = np.asarray(self.cov, dtype=float).reshape(4, 4)
        if not np.allclose(c, c.T, atol=1e-12 * max(1.0, np.abs(c).max())):
            raise ConfigError("covariance must be symmetric")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", 0.5 * (c + c.T))

    def rs_min_eig(self):
        return rs_min_eig(self.cov, self.hbar)

    def validate(self, tol=1e-9):
        if np.linalg.eigvalsh(self.cov).min() < -tol * max(1.0, np.abs(self.cov).max()):
            raise ConfigError("covariance is not positive semidefinite")
        if self.rs_min_eig() < -tol * max(1.0, np.abs(self.cov).max()):
            raise ConfigError("state violates the Robertson-Schroedinger condition")
        return self

    def to_cm_rel(self):
        if self.ordering is Ordering.CMREL:
            return self
        T = T_LAB_TO_CM
        return GaussianState(Ordering.CMREL, T @ self.mean, T @ self.cov @ T.T, self.hbar)

    def to_lab(self):
        if self.ordering is Ordering.LAB:
            return self
        T = T_CM_TO_LAB
        return GaussianState(Ordering.LAB, T @ self.mean, T @ self.cov @ T.T, self.hbar)

    def to(self, ordering):
        return self.to_lab() if ordering is Ordering.LAB else self.to_cm_rel()


def to_cm_rel(state):
    return state.to_cm_rel()


def to_lab(state):
    return state.to_lab()


def product_cm_rel_state(a, b, c, d, mean=(0, 0, 0, 0), hbar=1.0):
    """CmRel state with widths cov = diag(a^2, b^2, c^2, d^2)."""
    return GaussianState(Ordering.CMREL, np.asarray(mean, float),
                         np.diag([a * a, b * b, c * c, d * d]), hbar)


@dataclass(frozen=True)
class SystemConfig:
    M: float
    Omega: float
    kappa: float = 0.0
    k: int = 2
    hbar: float = 1.0
    kB: float = 1.0

    def __post_init__(self):
        if not self.M > 0:
            raise ConfigError("M must be > 0")
        if self.Omega < 0:
            raise ConfigError("Omega must be >= 0")
        if self.hbar <= 0 or self.kB <= 0:
            raise ConfigError("hbar and k_B must be > 0")

    @property
    def M1(self):
        return 2.0 * self.M

    @property
    def M2(self):
        return 0.5 * self.M

    def require_gaussian(self):
        if self.kappa != 0 and self.k != 2:
            raise UnsupportedModel(
                f"coupling kappa*x^{self.k} is not quadratic; only k = 2 (or kappa = 0) evolves")

    @property
    def Omega_rel(self):
        self.require_gaussian()
        w2 = self.Omega ** 2 + (2 * self.kappa / self.M2 if self.kappa else 0.0)
        if w2 < 0:
            raise UnsupportedModel("relative potential is unbounded below")
        return float(np.sqrt(w2))


@dataclass(frozen=True)
class MarkovConstants:
    """Constant coefficients; Omega_r is the (renormalized) cm frequency."""
    Omega_r: float
    Gamma: float
    Delta: float
    Sigma: float


@dataclass
class Trajectory:
    t: np.ndarray
    mean: np.ndarray   # (T, 4)
    cov: np.ndarray    # (T, 4, 4)
    ordering: Ordering
    hbar: float = 1.0
    meta: dict = field(default_factory=dict)

    def state(self, i):
        return GaussianState(self.ordering, self.mean[i], self.cov[i], self.hbar)

    def to(self, ordering):
        if ordering is self.ordering:
            return self
        T = T_LAB_TO_CM if ordering is Ordering.CMREL else T_CM_TO_LAB
        return Trajectory(self.t.copy(), self.mean @ T.T, T @ self.cov @ T.T,
                          ordering, self.hbar, dict(self.meta))

    def header(self):
        h = ["t"] + [f"mean{i}" for i in range(1, 5)]
        h += [f"cov{i}{j}" for i in range(1, 5) for j in range(i, 5)]
        return h

    def rows(self):
        iu = np.triu_indices(4)
        for k in range(len(self.t)):
            yield [self.t[k], *self.mean[k], *self.cov[k][iu]]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for r in self.rows():
                w.writerow([repr(float(v)) for v in r])


def read_trajectory_csv(path, ordering=Ordering.LAB, hbar=1.0):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    mean = data[:, 1:5]
    cov = np.zeros((len(t), 4, 4))
    iu = np.triu_indices(4)
    for k in range(len(t)):
        cov[k][iu] = data[k, 5:]
        cov[k] = cov[k] + np.triu(cov[k], 1).T
    return Trajectory(t, mean, cov, ordering, hbar)


def _cm_generators(coefs, M1, Omega):
    """Return callables A(t), D(t) for the cm block."""
    if isinstance(coefs, MarkovConstants):
        A = np.array([[0.0, 1.0 / M1], [-M1 * coefs.Omega_r ** 2, -2 * coefs.Gamma]])
        D = np.array([[0.0, coefs.Delta], [coefs.Delta, 2 * coefs.Sigma]])
        return (lambda t: A), (lambda t: D)

    def A(t):
        dW2, G, _, _ = coefs.at(t)
        return np.array([[0.0, 1.0 / M1], [-M1 * (Omega ** 2 + dW2), -2 * G]])

    def D(t):
        _, _, Dl, S = coefs.at(t)
        return np.array([[0.0, Dl], [Dl, 2 * S]])
    return A, D


def _van_loan(A, D, t):
    n = A.shape[0]
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -A
    C[:n, n:] = D
    C[n:, n:] = A.T
    E = expm(C * t)
    F22 = E[n:, n:]
    return F22.T, F22.T @ E[:n, n:]


def cm_propagators(coefs, M1, Omega, times, substeps=1):
    """Phi(t) (2x2) and accumulated noise N(t) (2x2) at the requested times.

    Constant coefficients use exact exponentials; time-dependent ones use
    RK4 on (Phi, N) with the coefficient interpolant.
    """
    times = np.asarray(times, dtype=float)
    Phi = np.zeros((len(times), 2, 2))
    Nn = np.zeros((len(times), 2, 2))
    Af, Df = _cm_generators(coefs, M1, Omega)
    if isinstance(coefs, MarkovConstants):
        A, D = Af(0), Df(0)
        for i, t in enumerate(times):
            Phi[i], N = _van_loan(A, D, t)
            Nn[i] = 0.5 * (N + N.T)
        return Phi, Nn
    if hasattr(coefs, "check_span"):
        coefs.check_span(times[0] if len(times) else 0.0, times[-1] if len(times) else 0.0)

    def rhs(t, P, N):
        A = Af(t)
        return A @ P, A @ N + N @ A.T + Df(t)

    P = np.eye(2)
    N = np.zeros((2, 2))
    t = 0.0
    for i, tt in enumerate(times):
        if tt < t - 1e-14:
            raise ConfigError("output times must be non-decreasing and >= 0")
        span = tt - t
        if span > 0:
            grid_dt = getattr(coefs, "dt", None) or span
            nsub = max(1, int(np.ceil(span / grid_dt - 1e-9))) * substeps
            h = span / nsub
            for _ in range(nsub):
                k1 = rhs(t, P, N)
                k2 = rhs(t + h / 2, P + h / 2 * k1[0], N + h / 2 * k1[1])
                k3 = rhs(t + h / 2, P + h / 2 * k2[0], N + h / 2 * k2[1])
                k4 = rhs(t + h, P + h * k3[0], N + h * k3[1])
                P = P + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                N = N + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                t += h
            t = tt
        Phi[i] = P
        Nn[i] = 0.5 * (N + N.T)
    if not np.all(np.isfinite(Phi)):
        raise NumericalError("cm flow produced non-finite values")
    return Phi, Nn


def cm_moment_flow(mean_cm, cov_cm, coefs, M1, Omega, times, substeps=1):
    """Evolve a 2-vector mean and 2x2 covariance of (X, P)."""
    Phi, N = cm_propagators(coefs, M1, Omega, times, substeps)
    mean = np.einsum("tij,j->ti", Phi, np.asarray(mean_cm, float))
    cov = np.einsum("tij,jk,tlk->til", Phi, np.asarray(cov_cm, float), Phi) + N
    return mean, cov


def rel_propagator(Omega_rel, M2, t):
    if Omega_rel == 0:
        return np.array([[1.0, t / M2], [0.0, 1.0]])
    c, s = np.cos(Omega_rel * t), np.sin(Omega_rel * t)
    return np.array([[c, s / (M2 * Omega_rel)], [-M2 * Omega_rel * s, c]])


def rel_moment_flow(mean_rel, cov_rel, cfg, times):
    """Exact unitary evolution of the relative block."""
    W = cfg.Omega_rel
    out_m, out_c = [], []
    for t in np.asarray(times, float):
        R = rel_propagator(W, cfg.M2, t)
        out_m.append(R @ np.asarray(mean_rel, float))
        out_c.append(R @ np.asarray(cov_rel, float) @ R.T)
    return np.array(out_m), np.array(out_c)


def evolve(state, cfg, coefs, times, out_ordering=None, substeps=1):
    """Evolve a GaussianState; cm block dissipative, relative block unitary."""
    cfg.require_gaussian()
    times = np.asarray(times, float)
    s0 = state.to_cm_rel()
    Phi, N = cm_propagators(coefs, cfg.M1, cfg.Omega, times, substeps)
    mean = np.zeros((len(times), 4))
    cov = np.zeros((len(times), 4, 4))
    for i, t in enumerate(times):
        F = np.zeros((4, 4))
        F[:2, :2] = Phi[i]
        F[2:, 2:] = rel_propagator(cfg.Omega_rel, cfg.M2, t)
        mean[i] = F @ s0.mean
        c = F @ s0.cov @ F.T
        c[:2, :2] += N[i]
        cov[i] = 0.5 * (c + c.T)
    tr = Trajectory(times.copy(), mean, cov, Ordering.CMREL, state.hbar)
    return tr.to(out_ordering or state.ordering)


def free_particle_variances(a, b, c, d, M, D, t, cm_mass=None):
    """Markov free-particle variances (no drag, diffusion D in P).

    Centre-of-mass position uses cm_mass (default M1 = 2M, the consistent
    flow); the relative coordinate uses M2 = M/2.
    """
    t = np.asarray(t, float)
    Mc = 2 * M if cm_mass is None else cm_mass
    M2 = M / 2
    return {
        "XX": 2 * D * t ** 3 / (3 * Mc ** 2) + b * b * t ** 2 / Mc ** 2 + a * a,
        "PP": 2 * D * t + b * b,
        "xx": d * d * t ** 2 / M2 ** 2 + c * c,
        "pp": d * d + 0 * t,
    }
