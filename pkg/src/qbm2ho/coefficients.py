"""Time-dependent master-equation coefficients dW2(t), Gamma(t), Delta(t), Sigma(t).

Stored coefficients follow the centre-of-mass Fokker-Planck convention
(see dynamics): drift -M1 (W^2 + dW2) X - 2 Gamma P, diffusion matrix
[[0, Delta], [Delta, 2 Sigma]].

Two routes are provided.  ``coefficient_trajectory`` reads the coefficients
off the exact Gaussian solution of the cm Langevin equation,

    X(t) = f_a X0 + f_b P0 / M1 + (1/M1) int f_b(t-s) xi(s) ds,
    <{xi(s), xi(s')}>/2 = 4 hbar nu(s - s'),

so that A = Phi' Phi^-1 and D = N' - A N - N A^T with N the noise covariance.
``coefficients_at_horizon`` evaluates dW2 and Gamma from the boundary-value
functions u1, u2 by the single-integral formulas and is used as a cross-check.
"""
from dataclasses import dataclass, field
import csv

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .elementary import (quad_weights, solve_homogeneous_ivp, combine_elementary,
                         MEMORY_FACTOR)
from .errors import ConfigError, NumericalError, RangeError

CONVENTION_TAG = ("cm-fp: dP/dt=-M1(W^2+dW2)X-2*Gamma*P; D=[[0,Delta],[Delta,2*Sigma]]; "
                  "Gamma,dW2 prefactors 2/M,4/M; mode weight J=I/(2pi)")


@dataclass
class CoefficientTrajectory:
    t: np.ndarray
    dOmega2: np.ndarray
    Gamma: np.ndarray
    Delta: np.ndarray
    Sigma: np.ndarray
    convention_tag: str = CONVENTION_TAG
    valid: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.valid is None:
            self.valid = np.ones(len(self.t), dtype=bool)
        self._splines = None

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else None

    def check_span(self, t0, t1):
        if t1 > self.t[-1] * (1 + 1e-12) + 1e-15:
            raise RangeError(f"coefficient trajectory ends at {self.t[-1]}, requested {t1}")
        bad = (~self.valid) & (self.t >= t0) & (self.t <= t1)
        if bad.any():
            raise NumericalError("coefficient gap inside evolution span",
                                 {"gap_times": self.t[bad].tolist()})

    def at(self, t):
        if self._splines is None:
            self._splines = [CubicSpline(self.t, y) for y in
                             (self.dOmega2, self.Gamma, self.Delta, self.Sigma)]
        return tuple(float(sp(t)) for sp in self._splines)

    def strided(self, stride):
        sl = slice(None, None, int(stride))
        return CoefficientTrajectory(self.t[sl], self.dOmega2[sl], self.Gamma[sl],
                                     self.Delta[sl], self.Sigma[sl], self.convention_tag,
                                     self.valid[sl], dict(self.diagnostics))

    def rows(self):
        for r in zip(self.t, self.dOmega2, self.Gamma, self.Delta, self.Sigma):
            yield list(r)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "dOmega2", "Gamma", "Delta", "Sigma"])
            for r in self.rows():
                w.writerow([repr(float(v)) for v in r])


def _noise_convolutions(nu, fb, dfb, dt):
    """I_b(t_n) = int_0^t_n nu(t_n - u) f_b(u) du and the same with f_b'."""
    n = len(fb)
    Ib = np.zeros(n)
    Idb = np.zeros(n)
    for k in range(1, n):
        w = quad_weights(k) * dt
        nr = nu[k::-1]
        Ib[k] = np.dot(w, nr * fb[: k + 1])
        Idb[k] = np.dot(w, nr * dfb[: k + 1])
    return Ib, Idb


def trajectory_from_solutions(sa, sb, nu, M, Omega, hbar, stride=1):
    M1 = 2.0 * M
    fa, dfa, ddfa = sa.f, sa.df, sa.ddf
    fb, dfb, ddfb = sb.f, sb.df, sb.ddf
    dt = float(sa.s[1] - sa.s[0])
    W = fa * dfb - fb * dfa
    valid = np.abs(W) > 1e-300
    Wsafe = np.where(valid, W, 1.0)
    A_PX = M1 * (ddfa * dfb - ddfb * dfa) / Wsafe
    A_PP = (fa * ddfb - fb * ddfa) / Wsafe
    dW2 = -A_PX / M1 - Omega ** 2
    Gamma = -0.5 * A_PP

    Ib, Idb = _noise_convolutions(nu[: len(fb)], fb, dfb, dt)
    dN_XX = 8 * hbar / M1 ** 2 * fb * Ib
    dN_XP = 4 * hbar / M1 * (fb * Idb + dfb * Ib)
    dN_PP = 8 * hbar * dfb * Idb
    if len(fb) >= 3:
        cum = lambda y: cumulative_simpson(y, dx=dt, initial=0.0)
    else:
        cum = lambda y: np.concatenate([[0.0], np.cumsum(0.5 * dt * (y[1:] + y[:-1]))])
    N_XX, N_XP, N_PP = cum(dN_XX), cum(dN_XP), cum(dN_PP)
    Delta = dN_XP - N_PP / M1 - A_PX * N_XX - A_PP * N_XP
    Sigma = 0.5 * (dN_PP - 2 * A_PX * N_XP - 2 * A_PP * N_PP)
    D_XX = dN_XX - 2 * N_XP / M1
    diag = {"max_abs_D_XX": float(np.abs(D_XX).max()),
            "max_abs_wronskian_dev": float(np.abs(W - 1).max())}
    sl = slice(None, None, int(stride))
    return CoefficientTrajectory(sa.s[sl].copy(), dW2[sl], Gamma[sl], Delta[sl], Sigma[sl],
                                 valid=valid[sl], diagnostics=diag)


def coefficient_trajectory(kt, M, Omega, t_max=None, stride=1):
    """Coefficients on the kernel grid up to t_max (default: whole table)."""
    if M <= 0:
        raise ConfigError("M must be > 0")
    if not (np.any(kt.eta) or np.any(kt.nu)):
        # uncoupled: every coefficient vanishes identically
        n = len(kt.s) if t_max is None else int(round(t_max / kt.dt)) + 1
        z = np.zeros(n)
        sl = slice(None, None, int(stride))
        return CoefficientTrajectory(kt.s[:n][sl].copy(), z[sl], z[sl], z[sl], z[sl],
                                     diagnostics={"uncoupled": True})
    sa = solve_homogeneous_ivp(kt, M, Omega, 1.0, 0.0, t_max)
    sb = solve_homogeneous_ivp(kt, M, Omega, 0.0, 1.0, t_max)
    return trajectory_from_solutions(sa, sb, kt.nu, M, Omega, kt.hbar, stride)


def coefficients_at_horizon(kt, M, Omega, t):
    """(dW2, Gamma, Delta, Sigma) at a single horizon t.

    dW2 and Gamma come from the boundary-value functions,
        dW2   = (4/M) int_0^t eta(t-s) [u2(s) - u1(s) u2'(t)/u1'(t)] ds
        Gamma = (2/M) int_0^t eta(t-s) u1(s) ds / u1'(t);
    Delta and Sigma from the noise covariance of the exact solution.
    """
    n = int(round(t / kt.dt))
    if n < 1:
        return 0.0, 0.0, 0.0, 0.0
    sa = solve_homogeneous_ivp(kt, M, Omega, 1.0, 0.0, n * kt.dt)
    sb = solve_homogeneous_ivp(kt, M, Omega, 0.0, 1.0, n * kt.dt)
    ef = combine_elementary(sa, sb, n, M, Omega)
    du1t = ef.du1[-1]
    if abs(du1t) < 1e-12 * max(1.0, np.abs(ef.du1).max()):
        raise NumericalError("u1'(t) = 0: coefficients are singular at this horizon",
                             {"t": ef.t})
    w = quad_weights(n) * kt.dt
    eta_r = kt.eta[n::-1]
    k = MEMORY_FACTOR / M
    dW2 = k * np.dot(w, eta_r * (ef.u2 - ef.u1 * ef.du2[-1] / du1t))
    Gamma = 0.5 * k * np.dot(w, eta_r * ef.u1) / du1t
    tr = trajectory_from_solutions(sa, sb, kt.nu, M, Omega, kt.hbar)
    return float(dW2), float(Gamma), float(tr.Delta[-1]), float(tr.Sigma[-1])


def markov_limit_constants(M1, gamma, T, kB=1.0):
    """(Gamma, Delta, Sigma) of the Markov limit; dW2 is not returned."""
    return float(gamma), 0.0, float(2 * M1 * gamma * kB * T)
