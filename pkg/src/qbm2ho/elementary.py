"""Elementary functions of the dissipative oscillator equation

    f''(s) + W^2 f(s) + (4/M) int_0^s eta(s - l) f(l) dl = 0

solved on the kernel grid, plus the free-oscillator functions and the
retarded Green function.
"""
from dataclasses import dataclass
from typing import NamedTuple
import csv

import numpy as np

from .errors import ConfigError, DegenerateHorizonError, RangeError

MEMORY_FACTOR = 4.0


class IVPSolution(NamedTuple):
    s: np.ndarray
    f: np.ndarray
    df: np.ndarray
    ddf: np.ndarray


def quad_weights(n):
    """Fourth-order weights (units of dt) for integrating n+1 uniform samples."""
    if n == 0:
        return np.zeros(1)
    if n == 1:
        return np.array([0.5, 0.5])
    if n == 2:
        return np.array([1.0, 4.0, 1.0]) / 3
    if n == 3:
        return np.array([1.0, 3.0, 3.0, 1.0]) * 3 / 8
    if n == 4:
        return np.array([1.0, 4.0, 2.0, 4.0, 1.0]) / 3
    w = np.ones(n + 1)
    end = np.array([3 / 8, 7 / 6, 23 / 24])
    w[:3] = end
    w[-3:] = end[::-1]
    return w


def _memory(eta, f, n, dt):
    # int_0^{s_n} eta(s_n - l) f(l) dl
    if n == 0:
        return 0.0
    return dt * np.dot(quad_weights(n), eta[n::-1] * f[: n + 1])


# cubic-Lagrange integration weights over [0, s_j] using nodes 0..3 (units of dt)
_START_W = {
    1: np.array([9, 19, -5, 1]) / 24,
    2: np.array([1, 4, 1, 0]) / 3,
    3: np.array([3, 9, 9, 3]) / 8,
}
_AB4 = np.array([55, -59, 37, -9]) / 24
_AM4 = np.array([9, 19, -5, 1]) / 24


def solve_homogeneous_ivp(kt, M, Omega, f0, df0, horizon=None):
    """Integrate the homogeneous memory equation from (f0, df0).

    Fourth-order Adams-Bashforth-Moulton (PECE) on the kernel grid with a
    Gregory-type quadrature for the memory integral; the first three steps
    come from an iterated implicit block rule.
    """
    if M <= 0:
        raise ConfigError("M must be > 0")
    dt = kt.dt
    if horizon is None:
        n_steps = len(kt.s) - 1
    else:
        n_steps = int(round(horizon / dt))
        if n_steps > len(kt.s) - 1 + 1e-9 or horizon > kt.t_max * (1 + 1e-12):
            raise RangeError(f"horizon {horizon} exceeds kernel table ({kt.t_max})")
    k = MEMORY_FACTOR / M
    W2 = Omega ** 2
    eta = kt.eta
    N = n_steps + 1
    f = np.zeros(N)
    g = np.zeros(N)
    a = np.zeros(N)
    f[0], g[0] = f0, df0
    a[0] = -W2 * f0

    def accel(n):
        return -W2 * f[n] - k * _memory(eta, f, n, dt)

    nstart = min(3, n_steps)
    if nstart > 0:
        # crude initial guess from Taylor, then fixed-point on the block
        for j in range(1, 4 if N > 3 else N):
            sj = j * dt
            f[j] = f0 + df0 * sj + 0.5 * a[0] * sj ** 2
            g[j] = df0 + a[0] * sj
        m = min(4, N)
        for _ in range(50):
            fo, go = f[:m].copy(), g[:m].copy()
            for j in range(m):
                a[j] = accel(j)
            gg = np.zeros(4)
            aa = np.zeros(4)
            gg[:m], aa[:m] = g[:m], a[:m]
            if m < 4:  # horizons shorter than three steps: extend by Taylor
                for j in range(m, 4):
                    gg[j] = df0 + a[0] * j * dt
                    aa[j] = a[0]
            for j in range(1, m):
                f[j] = f0 + dt * np.dot(_START_W[j], gg)
                g[j] = df0 + dt * np.dot(_START_W[j], aa)
            if np.allclose(f[:m], fo, rtol=0, atol=1e-15 * (1 + np.abs(fo).max())) and \
               np.allclose(g[:m], go, rtol=0, atol=1e-15 * (1 + np.abs(go).max())):
                break
        for j in range(m):
            a[j] = accel(j)
    for n in range(3, n_steps):
        fp = f[n] + dt * np.dot(_AB4, g[n:n - 4:-1] if n >= 4 else g[n::-1])
        gp = g[n] + dt * np.dot(_AB4, a[n:n - 4:-1] if n >= 4 else a[n::-1])
        f[n + 1] = fp
        a_p = -W2 * fp - k * _memory(eta, f, n + 1, dt)
        f[n + 1] = f[n] + dt * (_AM4[0] * gp + np.dot(_AM4[1:], g[n:n - 3:-1]))
        g[n + 1] = g[n] + dt * (_AM4[0] * a_p + np.dot(_AM4[1:], a[n:n - 3:-1]))
        a[n + 1] = accel(n + 1)
    return IVPSolution(kt.s[:N].copy(), f, g, a)


@dataclass(frozen=True)
class ElementaryFunctions:
    t: float
    dt: float
    s: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    du1: np.ndarray
    du2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    dw1: np.ndarray
    dw2: np.ndarray
    g0: np.ndarray
    dg0: np.ndarray
    fa: np.ndarray
    dfa: np.ndarray
    M: float
    Omega: float

    def to_csv(self, path):
        cols = ["s", "u1", "u2", "du1", "du2", "w1", "w2", "g0"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*(getattr(self, c) for c in cols)):
                w.writerow([repr(float(v)) for v in row])


def free_functions(Omega, t, s):
    """w1, w2 and derivatives for w'' + W^2 w = 0, w1(0)=1=w2(t), w1(t)=0=w2(0)."""
    s = np.asarray(s, dtype=float)
    if Omega == 0:
        return 1 - s / t, s / t, -np.ones_like(s) / t, np.ones_like(s) / t
    d = np.sin(Omega * t)
    if abs(d) < 1e-12:
        raise DegenerateHorizonError(f"sin(Omega t) = 0 at t = {t}", t=t)
    w1 = np.sin(Omega * (t - s)) / d
    w2 = np.sin(Omega * s) / d
    dw1 = -Omega * np.cos(Omega * (t - s)) / d
    dw2 = Omega * np.cos(Omega * s) / d
    return w1, w2, dw1, dw2


def combine_elementary(sa, sb, t_index, M, Omega, Omega_free=None, tol=1e-10):
    """u1, u2 at horizon s[t_index] from the two fundamental solutions."""
    n = t_index
    if n < 1:
        raise ConfigError("horizon must be > 0")
    t = float(sa.s[n])
    fa, dfa = sa.f[: n + 1], sa.df[: n + 1]
    fb, dfb = sb.f[: n + 1], sb.df[: n + 1]
    if abs(fb[n]) <= tol * max(np.abs(fb).max(), 1e-300):
        raise DegenerateHorizonError(f"focal horizon: f_b(t) = 0 at t = {t}", t=t)
    r = fa[n] / fb[n]
    u1 = fa - r * fb
    du1 = dfa - r * dfb
    u2 = fb / fb[n]
    du2 = dfb / fb[n]
    Wf = Omega if Omega_free is None else Omega_free
    w1, w2, dw1, dw2 = free_functions(Wf, t, sa.s[: n + 1])
    return ElementaryFunctions(t=t, dt=float(sa.s[1] - sa.s[0]), s=sa.s[: n + 1].copy(),
                               u1=u1, u2=u2, du1=du1, du2=du2, w1=w1, w2=w2,
                               dw1=dw1, dw2=dw2, g0=fb.copy(), dg0=dfb.copy(),
                               fa=fa.copy(), dfa=dfa.copy(), M=M, Omega=Omega)


def relative_frequency(Omega, kappa, M):
    """Frequency of the relative coordinate for a quadratic (k = 2) coupling."""
    return np.sqrt(Omega ** 2 + 2 * kappa / (M / 2))


def build_elementary(kt, M, Omega, t, Omega_free=None):
    """u_i, w_i and G0 on [0, t]; t must be a grid point of the kernel table."""
    if not t > 0:
        raise ConfigError("horizon must be > 0")
    n = int(round(t / kt.dt))
    if abs(n * kt.dt - t) > 1e-9 * max(1.0, t):
        raise ConfigError(f"horizon {t} is not on the kernel grid (dt={kt.dt})")
    sa = solve_homogeneous_ivp(kt, M, Omega, 1.0, 0.0, t)
    sb = solve_homogeneous_ivp(kt, M, Omega, 0.0, 1.0, t)
    return combine_elementary(sa, sb, n, M, Omega, Omega_free)


def green_retarded(ef, s, tau):
    """G1(s, tau) = theta(s - tau) G0(s - tau), linear interpolation."""
    if not (0 <= tau <= ef.t + 1e-12 and 0 <= s <= ef.t + 1e-12):
        raise RangeError("times outside [0, t]")
    if s <= tau:
        return 0.0
    return float(np.interp(s - tau, ef.s, ef.g0))
