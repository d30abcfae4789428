"""Entanglement and uncertainty diagnostics for two-oscillator Gaussian states."""
from dataclasses import dataclass

import numpy as np
from scipy.signal import argrelextrema

from .dynamics import Ordering, Trajectory
from .errors import ConfigError


@dataclass(frozen=True)
class DuanReport:
    variance_u: float
    variance_v: float
    lhs: float
    separable: bool
    scaling_constants: tuple


def duan_scaling(M, D, hbar=1.0):
    """(x scale, P scale) making x~ = s_x x and P~ = s_P P canonical and dimensionless."""
    if not (M > 0 and D > 0):
        raise ConfigError("the diffusion scaling needs M > 0 and D > 0; pass an explicit scaling")
    return (M * D / hbar ** 3) ** 0.25, (1.0 / (hbar * M * D)) ** 0.25


def duan_check(state, M=None, D=None, hbar=None, scaling=None):
    """Sum of the EPR-like variances of u = x~1 - x~2 and v = P~1 + P~2.

    The state is separable iff the sum is >= 2.  ``scaling`` overrides the
    default (M D / hbar^3)^(1/4), (1 / hbar M D)^(1/4) pair.
    """
    s = state.to(Ordering.LAB)
    hb = s.hbar if hbar is None else hbar
    if scaling is None:
        if M is None or D is None:
            raise ConfigError("give M and D, or an explicit scaling pair")
        sx, sp = duan_scaling(M, D, hb)
    else:
        sx, sp = map(float, scaling)
        if abs(sx * sp * hb - 1.0) > 1e-9:
            raise ConfigError("override scaling must satisfy s_x s_P hbar = 1")
    u = np.array([sx, 0.0, -sx, 0.0])
    v = np.array([0.0, sp, 0.0, sp])
    vu = float(u @ s.cov @ u)
    vv = float(v @ s.cov @ v)
    lhs = vu + vv
    return DuanReport(vu, vv, lhs, bool(lhs >= 2.0), (sx, sp))


def duan_series(traj, M, D, scaling=None):
    return [duan_check(traj.state(i), M, D, scaling=scaling) for i in range(len(traj.t))]


def dent_coefficients(a, b, c, d, M, D, hbar=1.0):
    """(A, B, C) of the separability polynomial A t^2 + B t + C for the free-particle example."""
    r = np.sqrt(M * D / hbar ** 3)
    A = 4 * d * d / M ** 2 * r
    B = 2 * np.sqrt(D / (hbar * M))
    C = b * b / np.sqrt(hbar * M * D) + c * c * r
    return A, B, C


def _check_widths(a, b, c, d, hbar, tol=1e-12):
    q = hbar * hbar / 4
    if a * a * b * b < q * (1 - tol) or c * c * d * d < q * (1 - tol):
        raise ConfigError("widths violate a^2 b^2 >= hbar^2/4 or c^2 d^2 >= hbar^2/4")


def disentanglement_time(a, b, c, d, M, gamma, T, hbar=1.0, kB=1.0):
    """Time after which the free-particle Markov example is separable (0 if already)."""
    _check_widths(a, b, c, d, hbar)
    if not (M > 0 and gamma > 0 and T > 0):
        raise ConfigError("need M, gamma, T > 0")
    D = 2 * (2 * M) * gamma * kB * T
    A, B, C = dent_coefficients(a, b, c, d, M, D, hbar)
    if C >= 2:
        return 0.0
    return float((-B + np.sqrt(B * B - 4 * A * C + 8 * A)) / (2 * A))


def squeezed_widths(eps, M, D, hbar=1.0):
    """Minimum-uncertainty widths (a, b, c, d) with C = 2 eps in the Duan polynomial."""
    b2 = eps * np.sqrt(hbar * M * D)
    c2 = eps * np.sqrt(hbar ** 3 / (M * D))
    a2 = hbar ** 2 / (4 * b2)
    d2 = hbar ** 2 / (4 * c2)
    return tuple(float(np.sqrt(v)) for v in (a2, b2, c2, d2))


def uncertainty_product(traj):
    """U(t) from cm/rel variances, U_{x_i p_i} from lab variances, and the 1/8 bound flag."""
    cm = traj.to(Ordering.CMREL).cov
    lab = traj.to(Ordering.LAB).cov
    U = cm[:, 0, 0] * cm[:, 1, 1] * cm[:, 2, 2] * cm[:, 3, 3]
    Ulab = lab[:, 0, 0] * lab[:, 1, 1] * lab[:, 2, 2] * lab[:, 3, 3]
    return U, Ulab, Ulab >= U / 8


def _coth(x):
    return 1.0 / np.tanh(x)


def closed_form_fcm_frel(Omega, gamma, T, delta, t, hbar=1.0, kB=1.0):
    """Weak-damping uncertainty functions (f_cm, f_rel) for an initial Gaussian of width parameter delta."""
    if not Omega > 0:
        raise ConfigError("Omega must be > 0")
    if gamma >= 2 * Omega:
        raise ConfigError("closed form needs gamma < 2 Omega (underdamped)")
    if gamma < 0 or T <= 0 or delta <= 0:
        raise ConfigError("need gamma >= 0, T > 0, delta > 0")
    t = np.asarray(t, float)
    Wp = np.sqrt(Omega ** 2 - gamma ** 2 / 4)
    ct = _coth(hbar * Wp / (2 * kB * T))
    e = np.exp(-gamma * t)
    s2 = np.sin(2 * Wp * t)
    g1 = 0.25 * hbar ** 2 * (e + ct * (1 - e)) ** 2
    g2 = hbar ** 2 * ct * ((1 - delta) ** 2 / (4 * delta) * (1 - e)
                           - (1 - delta ** 2) * gamma / (8 * Wp * delta) * s2) * e
    g3 = hbar ** 2 * ((1 - delta ** 2) / (4 * delta) * s2
                      + gamma / (2 * Wp) * (ct - (1 + delta ** 2) / (2 * delta))
                      * np.sin(Wp * t) ** 2) ** 2 * e * e
    f_cm = g1 + g2 + g3
    f_rel = 0.25 * hbar ** 2 * (1 + (1 - delta ** 2) ** 2 * np.sin(2 * Omega * t) ** 2
                                / (4 * delta ** 2))
    return f_cm, f_rel


def short_time_fcm_frel(Omega, gamma, T, delta, t, hbar=1.0, kB=1.0):
    """Linear-in-t expansions valid for t << 1/gamma, 1/Omega."""
    t = np.asarray(t, float)
    Wp = np.sqrt(Omega ** 2 - gamma ** 2 / 4)
    ct = _coth(hbar * Wp / (2 * kB * T))
    f_cm = 0.25 * hbar ** 2 * (1 + 2 * (delta * ct - 1) * gamma * t)
    return f_cm, 0.25 * hbar ** 2 * np.ones_like(t)


def weak_damping_state(Omega, delta, M, hbar=1.0):
    """CmRel covariance of the product state with width parameter delta in each block."""
    M1, M2 = 2 * M, M / 2
    sX = delta * hbar / (2 * M1 * Omega)
    sx = delta * hbar / (2 * M2 * Omega)
    return np.diag([sX, hbar ** 2 / (4 * sX), sx, hbar ** 2 / (4 * sx)])


@dataclass(frozen=True)
class Visibility:
    value: float
    flat: bool


def fringe_visibility(density, x, L0=None, window=None, center=0.0):
    """(max - min)/(max + min) over the interference extrema inside the window.

    The window defaults to [-L0/2, L0/2] around ``center``.  Only interior local
    maxima and minima count, so a smooth envelope without fringes gives 0 and
    the flat flag.
    """
    x = np.asarray(x, float)
    y = np.real(np.asarray(density))
    if window is None:
        if L0 is None:
            raise ConfigError("give L0 or an explicit window")
        window = (-0.5 * abs(L0), 0.5 * abs(L0))
    lo, hi = center + window[0], center + window[1]
    sel = (x >= lo) & (x <= hi)
    ys = y[sel]
    if len(ys) < 3:
        raise ConfigError("window holds fewer than three samples")
    imax = argrelextrema(ys, np.greater_equal)[0]
    imin = argrelextrema(ys, np.less_equal)[0]
    inner = lambda idx: idx[(idx > 0) & (idx < len(ys) - 1)]
    imax, imin = inner(imax), inner(imin)
    if len(imax) == 0 or len(imin) == 0:
        return Visibility(0.0, True)
    hi_v, lo_v = ys[imax].max(), ys[imin].min()
    if hi_v - lo_v <= 1e-12 * max(abs(hi_v), 1e-300):
        return Visibility(0.0, True)
    return Visibility(float((hi_v - lo_v) / (hi_v + lo_v)), False)


def trajectory_from_arrays(t, mean, cov, ordering=Ordering.CMREL, hbar=1.0):
    return Trajectory(np.asarray(t, float), np.asarray(mean, float), np.asarray(cov, float),
                      ordering, hbar)
