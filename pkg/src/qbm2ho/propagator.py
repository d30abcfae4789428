"""Density-matrix propagator and superpositions of displaced Gaussians.

Units: M = hbar = 1 throughout this module (per-oscillator mass).  The
propagator kernel is

    J = Nt exp(i S_I / 2 - S_R)

with S_I built from b1..b8 and S_R = a11 (x+_t - y+_t)^2 + a22 (x+_0 - y+_0)^2
+ a12 (x+_0 - y+_0)(x+_t - y+_t), where x+ = x1 + x2, x- = x1 - x2.
The difference path solves the time-reversed memory equation, so its
elementary functions are u2(t - s) and u1(t - s).  Hence a11 = (1/2) <u1 nu u1>
multiplies the final-endpoint difference, a22 = (1/2) <u2 nu u2> the initial
one, and a12 = <u1 nu u2> is the full cross term.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .elementary import quad_weights
from .errors import ConfigError

# ket/bra slot displacement signs of the four product components
_PATTERN = {1: (1, 1), 2: (1, -1), 3: (-1, 1), 4: (-1, -1)}


@dataclass(frozen=True)
class PropagatorData:
    t: float
    b: np.ndarray  # b[0] = b1 ... b[7] = b8
    a11: float
    a12: float
    a22: float

    def bi(self, i):
        return float(self.b[i - 1])

    @property
    def norm(self):
        """Kernel normalization fixed by trace preservation."""
        return abs(self.bi(3) * self.bi(7)) / np.pi ** 2

    def noise_psd_gap(self):
        return self.a11 * self.a22 - 0.25 * self.a12 ** 2


def _noise_form(f, g, nu, dt):
    n = len(f) - 1
    w = quad_weights(n) * dt
    Nmat = toeplitz(nu[: n + 1])
    return 0.5 * (w * f) @ Nmat @ (w * g)


def build_propagator(ef, kt):
    if abs(ef.M - 1.0) > 1e-12 or abs(kt.hbar - 1.0) > 1e-12:
        raise ConfigError("propagator works in M = hbar = 1 units; rescale the inputs")
    if abs(ef.dt - kt.dt) > 1e-12 * max(1.0, kt.dt) or ef.t > kt.t_max + 1e-12:
        raise ConfigError("elementary functions and kernel table grids differ")
    if not (np.isfinite(ef.du1[-1]) and np.isfinite(ef.du2[-1])):
        raise ConfigError("degenerate horizon")
    b = 0.5 * np.array([ef.du2[-1], ef.du1[-1], ef.du2[0], ef.du1[0],
                        ef.dw2[-1], ef.dw1[-1], ef.dw2[0], ef.dw1[0]])
    nu = kt.nu
    a11 = _noise_form(ef.u1, ef.u1, nu, kt.dt)
    a22 = _noise_form(ef.u2, ef.u2, nu, kt.dt)
    a12 = 2 * _noise_form(ef.u1, ef.u2, nu, kt.dt)
    return PropagatorData(ef.t, b, float(a11), float(a12), float(a22))


def propagator_exponent(pd, qf, q0):
    """i S_I / 2 - S_R for final coordinates qf=(x1,x2,y1,y2) and initial q0."""
    b = lambda i: pd.bi(i)
    xpt, ypt = qf[0] + qf[1], qf[2] + qf[3]
    xmt, ymt = qf[0] - qf[1], qf[2] - qf[3]
    xp0, yp0 = q0[0] + q0[1], q0[2] + q0[3]
    xm0, ym0 = q0[0] - q0[1], q0[2] - q0[3]
    SI = (b(1) * (xpt + ypt) * (xpt - ypt) + b(2) * (xp0 + yp0) * (xpt - ypt)
          - b(3) * (xpt + ypt) * (xp0 - yp0) - b(4) * (xp0 + yp0) * (xp0 - yp0)
          + b(5) * (xmt + ymt) * (xmt - ymt) + b(6) * (xm0 + ym0) * (xmt - ymt)
          - b(7) * (xmt + ymt) * (xm0 - ym0) - b(8) * (xm0 + ym0) * (xm0 - ym0))
    SR = (pd.a11 * (xpt - ypt) ** 2 + pd.a22 * (xp0 - yp0) ** 2
          + pd.a12 * (xp0 - yp0) * (xpt - ypt))
    return 0.5j * SI - SR


def _kernel_matrix(pd):
    """Symmetric 8x8 H with exponent = v^T H v, v = (qf, q0)."""
    E = lambda v: propagator_exponent(pd, v[:4], v[4:])
    H = np.zeros((8, 8), dtype=complex)
    I = np.eye(8)
    d = [E(I[i]) for i in range(8)]
    for i in range(8):
        H[i, i] = d[i]
        for j in range(i + 1, 8):
            H[i, j] = H[j, i] = 0.5 * (E(I[i] + I[j]) - d[i] - d[j])
    return H


@dataclass(frozen=True)
class SuperpositionSpec:
    L0: float
    P0: float
    delta: float
    s: tuple

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("delta must be > 0")
        object.__setattr__(self, "s", tuple(complex(x) for x in self.s))
        if len(self.s) != 4:
            raise ConfigError("need four amplitudes")

    def overlap_1d(self):
        """<psi_a|psi_b> for the two displaced Gaussians (2x2, real)."""
        o = np.exp(-self.L0 ** 2 / self.delta ** 2 - self.P0 ** 2 * self.delta ** 2)
        return np.array([[1.0, o], [o, 1.0]])

    def norm2(self):
        O = self.overlap_1d()
        s = np.array(self.s)
        tot = 0j
        for i in range(1, 5):
            for j in range(1, 5):
                a1, a2 = [(0 if v > 0 else 1) for v in _PATTERN[i]]
                b1, b2 = [(0 if v > 0 else 1) for v in _PATTERN[j]]
                tot += s[i - 1] * np.conj(s[j - 1]) * O[b1, a1] * O[b2, a2]
        return float(tot.real)

    def normalized(self):
        n = np.sqrt(self.norm2())
        return SuperpositionSpec(self.L0, self.P0, self.delta, tuple(np.array(self.s) / n))

    @property
    def N(self):
        return (np.pi * self.delta ** 2) ** -0.25


@dataclass(frozen=True)
class GaussianExponent4:
    G: np.ndarray
    F: np.ndarray
    c: complex


def _sqrt_det_and_inv(G):
    """sqrt(det G) continued from Re G, and G^-1; Re G must be positive definite."""
    G = np.asarray(G, dtype=complex)
    R = G.real
    try:
        Lc = np.linalg.cholesky(0.5 * (R + R.T))
    except np.linalg.LinAlgError:
        raise ConfigError("exponent not integrable: Re(G) is not positive definite")
    Li = np.linalg.inv(Lc)
    S = Li @ G.imag @ Li.T
    s = np.linalg.eigvalsh(0.5 * (S + S.T))
    # det G = det(Re G) prod(1 + i s_k); each factor stays in the right half-plane
    sq = np.prod(np.diag(Lc)) * np.prod(np.sqrt(1 + 1j * s))
    return sq, np.linalg.inv(G)


def gaussian_integrate_4(e):
    """int d^4x exp(-x^T G x + F^T x + c) = pi^2/sqrt(det G) exp(c + F^T G^-1 F / 4)."""
    sq, Gi = _sqrt_det_and_inv(e.G)
    F = np.asarray(e.F, dtype=complex)
    return np.pi ** 2 / sq * np.exp(e.c + 0.25 * F @ Gi @ F)


def _initial_terms(spec, i, j):
    """Linear coefficients and constant of rho_ij(t=0) over (x10, x20, y10, y20)."""
    sig = np.array(_PATTERN[i] + _PATTERN[j], dtype=float)
    ket = np.array([1, 1, -1, -1], dtype=float)
    lin = sig * spec.L0 / spec.delta ** 2 + 1j * ket * sig * spec.P0
    const = -4 * spec.L0 ** 2 / (2 * spec.delta ** 2)
    return lin, const


def component_parts(pd, spec, i, j):
    """G, and F(q) = F0 + B q, c(q) = q^T Hff q + c0 for component (i, j)."""
    if i not in _PATTERN or j not in _PATTERN:
        raise ConfigError("component indices must be in 1..4")
    H = _kernel_matrix(pd)
    Hff, Hf0, H00 = H[:4, :4], H[:4, 4:], H[4:, 4:]
    G = -H00 + np.eye(4) / (2 * spec.delta ** 2)
    lin, const = _initial_terms(spec, i, j)
    B = 2 * Hf0.T
    return G, lin, B, Hff, const


def build_component_exponent(pd, spec, i, j, final_coords):
    G, lin, B, Hff, const = component_parts(pd, spec, i, j)
    q = np.asarray(final_coords, dtype=float)
    return GaussianExponent4(G, lin + B @ q, complex(q @ Hff @ q + const))


def det_G_closed(a22, b4, b8, delta):
    """Closed-form det G (G is common to all sixteen components)."""
    d = delta
    return (b4 ** 2 * b8 ** 2 + 1 / (16 * d ** 8) + a22 / (2 * d ** 6) + b4 ** 2 / (4 * d ** 4)
            + b8 ** 2 / (4 * d ** 4) + 2 * a22 * b8 ** 2 / d ** 2)


def Ginv13_closed(a22, b4, b8, delta):
    return (a22 * b8 ** 2 + a22 / (4 * delta ** 4)) / det_G_closed(a22, b4, b8, delta)


def component_quadratic(pd, spec, i, j):
    """rho_ij(q) = exp(q^T K q + l^T q + k0) after integrating the initial coordinates."""
    G, lin, B, Hff, const = component_parts(pd, spec, i, j)
    sq, Gi = _sqrt_det_and_inv(G)
    K = Hff + 0.25 * B.T @ Gi @ B
    l = 0.5 * B.T @ Gi @ lin
    k0 = const + 0.25 * lin @ Gi @ lin + np.log(pd.norm * spec.N ** 4 * np.pi ** 2 / sq)
    return 0.5 * (K + K.T), l, k0


def evolve_component(pd, spec, i, j, points):
    K, l, k0 = component_quadratic(pd, spec, i, j)
    q = np.atleast_2d(np.asarray(points, dtype=float))
    return np.exp(np.einsum("ni,ij,nj->n", q, K, q) + q @ l + k0)


def evolve_superposition(pd, spec, points, weights_only=None):
    """rho_r at points (n, 4) = (x1, x2, y1, y2); sum_ij s_i s_j^* rho_ij."""
    q = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(q), dtype=complex)
    for i in range(1, 5):
        for j in range(1, 5):
            w = spec.s[i - 1] * np.conj(spec.s[j - 1])
            if weights_only is not None:
                w = w * weights_only[i - 1][j - 1]
            if w == 0:
                continue
            out += w * evolve_component(pd, spec, i, j, q)
    return out


def _wigner_parts(pd, spec, i, j):
    # q = R v, v = (X1, X2, z1, z2); x = X - z/2, y = X + z/2
    R = np.array([[1, 0, -0.5, 0], [0, 1, 0, -0.5], [1, 0, 0.5, 0], [0, 1, 0, 0.5]], float)
    K, l, k0 = component_quadratic(pd, spec, i, j)
    Kv = R.T @ K @ R
    lv = R.T @ l
    Kxx, Kxz, Kzz = Kv[:2, :2], Kv[:2, 2:], Kv[2:, 2:]
    A = -Kzz
    return Kxx, Kxz, A, lv[:2], lv[2:], k0


def wigner_of_component(pd, spec, i, j, phase_points):
    """W_ij at (X1, X2, P1, P2) points, normalized with 1/(2 pi)^2."""
    Kxx, Kxz, A, lx, lz, k0 = _wigner_parts(pd, spec, i, j)
    sq, Ai = _sqrt_det_2(A)
    w = np.atleast_2d(np.asarray(phase_points, float))
    X, P = w[:, :2], w[:, 2:]
    bvec = 2 * X @ Kxz + lz[None, :] + 1j * P
    expo = (np.einsum("ni,ij,nj->n", X, Kxx, X) + X @ lx + k0
            + 0.25 * np.einsum("ni,ij,nj->n", bvec, Ai, bvec))
    return np.pi / sq * np.exp(expo) / (2 * np.pi) ** 2


def _sqrt_det_2(A):
    return _sqrt_det_and_inv(A)


def wigner_superposition(pd, spec, phase_points):
    out = 0
    for i in range(1, 5):
        for j in range(1, 5):
            w = spec.s[i - 1] * np.conj(spec.s[j - 1])
            if w != 0:
                out = out + w * wigner_of_component(pd, spec, i, j, phase_points)
    return out


def gaussian_component_moments(pd, spec, i):
    """Mean and covariance (x1, P1, x2, P2) of a diagonal component rho_ii."""
    Kxx, Kxz, A, lx, lz, k0 = _wigner_parts(pd, spec, i, i)
    Ai = np.linalg.inv(A)
    # exponent in w = (X1, X2, P1, P2): w^T Q w + L^T w + const
    Bm = np.zeros((2, 4), dtype=complex)
    Bm[:, :2] = 2 * Kxz.T
    Bm[:, 2:] = 1j * np.eye(2)
    Q = np.zeros((4, 4), dtype=complex)
    Q[:2, :2] = Kxx
    Q += 0.25 * Bm.T @ Ai @ Bm
    L = np.concatenate([lx, np.zeros(2)]) + 0.5 * Bm.T @ Ai @ lz
    Q = 0.5 * (Q + Q.T).real
    L = L.real
    cov = np.linalg.inv(-2 * Q)
    mean = cov @ L
    perm = [0, 2, 1, 3]
    return mean[perm], cov[np.ix_(perm, perm)]
