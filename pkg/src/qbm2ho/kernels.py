"""Bath spectral densities and the dissipation / noise kernels.

Normalization used throughout the package: a bath of modes (m_n, w_n, C_n),
each coupled through (x1 + x2) * C_n q_n, enters the kernels only via the
mode weight density

    J(w) = sum_n C_n^2 / (2 m_n w_n) * delta(w - w_n)

with eta(s) = -int J(w) sin(ws) dw and nu(s) = int J(w) coth(hbar w / 2kT) cos(ws) dw.
The ohmic family is specified by I(w) = M1 * gamma * w * exp(-w^2/L^2) and
maps to J = I / (2 pi).  With this choice gamma is the Markov damping rate of
the centre of mass, i.e. <P> decays as exp(-2 gamma t).
"""
from dataclasses import dataclass, field
import csv
import enum

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericalError, ResourceError, UnsupportedOperation

OHMIC_MODE_NORM = 1.0 / (2.0 * np.pi)
GRID_CAP = 2 ** 20


class BathKind(enum.Enum):
    OHMIC_GAUSSIAN = "ohmic_gaussian"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class SpectralDensity:
    kind: BathKind
    M1: float = 0.0
    gamma: float = 0.0
    cutoff: float = 0.0
    modes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    prefactor: float = 1.0

    def __post_init__(self):
        if self.prefactor < 0:
            raise ConfigError("prefactor must be non-negative")
        if self.kind is BathKind.OHMIC_GAUSSIAN:
            if not self.gamma > 0:
                raise ConfigError("gamma must be > 0")
            if not self.cutoff > 0:
                raise ConfigError("cutoff must be > 0")
            if not self.M1 > 0:
                raise ConfigError("M1 must be > 0")
        else:
            m = np.asarray(self.modes, dtype=float).reshape(-1, 3)
            object.__setattr__(self, "modes", m)
            if np.any(m[:, 0] <= 0) or np.any(m[:, 1] <= 0):
                raise ConfigError("mode masses and frequencies must be > 0")

    @classmethod
    def ohmic(cls, M1, gamma, cutoff, prefactor=1.0):
        return cls(BathKind.OHMIC_GAUSSIAN, M1=float(M1), gamma=float(gamma),
                   cutoff=float(cutoff), prefactor=float(prefactor))

    @classmethod
    def discrete(cls, masses, freqs, couplings, prefactor=1.0):
        m = np.column_stack([np.atleast_1d(masses), np.atleast_1d(freqs),
                             np.atleast_1d(couplings)]).astype(float)
        return cls(BathKind.DISCRETE, modes=m, prefactor=float(prefactor))

    def with_cm_factor(self):
        """Density seen by the centre of mass (coupling 2 C_n)."""
        return SpectralDensity(self.kind, self.M1, self.gamma, self.cutoff,
                               self.modes, 4.0 * self.prefactor)

    def mode_weights(self):
        """C_n^2 / (2 m_n w_n) for a discrete bath (times prefactor)."""
        if self.kind is not BathKind.DISCRETE:
            raise UnsupportedOperation("mode weights exist only for discrete baths")
        m, w, c = self.modes.T
        return self.prefactor * c ** 2 / (2.0 * m * w)


def eval_spectral_density(sd, omega):
    """I(w) for the ohmic family; point evaluation of a delta comb is refused."""
    if sd.kind is BathKind.DISCRETE:
        raise UnsupportedOperation("point evaluation of a discrete (delta-comb) density")
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ConfigError("omega must be >= 0")
    return sd.prefactor * sd.M1 * sd.gamma * w * np.exp(-(w / sd.cutoff) ** 2)


def _ohmic_amp(sd):
    return OHMIC_MODE_NORM * sd.prefactor * sd.M1 * sd.gamma


def dissipation_kernel(sd, s):
    """eta(s) = -int_0^inf J(w) sin(ws) dw."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ConfigError("s must be >= 0")
    if sd.kind is BathKind.OHMIC_GAUSSIAN:
        L = sd.cutoff
        # int_0^inf w exp(-w^2/L^2) sin(ws) dw = sqrt(pi)/4 L^3 s exp(-L^2 s^2/4)
        return -_ohmic_amp(sd) * np.sqrt(np.pi) / 4 * L ** 3 * s * np.exp(-(L * s) ** 2 / 4)
    wts = sd.mode_weights()
    w = sd.modes[:, 1]
    return -np.sin(np.multiply.outer(s, w)) @ wts


def _coth_factor(w, T, hbar, kB):
    """coth(hbar w / 2kT), with T = 0 giving 1."""
    if T == 0:
        return np.ones_like(w)
    x = hbar * np.asarray(w, dtype=float) / (2 * kB * T)
    return 1.0 / np.tanh(x)


def _w_coth(w, T, hbar, kB):
    # w * coth(hbar w / 2kT), finite at w = 0
    if T == 0:
        return w
    if w == 0:
        return 2 * kB * T / hbar
    x = hbar * w / (2 * kB * T)
    return w / np.tanh(x)


def noise_kernel(sd, T, s, hbar=1.0, kB=1.0, rtol=1e-9):
    """nu(s) = int_0^inf J(w) coth(hbar w / 2kT) cos(ws) dw."""
    if T < 0:
        raise ConfigError("temperature must be >= 0")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ConfigError("s must be >= 0")
    if sd.kind is BathKind.DISCRETE:
        wts = sd.mode_weights()
        w = sd.modes[:, 1]
        return np.cos(np.multiply.outer(s_arr, w)) @ (wts * _coth_factor(w, T, hbar, kB))
    out = np.array([_ohmic_nu_point(sd, T, x, hbar, kB, rtol) for x in s_arr.ravel()])
    return out.reshape(s_arr.shape) if s_arr.ndim else out[0]


def _ohmic_nu_point(sd, T, s, hbar, kB, rtol):
    L = sd.cutoff
    wmax = 9.0 * L  # exp(-81) is far below double precision relative to the peak
    amp = _ohmic_amp(sd)
    f = lambda w: _w_coth(w, T, hbar, kB) * np.exp(-(w / L) ** 2)
    scale = max(L, 2 * kB * T / hbar) * L
    kw = dict(epsabs=1e-15 * scale, epsrel=rtol, limit=400)
    if s == 0:
        val, err, info = integrate.quad(f, 0, wmax, full_output=1, **kw)[:3]
    else:
        val, err, info = integrate.quad(f, 0, wmax, weight="cos", wvar=s,
                                        full_output=1, **kw)[:3]
    if err > max(10 * rtol * abs(val), 1e-12 * scale):
        raise NumericalError("noise-kernel quadrature did not converge",
                             {"s": s, "value": val, "error_estimate": err,
                              "neval": info.get("neval")})
    return amp * val


@dataclass(frozen=True)
class KernelTable:
    s: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    T: float
    hbar: float = 1.0
    kB: float = 1.0

    @property
    def dt(self):
        return float(self.s[1] - self.s[0]) if len(self.s) > 1 else 0.0

    @property
    def t_max(self):
        return float(self.s[-1])

    def nu_signed(self, lags):
        """nu at integer lags (any sign), using evenness."""
        return self.nu[np.abs(lags)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "eta", "nu"])
            for row in zip(self.s, self.eta, self.nu):
                w.writerow([repr(float(v)) for v in row])


def tabulate_kernels(sd, T, t_max, dt, hbar=1.0, kB=1.0, cap=GRID_CAP):
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    if t_max < dt:
        raise ConfigError("t_max must be >= dt")
    n = int(round(t_max / dt)) + 1
    if n > cap:
        raise ResourceError(f"grid of {n} points exceeds cap {cap}")
    s = dt * np.arange(n)
    eta = np.asarray(dissipation_kernel(sd, s), dtype=float)
    nu = np.asarray(noise_kernel(sd, T, s, hbar, kB), dtype=float)
    return KernelTable(s=s, eta=eta, nu=nu, T=float(T), hbar=hbar, kB=kB)


def read_kernel_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]
