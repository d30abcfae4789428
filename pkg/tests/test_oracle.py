import dataclasses

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from qbm2ho import coefficients, dynamics, kernels, oracle
from qbm2ho.dynamics import GaussianState, MarkovConstants, Ordering, SystemConfig, J4
from qbm2ho.errors import ConfigError
from qbm2ho.harness import criterion_oracle, oracle_setup

SD = kernels.SpectralDensity.ohmic(2.0, 0.1, 5.0)


def test_single_mode_sits_mid_band():
    b = oracle.discretize_ohmic(SD, 1, omega_max=8.0)
    assert b.freqs[0] == 4.0 and b.n == 1


def test_total_weight_matches_density():
    b = oracle.discretize_ohmic(SD, 400)
    total = np.sum(b.couplings ** 2 / (2 * b.masses * b.freqs))
    ref = quad(lambda w: kernels.eval_spectral_density(SD, w), 0, np.inf)[0] / (2 * np.pi)
    assert total == pytest.approx(ref, rel=1e-2)


def test_discrete_kernels_converge():
    # the window is a sizeable fraction of the recurrence time 2 pi n / (4 cutoff)
    ref = kernels.tabulate_kernels(SD, 1.0, 5.0, 0.01)
    errs = []
    for n in (10, 20, 40):
        kt = kernels.tabulate_kernels(oracle.discretize_ohmic(SD, n).spectral_density(), 1.0, 5.0, 0.01)
        errs.append(max(np.abs(kt.eta - ref.eta).max(), np.abs(kt.nu - ref.nu).max()))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6 * np.abs(ref.nu).max()


def test_zero_coupling_is_free_rotation(rng):
    cfg = SystemConfig(1.0, 1.7)
    bath = oracle.FiniteBath([1.0, 1.0], [0.9, 2.3], [0.0, 0.0])
    A = rng.normal(size=(4, 4))
    st0 = GaussianState(Ordering.LAB, rng.normal(size=4), A @ A.T + np.eye(4))
    t = np.linspace(0, 3, 7)
    ex = oracle.evolve_exact(bath, cfg, st0, 1.0, t)
    ref = dynamics.evolve(st0, cfg, MarkovConstants(1.7, 0, 0, 0), t, Ordering.LAB)
    assert np.allclose(ex.cov, ref.cov, atol=1e-12) and np.allclose(ex.mean, ref.mean, atol=1e-12)


def hand_generator(M, Om, m, w, C):
    # phase-space generator in (x1, x2, q, P1, P2, p)
    K = np.array([[M * Om ** 2, 0, C], [0, M * Om ** 2, C], [C, C, m * w ** 2]])
    Minv = np.diag([1 / M, 1 / M, 1 / m])
    A = np.zeros((6, 6))
    A[:3, 3:] = Minv
    A[3:, :3] = -K
    return A


def test_single_resonant_mode_against_generator():
    M, Om, m, w, C = 1.0, 1.5, 0.7, 1.5, 0.3
    flow = oracle.ExactFlow(oracle.FiniteBath([m], [w], [C]), SystemConfig(M, Om))
    A = hand_generator(M, Om, m, w, C)
    for t in (0.4, 2.0, 7.5):
        assert np.allclose(flow.symplectic_matrix(t), expm(A * t), atol=1e-11)


def test_flow_is_symplectic():
    flow = oracle.ExactFlow(oracle.discretize_ohmic(SD, 30), SystemConfig(1.0, 2.0, kappa=0.2))
    n = flow.n
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    for t in (0.3, 5.0):
        S = flow.symplectic_matrix(t)
        assert np.abs(S @ J @ S.T - J).max() < 1e-10


def test_mode_mass_reparametrisation():
    cfg = SystemConfig(1.0, 2.0)
    b = oracle.discretize_ohmic(SD, 40)
    lam = np.linspace(0.3, 3.0, 40)
    b2 = oracle.FiniteBath(b.masses * lam, b.freqs, b.couplings * np.sqrt(lam))
    st0 = dynamics.product_cm_rel_state(0.5, 1.0, 0.7, 0.8, mean=(0.3, 0.1, 0.2, -0.1))
    t = np.linspace(0, 5, 11)
    a = oracle.evolve_exact(b, cfg, st0, 2.0, t)
    c = oracle.evolve_exact(b2, cfg, st0, 2.0, t)
    assert np.allclose(a.cov, c.cov, rtol=1e-9, atol=1e-12)


def test_relative_block_is_untouched():
    st0 = dynamics.product_cm_rel_state(0.5, 1.0, 0.7, 0.8)
    ex = oracle.evolve_exact(oracle.discretize_ohmic(SD, 60), SystemConfig(1.0, 2.0), st0, 3.0,
                             np.linspace(0, 10, 21), Ordering.CMREL)
    d = np.linalg.det(ex.cov[:, 2:, 2:])
    assert np.allclose(d, d[0], rtol=1e-9)
    assert np.abs(ex.cov[:, :2, 2:]).max() < 1e-10


def test_recurrence_warning():
    b = oracle.discretize_ohmic(SD, 10)
    with pytest.warns(RuntimeWarning, match="t_rec"):
        tr = oracle.evolve_exact(b, SystemConfig(1.0, 2.0), dynamics.product_cm_rel_state(1, 1, 1, 1),
                                 1.0, [0.0, b.t_rec])
    assert "recurrence_warning" in tr.meta


def test_unstable_total_hamiltonian():
    with pytest.raises(ConfigError):
        oracle.ExactFlow(oracle.FiniteBath([1.0], [0.1], [5.0]), SystemConfig(1.0, 0.1))


def test_compare_identical_and_mismatched_grids():
    b = oracle.discretize_ohmic(SD, 20)
    st0 = dynamics.product_cm_rel_state(1, 1, 1, 1)
    a = oracle.evolve_exact(b, SystemConfig(1.0, 2.0), st0, 1.0, [0.0, 1.0, 2.0])
    rep = oracle.compare_master_vs_oracle(a, a)
    assert rep.max_rel_err == 0.0 and rep.diagnosis == "ok"
    c = oracle.evolve_exact(b, SystemConfig(1.0, 2.0), st0, 1.0, [0.0, 1.0, 2.5])
    with pytest.raises(ConfigError):
        oracle.compare_master_vs_oracle(a, c)


@pytest.mark.parametrize("fault,expected", [
    ("Delta", "Delta-sign"),
    ("Gamma", "Gamma-prefactor"),
])
def test_probe_names_the_convention_fault(fault, expected):
    rc, bath, kt, st0 = oracle_setup(dt=0.02, n_modes=200)
    s = rc.system
    tr = coefficients.coefficient_trajectory(kt, s.M, s.Omega)
    bad = (dataclasses.replace(tr, Delta=-tr.Delta) if fault == "Delta"
           else dataclasses.replace(tr, Gamma=0.5 * tr.Gamma))
    times = tr.t[::25]
    rerun = lambda c: dynamics.evolve(st0, s, c, times, Ordering.CMREL)
    ex = oracle.evolve_exact(bath, s, st0, rc.bath["T"], times, Ordering.CMREL)
    good = oracle.compare_master_vs_oracle(rerun(tr), ex, rerun=rerun, coefs=tr)
    assert good.diagnosis == "ok"
    rep = oracle.compare_master_vs_oracle(rerun(bad), ex, rerun=rerun, coefs=bad)
    assert rep.diagnosis == expected


def test_fault_injection_through_criterion():
    r = criterion_oracle(fault="delta-sign", dt=0.02, n_modes=200)
    assert not r.passed and r.details["diagnosis"] == "Delta-sign"
