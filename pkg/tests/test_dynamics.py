import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbm2ho import coefficients, dynamics, kernels
from qbm2ho.dynamics import (GaussianState, MarkovConstants, Ordering, SystemConfig, J4,
                             T_LAB_TO_CM, read_trajectory_csv)
from qbm2ho.errors import ConfigError, RangeError, UnsupportedModel
from qbm2ho.harness import GOLDEN_DIR

floats = st.floats(-3, 3, allow_nan=False)


def random_state(rng, ordering=Ordering.LAB):
    A = rng.normal(size=(4, 4))
    return GaussianState(ordering, rng.normal(size=4), A @ A.T + np.eye(4))


def test_transform_is_symplectic():
    T = T_LAB_TO_CM
    assert np.allclose(T @ J4 @ T.T, J4, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(floats, min_size=4, max_size=4), st.integers(0, 2 ** 31))
def test_round_trip(mean, seed):
    s = random_state(np.random.default_rng(seed))
    s = GaussianState(Ordering.LAB, np.array(mean), s.cov)
    back = s.to_cm_rel().to_lab()
    assert np.allclose(back.mean, s.mean, atol=1e-12)
    assert np.allclose(back.cov, s.cov, atol=1e-12)


def test_mean_example():
    s = GaussianState(Ordering.LAB, [1.0, 0.0, 1.0, 0.0], np.eye(4))
    assert np.array_equal(s.to_cm_rel().mean, [1.0, 0.0, 0.0, 0.0])


@pytest.mark.parametrize("a,b,c,d,product", [
    (0.5, 1.0, 1.0, 0.5, True),     # c = 2a, b = 2d
    (0.5, 1.0, 0.7, 0.5, False),
    (0.5, 1.2, 1.0, 0.5, False),
])
def test_lab_product_condition(a, b, c, d, product):
    lab = dynamics.product_cm_rel_state(a, b, c, d).to_lab().cov
    cross = lab[:2, 2:]
    assert bool(np.abs(cross).max() < 1e-15) is product


def test_rs_validate():
    good = dynamics.product_cm_rel_state(1.0, 0.5, 1.0, 0.5)
    assert good.rs_min_eig() == pytest.approx(0.0, abs=1e-14)
    good.validate()
    with pytest.raises(ConfigError):
        dynamics.product_cm_rel_state(1.0, 0.4, 1.0, 0.5).validate()
    with pytest.raises(ConfigError):
        GaussianState(Ordering.LAB, np.zeros(4), np.triu(np.ones((4, 4))))


def test_quarter_period_rotation():
    cfg = SystemConfig(1.0, 2.0)
    st0 = GaussianState(Ordering.CMREL, [1.0, 0.0, 1.0, 0.0], np.eye(4))
    t = np.pi / (2 * cfg.Omega)
    tr = dynamics.evolve(st0, cfg, MarkovConstants(2.0, 0, 0, 0), [t], Ordering.CMREL)
    X, P, x, p = tr.mean[0]
    assert X == pytest.approx(0, abs=1e-12) and P == pytest.approx(-cfg.M1 * 2.0)
    assert x == pytest.approx(0, abs=1e-12) and p == pytest.approx(-cfg.M2 * 2.0)


def test_relative_free_variances():
    cfg = SystemConfig(1.0, 0.0)
    a, b, c, d = 0.5, 1.0, 0.7, 0.8
    t = np.linspace(0, 3, 7)
    tr = dynamics.evolve(dynamics.product_cm_rel_state(a, b, c, d), cfg,
                         MarkovConstants(0, 0, 0, 0.4), t, Ordering.CMREL)
    ref = dynamics.free_particle_variances(a, b, c, d, 1.0, 0.4, t)
    assert np.allclose(tr.cov[:, 2, 2], ref["xx"], rtol=1e-12)
    assert np.allclose(tr.cov[:, 3, 3], ref["pp"], rtol=1e-12)
    assert np.allclose(tr.cov[:, 0, 0], ref["XX"], rtol=1e-10)
    assert np.allclose(tr.cov[:, 1, 1], ref["PP"], rtol=1e-12)


def test_pure_damping_lowers_energy():
    cfg = SystemConfig(1.0, 1.5)
    st0 = GaussianState(Ordering.CMREL, [1.0, 0.5, 0.0, 0.0], np.diag([1.0, 2.0, 1.0, 1.0]))
    t = np.linspace(0, 4, 41)
    tr = dynamics.evolve(st0, cfg, MarkovConstants(1.5, 0.2, 0, 0), t, Ordering.CMREL)
    E = (tr.cov[:, 1, 1] + tr.mean[:, 1] ** 2) / (2 * cfg.M1) \
        + 0.5 * cfg.M1 * 1.5 ** 2 * (tr.cov[:, 0, 0] + tr.mean[:, 0] ** 2)
    assert np.all(np.diff(E) < 0)


def test_uncoupled_det_and_product_preserved(rng):
    cfg = SystemConfig(1.0, 1.3)
    kt = kernels.tabulate_kernels(kernels.SpectralDensity.discrete([], [], []), 0.0, 2.0, 0.01)
    tr = coefficients.coefficient_trajectory(kt, 1.0, 1.3)
    s0 = random_state(rng)
    out = dynamics.evolve(s0, cfg, tr, tr.t[::20], Ordering.LAB)
    dets = np.linalg.det(out.cov)
    assert np.allclose(dets, dets[0], rtol=1e-10)
    # independent identical oscillators keep a lab product state a product
    prod = GaussianState(Ordering.LAB, np.zeros(4), np.diag([0.3, 1.2, 0.5, 0.9]))
    out = dynamics.evolve(prod, cfg, tr, tr.t[::20], Ordering.LAB)
    # cm block is integrated by RK4, the relative block exactly
    assert np.abs(out.cov[:, :2, 2:]).max() < 1e-9


def test_cm_rel_blocks_never_mix(regression_kt):
    cfg = SystemConfig(1.0, 2.0)
    tr = coefficients.coefficient_trajectory(regression_kt, 1.0, 2.0)
    out = dynamics.evolve(dynamics.product_cm_rel_state(0.5, 1.0, 0.7, 0.8), cfg, tr,
                          tr.t[::10], Ordering.CMREL)
    assert np.abs(out.cov[:, :2, 2:]).max() == 0.0
    rel = np.linalg.det(out.cov[:, 2:, 2:])
    assert np.allclose(rel, rel[0], rtol=1e-12)


def test_non_quadratic_coupling_refused():
    with pytest.raises(UnsupportedModel):
        SystemConfig(1.0, 1.0, kappa=0.1, k=4).require_gaussian()
    assert SystemConfig(1.0, 1.0, kappa=0.0, k=4).Omega_rel == 1.0
    assert SystemConfig(1.0, 1.0, kappa=0.25).Omega_rel == pytest.approx(np.sqrt(2.0))


def test_times_beyond_coefficients(regression_kt):
    tr = coefficients.coefficient_trajectory(regression_kt, 1.0, 2.0)
    with pytest.raises(RangeError):
        dynamics.evolve(dynamics.product_cm_rel_state(1, 1, 1, 1), SystemConfig(1.0, 2.0), tr,
                        [0.0, 5.0])


def test_csv_round_trip(tmp_path, regression_kt):
    tr = coefficients.coefficient_trajectory(regression_kt, 1.0, 2.0)
    out = dynamics.evolve(dynamics.product_cm_rel_state(0.5, 1.0, 0.7, 0.8), SystemConfig(1.0, 2.0),
                          tr, tr.t[::50], Ordering.LAB)
    out.to_csv(tmp_path / "t.csv")
    back = read_trajectory_csv(tmp_path / "t.csv")
    assert np.allclose(back.cov, out.cov, rtol=1e-15) and np.allclose(back.mean, out.mean)


def test_golden_trajectory():
    gold = read_trajectory_csv(f"{GOLDEN_DIR}/trajectory.csv")
    # initial row: lab transform of the regression widths and mean
    s0 = dynamics.product_cm_rel_state(0.5, 1.0, 0.7, 0.8, mean=(0.3, 0.1, 0.2, -0.1)).to_lab()
    assert np.allclose(gold.cov[0], s0.cov, atol=1e-15)
    assert np.allclose(gold.mean[0], s0.mean, atol=1e-15)
    assert min(dynamics.rs_min_eig(c) for c in gold.cov) > -1e-12
