import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qbm2ho import elementary, kernels
from qbm2ho.elementary import quad_weights
from qbm2ho.errors import ConfigError, DegenerateHorizonError, RangeError
from qbm2ho.harness import ivp_refinement_ratios, GOLDEN_DIR


def free_kt(t_max=5.0, dt=0.01):
    return kernels.tabulate_kernels(kernels.SpectralDensity.discrete([], [], []), 0.0, t_max, dt)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), p=st.integers(0, 3))
def test_quad_weights_exact_for_low_degree(n, p):
    # rules are exact for polynomials up to degree 1 (n=1), 3 (n=2..4) and 3 otherwise
    if n == 1 and p > 1:
        return
    x = np.arange(n + 1, dtype=float)
    assert np.dot(quad_weights(n), x ** p) == pytest.approx(n ** (p + 1) / (p + 1), rel=1e-12)


def test_free_ivp_cos_and_sin():
    kt = free_kt(dt=0.005)
    a = elementary.solve_homogeneous_ivp(kt, 1.0, 2.0, 1.0, 0.0)
    b = elementary.solve_homogeneous_ivp(kt, 1.0, 2.0, 0.0, 1.0)
    assert np.abs(a.f - np.cos(2 * kt.s)).max() < 1e-8
    assert np.abs(b.f - np.sin(2 * kt.s) / 2).max() < 1e-8
    W = a.f * b.df - a.df * b.f
    assert np.abs(W - 1).max() < 1e-8


def test_single_mode_matches_normal_modes():
    # cm equation with one bath mode: M1 X'' = -M1 W^2 X - 2 C q, m q'' = -m w^2 q - 2 C X
    M, Om, m, w, C = 1.0, 1.3, 1.0, 2.1, 0.6
    sd = kernels.SpectralDensity.discrete([m], [w], [C])
    kt = kernels.tabulate_kernels(sd, 0.0, 4.0, 0.005)
    M1 = 2 * M
    A = np.array([[0, 1, 0, 0], [-Om ** 2, 0, -2 * C / M1, 0],
                  [0, 0, 0, 1], [-2 * C / m, 0, -w ** 2, 0]])
    for f0, df0 in ((1.0, 0.0), (0.0, 1.0)):
        sol = elementary.solve_homogeneous_ivp(kt, M, Om, f0, df0)
        ref = np.array([(expm(A * s) @ [f0, df0, 0, 0])[:2] for s in kt.s[::50]])
        assert np.abs(sol.f[::50] - ref[:, 0]).max() < 1e-9
        assert np.abs(sol.df[::50] - ref[:, 1]).max() < 1e-9


def test_fourth_order_refinement():
    errs, ratios = ivp_refinement_ratios()
    assert np.all(ratios >= 8)


def test_horizon_beyond_table():
    with pytest.raises(RangeError):
        elementary.solve_homogeneous_ivp(free_kt(1.0), 1.0, 1.0, 1.0, 0.0, horizon=2.0)


def test_free_limit_equals_w():
    kt = free_kt(dt=0.005)
    t = 1.2
    ef = elementary.build_elementary(kt, 1.0, 2.0, t)
    assert np.abs(ef.u1 - ef.w1).max() < 1e-8
    assert np.abs(ef.u2 - ef.w2).max() < 1e-8
    assert ef.u1[0] == 1.0 and ef.u2[-1] == 1.0
    assert abs(ef.u1[-1]) < 1e-12 and ef.u2[0] == 0.0
    assert ef.w1[0] == 1.0 and ef.w2[-1] == pytest.approx(1.0, abs=1e-15)
    assert ef.g0[0] == 0.0 and ef.dg0[0] == 1.0


def test_linear_in_boundary_data(regression_kt):
    ef = elementary.build_elementary(regression_kt, 1.0, 2.0, 1.0)
    assert np.abs(ef.u1 + ef.fa[-1] * ef.u2 - ef.fa).max() < 1e-10


def test_focal_horizon_and_w_degeneracy():
    kt = free_kt()
    with pytest.raises(DegenerateHorizonError) as e:
        elementary.build_elementary(kt, 1.0, np.pi, 1.0)
    assert "focal" in str(e.value) or "sin" in str(e.value)
    with pytest.raises(ConfigError):
        elementary.build_elementary(kt, 1.0, 2.0, 0.0)
    with pytest.raises(ConfigError):
        elementary.build_elementary(kt, 1.0, 2.0, 0.1234)


def test_green_function_free():
    kt = free_kt()
    ef = elementary.build_elementary(kt, 1.0, 2.0, 1.0)
    assert elementary.green_retarded(ef, 0.4, 0.4) == 0.0
    assert elementary.green_retarded(ef, 0.8, 0.3) == pytest.approx(np.sin(2 * 0.5) / 2, abs=2e-5)
    # unit slope just after the source
    h = 0.01
    assert elementary.green_retarded(ef, 0.3 + h, 0.3) / h == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(RangeError):
        elementary.green_retarded(ef, 1.5, 0.2)


def test_free_functions_zero_frequency():
    w1, w2, dw1, dw2 = elementary.free_functions(0.0, 2.0, np.array([0.0, 1.0, 2.0]))
    assert np.array_equal(w1, [1.0, 0.5, 0.0]) and np.array_equal(w2, [0.0, 0.5, 1.0])


def test_relative_frequency():
    assert elementary.relative_frequency(1.0, 0.3, 1.0) == pytest.approx(np.sqrt(1 + 1.2))


def test_golden_elementary(regression_kt):
    data = np.loadtxt(f"{GOLDEN_DIR}/elementary.csv", delimiter=",", skiprows=1)
    ef = elementary.build_elementary(regression_kt, 1.0, 2.0, 1.0)
    assert np.allclose(data[:, 1], ef.u1, rtol=0, atol=1e-13)
    assert np.allclose(data[:, 4], ef.du2, rtol=0, atol=1e-13)
    # endpoint slopes stored in the golden record
    assert data[-1, 3] == pytest.approx(ef.du1[-1], abs=1e-13)
    assert data[0, 4] == pytest.approx(ef.du2[0], abs=1e-13)


def test_csv_header(tmp_path):
    ef = elementary.build_elementary(free_kt(), 1.0, 2.0, 1.0)
    ef.to_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "s,u1,u2,du1,du2,w1,w2,g0"
