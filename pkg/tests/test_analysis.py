import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from qbm2ho import analysis, dynamics
from qbm2ho.dynamics import GaussianState, Ordering
from qbm2ho.errors import ConfigError

pos = st.floats(0.2, 5.0)


def single_mode_cov(sx, sp, r):
    # valid when sx sp (1 - r^2) >= 1/4
    c = r * np.sqrt(sx * sp)
    return np.array([[sx, c], [c, sp]])


@settings(max_examples=60, deadline=None)
@given(pos, pos, st.floats(-0.9, 0.9), pos, pos, st.floats(-0.9, 0.9), st.floats(0.2, 5), st.floats(0.2, 5))
def test_product_states_are_separable(s1, p1, r1, s2, p2, r2, M, D):
    blocks = []
    for sx, sp, r in ((s1, p1, r1), (s2, p2, r2)):
        k = max(1.0, 0.25 / (sx * sp * (1 - r * r)))
        blocks.append(single_mode_cov(sx * np.sqrt(k), sp * np.sqrt(k), r))
    cov = np.zeros((4, 4))
    cov[:2, :2], cov[2:, 2:] = blocks
    rep = analysis.duan_check(GaussianState(Ordering.LAB, np.zeros(4), cov), M, D)
    assert rep.lhs >= 2 - 1e-9 and rep.separable


def free_setup(eps=0.25):
    M, D = 1.0, 4.0
    return M, D, dynamics.product_cm_rel_state(*analysis.squeezed_widths(eps, M, D))


def test_squeezed_state_is_entangled():
    M, D, st0 = free_setup()
    rep = analysis.duan_check(st0, M, D)
    assert rep.lhs == pytest.approx(0.5, rel=1e-12) and not rep.separable
    a, b, c, d = analysis.squeezed_widths(0.25, M, D)
    assert a * b == pytest.approx(0.5) and c * d == pytest.approx(0.5)
    assert analysis.dent_coefficients(a, b, c, d, M, D)[2] == pytest.approx(0.5, rel=1e-12)


def test_added_noise_increases_lhs():
    M, D, st0 = free_setup()
    prev = analysis.duan_check(st0, M, D).lhs
    for eps in (0.01, 0.1, 1.0):
        s = GaussianState(Ordering.CMREL, st0.mean, st0.cov + eps * np.eye(4))
        cur = analysis.duan_check(s, M, D).lhs
        assert cur > prev
        prev = cur


def test_unit_rescaling_invariance():
    M, D, st0 = free_setup()
    ref = analysis.duan_check(st0, M, D)
    al = 3.7
    S = np.diag([al, 1 / al, al, 1 / al])
    lab = st0.to_lab()
    scaled = GaussianState(Ordering.LAB, S @ lab.mean, S @ lab.cov @ S)
    sx, sp = ref.scaling_constants
    rep = analysis.duan_check(scaled, scaling=(sx / al, sp * al))
    assert rep.lhs == pytest.approx(ref.lhs, rel=1e-13)


def test_scaling_errors():
    _, _, st0 = free_setup()
    with pytest.raises(ConfigError):
        analysis.duan_check(st0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        analysis.duan_check(st0, scaling=(1.0, 2.0))
    assert analysis.duan_check(st0, scaling=(2.0, 0.5)).scaling_constants == (2.0, 0.5)


def test_disentanglement_time_root():
    M, g, T = 1.0, 0.1, 10.0
    D = 2 * 2 * M * g * T
    w = analysis.squeezed_widths(0.25, M, D)
    t = analysis.disentanglement_time(*w, M, g, T)
    A, B, C = analysis.dent_coefficients(*w, M, D)
    assert A * t * t + B * t + C == pytest.approx(2.0, abs=1e-12)
    assert analysis.disentanglement_time(*analysis.squeezed_widths(1.5, M, D), M, g, T) == 0.0


def test_disentanglement_faster_when_hotter():
    M, g = 1.0, 0.1
    w = analysis.squeezed_widths(0.25, M, 2 * 2 * M * g * 10.0)
    ts = [analysis.disentanglement_time(*w, M, g, T) for T in (2.0, 5.0, 10.0, 40.0)]
    assert np.all(np.diff(ts) < 0)


def test_width_and_parameter_errors():
    with pytest.raises(ConfigError):
        analysis.disentanglement_time(0.1, 0.1, 1, 1, 1.0, 0.1, 1.0)
    with pytest.raises(ConfigError):
        analysis.disentanglement_time(1, 1, 1, 1, 1.0, 0.0, 1.0)


def test_uncertainty_functions_pins():
    Om, g, T = 1.0, 0.05, 2.0
    t = np.linspace(0, 10, 201)
    fc, fr = analysis.closed_form_fcm_frel(Om, g, T, 0.5, t)
    assert fc[0] * fr[0] == pytest.approx(1 / 16, abs=1e-15)
    _, fr1 = analysis.closed_form_fcm_frel(Om, g, T, 1.0, t)
    assert np.abs(fr1 - 0.25).max() <= 1e-15
    _, frp = analysis.closed_form_fcm_frel(Om, g, T, 0.5, t + np.pi / Om)
    assert np.abs(frp - fr).max() <= 1e-12
    with pytest.raises(ConfigError):
        analysis.closed_form_fcm_frel(1.0, 2.0, T, 0.5, t)


def test_uncertainty_product_minimum_state():
    st0 = GaussianState(Ordering.CMREL, np.zeros(4), analysis.weak_damping_state(1.0, 0.5, 1.0))
    tr = analysis.trajectory_from_arrays([0.0], st0.mean[None], st0.cov[None])
    U, Ulab, ok = analysis.uncertainty_product(tr)
    assert U[0] == pytest.approx(1 / 16, rel=1e-14) and ok[0]


def cat_density(x, L0, P0, d):
    return np.exp(-(x * x + L0 * L0) / d ** 2) * (np.cosh(2 * L0 * x / d ** 2) + np.cos(2 * P0 * x))


def test_visibility_of_initial_cat():
    L0, P0, d = 1.0, 4.0, 1.0
    f = lambda x: cat_density(x, L0, P0, d)
    df = lambda x, h=1e-6: (f(x + h) - f(x - h)) / (2 * h)
    grid = np.linspace(-1, 1, 4001)
    roots = [brentq(df, a, b, xtol=1e-14) for a, b in zip(grid[:-1], grid[1:])
             if np.sign(df(a)) != np.sign(df(b))]
    vals = np.array([f(r) for r in roots])
    curv = np.array([f(r + 1e-4) + f(r - 1e-4) - 2 * f(r) for r in roots])
    hi, lo = vals[curv < 0].max(), vals[curv > 0].min()
    ref = (hi - lo) / (hi + lo)
    x = np.linspace(-1, 1, 20001)
    v = analysis.fringe_visibility(f(x), x, window=(-1, 1))
    assert not v.flat and v.value == pytest.approx(ref, abs=1e-6)


def test_mixture_has_no_fringes():
    L0, d = 2.0, 0.8
    x = np.linspace(-5, 5, 2001)
    mix = np.exp(-(x - L0) ** 2 / d ** 2) + np.exp(-(x + L0) ** 2 / d ** 2)
    v = analysis.fringe_visibility(mix, x, L0=2 * L0)
    assert v.value == 0.0 and v.flat


def test_visibility_translation_invariant():
    x = np.linspace(-3, 3, 6001)
    y = cat_density(x, 1.0, 4.0, 1.0)
    a = analysis.fringe_visibility(y, x, L0=2.0)
    b = analysis.fringe_visibility(y, x + 0.75, L0=2.0, center=0.75)
    assert a.value == pytest.approx(b.value, abs=1e-12)
    with pytest.raises(ConfigError):
        analysis.fringe_visibility(y, x)
