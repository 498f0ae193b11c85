import numpy as np
import pytest

from netcert.model import ACTIVATIONS
from netcert.relax import (
    Line,
    TangentUndefinedError,
    chord,
    line_space,
    tangent_line,
    tangent_point_through,
    validate_line,
)


def sigma(act, z):
    return float(ACTIVATIONS[act][0](z))


def dsigma(act, z):
    return float(ACTIVATIONS[act][1](z))


# --- chord -----------------------------------------------------------------

def test_chord_relu_symmetric():
    line = chord("relu", -1.0, 1.0)
    assert line.slope == pytest.approx(0.5)
    assert line.intercept == pytest.approx(0.5)


def test_chord_relu_asymmetric():
    line = chord("relu", -3.0, 1.0)
    assert line.slope == pytest.approx(0.25)
    assert line.intercept == pytest.approx(0.75)


def test_chord_sigmoid():
    line = chord("sigmoid", -2.0, 2.0)
    expected_slope = (sigma("sigmoid", 2.0) - sigma("sigmoid", -2.0)) / 4.0
    assert line.slope == pytest.approx(expected_slope, abs=1e-12)
    assert line.slope == pytest.approx(0.19040, abs=1e-5)
    assert line.intercept == pytest.approx(sigma("sigmoid", -2.0) + 2.0 * line.slope)


def test_chord_degenerate_uses_midpoint_tangent():
    line = chord("sigmoid", 0.3, 0.3 + 1e-13)
    mid = 0.3 + 0.5e-13
    assert line.slope == pytest.approx(dsigma("sigmoid", mid))
    assert line.value(mid) == pytest.approx(sigma("sigmoid", mid))


# --- anchored tangent points ------------------------------------------------

def bisect_oracle(act, e, lo, hi, iters=200):
    # independent root finder for f'(d)(e-d)+f(d)-f(e) on [lo, hi]
    f, df, _ = ACTIVATIONS[act]

    def g(d):
        return float(df(d)) * (e - d) + float(f(d)) - float(f(e))

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_tangent_point_symmetry_sigmoid():
    ld = tangent_point_through("sigmoid", "left", -2.0, 2.0)
    ud = tangent_point_through("sigmoid", "right", -2.0, 2.0)
    # sigmoid - 1/2 is odd, so the anchored tangency points mirror
    assert ud == pytest.approx(-ld, abs=1e-9)


def test_tangent_point_matches_bisection_oracle():
    ld = tangent_point_through("sigmoid", "left", -2.0, 2.0)
    assert ld == pytest.approx(bisect_oracle("sigmoid", -2.0, 0.0, 2.0), abs=1e-9)
    g = dsigma("sigmoid", ld) * (-2.0 - ld) + sigma("sigmoid", ld) - sigma("sigmoid", -2.0)
    assert abs(g) <= 1e-10


def test_tangent_point_tanh_right_anchor():
    ud = tangent_point_through("tanh", "right", -1.0, 3.0)
    assert ud < 0.0
    line = tangent_line("tanh", ud)
    assert line.value(3.0) == pytest.approx(sigma("tanh", 3.0), abs=1e-9)


def test_tangent_point_undefined_when_same_side():
    with pytest.raises(TangentUndefinedError):
        tangent_point_through("sigmoid", "left", 0.5, 2.0)
    with pytest.raises(TangentUndefinedError):
        tangent_point_through("tanh", "right", -2.0, -0.5)


def test_tangent_residuals_random():
    rng = np.random.default_rng(5)
    for act in ("sigmoid", "tanh"):
        f, df, _ = ACTIVATIONS[act]
        for _ in range(50):
            l = -rng.uniform(0.05, 8.0)
            u = rng.uniform(0.05, 8.0)
            d = tangent_point_through(act, "left", l, u)
            assert abs(float(df(d)) * (l - d) + float(f(d)) - float(f(l))) <= 1e-10
            d = tangent_point_through(act, "right", l, u)
            assert abs(float(df(d)) * (u - d) + float(f(d)) - float(f(u))) <= 1e-10


# --- line_space case analysis ------------------------------------------------

def test_relu_lower_positive_interval_fixed_identity():
    sp = line_space("relu", "lower", 2.0, 5.0)
    assert sp.kind == "fixed"
    assert sp.fixed_line == Line(1.0, 0.0)


def test_relu_lower_crossing_is_slope_family():
    sp = line_space("relu", "lower", -1.0, 1.0)
    assert sp.kind == "one-variable"
    assert sp.var_range == (0.0, 1.0)
    assert sp.line_at(0.3) == Line(0.3, 0.0)


def test_relu_negative_interval_fixed_zero():
    sp = line_space("relu", "lower", -4.0, -1.0)
    assert sp.fixed_line == Line(0.0, 0.0)
    up = line_space("relu", "upper", -4.0, -1.0)
    assert up.fixed_line.slope == pytest.approx(0.0)
    assert up.fixed_line.intercept == pytest.approx(0.0)


def test_sigmoid_upper_crossing_case1():
    l, u = -2.0, 2.0
    check = dsigma("sigmoid", u) * l + (sigma("sigmoid", u) - dsigma("sigmoid", u) * u)
    assert check == pytest.approx(0.4608, abs=1e-4)
    assert check >= sigma("sigmoid", l) == pytest.approx(0.1192, abs=1e-4)
    sp = line_space("sigmoid", "upper", l, u)
    assert sp.case_tag == "case1"
    assert sp.kind == "one-variable"
    ld = tangent_point_through("sigmoid", "left", l, u)
    assert sp.var_range == (ld, u)


def test_sigmoid_upper_crossing_case2_uses_chord():
    # very negative left end with small u: the tangent at u undershoots f(l)
    l, u = -8.0, 0.1
    sp = line_space("sigmoid", "upper", l, u)
    assert sp.case_tag == "case2"
    assert sp.kind == "fixed"
    assert sp.fixed_line == chord("sigmoid", l, u)


def test_tanh_lower_crossing_cases():
    sp = line_space("tanh", "lower", -2.0, 2.0)
    assert sp.case_tag == "case3"
    ud = tangent_point_through("tanh", "right", -2.0, 2.0)
    assert sp.var_range == (-2.0, ud)
    sp = line_space("tanh", "lower", -0.1, 8.0)
    assert sp.case_tag == "case4"
    assert sp.fixed_line == chord("tanh", -0.1, 8.0)


def test_degenerate_interval_routes_to_midpoint_tangent():
    for act in ("relu", "sigmoid", "tanh"):
        for side in ("lower", "upper"):
            sp = line_space(act, side, 1.0, 1.0)
            assert sp.case_tag == "degenerate"
            assert sp.kind == "fixed"
            mid = 1.0
            assert sp.fixed_line.value(mid) == pytest.approx(sigma(act, mid))


def test_case_classification_exhaustive_exclusive():
    rng = np.random.default_rng(17)
    crossing_tags = {
        ("sigmoid", "upper"): {"case1", "case2"},
        ("sigmoid", "lower"): {"case3", "case4"},
        ("tanh", "upper"): {"case1", "case2"},
        ("tanh", "lower"): {"case3", "case4"},
    }
    for _ in range(300):
        l = rng.uniform(-6, 6)
        u = l + rng.uniform(1e-3, 8.0)
        for act in ("sigmoid", "tanh"):
            for side in ("lower", "upper"):
                sp = line_space(act, side, l, u)
                if u <= 0:
                    assert sp.case_tag == "l<u<=0"
                elif l >= 0:
                    assert sp.case_tag == "0<=l<u"
                else:
                    assert sp.case_tag in crossing_tags[(act, side)]


# --- validate_line -----------------------------------------------------------

def test_validate_line_trivials():
    assert validate_line("relu", "upper", -1.0, 1.0, Line(0.5, 0.5))
    assert validate_line("relu", "lower", -1.0, 1.0, Line(1.0, 0.0))
    assert not validate_line("relu", "lower", -1.0, 1.0, Line(0.0, 0.1))


def test_validate_line_grid_size_guard():
    with pytest.raises(ValueError):
        validate_line("relu", "lower", -1.0, 1.0, Line(0.0, 0.0), grid_size=1)


# --- fuzz: every generated line is valid -------------------------------------

@pytest.mark.parametrize("act", ["relu", "sigmoid", "tanh"])
@pytest.mark.parametrize("side", ["lower", "upper"])
def test_every_generated_line_is_valid(act, side):
    rng = np.random.default_rng(hash((act, side)) % (2**32))
    f = ACTIVATIONS[act][0]
    for trial in range(1000):
        l = rng.uniform(-8.0, 6.0)
        width = rng.uniform(0.0, 10.0) if trial % 7 else rng.uniform(0, 1e-10)
        u = l + width
        sp = line_space(act, side, l, u)
        if sp.kind == "fixed":
            lines = [sp.fixed_line]
        else:
            thetas = np.linspace(sp.var_lo, sp.var_hi, 50)
            lines = [sp.line_at(t) for t in thetas]
        zs = np.linspace(l, u, 1001)
        fz = f(zs)
        slopes = np.array([ln.slope for ln in lines])
        inters = np.array([ln.intercept for ln in lines])
        vals = slopes[:, None] * zs[None, :] + inters[:, None]
        gap = fz[None, :] - vals if side == "lower" else vals - fz[None, :]
        assert gap.min() >= -1e-9, (act, side, l, u, sp.case_tag)


def test_validate_line_agrees_with_vectorized_path():
    rng = np.random.default_rng(99)
    for _ in range(25):
        l = rng.uniform(-5, 2)
        u = l + rng.uniform(0.1, 6)
        for act in ("sigmoid", "tanh", "relu"):
            for side in ("lower", "upper"):
                sp = line_space(act, side, l, u)
                if sp.kind == "fixed":
                    assert validate_line(act, side, l, u, sp.fixed_line)
                else:
                    for t in np.linspace(sp.var_lo, sp.var_hi, 7):
                        assert validate_line(act, side, l, u, sp.line_at(t))


def test_tangent_family_touches_activation():
    rng = np.random.default_rng(3)
    for act in ("sigmoid", "tanh"):
        for _ in range(100):
            l = rng.uniform(-6, 1)
            u = l + rng.uniform(0.5, 7)
            for side in ("lower", "upper"):
                sp = line_space(act, side, l, u)
                if sp.kind == "one-variable" and sp.generator == "tangent":
                    d = rng.uniform(sp.var_lo, sp.var_hi)
                    line = sp.line_at(d)
                    assert abs(line.value(d) - sigma(act, d)) <= 1e-9


def test_line_and_grad_matches_finite_differences():
    h = 1e-6
    for act in ("sigmoid", "tanh"):
        sp = line_space(act, "lower", -3.0, -0.5)
        assert sp.generator == "tangent"
        for d in np.linspace(sp.var_lo + 1e-3, sp.var_hi - 1e-3, 9):
            s, t, ds, dt = sp.line_and_grad_at(d)
            lp = sp.line_at(d + h)
            lm = sp.line_at(d - h)
            assert ds == pytest.approx((lp.slope - lm.slope) / (2 * h), abs=1e-5)
            assert dt == pytest.approx((lp.intercept - lm.intercept) / (2 * h), abs=1e-5)
    sp = line_space("relu", "lower", -1.0, 2.0)
    assert sp.line_and_grad_at(0.5) == (0.5, 0.0, 1.0, 0.0)
