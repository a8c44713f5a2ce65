import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hartree_lab.energy import (GaugeError, TwoBubbleConfig, coercivity_suite, energy, gradient, h_lambda_apply,
                                h_lambda_form, hessian_form, linear_term, orth_fields, project_orthogonal,
                                project_pi_psi, strauss_constant, strauss_ratio, taylor_remainder,
                                two_bubble_energy_gap)
from hartree_lab.groundstate import ground_state
from hartree_lab.nonlinear import F_defect, f_apply, f_defect, fprime_apply
from hartree_lab.radial import h1_norm, l2_norm, make_log_grid, random_field


def test_energy_of_zero(gs):
    assert energy(gs, np.zeros(gs.grid.size)) == 0.0


@pytest.mark.parametrize("lam", [0.1, 10.0])
def test_energy_scale_invariant(gs, lam):
    assert energy(gs, gs.W(lam)) == pytest.approx(energy(gs, gs.W()), rel=1e-8)


def test_energy_converges_under_doubling(gs):
    fine = ground_state(7, make_log_grid(7, 1e-4, 1e3, 4096))
    assert energy(fine, fine.W()) == pytest.approx(energy(gs, gs.W()), rel=1e-7)


def test_energy_rejects_nan(gs):
    u = gs.W().copy()
    u[5] = np.nan
    with pytest.raises(FloatingPointError):
        energy(gs, u)


def test_bubble_is_critical_point(gs):
    g = gs.grid
    W = gs.W()
    lap = g.laplacian(W)
    assert l2_norm(g, f_apply(gs.conv, W) + lap) <= 1e-6 * l2_norm(g, lap)
    assert l2_norm(g, gradient(gs, W)) <= 1e-6 * l2_norm(g, lap)


def test_polarization_identities(gs, rng):
    g = gs.grid
    for _ in range(5):
        z1, z2 = random_field(g, rng), random_field(g, rng)
        scale = l2_norm(g, f_apply(gs.conv, z1 + z2))
        assert l2_norm(g, f_defect(gs.conv, z1, z2)) <= 1e-10 * scale
        F = np.abs(F_defect(gs.conv, z1, z2))
        assert np.max(F) <= 1e-12 * np.max(np.abs(gs.conv(np.abs(z1 + z2) ** 2) * np.abs(z1 + z2) ** 2))


def test_fprime_symmetric(gs, rng):
    g = gs.grid
    u = gs.W(1.0, 0.3) + 0.5 * gs.W(0.1, 1.2)
    for _ in range(5):
        a, b = random_field(g, rng), random_field(g, rng)
        lhs = g.inner(a, fprime_apply(gs.conv, u, b))
        rhs = g.inner(b, fprime_apply(gs.conv, u, a))
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12)


# ---- two bubbles ---------------------------------------------------
def _gap(gs, **kw):
    return two_bubble_energy_gap(TwoBubbleConfig(**kw), gs)


def test_gap_rejects_large_gauge(gs):
    with pytest.raises(GaugeError):
        _gap(gs, theta=0.5, lam=0.05)


@pytest.mark.xfail(strict=True, reason="at theta = 0 the gap carries a theta-independent lam^2 term")
def test_gap_theta_zero_vanishes_faster_than_model_scale(gs):
    vals = [abs(_gap(gs, lam=l)["gap"]) / l**2.5 for l in (0.05, 0.02, 0.01)]
    assert vals[0] > vals[1] > vals[2]


def test_gap_theta_zero_density_law(gs):
    V0 = gs.conv(gs.W() ** 2)[0]
    C1 = l2_norm(gs.grid, gs.W()) ** 2
    ratios = [_gap(gs, lam=l)["gap"] / (-0.5 * V0 * C1 * l**2) for l in (0.05, 0.02, 0.01)]
    errs = [abs(r - 1) for r in ratios]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 5e-3


@pytest.mark.xfail(strict=True, reason="the lam^2 density term dominates the model term for N = 7")
def test_gap_slope_matches_model(gs):
    lams = np.geomspace(0.01, 0.1, 6)
    gaps = [abs(_gap(gs, theta=0.1, lam=l)["gap"]) for l in lams]
    assert np.polyfit(np.log(lams), np.log(gaps), 1)[0] == pytest.approx(2.5, abs=0.1)


@pytest.mark.xfail(strict=True, reason="the negative density term outweighs the theta-linear term")
def test_gap_sign_literal(gs):
    assert _gap(gs, theta=0.1, lam=0.01)["gap"] > 0


def test_gap_theta_odd_part(gs):
    lam = 0.01
    plus, minus = _gap(gs, theta=0.1, lam=lam), _gap(gs, theta=-0.1, lam=lam)
    odd = 0.5 * (plus["gap"] - minus["gap"])
    assert odd > 0
    assert odd / plus["model"] == pytest.approx(1.0, abs=0.02)


def test_gap_theta_linear(gs):
    thetas = np.linspace(-0.1, 0.1, 9)
    vals = np.array([_gap(gs, theta=t, lam=0.02)["gap"] for t in thetas])
    fit = np.polyfit(thetas, vals, 1)
    r2 = 1 - np.sum((vals - np.polyval(fit, thetas)) ** 2) / np.sum((vals - vals.mean()) ** 2)
    assert r2 >= 0.999


def test_linear_term_zero_field(gs):
    assert linear_term(TwoBubbleConfig(lam=0.05), gs)["value"] == 0.0


def test_linear_term_identity(gs, rng):
    h = random_field(gs.grid, rng)
    out = linear_term(TwoBubbleConfig(lam=0.05, g=h), gs)
    assert out["value"] == pytest.approx(out["identity"], rel=1e-8)


@pytest.mark.xfail(strict=True, reason="the (K*|B|^2)A g cross term decays only like lam^2")
def test_linear_term_exponent(gs):
    h = random_field(gs.grid, np.random.default_rng(1))
    lams = np.geomspace(0.01, 0.1, 5)
    v = [abs(linear_term(TwoBubbleConfig(lam=l, g=h), gs)["value"]) for l in lams]
    assert np.polyfit(np.log(lams), np.log(v), 1)[0] >= 2.25 - 0.15


def test_linear_term_leading_coefficient(gs, C):
    # value = -C1 lam^2 <|x|^-4 A, g> + O(lam^{5/2}) for g supported at the unit scale
    g = gs.grid
    h = random_field(g, np.random.default_rng(5), r_range=(0.5, 5))
    oracle = -C.C1 * g.inner(-1j * gs.W() / g.r**4, h)
    lams = [0.02, 0.01, 0.005]
    errs = [abs(linear_term(TwoBubbleConfig(lam=l, g=h), gs)["value"] / l**2 - oracle) for l in lams]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 0.6 * errs[0]


# ---- projections and Strauss ----------------------------------------
def test_pi_psi_split(gs, rng):
    g = gs.grid
    u = random_field(g, rng)
    out = project_pi_psi(g, u, 2.0)
    np.testing.assert_allclose(out["pi"] + out["psi"], u, rtol=0, atol=1e-15 * np.max(np.abs(u)))
    assert np.all(out["psi"][g.r >= 2.0] == 0)
    assert np.all(out["pi"][g.r < 2.0] == out["value"])


def test_pi_psi_rejects_outside(gs):
    with pytest.raises(ValueError):
        project_pi_psi(gs.grid, gs.W(), 1e5)


def test_strauss(gs, rng):
    g = gs.grid
    S = strauss_constant(gs)
    sharp = 1 / math.sqrt((g.N - 2) * g.sphere)
    assert S <= sharp * (1 + 1e-3)
    for _ in range(100):
        u = random_field(g, rng)
        # radii where u is numerically nonzero; elsewhere both sides underflow
        live = g.r[(np.abs(u) > 1e-8 * np.max(np.abs(u))) & (g.r > 1e-3) & (g.r < 1e2)]
        r = float(rng.choice(live))
        assert strauss_ratio(g, u, r) <= S * (1 + 1e-6)


# ---- coercivity -----------------------------------------------------
def test_projection_removes_constraint_directions(gs):
    cfg = TwoBubbleConfig(lam=0.05, theta=0.1)
    fields = orth_fields(cfg, gs)
    g = project_orthogonal(gs.grid, gs.LW(cfg.lam, cfg.theta), fields)
    for f in fields:
        assert abs(gs.grid.inner(f, g)) <= 1e-10 * l2_norm(gs.grid, f) * l2_norm(gs.grid, gs.LW(cfg.lam))


@pytest.mark.parametrize("lam", [0.05, 0.01])
def test_coercivity_small_sample(gs, pair, lam, tmp_path):
    rep = coercivity_suite(TwoBubbleConfig(lam=lam), trials=40, gs=gs, pair=pair, seed=3, dump=tmp_path / "bad.csv")
    assert rep.violations == 0 and rep.min_ratio > 0
    assert rep.eigen_direction["ratio"] > 0
    assert rep.regional["minus_1"]["violations"] == 0
    assert not (tmp_path / "bad.csv").exists()
    assert rep.to_dict()["C"] == pytest.approx(1 / rep.min_ratio)


# ---- H_lambda -------------------------------------------------------
def test_h_lambda_cross_terms_shrink(gs, rng):
    g = gs.grid

    def gap(lam, h):
        cfg = TwoBubbleConfig(lam=lam)
        return abs(hessian_form(gs, cfg.background(gs), h) - h_lambda_form(cfg, h, gs)) / h1_norm(g, h) ** 2

    # the bound is uniform in g, so compare the worst case over a common sample
    hs = [random_field(g, rng) for _ in range(40)]
    assert max(gap(0.01, h) for h in hs) <= 0.5 * max(gap(0.1, h) for h in hs)


def test_h_lambda_symmetric(gs, rng):
    g = gs.grid
    cfg = TwoBubbleConfig(lam=0.05, theta=0.2)
    for _ in range(5):
        a, b = random_field(g, rng), random_field(g, rng)
        lhs = g.inner(h_lambda_apply(cfg, a, gs), b)
        rhs = g.inner(a, h_lambda_apply(cfg, b, gs))
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12)


def test_h_lambda_far_field(gs):
    g = gs.grid
    h = np.exp(-(((g.r - 300.0) / 30.0) ** 2)) + 0j
    out = h_lambda_apply(TwoBubbleConfig(lam=0.05), h, gs)
    lap = -g.laplacian(h)
    m = (g.r > 200) & (g.r < 400)
    assert l2_norm(g, (out - lap) * m) <= 1e-4 * l2_norm(g, lap * m)


# ---- Taylor remainder -----------------------------------------------
@given(st.integers(0, 10_000))
@settings(max_examples=8, deadline=None)
def test_taylor_remainder_is_cubic(gs, seed):
    rng = np.random.default_rng(seed)
    cfg = TwoBubbleConfig(lam=float(rng.uniform(0.01, 0.1)), theta=float(rng.uniform(-0.1, 0.1)))
    bg = cfg.background(gs)
    h = random_field(gs.grid, rng)
    h = h / h1_norm(gs.grid, h)
    eps = np.geomspace(1e-3, 1e-1, 6)
    rem = np.array([abs(taylor_remainder(gs, bg, e * h)) for e in eps])
    slope = np.polyfit(np.log(eps), np.log(rem), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.15)
