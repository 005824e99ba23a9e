"""Melting law, coupled marching, and the linearize-control-update loop."""

import numpy as np
import pytest

from stefanlab.control import HUMConfig, solve_hum
from stefanlab.domain import (
    PhysicalSetup,
    ROLE_CONTROL,
    ROLE_STATE,
    SpaceTimeField,
    constant_path,
    line_l2_norm,
)
from stefanlab.errors import (
    ConvergenceError,
    FieldRoleError,
    GridError,
    RadiusBreachError,
)
from stefanlab.pde import SchemeConfig
from stefanlab.stefan import (
    FixedPointConfig,
    Nonlinearity,
    coupled_solve,
    fixed_point_iterate,
    holder_seminorm,
    integrate_boundary,
    linearize_and_control,
    stefan_rate,
    write_history_csv,
)


# -- nonlinearity ------------------------------------------------------------


def test_nonlinearity_kinds_and_validation():
    assert Nonlinearity.zero().kind == "zero"
    assert Nonlinearity.linear(slope=2.0).lipschitz == 2.0
    assert Nonlinearity.sine(amplitude=0.5).lipschitz == 0.5
    with pytest.raises(GridError):
        Nonlinearity(kind="cubic")
    with pytest.raises(GridError):
        Nonlinearity.from_table([0.0, 1.0], [0.1, 1.0])   # f(0) != 0
    with pytest.raises(GridError):
        Nonlinearity.from_table([0.5, 1.0], [0.0, 1.0])   # bracket misses 0


def test_nonlinearity_values():
    s = np.linspace(-2.0, 2.0, 41)
    assert np.array_equal(Nonlinearity.zero().value(s), np.zeros_like(s))
    assert np.allclose(Nonlinearity.linear(slope=1.5).value(s), 1.5 * s)
    assert np.allclose(Nonlinearity.sine(amplitude=2.0).value(s), 2.0 * np.sin(s))
    table = Nonlinearity.from_table([-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0])
    assert np.allclose(table.value(s), np.interp(s, [-1, 0, 1], [-2, 0, 2]))
    assert table.lipschitz == pytest.approx(2.0)


def test_nonlinearity_slope_fills_origin():
    # g(s) = f(s)/s extended by f'(0); sine gives g(0) = 1
    sine = Nonlinearity.sine()
    s = np.array([-1.0, -1e-12, 0.0, 1e-12, 1.0])
    g = sine.slope(s)
    assert g[2] == pytest.approx(1.0, abs=1e-6)
    assert g[0] == pytest.approx(np.sin(1.0), rel=1e-12)
    zero = Nonlinearity.zero().slope(s)
    assert np.array_equal(zero, np.zeros(5))   # bitwise zeros
    table = Nonlinearity.from_table([-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0],
                                    slope_at_zero=2.0)
    assert table.slope(np.array([0.0]))[0] == 2.0


# -- melting law --------------------------------------------------------------


def _uniform_field(profile, m, role=ROLE_STATE):
    vals = np.repeat(np.asarray(profile, dtype=float)[:, None], m + 1, axis=1)
    return SpaceTimeField(vals, role=role)


def test_stefan_rate_quadratic_oracle():
    # u = rho^2 - rho has u_rho(1) = 1 exactly under the one-sided stencil,
    # so the rate is sign / R^2
    cfg = SchemeConfig(n=20, m=8)
    for R in (1.0, 1.25):
        path = constant_path(R, 0.1, cfg.m)
        rho = cfg.grid.nodes
        field = _uniform_field(rho * rho - rho, cfg.m)
        rate = stefan_rate(field, path, 4)
        assert rate == pytest.approx(-1.0 / (R * R), rel=1e-12)
        rate_plus = stefan_rate(field, path, 4, sign=+1.0)
        assert rate_plus == pytest.approx(+1.0 / (R * R), rel=1e-12)


def test_stefan_rate_sign_guard():
    cfg = SchemeConfig(n=16, m=8)
    path = constant_path(1.0, 0.1, cfg.m)
    field = _uniform_field(np.zeros(cfg.n + 1), cfg.m)
    with pytest.raises(GridError):
        stefan_rate(field, path, 0, sign=0.5)


def test_integrate_boundary_closed_form():
    # field column j = t_j (rho^2 - rho): rate(t) = -t / R0^2 exactly, so the
    # trapezoid reproduces R(t) = R0 - t^2 / (2 R0^2) to rounding
    setup = PhysicalSetup(T=0.4)
    cfg = SchemeConfig(n=16, m=32)
    path = constant_path(setup.R0, setup.T, cfg.m)
    rho = cfg.grid.nodes
    vals = np.outer(rho * rho - rho, path.times)
    field = SpaceTimeField(vals, role=ROLE_STATE)
    new = integrate_boundary(field, path, setup)
    expected = setup.R0 - 0.5 * path.times ** 2 / setup.R0 ** 2
    assert np.allclose(new.radii, expected, rtol=0.0, atol=1e-14)
    assert np.allclose(new.slopes, -path.times / setup.R0 ** 2, atol=1e-14)


def test_integrate_boundary_breach_reports_first_index():
    setup = PhysicalSetup(T=0.5)
    cfg = SchemeConfig(n=16, m=16)
    path = constant_path(setup.R0, setup.T, cfg.m)
    rho = cfg.grid.nodes
    # large positive boundary derivative melts the domain through R_star
    vals = np.repeat((3.0 * (rho * rho - rho))[:, None], cfg.m + 1, axis=1)
    field = SpaceTimeField(vals, role=ROLE_STATE)
    with pytest.raises(RadiusBreachError) as err:
        integrate_boundary(field, path, setup)
    assert err.value.first_index > 0
    assert err.value.r_min < setup.R_star


# -- coupled dynamics ----------------------------------------------------------


def test_coupled_zero_data_is_stationary():
    setup = PhysicalSetup(T=0.3)
    cfg = SchemeConfig(n=16, m=24)
    state, path = coupled_solve(np.zeros(cfg.n + 1), setup, None, cfg)
    assert np.array_equal(state.values, np.zeros((cfg.n + 1, cfg.m + 1)))
    assert np.all(path.radii == setup.R0)
    assert np.all(path.slopes == 0.0)


def test_coupled_bump_grows_boundary_and_decays_state():
    setup = PhysicalSetup(T=0.3, z0=lambda r: 0.3 * np.sin(np.pi * r))
    cfg = SchemeConfig(n=30, m=60)
    u0 = setup.initial_line_field(cfg.grid)
    state, path = coupled_solve(u0, setup, None, cfg)
    assert np.all(np.diff(path.radii) >= -1e-14)      # warm bump melts outward
    norms = [line_l2_norm(state.values[:, j], float(path.radii[j]), cfg.grid)
             for j in range(0, cfg.m + 1, 10)]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))
    assert path.radii[-1] > setup.R0
    assert path.radii[-1] < setup.E


def test_coupled_corrector_close_to_predictor():
    setup = PhysicalSetup(T=0.2, z0=lambda r: 0.2 * np.sin(np.pi * r))
    cfg = SchemeConfig(n=24, m=48)
    u0 = setup.initial_line_field(cfg.grid)
    _, with_corr = coupled_solve(u0, setup, None, cfg, corrector=True)
    _, without = coupled_solve(u0, setup, None, cfg, corrector=False)
    gap = np.max(np.abs(with_corr.radii - without.radii))
    assert 0.0 < gap < 5.0 * with_corr.dt * np.max(np.abs(with_corr.slopes))


def test_coupled_rejects_wrong_control_role():
    setup = PhysicalSetup(T=0.2)
    cfg = SchemeConfig(n=16, m=16)
    bad = SpaceTimeField(np.zeros((cfg.n + 1, cfg.m + 1)), role=ROLE_STATE)
    with pytest.raises(FieldRoleError):
        coupled_solve(np.zeros(cfg.n + 1), setup, bad, cfg)


def test_coupled_breach_raises():
    # cold data freezes the domain; the shrinking radius feeds back into the
    # rate and the boundary crosses R_star in finite time
    setup = PhysicalSetup(T=1.0, z0=lambda r: -2.0 * np.sin(np.pi * r))
    cfg = SchemeConfig(n=24, m=48)
    u0 = setup.initial_line_field(cfg.grid)
    with pytest.raises(RadiusBreachError):
        coupled_solve(u0, setup, None, cfg)


# -- linearize, control, update -----------------------------------------------


def test_lambda_map_zero_kind_matches_plain_hum_bitwise():
    setup = PhysicalSetup(T=0.5, z0=lambda r: 0.1 * np.sin(np.pi * r),
                          nonlinearity=Nonlinearity.zero())
    cfg = SchemeConfig(n=20, m=40)
    hum = HUMConfig(epsilon=1e-4)
    fpc = FixedPointConfig()
    u0 = setup.initial_line_field(cfg.grid)
    rbar = constant_path(setup.R0, setup.T, cfg.m)
    zbar = np.repeat(u0[:, None], cfg.m + 1, axis=1)
    outcome = linearize_and_control(zbar, rbar, u0, setup, fpc, hum, cfg)
    plain = solve_hum(u0, rbar, None, setup.b, hum, cfg)
    assert outcome.hum.final_norm == plain.final_norm
    assert outcome.hum.cost == plain.cost
    assert outcome.hum.J_value == plain.J_value
    assert np.array_equal(outcome.hum.phiT, plain.phiT)


def test_lambda_map_reports_memberships():
    setup = PhysicalSetup(T=0.5, z0=lambda r: 0.05 * np.sin(np.pi * r),
                          nonlinearity=Nonlinearity.sine())
    cfg = SchemeConfig(n=20, m=40)
    u0 = setup.initial_line_field(cfg.grid)
    rbar = constant_path(setup.R0, setup.T, cfg.m)
    zbar = np.repeat(u0[:, None], cfg.m + 1, axis=1)
    outcome = linearize_and_control(zbar, rbar, u0, setup,
                                    FixedPointConfig(), HUMConfig(), cfg)
    assert outcome.state_sup >= 0.0
    assert outcome.slope_sup >= 0.0
    assert isinstance(outcome.inside_state_ball, bool)
    assert outcome.eps_margin >= 0.0
    assert outcome.path.radii[0] == setup.R0


def test_fixed_point_converges_for_small_data():
    setup = PhysicalSetup(T=0.5, z0=lambda r: 0.02 * np.sin(np.pi * r),
                          nonlinearity=Nonlinearity.sine())
    cfg = SchemeConfig(n=20, m=40)
    fpc = FixedPointConfig(fp_tol=1e-6, max_outer=20)
    result = fixed_point_iterate(None, setup, fpc, HUMConfig(epsilon=1e-6), cfg)
    assert result.converged
    assert result.iterations <= 8
    drops = [rec.dz_sup for rec in result.history]
    assert drops[-1] < 1e-6
    assert drops[0] > drops[-1]
    assert np.all(result.path.radii >= setup.R_star)
    assert np.all(result.path.radii <= setup.E)


def test_fixed_point_trivial_data_converges_immediately():
    setup = PhysicalSetup(T=0.5, nonlinearity=Nonlinearity.sine())
    cfg = SchemeConfig(n=16, m=16)
    result = fixed_point_iterate(None, setup, FixedPointConfig(), HUMConfig(), cfg)
    assert result.converged
    assert result.iterations == 1
    assert result.hum.final_norm == 0.0
    assert np.all(result.path.radii == setup.R0)


def test_fixed_point_epsilon_schedule_warm_start():
    setup = PhysicalSetup(T=0.5, z0=lambda r: 0.02 * np.sin(np.pi * r),
                          nonlinearity=Nonlinearity.sine())
    cfg = SchemeConfig(n=16, m=32)
    fpc = FixedPointConfig(fp_tol=1e-6, max_outer=20,
                           epsilon_schedule=(1e-4, 1e-6))
    result = fixed_point_iterate(None, setup, fpc, HUMConfig(epsilon=1e-2), cfg)
    assert result.converged
    # the base phase reports through history; eps_history holds the schedule
    assert [rec.epsilon for rec in result.eps_history] == [1e-4, 1e-6]
    finals = [rec.final_norm for rec in result.eps_history]
    assert finals[0] >= finals[-1]
    assert all(rec.converged for rec in result.eps_history)
    assert result.hum.final_norm == finals[-1]


def test_fixed_point_exhaustion_raises_with_history():
    setup = PhysicalSetup(T=0.5, z0=lambda r: 0.05 * np.sin(np.pi * r),
                          nonlinearity=Nonlinearity.sine())
    cfg = SchemeConfig(n=16, m=32)
    fpc = FixedPointConfig(fp_tol=1e-14, max_outer=2)
    with pytest.raises(ConvergenceError) as err:
        fixed_point_iterate(None, setup, fpc, HUMConfig(), cfg)
    assert len(err.value.history) == 2


# -- regularity helpers ---------------------------------------------------------


def test_holder_seminorm_oracles():
    t = np.linspace(0.0, 1.0, 33)
    assert holder_seminorm(t, np.full(33, 2.5), 0.5) == 0.0
    # V(t) = t: |t - t'| / |t - t'|^{1/2} peaks at the full interval
    assert holder_seminorm(t, t.copy(), 0.5) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(GridError):
        holder_seminorm(t, t.copy(), 0.0)
    with pytest.raises(GridError):
        holder_seminorm(t, t.copy(), 0.75)


def test_write_history_csv(tmp_path):
    setup = PhysicalSetup(T=0.5, z0=lambda r: 0.02 * np.sin(np.pi * r),
                          nonlinearity=Nonlinearity.sine())
    cfg = SchemeConfig(n=16, m=16)
    result = fixed_point_iterate(None, setup, FixedPointConfig(max_outer=10),
                                 HUMConfig(), cfg)
    target = tmp_path / "history.csv"
    write_history_csv(target, result.history)
    lines = target.read_text().strip().splitlines()
    assert lines[0] == ("iteration,dz_sup,dR_sup,dRp_sup,final_norm,"
                        "cost_ratio,R_min,R_max")
    assert len(lines) == len(result.history) + 1
    first = lines[1].split(",")
    assert int(first[0]) == 1
    assert float(first[1]) == result.history[0].dz_sup
