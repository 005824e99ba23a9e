"""Free-boundary coupling and the outer control loop.

The moving-boundary problem couples the line field u = r z on the unit
reference interval to the boundary radius through the melting law
R'(t) = -u_r(R(t), t) / R(t): the one-sided boundary flux of the line
field, divided once more by the radius.  This module owns that coupling in
three layers.

* Kinematics: `stefan_rate` evaluates the melting rate at one time node and
  `integrate_boundary` accumulates it into a new boundary path along a
  frozen reference path, refusing to leave the admissible band [R_star, E].
* Dynamics: `coupled_solve` marches the state and the radius together with
  an explicit Euler predictor for the radius and an optional trapezoid
  corrector that re-solves the implicit step on the averaged radius.
* Control: `linearize_and_control` freezes the reaction slope g(s) = f(s)/s
  on a given state iterate, synthesizes the penalized control on the frozen
  path, and pushes the boundary with the controlled flux;
  `fixed_point_iterate` applies that map repeatedly (Picard) until the
  state and the boundary stop moving in the sup norm, optionally continuing
  along a schedule of decreasing penalties.

The melting sign is a convention with a switch: positive interior
temperature gives a negative boundary flux, so the default sign of -1 makes
the boundary advance.  Flipping the switch reproduces the opposite
convention for comparison runs; every operation here threads it through
unchanged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .domain import (
    ROLE_CONTROL,
    ROLE_STATE,
    BoundaryPath,
    PhysicalSetup,
    SpaceTimeField,
    constant_path,
    line_l2_norm,
)
from .errors import (
    ConvergenceError,
    FieldRoleError,
    GridError,
    InstabilityError,
    RadiusBreachError,
)
from .pde import SchemeConfig, _check_initial, _interior_diagonals, boundary_flux
from .control import HUMConfig, HUMOutcome, solve_hum

_KINDS = ("zero", "linear", "sine", "table")
_SMALL_ARG = 1e-8


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term f with f(0) = 0 and a global Lipschitz bound.

    value(s) evaluates f; slope(s) evaluates the secant g(s) = f(s)/s with
    the removable singularity closed by f'(0) (supplied, or a symmetric
    difference when it is not).  The slope is what the linearized problems
    use as a potential, so a zero nonlinearity must produce exact zeros,
    which the `zero` kind guarantees bitwise.

    Use the constructors (`zero`, `linear`, `sine`, `from_table`) rather
    than the raw dataclass: they fill in the Lipschitz bound and the slope
    at zero consistently.
    """

    kind: str
    amplitude: float = 1.0
    samples_s: tuple = ()
    samples_f: tuple = ()
    lipschitz: float = 0.0
    slope_at_zero: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise GridError(f"unknown nonlinearity kind {self.kind!r}")
        if not np.isfinite(self.amplitude):
            raise GridError("amplitude must be finite")
        if self.lipschitz < 0 or not np.isfinite(self.lipschitz):
            raise GridError(f"Lipschitz bound must be >= 0, got {self.lipschitz}")
        if self.kind == "table":
            s = np.asarray(self.samples_s, dtype=float)
            f = np.asarray(self.samples_f, dtype=float)
            if s.ndim != 1 or s.shape != f.shape or s.size < 2:
                raise GridError("table needs matching 1-d sample arrays, length >= 2")
            if np.any(np.diff(s) <= 0):
                raise GridError("table abscissae must be strictly increasing")
            if not (s[0] <= 0.0 <= s[-1]):
                raise GridError("table must bracket s = 0")
        if abs(float(np.asarray(self.value(0.0)))) > 1e-12:
            raise GridError("nonlinearity must vanish at zero")

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls(kind="zero", amplitude=0.0, lipschitz=0.0, slope_at_zero=0.0)

    @classmethod
    def linear(cls, slope: float = 1.0) -> "Nonlinearity":
        return cls(kind="linear", amplitude=float(slope),
                   lipschitz=abs(float(slope)), slope_at_zero=float(slope))

    @classmethod
    def sine(cls, amplitude: float = 1.0) -> "Nonlinearity":
        # |d/ds (A sin s)| <= |A| everywhere
        return cls(kind="sine", amplitude=float(amplitude),
                   lipschitz=abs(float(amplitude)), slope_at_zero=float(amplitude))

    @classmethod
    def from_table(cls, s, f, slope_at_zero: float | None = None) -> "Nonlinearity":
        """Piecewise-linear f through the samples, constant outside their range."""
        s = np.asarray(s, dtype=float)
        f = np.asarray(f, dtype=float)
        if s.size >= 2 and s.ndim == 1 and s.shape == f.shape:
            secants = np.abs(np.diff(f) / np.diff(s)) if np.all(np.diff(s) > 0) else [np.inf]
            lip = float(np.max(secants))
        else:
            lip = 0.0
        return cls(kind="table", samples_s=tuple(float(x) for x in s),
                   samples_f=tuple(float(x) for x in f), lipschitz=lip,
                   slope_at_zero=slope_at_zero)

    def value(self, s):
        """f(s), elementwise."""
        arr = np.asarray(s, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(arr)
        elif self.kind == "linear":
            out = self.amplitude * arr
        elif self.kind == "sine":
            out = self.amplitude * np.sin(arr)
        else:
            out = np.interp(arr, self.samples_s, self.samples_f)
        return out

    def slope(self, s):
        """Secant slope g(s) = f(s)/s with g(0) = f'(0), elementwise.

        Arguments below 1e-8 in magnitude take the zero-slope value; when
        no derivative at zero was supplied it is estimated by a symmetric
        difference of f across the same threshold.
        """
        arr = np.asarray(s, dtype=float)
        g0 = self.slope_at_zero
        if g0 is None:
            g0 = float(self.value(_SMALL_ARG) - self.value(-_SMALL_ARG)) / (2.0 * _SMALL_ARG)
        small = np.abs(arr) < _SMALL_ARG
        safe = np.where(small, 1.0, arr)
        return np.where(small, g0, self.value(arr) / safe)


# ---------------------------------------------------------------------------
# boundary kinematics


def _check_sign(sign) -> float:
    sign = float(sign)
    if sign not in (-1.0, 1.0):
        raise GridError(f"melting sign must be -1 or +1, got {sign}")
    return sign


def stefan_rate(field: SpaceTimeField, path: BoundaryPath, j: int,
                sign=-1.0, order: int = 2) -> float:
    """Boundary velocity R'(t_j) from the line field's boundary flux.

    The melting law reads R' = sign * u_r(R(t), t) / R(t): the physical
    boundary flux of the line field (already one chain-rule factor of 1/R)
    divided once more by the radius.  The default sign -1 is the melting
    convention: a warm interior has negative boundary flux and the boundary
    advances.
    """
    sign = _check_sign(sign)
    flux = boundary_flux(field, path, j, order=order)
    return float(sign * flux / path.radii[j])


def integrate_boundary(field: SpaceTimeField, path: BoundaryPath,
                       setup: PhysicalSetup, sign=-1.0, order: int = 2) -> BoundaryPath:
    """Accumulate the melting rate along a frozen path into a new boundary.

    R_new(t) = R(0) + integral of the rate, by cumulative trapezoid on the
    path's own time grid; the returned slopes are the rate samples, so the
    new path is C1-consistent with its construction by design.  Leaving
    [R_star, E] raises instead of clamping: an escaping boundary means the
    initial data is too large for the local regime, and silently projecting
    it back would fake a solution of a different problem.
    """
    rates = np.array([stefan_rate(field, path, j, sign=sign, order=order)
                      for j in range(path.steps + 1)])
    radii = float(path.radii[0]) + cumulative_trapezoid(rates, dx=path.dt, initial=0.0)
    bad = (radii < setup.R_star) | (radii > setup.E)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise RadiusBreachError(
            f"updated boundary leaves [{setup.R_star:g}, {setup.E:g}] at "
            f"t={path.times[k]:.6g} (R={radii[k]:.6g}); initial data too large "
            "for the local regime",
            r_min=float(np.min(radii)), r_max=float(np.max(radii)), first_index=k,
        )
    return BoundaryPath(path.times, radii, rates)


# ---------------------------------------------------------------------------
# coupled dynamics


def _column_rate(col: np.ndarray, radius: float, h: float, sign: float,
                 order: int) -> float:
    """Melting rate from one interior-plus-boundary column (Dirichlet ends)."""
    n = col.size - 1
    if order == 1:
        du = (col[n] - col[n - 1]) / h
    else:
        du = (3.0 * col[n] - 4.0 * col[n - 1] + col[n - 2]) / (2.0 * h)
    return float(sign * du / (radius * radius))


def _coerce_control(control, n: int, m: int):
    if control is None:
        return None
    if isinstance(control, SpaceTimeField):
        if control.role != ROLE_CONTROL:
            raise FieldRoleError(f"coupled solve expects a control field, got {control.role!r}")
        values = control.values
    else:
        values = np.asarray(control, dtype=float)
    if values.shape != (n + 1, m + 1):
        raise GridError(f"control shape {values.shape}, expected {(n + 1, m + 1)}")
    return values


def coupled_solve(u0, setup: PhysicalSetup, control, cfg: SchemeConfig,
                  sign=-1.0, corrector: bool = True):
    """March the line field and the free boundary together.

    Each step advances the field by one theta step whose implicit level
    sits on a radius predicted by explicit Euler from the current rate;
    the corrector (default on) then averages the old and new rates into a
    trapezoid radius update and re-solves the same step there, an O(dt)
    refinement of the predictor.  The reaction r f(u/r) of the setup's
    nonlinearity is lagged one level, and control samples are masked to
    the physical ball of radius b with the evolving radii.

    Returns the state trajectory and the realized boundary path.  The
    radius must stay inside [R_star, E]; a breach raises with the first
    offending step.
    """
    sign = _check_sign(sign)
    n, m = cfg.n, cfg.m
    u0 = _check_initial(u0, n)
    ctrl = _coerce_control(control, n, m)
    nl = setup.nonlinearity
    grid = cfg.grid
    rho = grid.nodes
    h = grid.spacing
    rho_int = rho[1:-1]
    dt = setup.T / m
    theta = cfg.theta
    no_pot = np.zeros(n - 1)

    w = np.zeros((n + 1, m + 1))
    w[:, 0] = u0
    radii = np.zeros(m + 1)
    slopes = np.zeros(m + 1)
    radii[0] = setup.R0
    slopes[0] = _column_rate(u0, setup.R0, h, sign, cfg.flux_order)
    times = np.linspace(0.0, setup.T, m + 1)

    def masked_column(j, radius):
        if ctrl is None:
            return None
        return ctrl[1:-1, j] * (rho_int * radius < setup.b)

    def implicit_solve(radius, slope, rhs):
        lo, dg, up = _interior_diagonals(rho_int, h, radius, slope, no_pot)
        ab = np.zeros((3, n - 1))
        ab[0, 1:] = -theta * dt * up[:-1]
        ab[1, :] = 1.0 - theta * dt * dg
        ab[2, :-1] = -theta * dt * lo[1:]
        return solve_banded((1, 1), ab, rhs)

    x = u0[1:-1].copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(m):
            lo, dg, up = _interior_diagonals(rho_int, h, radii[j], slopes[j], no_pot)
            base = (1.0 + (1.0 - theta) * dt * dg) * x
            base[1:] += (1.0 - theta) * dt * lo[1:] * x[:-1]
            base[:-1] += (1.0 - theta) * dt * up[:-1] * x[1:]
            extra = np.zeros(n - 1)
            here = masked_column(j, radii[j])
            if here is not None:
                extra += (1.0 - theta) * here
            if nl is not None:
                r_int = rho_int * radii[j]
                extra -= r_int * np.asarray(nl.value(x / r_int), dtype=float)

            r_pred = radii[j] + dt * slopes[j]
            next_ctrl = masked_column(j + 1, r_pred)
            rhs = base + dt * (extra + (theta * next_ctrl if next_ctrl is not None else 0.0))
            x_new = implicit_solve(r_pred, slopes[j], rhs)
            col = np.zeros(n + 1)
            col[1:-1] = x_new
            rate_new = _column_rate(col, r_pred, h, sign, cfg.flux_order)

            if corrector:
                r_next = radii[j] + 0.5 * dt * (slopes[j] + rate_new)
                next_ctrl = masked_column(j + 1, r_next)
                rhs = base + dt * (extra + (theta * next_ctrl if next_ctrl is not None else 0.0))
                x_new = implicit_solve(r_next, rate_new, rhs)
                col[1:-1] = x_new
                rate_new = _column_rate(col, r_next, h, sign, cfg.flux_order)
            else:
                r_next = r_pred

            if not (np.all(np.isfinite(x_new)) and np.isfinite(r_next)):
                raise InstabilityError(
                    f"coupled march produced non-finite values at step {j + 1}",
                    suggested_nodes=2 * n, suggested_steps=2 * m,
                )
            if not setup.R_star <= r_next <= setup.E:
                raise RadiusBreachError(
                    f"boundary leaves [{setup.R_star:g}, {setup.E:g}] at "
                    f"t={times[j + 1]:.6g} (R={r_next:.6g})",
                    r_min=min(float(np.min(radii[:j + 1])), r_next),
                    r_max=max(float(np.max(radii[:j + 1])), r_next),
                    first_index=j + 1,
                )
            radii[j + 1] = r_next
            slopes[j + 1] = rate_new
            x = x_new
            w[1:-1, j + 1] = x

    return SpaceTimeField(w, role=ROLE_STATE), BoundaryPath(times, radii, slopes)


# ---------------------------------------------------------------------------
# the linearize-control-update map and its Picard iteration


@dataclass(frozen=True)
class FixedPointConfig:
    """Bounds and stopping parameters for the outer iteration.

    K bounds the state iterates in the sup norm and K1 the boundary slopes;
    both are membership diagnostics, reported rather than enforced.  The
    epsilon schedule, when nonempty, continues the converged iteration at
    each listed penalty (warm started) to record the final-norm decay.
    """

    K: float = 1.0
    K1: float = 1.0
    fp_tol: float = 1e-6
    max_outer: int = 50
    epsilon_schedule: tuple = ()

    def __post_init__(self):
        if self.K <= 0 or self.K1 <= 0:
            raise GridError("membership bounds K, K1 must be positive")
        if self.fp_tol <= 0:
            raise GridError(f"stopping tolerance must be positive, got {self.fp_tol}")
        if self.max_outer < 1:
            raise GridError("outer iteration cap must be at least 1")
        if any(e <= 0 for e in self.epsilon_schedule):
            raise GridError("epsilon schedule entries must be positive")


@dataclass(frozen=True)
class LambdaOutcome:
    """One application of the map: controlled state, new boundary, diagnostics.

    The membership fields compare the output against the configured balls
    (state sup norm vs K, slope sup and radius band vs K1 and [R_star, E]);
    eps_margin is the final norm over sqrt(epsilon) times the initial line
    norm, a recorded surrogate for the penalty-consistent decay.
    """

    state: SpaceTimeField
    path: BoundaryPath
    hum: HUMOutcome
    input_state_sup: float
    input_slope_sup: float
    state_sup: float
    slope_sup: float
    inside_state_ball: bool
    inside_slope_ball: bool
    eps_margin: float


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    dz_sup: float
    dR_sup: float
    dRp_sup: float
    final_norm: float
    cost_ratio: float
    R_min: float
    R_max: float


@dataclass(frozen=True)
class EpsilonRecord:
    epsilon: float
    iterations: int
    converged: bool
    final_norm: float
    cost_ratio: float


@dataclass(frozen=True)
class FixedPointResult:
    state: SpaceTimeField
    control: SpaceTimeField
    path: BoundaryPath
    hum: HUMOutcome
    history: tuple
    eps_history: tuple
    converged: bool
    iterations: int


def linearize_and_control(zbar, rbar: BoundaryPath, u0, setup: PhysicalSetup,
                          fpc: FixedPointConfig, hum: HUMConfig,
                          cfg: SchemeConfig, sign=-1.0) -> LambdaOutcome:
    """Linearize the reaction on an iterate, control, update the boundary.

    The potential is the secant slope of the setup's nonlinearity sampled
    pointwise on the iterate field (no nonlinearity means no potential, and
    the zero kind produces an exactly zero potential, so this path is then
    bit-identical to the plain control pipeline).  The penalized control is
    synthesized on the frozen path, and the controlled state's boundary
    flux drives the boundary update.  Membership in the configured balls is
    reported on the outcome, never enforced.
    """
    vals = zbar.values if isinstance(zbar, SpaceTimeField) else np.asarray(zbar, dtype=float)
    if vals.shape != (cfg.n + 1, cfg.m + 1):
        raise GridError(f"iterate shape {vals.shape}, expected {(cfg.n + 1, cfg.m + 1)}")
    nl = setup.nonlinearity
    potential = None if nl is None else np.asarray(nl.slope(vals), dtype=float)

    outcome = solve_hum(u0, rbar, potential, setup.b, hum, cfg)
    new_path = integrate_boundary(outcome.state, rbar, setup, sign=sign)

    state_sup = float(np.max(np.abs(outcome.state.values)))
    slope_sup = float(np.max(np.abs(new_path.slopes)))
    in_band = setup.R_star <= float(np.min(new_path.radii)) and float(np.max(new_path.radii)) <= setup.E
    z0_norm = line_l2_norm(np.asarray(u0, dtype=float), float(rbar.radii[0]), cfg.grid)
    margin = outcome.final_norm / max(np.sqrt(hum.epsilon) * z0_norm, 1e-300)

    return LambdaOutcome(
        state=outcome.state,
        path=new_path,
        hum=outcome,
        input_state_sup=float(np.max(np.abs(vals))),
        input_slope_sup=float(np.max(np.abs(rbar.slopes))),
        state_sup=state_sup,
        slope_sup=slope_sup,
        inside_state_ball=state_sup <= fpc.K,
        inside_slope_ball=slope_sup <= fpc.K1 and in_band,
        eps_margin=margin,
    )


def _picard(u0, zbar, rbar, setup, fpc, hum, cfg, sign, history, offset):
    """Iterate the map until the pair stops moving; returns (last, count, ok)."""
    lam = None
    for k in range(1, fpc.max_outer + 1):
        prev_vals = zbar.values if isinstance(zbar, SpaceTimeField) else np.asarray(zbar, dtype=float)
        lam = linearize_and_control(zbar, rbar, u0, setup, fpc, hum, cfg, sign=sign)
        dz = float(np.max(np.abs(lam.state.values - prev_vals)))
        dR = float(np.max(np.abs(lam.path.radii - rbar.radii)))
        dRp = float(np.max(np.abs(lam.path.slopes - rbar.slopes)))
        history.append(IterationRecord(
            iteration=offset + k, dz_sup=dz, dR_sup=dR, dRp_sup=dRp,
            final_norm=lam.hum.final_norm, cost_ratio=lam.hum.cost_ratio,
            R_min=float(np.min(lam.path.radii)), R_max=float(np.max(lam.path.radii)),
        ))
        zbar, rbar = lam.state, lam.path
        if max(dz, dR, dRp) < fpc.fp_tol:
            return lam, k, True
    return lam, fpc.max_outer, False


def fixed_point_iterate(u0, setup: PhysicalSetup, fpc: FixedPointConfig,
                        hum: HUMConfig, cfg: SchemeConfig, sign=-1.0) -> FixedPointResult:
    """Picard iteration of the linearize-control-update map.

    Starts from the time-constant extension of the initial line field and
    the constant boundary, iterates until the successive sup-norm
    differences of state, radius, and slope all drop below the tolerance,
    then (if a penalty schedule is configured) continues from the converged
    pair at each scheduled penalty, recording the final-norm decay.

    Pass u0 = None to sample the setup's initial data.  Non-convergence of
    any phase raises with the iteration records attached.
    """
    if u0 is None:
        u0 = setup.initial_line_field(cfg.grid)
    u0 = _check_initial(u0, cfg.n)
    zbar = SpaceTimeField(np.repeat(u0[:, None], cfg.m + 1, axis=1), role=ROLE_STATE)
    rbar = constant_path(setup.R0, setup.T, cfg.m)

    history: list[IterationRecord] = []
    lam, count, ok = _picard(u0, zbar, rbar, setup, fpc, hum, cfg, sign, history, 0)
    if not ok:
        raise ConvergenceError(
            f"fixed point did not converge in {fpc.max_outer} outer iterations "
            f"(last differences {history[-1].dz_sup:.3e}, {history[-1].dR_sup:.3e}, "
            f"{history[-1].dRp_sup:.3e}, tol {fpc.fp_tol:g})",
            history=history,
        )
    total = count

    eps_records = []
    for eps in fpc.epsilon_schedule:
        hum_eps = replace(hum, epsilon=float(eps))
        lam_eps, count, ok = _picard(u0, lam.state, lam.path, setup, fpc, hum_eps,
                                     cfg, sign, history, total)
        total += count
        eps_records.append(EpsilonRecord(
            epsilon=float(eps), iterations=count, converged=ok,
            final_norm=lam_eps.hum.final_norm, cost_ratio=lam_eps.hum.cost_ratio,
        ))
        if not ok:
            raise ConvergenceError(
                f"fixed point did not reconverge at epsilon={eps:g} within "
                f"{fpc.max_outer} outer iterations",
                history=history,
            )
        lam = lam_eps

    return FixedPointResult(
        state=lam.state,
        control=lam.hum.control,
        path=lam.path,
        hum=lam.hum,
        history=tuple(history),
        eps_history=tuple(eps_records),
        converged=True,
        iterations=total,
    )


# ---------------------------------------------------------------------------
# diagnostics


def holder_seminorm(times, values, kappa: float) -> float:
    """Discrete Hölder seminorm sup over pairs of |V(t) - V(t')| / |t - t'|^kappa.

    kappa lies in (0, 1/2]; the half exponent is the boundary of the
    boundary-velocity regularity class and is accepted as a stress case.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != v.shape or t.size < 2:
        raise GridError("times and values must be matching 1-d arrays, length >= 2")
    if not 0.0 < kappa <= 0.5:
        raise GridError(f"Hoelder exponent must lie in (0, 1/2], got {kappa}")
    iu = np.triu_indices(t.size, k=1)
    gaps = np.abs(np.subtract.outer(t, t))[iu]
    if np.any(gaps == 0.0):
        raise GridError("repeated time samples")
    jumps = np.abs(np.subtract.outer(v, v))[iu]
    return float(np.max(jumps / gaps ** kappa))


_HISTORY_COLUMNS = ("iteration", "dz_sup", "dR_sup", "dRp_sup",
                    "final_norm", "cost_ratio", "R_min", "R_max")


def write_history_csv(path, history) -> None:
    """Write iteration records as CSV with full-precision reprs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_COLUMNS)
        for rec in history:
            writer.writerow([rec.iteration] + [repr(float(getattr(rec, c)))
                                               for c in _HISTORY_COLUMNS[1:]])
